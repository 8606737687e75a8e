"""Notification delivery queues and anonymized usage telemetry.

Delivery is a vendor-neutral long-poll queue with an ack watermark:
producers append, consumers poll for events past the ids they have already
acknowledged, and an unacked event keeps being redelivered. Telemetry is an
append-only NDJSON file carrying salted hashes and hour-coarse timestamps,
never raw identities, names, or package strings.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import UnknownActionError
from .store import Database
from .timeutil import Clock, to_iso, truncate_to_hour, utcnow


class Kind(str, Enum):
    NEW_POST = "new_post"
    NEW_REPLY = "new_reply"
    NEW_MESSAGE = "new_message"
    MEMBER_JOINED = "member_joined"
    PRO_TIP = "pro_tip"


@dataclass(frozen=True)
class NotificationEvent:
    recipient: str
    event_id: int
    kind: Kind
    payload: Mapping
    created_at: str
    acked: bool = False

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "kind": self.kind.value,
            "payload": dict(self.payload),
            "created_at": self.created_at,
        }


def _check_payload(payload: Mapping) -> dict:
    # Payloads carry entity ids only; a body smuggled in here would bypass
    # visibility masking and authorization on the read paths.
    clean = {}
    for key, value in payload.items():
        if not isinstance(value, (str, int)):
            raise ValueError(f"payload value for {key!r} must be an id, got {type(value)}")
        if isinstance(value, str) and len(value) > 64:
            raise ValueError(f"payload value for {key!r} is too long to be an id")
        clean[key] = value
    return clean


class NotificationQueue:
    """Per-recipient queues with strictly increasing event ids.

    Events stay queued until acked, so delivery is at-least-once; polling
    blocks on a condition variable rather than spinning.
    """

    def __init__(self, db: Database, clock: Clock = utcnow):
        self._db = db
        self._clock = clock
        self._arrival = threading.Condition()

    def enqueue(self, recipient: str, kind: Kind, payload: Mapping) -> NotificationEvent:
        return self.enqueue_many([recipient], kind, payload)[0]

    def enqueue_many(
        self, recipients: Sequence[str], kind: Kind, payload: Mapping
    ) -> list[NotificationEvent]:
        """Append one event per recipient inside a single transaction."""
        clean = _check_payload(payload)
        created_at = to_iso(self._clock())
        doc = json.dumps(clean, sort_keys=True)
        events = []
        with self._db.write() as conn:
            for recipient in recipients:
                exists = conn.execute(
                    "SELECT 1 FROM members WHERE member_id = ?", (recipient,)
                ).fetchone()
                if exists is None:
                    raise ValueError(f"unknown notification recipient {recipient!r}")
                row = conn.execute(
                    "SELECT COALESCE(MAX(event_id), 0) AS top FROM notifications"
                    " WHERE recipient = ?",
                    (recipient,),
                ).fetchone()
                event_id = row["top"] + 1
                conn.execute(
                    "INSERT INTO notifications"
                    " (recipient, event_id, kind, payload, created_at, acked)"
                    " VALUES (?, ?, ?, ?, ?, 0)",
                    (recipient, event_id, kind.value, doc, created_at),
                )
                events.append(
                    NotificationEvent(recipient, event_id, kind, clean, created_at)
                )
        with self._arrival:
            self._arrival.notify_all()
        return events

    def _fetch(self, recipient: str, after_event_id: int) -> list[NotificationEvent]:
        with self._db.read() as conn:
            rows = conn.execute(
                "SELECT event_id, kind, payload, created_at FROM notifications"
                " WHERE recipient = ? AND acked = 0 AND event_id > ?"
                " ORDER BY event_id",
                (recipient, after_event_id),
            ).fetchall()
        return [
            NotificationEvent(
                recipient=recipient,
                event_id=row["event_id"],
                kind=Kind(row["kind"]),
                payload=json.loads(row["payload"]),
                created_at=row["created_at"],
            )
            for row in rows
        ]

    def poll(
        self, recipient: str, after_event_id: int = 0, wait: float = 0.0
    ) -> list[NotificationEvent]:
        """Unacked events past ``after_event_id``, blocking up to ``wait`` seconds."""
        deadline = None if wait <= 0 else (time.monotonic() + wait)
        while True:
            events = self._fetch(recipient, after_event_id)
            if events or deadline is None:
                return events
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return events
            with self._arrival:
                self._arrival.wait(timeout=min(remaining, 1.0))

    def ack(self, recipient: str, up_to_event_id: int) -> int:
        """Mark everything at or below the watermark acked. Idempotent."""
        with self._db.write() as conn:
            cur = conn.execute(
                "UPDATE notifications SET acked = 1"
                " WHERE recipient = ? AND event_id <= ? AND acked = 0",
                (recipient, up_to_event_id),
            )
            return cur.rowcount


# ---------------------------------------------------------------------------
# Usage telemetry
# ---------------------------------------------------------------------------

USAGE_ACTIONS: tuple[str, ...] = (
    "open_community_apps",
    "open_own_apps",
    "open_app_permissions",
    "open_community_members",
    "open_member_apps",
    "open_community_feed",
    "toggle_visibility",
    "change_permission",
    "create_post",
    "like_post",
    "reply_post",
    "send_message",
)


class TelemetryLog:
    """Append-only NDJSON log of anonymized usage events.

    Each line holds exactly four fields: a salted actor hash, the action
    name from the fixed catalog above, the hour the event occurred, and a
    salted session hash. The same salt keeps one actor linkable across
    events; changing the salt unlinks everything. The file itself is the
    export format.
    """

    def __init__(self, path, salt: str, clock: Clock = utcnow):
        self._path = Path(path)
        self._salt = salt.encode("utf-8")
        self._clock = clock
        self._lock = threading.Lock()
        self._path.parent.mkdir(parents=True, exist_ok=True)

    @property
    def path(self) -> Path:
        return self._path

    def _hash(self, kind: str, value: str) -> str:
        return hmac.new(self._salt, f"{kind}:{value}".encode("utf-8"), hashlib.sha256).hexdigest()

    def record(self, member_id: str, session_token: str, action: str) -> None:
        if action not in USAGE_ACTIONS:
            raise UnknownActionError(action)
        event = {
            "actor_hash": self._hash("actor", member_id),
            "action": action,
            "occurred_at": to_iso(truncate_to_hour(self._clock())),
            "session_hash": self._hash("session", session_token),
        }
        line = json.dumps(event, sort_keys=True)
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def events(self) -> list[dict]:
        if not self._path.exists():
            return []
        with open(self._path, "r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
