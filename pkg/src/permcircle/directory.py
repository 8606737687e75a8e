"""Device-bound registration, sessions, and community formation.

Identity is the hashed device triple: registering the same triple twice
lands on the same member with a fresh bearer token, and membership in a
community is the sole authorization scope for everything else.
"""

from __future__ import annotations

import secrets
import string
import uuid
from dataclasses import dataclass
from datetime import timedelta

from .domain import DeviceIdentity, MemberRef
from .errors import (
    AlreadyMemberError,
    AuthRequiredError,
    EmptyFieldError,
    NotAMemberError,
    UnknownInviteCodeError,
)
from .events import Kind, NotificationQueue
from .store import Database
from .timeutil import Clock, from_iso, to_iso, utcnow

INVITE_CODE_ALPHABET = string.ascii_uppercase + string.digits
INVITE_CODE_LENGTH = 8
TOKEN_TTL = timedelta(days=30)


@dataclass(frozen=True)
class Session:
    token: str
    member_id: str
    device_key: str
    expires_at: str


@dataclass(frozen=True)
class Community:
    community_id: str
    name: str
    invite_code: str
    created_at: str


@dataclass(frozen=True)
class Caller:
    """An authenticated request context."""

    member_id: str
    device_key: str
    display_name: str
    token: str


def membership_exists(conn, member_id: str, community_id: str) -> bool:
    row = conn.execute(
        "SELECT 1 FROM memberships WHERE member_id = ? AND community_id = ?",
        (member_id, community_id),
    ).fetchone()
    return row is not None


def require_member(conn, member_id: str, community_id: str) -> None:
    if not membership_exists(conn, member_id, community_id):
        raise NotAMemberError(community_id)


class DirectoryService:
    def __init__(
        self,
        db: Database,
        queue: NotificationQueue | None = None,
        clock: Clock = utcnow,
        token_ttl: timedelta = TOKEN_TTL,
    ):
        self._db = db
        self._queue = queue
        self._clock = clock
        self._token_ttl = token_ttl

    # -- registration and sessions -----------------------------------------

    def register(
        self, identity: DeviceIdentity, display_name: str
    ) -> tuple[Session, MemberRef]:
        """Create or refresh the member bound to this device.

        Idempotent on the device key: the same triple always maps to the
        same member_id, but every call issues a fresh token and invalidates
        the previous one (one active session per member/device binding).
        """
        if not display_name:
            raise EmptyFieldError("display_name")
        device_key = identity.device_key_hex
        now = self._clock()
        token = secrets.token_urlsafe(32)
        expires_at = to_iso(now + self._token_ttl)
        with self._db.write() as conn:
            row = conn.execute(
                "SELECT member_id FROM members WHERE device_key = ?", (device_key,)
            ).fetchone()
            if row is None:
                member_id = uuid.uuid4().hex
                conn.execute(
                    "INSERT INTO members (member_id, device_key, display_name, created_at)"
                    " VALUES (?, ?, ?, ?)",
                    (member_id, device_key, display_name, to_iso(now)),
                )
            else:
                member_id = row["member_id"]
                conn.execute(
                    "UPDATE members SET display_name = ? WHERE member_id = ?",
                    (display_name, member_id),
                )
            conn.execute(
                "DELETE FROM sessions WHERE member_id = ? AND device_key = ?",
                (member_id, device_key),
            )
            conn.execute(
                "INSERT INTO sessions (token, member_id, device_key, expires_at)"
                " VALUES (?, ?, ?, ?)",
                (token, member_id, device_key, expires_at),
            )
        session = Session(token, member_id, device_key, expires_at)
        return session, MemberRef(member_id=member_id, display_name=display_name)

    def authenticate(self, token: str | None) -> Caller:
        if not token:
            raise AuthRequiredError()
        with self._db.read() as conn:
            row = conn.execute(
                "SELECT s.member_id, s.device_key, s.expires_at, m.display_name"
                " FROM sessions s JOIN members m ON m.member_id = s.member_id"
                " WHERE s.token = ?",
                (token,),
            ).fetchone()
        if row is None:
            raise AuthRequiredError("unknown or revoked token")
        if from_iso(row["expires_at"]) <= self._clock():
            raise AuthRequiredError("token expired")
        return Caller(
            member_id=row["member_id"],
            device_key=row["device_key"],
            display_name=row["display_name"],
            token=token,
        )

    # -- communities --------------------------------------------------------

    def create_community(self, caller: Caller, name: str) -> Community:
        if not name:
            raise EmptyFieldError("name")
        now = to_iso(self._clock())
        community_id = uuid.uuid4().hex
        with self._db.write() as conn:
            while True:
                code = "".join(
                    secrets.choice(INVITE_CODE_ALPHABET)
                    for _ in range(INVITE_CODE_LENGTH)
                )
                clash = conn.execute(
                    "SELECT 1 FROM communities WHERE invite_code = ?", (code,)
                ).fetchone()
                if clash is None:
                    break
            conn.execute(
                "INSERT INTO communities (community_id, name, invite_code, created_at)"
                " VALUES (?, ?, ?, ?)",
                (community_id, name, code, now),
            )
            conn.execute(
                "INSERT INTO memberships (member_id, community_id, joined_at)"
                " VALUES (?, ?, ?)",
                (caller.member_id, community_id, now),
            )
        return Community(community_id, name, code, now)

    def join_community(self, caller: Caller, invite_code: str) -> MemberRef:
        code = invite_code.strip().upper()
        with self._db.write() as conn:
            row = conn.execute(
                "SELECT community_id FROM communities WHERE invite_code = ?", (code,)
            ).fetchone()
            if row is None:
                raise UnknownInviteCodeError(invite_code)
            community_id = row["community_id"]
            if membership_exists(conn, caller.member_id, community_id):
                raise AlreadyMemberError(community_id)
            existing = [
                r["member_id"]
                for r in conn.execute(
                    "SELECT member_id FROM memberships WHERE community_id = ?",
                    (community_id,),
                ).fetchall()
            ]
            conn.execute(
                "INSERT INTO memberships (member_id, community_id, joined_at)"
                " VALUES (?, ?, ?)",
                (caller.member_id, community_id, to_iso(self._clock())),
            )
        if self._queue is not None and existing:
            self._queue.enqueue_many(
                existing,
                Kind.MEMBER_JOINED,
                {"community_id": community_id, "member_id": caller.member_id},
            )
        return MemberRef(
            member_id=caller.member_id,
            display_name=caller.display_name,
            community_id=community_id,
        )

    def list_members(self, caller: Caller, community_id: str) -> list[MemberRef]:
        with self._db.read() as conn:
            require_member(conn, caller.member_id, community_id)
            rows = conn.execute(
                "SELECT m.member_id, m.display_name, m.avatar_ref"
                " FROM memberships ms JOIN members m ON m.member_id = ms.member_id"
                " WHERE ms.community_id = ?"
                " ORDER BY m.display_name, m.member_id",
                (community_id,),
            ).fetchall()
        return [
            MemberRef(
                member_id=r["member_id"],
                display_name=r["display_name"],
                community_id=community_id,
                avatar_ref=r["avatar_ref"],
            )
            for r in rows
        ]

    def member_ids(self, community_id: str) -> list[str]:
        with self._db.read() as conn:
            rows = conn.execute(
                "SELECT member_id FROM memberships WHERE community_id = ?",
                (community_id,),
            ).fetchall()
        return [r["member_id"] for r in rows]

    def communities_for(self, member_id: str) -> list[Community]:
        with self._db.read() as conn:
            rows = conn.execute(
                "SELECT c.community_id, c.name, c.invite_code, c.created_at"
                " FROM memberships ms JOIN communities c"
                " ON c.community_id = ms.community_id"
                " WHERE ms.member_id = ? ORDER BY ms.joined_at, c.community_id",
                (member_id,),
            ).fetchall()
        return [
            Community(r["community_id"], r["name"], r["invite_code"], r["created_at"])
            for r in rows
        ]

    def get_community(self, community_id: str) -> Community | None:
        with self._db.read() as conn:
            row = conn.execute(
                "SELECT community_id, name, invite_code, created_at"
                " FROM communities WHERE community_id = ?",
                (community_id,),
            ).fetchone()
        if row is None:
            return None
        return Community(
            row["community_id"], row["name"], row["invite_code"], row["created_at"]
        )
