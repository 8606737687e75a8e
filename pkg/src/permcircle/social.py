"""Community feed, direct messages, and the weekly pro-tip rotation.

Posts and replies are immutable once created; likes toggle. The pro-tip
scheduler is an explicit tick with an injected clock so schedules are
deterministic under test; production mode just calls it from a timer loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from importlib import resources
from typing import Optional, Sequence

from .directory import require_member
from .errors import (
    BodyTooLongError,
    EmptyBodyError,
    NoSharedCommunityError,
    SelfMessageError,
    UnknownPostError,
)
from .events import Kind, NotificationQueue
from .store import Database
from .timeutil import Clock, from_iso, to_iso, utcnow

SYSTEM_AUTHOR = "system"
MAX_BODY_CHARS = 4000
DEFAULT_TIP_PERIOD = timedelta(days=7)


@dataclass(frozen=True)
class FeedPost:
    post_id: int
    community_id: str
    author: str  # member_id, or "system" for pro-tips
    body: str
    created_at: str
    like_count: int = 0
    is_pro_tip: bool = False

    def to_json(self) -> dict:
        return {
            "post_id": self.post_id,
            "community_id": self.community_id,
            "author": self.author,
            "body": self.body,
            "created_at": self.created_at,
            "like_count": self.like_count,
            "is_pro_tip": self.is_pro_tip,
        }


@dataclass(frozen=True)
class Reply:
    reply_id: int
    post_id: int
    author: str
    body: str
    created_at: str

    def to_json(self) -> dict:
        return {
            "reply_id": self.reply_id,
            "post_id": self.post_id,
            "author": self.author,
            "body": self.body,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class DirectMessage:
    message_id: int
    sender: str
    recipient: str
    body: str
    created_at: str
    read_at: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "message_id": self.message_id,
            "sender": self.sender,
            "recipient": self.recipient,
            "body": self.body,
            "created_at": self.created_at,
            "read_at": self.read_at,
        }


@dataclass(frozen=True)
class FeedItem:
    """A post as one viewer sees it in the feed."""

    post: FeedPost
    viewer_liked: bool
    replies: tuple[Reply, ...]

    def to_json(self) -> dict:
        obj = self.post.to_json()
        obj["viewer_liked"] = self.viewer_liked
        obj["replies"] = [r.to_json() for r in self.replies]
        return obj


class ProTipSource:
    """An ordered list of tip texts cycled one per community per period.

    The bundled default tips were written for this repository; the file the
    server loads is configurable.
    """

    def __init__(self, tips: Sequence[str], period: timedelta = DEFAULT_TIP_PERIOD):
        self.tips = [t for t in tips if t]
        self.period = period

    @classmethod
    def from_file(cls, path, period: timedelta = DEFAULT_TIP_PERIOD) -> "ProTipSource":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list) or not all(isinstance(t, str) for t in data):
            raise ValueError("pro-tip source must be a JSON array of strings")
        return cls(data, period)

    @classmethod
    def bundled(cls, period: timedelta = DEFAULT_TIP_PERIOD) -> "ProTipSource":
        text = resources.files("permcircle.data").joinpath("pro_tips.json").read_text("utf-8")
        return cls(json.loads(text), period)


def _validate_body(body: str) -> None:
    if not body or not body.strip():
        raise EmptyBodyError()
    if len(body) > MAX_BODY_CHARS:
        raise BodyTooLongError(MAX_BODY_CHARS)


class SocialService:
    def __init__(
        self,
        db: Database,
        pro_tips: ProTipSource,
        queue: NotificationQueue | None = None,
        clock: Clock = utcnow,
    ):
        self._db = db
        self._tips = pro_tips
        self._queue = queue
        self._clock = clock

    # -- feed ----------------------------------------------------------------

    def create_post(self, caller_id: str, community_id: str, body: str) -> FeedPost:
        _validate_body(body)
        now = to_iso(self._clock())
        with self._db.write() as conn:
            require_member(conn, caller_id, community_id)
            cur = conn.execute(
                "INSERT INTO posts (community_id, author, body, is_pro_tip, created_at)"
                " VALUES (?, ?, ?, 0, ?)",
                (community_id, caller_id, body, now),
            )
            post_id = cur.lastrowid
            others = [
                r["member_id"]
                for r in conn.execute(
                    "SELECT member_id FROM memberships WHERE community_id = ?"
                    " AND member_id != ?",
                    (community_id, caller_id),
                ).fetchall()
            ]
        if self._queue is not None and others:
            self._queue.enqueue_many(
                others, Kind.NEW_POST, {"post_id": post_id, "community_id": community_id}
            )
        return FeedPost(post_id, community_id, caller_id, body, now)

    def _load_post(self, conn, post_id: int):
        row = conn.execute(
            "SELECT post_id, community_id, author, body, is_pro_tip, created_at"
            " FROM posts WHERE post_id = ?",
            (post_id,),
        ).fetchone()
        if row is None:
            raise UnknownPostError(post_id)
        return row

    def toggle_like(self, caller_id: str, post_id: int) -> tuple[int, bool]:
        """Add the caller's like if absent, remove it if present.

        Returns (like_count, liked_now).
        """
        with self._db.write() as conn:
            post = self._load_post(conn, post_id)
            require_member(conn, caller_id, post["community_id"])
            existing = conn.execute(
                "SELECT 1 FROM post_likes WHERE post_id = ? AND member_id = ?",
                (post_id, caller_id),
            ).fetchone()
            if existing is None:
                conn.execute(
                    "INSERT INTO post_likes (post_id, member_id) VALUES (?, ?)",
                    (post_id, caller_id),
                )
                liked = True
            else:
                conn.execute(
                    "DELETE FROM post_likes WHERE post_id = ? AND member_id = ?",
                    (post_id, caller_id),
                )
                liked = False
            count = conn.execute(
                "SELECT COUNT(*) AS n FROM post_likes WHERE post_id = ?", (post_id,)
            ).fetchone()["n"]
        return count, liked

    def reply(self, caller_id: str, post_id: int, body: str) -> Reply:
        _validate_body(body)
        now = to_iso(self._clock())
        with self._db.write() as conn:
            post = self._load_post(conn, post_id)
            require_member(conn, caller_id, post["community_id"])
            cur = conn.execute(
                "INSERT INTO replies (post_id, author, body, created_at)"
                " VALUES (?, ?, ?, ?)",
                (post_id, caller_id, body, now),
            )
            reply_id = cur.lastrowid
            author = post["author"]
            community_id = post["community_id"]
        if self._queue is not None and author not in (caller_id, SYSTEM_AUTHOR):
            self._queue.enqueue(
                author,
                Kind.NEW_REPLY,
                {"post_id": post_id, "reply_id": reply_id, "community_id": community_id},
            )
        return Reply(reply_id, post_id, caller_id, body, now)

    def list_feed(self, caller_id: str, community_id: str) -> list[FeedItem]:
        """Posts newest first, each with its like state and one-level replies."""
        with self._db.read() as conn:
            require_member(conn, caller_id, community_id)
            posts = conn.execute(
                "SELECT p.post_id, p.community_id, p.author, p.body, p.is_pro_tip,"
                " p.created_at,"
                " (SELECT COUNT(*) FROM post_likes l WHERE l.post_id = p.post_id) AS likes,"
                " EXISTS(SELECT 1 FROM post_likes l WHERE l.post_id = p.post_id"
                "        AND l.member_id = ?) AS viewer_liked"
                " FROM posts p WHERE p.community_id = ?"
                " ORDER BY p.created_at DESC, p.post_id DESC",
                (caller_id, community_id),
            ).fetchall()
            items = []
            for row in posts:
                replies = conn.execute(
                    "SELECT reply_id, post_id, author, body, created_at FROM replies"
                    " WHERE post_id = ? ORDER BY created_at, reply_id",
                    (row["post_id"],),
                ).fetchall()
                items.append(
                    FeedItem(
                        post=FeedPost(
                            post_id=row["post_id"],
                            community_id=row["community_id"],
                            author=row["author"],
                            body=row["body"],
                            created_at=row["created_at"],
                            like_count=row["likes"],
                            is_pro_tip=bool(row["is_pro_tip"]),
                        ),
                        viewer_liked=bool(row["viewer_liked"]),
                        replies=tuple(
                            Reply(
                                r["reply_id"],
                                r["post_id"],
                                r["author"],
                                r["body"],
                                r["created_at"],
                            )
                            for r in replies
                        ),
                    )
                )
        return items

    # -- direct messages -----------------------------------------------------

    def send_message(self, sender_id: str, recipient_id: str, body: str) -> DirectMessage:
        if sender_id == recipient_id:
            raise SelfMessageError()
        _validate_body(body)
        now = to_iso(self._clock())
        with self._db.write() as conn:
            shared = conn.execute(
                "SELECT 1 FROM memberships a JOIN memberships b"
                " ON a.community_id = b.community_id"
                " WHERE a.member_id = ? AND b.member_id = ? LIMIT 1",
                (sender_id, recipient_id),
            ).fetchone()
            if shared is None:
                # Also covers unknown recipients: an id that does not exist
                # shares no community, and saying more would leak existence.
                raise NoSharedCommunityError(recipient_id)
            cur = conn.execute(
                "INSERT INTO messages (sender, recipient, body, created_at)"
                " VALUES (?, ?, ?, ?)",
                (sender_id, recipient_id, body, now),
            )
            message_id = cur.lastrowid
        if self._queue is not None:
            self._queue.enqueue(
                recipient_id,
                Kind.NEW_MESSAGE,
                {"message_id": message_id, "sender_id": sender_id},
            )
        return DirectMessage(message_id, sender_id, recipient_id, body, now)

    def list_conversation(
        self, caller_id: str, other_id: str, limit: int = 50, offset: int = 0
    ) -> list[DirectMessage]:
        """Messages between the pair in created_at order (ties by message_id).

        Fetching marks the returned incoming messages as read; that is the
        only way read_at ever gets set.
        """
        now = to_iso(self._clock())
        with self._db.write() as conn:
            rows = conn.execute(
                "SELECT message_id, sender, recipient, body, created_at, read_at"
                " FROM messages"
                " WHERE (sender = ? AND recipient = ?) OR (sender = ? AND recipient = ?)"
                " ORDER BY created_at, message_id LIMIT ? OFFSET ?",
                (caller_id, other_id, other_id, caller_id, limit, offset),
            ).fetchall()
            unread = [
                r["message_id"]
                for r in rows
                if r["recipient"] == caller_id and r["read_at"] is None
            ]
            for message_id in unread:
                conn.execute(
                    "UPDATE messages SET read_at = ? WHERE message_id = ?",
                    (now, message_id),
                )
        return [
            DirectMessage(
                message_id=r["message_id"],
                sender=r["sender"],
                recipient=r["recipient"],
                body=r["body"],
                created_at=r["created_at"],
                read_at=now if r["message_id"] in unread else r["read_at"],
            )
            for r in rows
        ]

    # -- pro tips ------------------------------------------------------------

    def tick_pro_tips(self, now: datetime | None = None) -> list[FeedPost]:
        """Post the next tip in every community whose last tip is a period old.

        Safe to call as often as you like; the period guard makes extra
        ticks no-ops.
        """
        if not self._tips.tips:
            return []
        at = now if now is not None else self._clock()
        created: list[FeedPost] = []
        fanout: list[tuple[list[str], int, str]] = []
        with self._db.write() as conn:
            communities = conn.execute(
                "SELECT community_id FROM communities ORDER BY created_at, community_id"
            ).fetchall()
            for row in communities:
                community_id = row["community_id"]
                state = conn.execute(
                    "SELECT next_index, last_tip_at FROM pro_tip_state"
                    " WHERE community_id = ?",
                    (community_id,),
                ).fetchone()
                if state is not None:
                    elapsed = at - from_iso(state["last_tip_at"])
                    if elapsed < self._tips.period:
                        continue
                    index = state["next_index"]
                else:
                    index = 0
                body = self._tips.tips[index % len(self._tips.tips)]
                cur = conn.execute(
                    "INSERT INTO posts (community_id, author, body, is_pro_tip, created_at)"
                    " VALUES (?, ?, ?, 1, ?)",
                    (community_id, SYSTEM_AUTHOR, body, to_iso(at)),
                )
                post_id = cur.lastrowid
                conn.execute(
                    "INSERT INTO pro_tip_state (community_id, next_index, last_tip_at)"
                    " VALUES (?, ?, ?)"
                    " ON CONFLICT(community_id) DO UPDATE SET"
                    " next_index = excluded.next_index, last_tip_at = excluded.last_tip_at",
                    (community_id, index + 1, to_iso(at)),
                )
                members = [
                    r["member_id"]
                    for r in conn.execute(
                        "SELECT member_id FROM memberships WHERE community_id = ?",
                        (community_id,),
                    ).fetchall()
                ]
                created.append(
                    FeedPost(post_id, community_id, SYSTEM_AUTHOR, body, to_iso(at), 0, True)
                )
                fanout.append((members, post_id, community_id))
        if self._queue is not None:
            for members, post_id, community_id in fanout:
                if members:
                    self._queue.enqueue_many(
                        members,
                        Kind.PRO_TIP,
                        {"post_id": post_id, "community_id": community_id},
                    )
        return created
