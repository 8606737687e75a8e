"""SQLite persistence behind a small transactional boundary.

One embedded database file holds everything except telemetry (which is an
append-only NDJSON file owned by the events module). WAL journaling gives
readers a consistent snapshot while writes serialize on a single writer
lock, which is exactly the linearization the catalog and notification
modules require. Swapping the engine means reimplementing this module only.
"""

from __future__ import annotations

import os
import sqlite3
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

SCHEMA = """
CREATE TABLE IF NOT EXISTS members (
    member_id    TEXT PRIMARY KEY,
    device_key   TEXT NOT NULL UNIQUE,
    display_name TEXT NOT NULL,
    avatar_ref   TEXT,
    created_at   TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS sessions (
    token      TEXT PRIMARY KEY,
    member_id  TEXT NOT NULL REFERENCES members(member_id),
    device_key TEXT NOT NULL,
    expires_at TEXT NOT NULL,
    UNIQUE (member_id, device_key)
);

CREATE TABLE IF NOT EXISTS communities (
    community_id TEXT PRIMARY KEY,
    name         TEXT NOT NULL,
    invite_code  TEXT NOT NULL UNIQUE,
    created_at   TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS memberships (
    member_id    TEXT NOT NULL REFERENCES members(member_id),
    community_id TEXT NOT NULL REFERENCES communities(community_id),
    joined_at    TEXT NOT NULL,
    PRIMARY KEY (member_id, community_id)
);

-- One catalog per registered device, stored as a single JSON document so
-- every mutation replaces the document atomically under one version number.
CREATE TABLE IF NOT EXISTS catalogs (
    member_id  TEXT PRIMARY KEY REFERENCES members(member_id),
    device_key TEXT NOT NULL,
    version    INTEGER NOT NULL,
    entries    TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS posts (
    post_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    community_id TEXT NOT NULL REFERENCES communities(community_id),
    author       TEXT NOT NULL,
    body         TEXT NOT NULL,
    is_pro_tip   INTEGER NOT NULL DEFAULT 0,
    created_at   TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS post_likes (
    post_id   INTEGER NOT NULL REFERENCES posts(post_id),
    member_id TEXT NOT NULL,
    PRIMARY KEY (post_id, member_id)
);

CREATE TABLE IF NOT EXISTS replies (
    reply_id   INTEGER PRIMARY KEY AUTOINCREMENT,
    post_id    INTEGER NOT NULL REFERENCES posts(post_id),
    author     TEXT NOT NULL,
    body       TEXT NOT NULL,
    created_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS messages (
    message_id INTEGER PRIMARY KEY AUTOINCREMENT,
    sender     TEXT NOT NULL,
    recipient  TEXT NOT NULL,
    body       TEXT NOT NULL,
    created_at TEXT NOT NULL,
    read_at    TEXT
);

-- event_id is monotonically increasing per recipient, assigned inside the
-- enqueue transaction.
CREATE TABLE IF NOT EXISTS notifications (
    recipient  TEXT NOT NULL,
    event_id   INTEGER NOT NULL,
    kind       TEXT NOT NULL,
    payload    TEXT NOT NULL,
    created_at TEXT NOT NULL,
    acked      INTEGER NOT NULL DEFAULT 0,
    PRIMARY KEY (recipient, event_id)
);

CREATE TABLE IF NOT EXISTS pro_tip_state (
    community_id TEXT PRIMARY KEY REFERENCES communities(community_id),
    next_index   INTEGER NOT NULL,
    last_tip_at  TEXT NOT NULL
);
"""


class Database:
    """Thread-safe handle on the embedded store.

    Each thread gets its own connection; writers serialize on a process-wide
    lock plus BEGIN IMMEDIATE, readers run concurrently against the WAL
    snapshot taken when their transaction starts.
    """

    def __init__(self, path: str | os.PathLike):
        self._path = os.fspath(path)
        Path(self._path).parent.mkdir(parents=True, exist_ok=True)
        self._local = threading.local()
        self._write_lock = threading.Lock()
        conn = self._connection()
        with self._write_lock:
            conn.executescript(SCHEMA)

    @property
    def path(self) -> str:
        return self._path

    def _connection(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(
                self._path,
                timeout=30.0,
                isolation_level=None,  # explicit BEGIN/COMMIT below
                check_same_thread=False,
            )
            conn.row_factory = sqlite3.Row
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=NORMAL")
            conn.execute("PRAGMA foreign_keys=ON")
            conn.execute("PRAGMA busy_timeout=30000")
            self._local.conn = conn
        return conn

    @contextmanager
    def write(self) -> Iterator[sqlite3.Connection]:
        """One serialized read-modify-write transaction. Not reentrant."""
        conn = self._connection()
        with self._write_lock:
            conn.execute("BEGIN IMMEDIATE")
            try:
                yield conn
            except BaseException:
                conn.execute("ROLLBACK")
                raise
            else:
                conn.execute("COMMIT")

    @contextmanager
    def read(self) -> Iterator[sqlite3.Connection]:
        """A consistent read snapshot; all SELECTs inside see one state."""
        conn = self._connection()
        conn.execute("BEGIN")
        try:
            yield conn
        finally:
            conn.execute("COMMIT")

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None
