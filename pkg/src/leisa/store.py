"""Embedded relational store for the service and queue_mapping tables.

Backed by sqlite3: one connection, write transactions serialized through a
single lock (reads share it too; they are microseconds at this scale).
Service ids come from a persisted monotonic counter so an id can be handed
out before the row is inserted — queue and broker-user creation happen
between the two.
"""

from __future__ import annotations

import sqlite3
import threading
from pathlib import Path

_SCHEMA = """
CREATE TABLE IF NOT EXISTS service (
    service_id INTEGER PRIMARY KEY,
    username TEXT NOT NULL UNIQUE,
    password_hash TEXT NOT NULL,
    role TEXT NOT NULL CHECK (role IN ('producer', 'consumer')),
    queue_name TEXT,
    is_admin INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS queue_mapping (
    mapping_id INTEGER PRIMARY KEY AUTOINCREMENT,
    producer_id INTEGER NOT NULL,
    event_type TEXT NOT NULL,
    consumer_queue TEXT NOT NULL,
    UNIQUE (producer_id, event_type, consumer_queue)
);
CREATE INDEX IF NOT EXISTS idx_mapping_producer ON queue_mapping (producer_id, event_type);
CREATE INDEX IF NOT EXISTS idx_mapping_queue ON queue_mapping (consumer_queue);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value INTEGER NOT NULL
);
INSERT OR IGNORE INTO meta (key, value) VALUES ('next_service_id', 1);
"""


class Store:
    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        if self.path != ":memory:":
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()
        self.lock = threading.RLock()

    def query(self, sql: str, params: tuple = ()) -> list[sqlite3.Row]:
        with self.lock:
            return self._conn.execute(sql, params).fetchall()

    def query_one(self, sql: str, params: tuple = ()) -> sqlite3.Row | None:
        with self.lock:
            return self._conn.execute(sql, params).fetchone()

    def execute(self, sql: str, params: tuple = ()) -> sqlite3.Cursor:
        """Single autocommitted write."""
        with self.lock:
            cur = self._conn.execute(sql, params)
            self._conn.commit()
            return cur

    def allocate_service_id(self) -> int:
        with self.lock:
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key = 'next_service_id'"
            ).fetchone()
            next_id = row["value"]
            self._conn.execute(
                "UPDATE meta SET value = ? WHERE key = 'next_service_id'", (next_id + 1,)
            )
            self._conn.commit()
            return next_id

    def close(self) -> None:
        self._conn.close()
