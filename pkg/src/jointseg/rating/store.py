"""Single-file sqlite persistence for rating sessions.

Sessions are stored with their full (secret) alias mapping in a JSON
column that is never serialised into API responses while the session is
open. Scores are upserted; the audit table is append-only.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from datetime import datetime, timezone
from pathlib import Path

from ..errors import ConflictError

_SCHEMA = """
CREATE TABLE IF NOT EXISTS sessions (
    id TEXT PRIMARY KEY,
    rater TEXT NOT NULL,
    status TEXT NOT NULL DEFAULT 'open',
    seed INTEGER,
    version INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL,
    blob TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS scores (
    session TEXT NOT NULL,
    case_id TEXT NOT NULL,
    alias TEXT NOT NULL,
    landmark TEXT NOT NULL,
    value TEXT NOT NULL,
    updated_at TEXT NOT NULL,
    PRIMARY KEY (session, case_id, alias, landmark)
);
CREATE TABLE IF NOT EXISTS audit (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    session TEXT NOT NULL,
    case_id TEXT,
    alias TEXT,
    landmark TEXT,
    value TEXT,
    event TEXT NOT NULL,
    ts TEXT NOT NULL
);
"""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RatingStore:
    def __init__(self, path):
        self.path = str(path)
        Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self):
        self._conn.close()

    def insert_session(self, session_id: str, rater: str, seed, blob: dict) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO sessions (id, rater, status, seed, version, created_at, blob)"
                " VALUES (?, ?, 'open', ?, 0, ?, ?)",
                (session_id, rater, seed, _now(), json.dumps(blob)),
            )
            self._audit(session_id, event="created")

    def get_session(self, session_id: str) -> dict | None:
        row = self._conn.execute(
            "SELECT * FROM sessions WHERE id = ?", (session_id,)
        ).fetchone()
        if row is None:
            return None
        out = dict(row)
        out["blob"] = json.loads(out["blob"])
        return out

    def list_sessions(self) -> list[dict]:
        rows = self._conn.execute(
            "SELECT id, rater, status, created_at FROM sessions ORDER BY created_at"
        ).fetchall()
        return [dict(r) for r in rows]

    def set_status(self, session_id: str, expected_version: int, status: str) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE sessions SET status = ?, version = version + 1"
                " WHERE id = ? AND version = ?",
                (status, session_id, expected_version),
            )
            if cur.rowcount != 1:
                raise ConflictError("session was modified concurrently")
            self._audit(session_id, event=status)

    def upsert_score(self, session_id: str, case_id: str, alias: str,
                     landmark: str, value: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO scores (session, case_id, alias, landmark, value, updated_at)"
                " VALUES (?, ?, ?, ?, ?, ?)"
                " ON CONFLICT(session, case_id, alias, landmark)"
                " DO UPDATE SET value = excluded.value, updated_at = excluded.updated_at",
                (session_id, case_id, alias, landmark, value, _now()),
            )
            self._conn.execute(
                "UPDATE sessions SET version = version + 1 WHERE id = ?", (session_id,)
            )
            self._audit(session_id, case_id, alias, landmark, value, event="score")

    def scores(self, session_id: str) -> list[dict]:
        rows = self._conn.execute(
            "SELECT * FROM scores WHERE session = ?", (session_id,)
        ).fetchall()
        return [dict(r) for r in rows]

    def audit_rows(self, session_id: str) -> list[dict]:
        rows = self._conn.execute(
            "SELECT * FROM audit WHERE session = ? ORDER BY id", (session_id,)
        ).fetchall()
        return [dict(r) for r in rows]

    def _audit(self, session_id, case_id=None, alias=None, landmark=None,
               value=None, event="score"):
        self._conn.execute(
            "INSERT INTO audit (session, case_id, alias, landmark, value, event, ts)"
            " VALUES (?, ?, ?, ?, ?, ?, ?)",
            (session_id, case_id, alias, landmark, value, event, _now()),
        )
