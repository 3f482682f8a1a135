"""Embedded relational store: pipe registry, rule set, and event history
live in one SQLite database as three tables."""

from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path
from typing import Optional

from pipetrack.locate import Position
from pipetrack.tracking.models import Event, PipeRecord, Rule

_SCHEMA = """
CREATE TABLE IF NOT EXISTS pipes (
    pipe_id TEXT PRIMARY KEY,
    material TEXT NOT NULL DEFAULT '',
    diameter_mm REAL NOT NULL DEFAULT 0,
    description TEXT NOT NULL DEFAULT '',
    status TEXT NOT NULL DEFAULT 'unknown',
    registered INTEGER NOT NULL DEFAULT 1,
    current_zone TEXT NOT NULL DEFAULT 'outside',
    last_x REAL, last_y REAL, last_t INTEGER, last_residual REAL
);
CREATE TABLE IF NOT EXISTS rules (
    rule_id TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    params TEXT NOT NULL DEFAULT '{}',
    enabled INTEGER NOT NULL DEFAULT 1
);
CREATE TABLE IF NOT EXISTS events (
    event_id INTEGER PRIMARY KEY,
    pipe_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    from_zone TEXT, to_zone TEXT,
    t INTEGER NOT NULL,
    payload TEXT NOT NULL DEFAULT '{}'
);
CREATE INDEX IF NOT EXISTS events_pipe_t ON events (pipe_id, t);
"""


class TrackingStore:
    """Write-through persistence for the tracker. One writer, many readers;
    a single connection guarded by a lock keeps SQLite happy across the
    feeder and API threads."""

    def __init__(self, db_path: str | Path = ":memory:"):
        self.db_path = str(db_path)
        self._conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- pipes ------------------------------------------------------------

    def upsert_pipe(self, rec: PipeRecord) -> None:
        pos = rec.last_position
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT INTO pipes (pipe_id, material, diameter_mm, description,
                       status, registered, current_zone, last_x, last_y, last_t,
                       last_residual)
                   VALUES (?,?,?,?,?,?,?,?,?,?,?)
                   ON CONFLICT(pipe_id) DO UPDATE SET
                       material=excluded.material,
                       diameter_mm=excluded.diameter_mm,
                       description=excluded.description,
                       status=excluded.status,
                       registered=excluded.registered,
                       current_zone=excluded.current_zone,
                       last_x=excluded.last_x, last_y=excluded.last_y,
                       last_t=excluded.last_t,
                       last_residual=excluded.last_residual""",
                (rec.pipe_id, rec.material, rec.diameter_mm, rec.description,
                 rec.status, int(rec.registered), rec.current_zone,
                 pos.x if pos else None, pos.y if pos else None,
                 pos.epoch if pos else None, pos.residual if pos else None),
            )

    def get_pipe(self, pipe_id: str) -> Optional[PipeRecord]:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM pipes WHERE pipe_id = ?", (pipe_id,)
            ).fetchone()
        return self._pipe_from_row(row) if row else None

    def list_pipes(self) -> list[PipeRecord]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM pipes ORDER BY pipe_id"
            ).fetchall()
        return [self._pipe_from_row(r) for r in rows]

    @staticmethod
    def _pipe_from_row(row: sqlite3.Row) -> PipeRecord:
        pos = None
        if row["last_x"] is not None:
            pos = Position(
                x=row["last_x"], y=row["last_y"],
                residual=row["last_residual"] or 0.0,
                epoch=row["last_t"] or 0, source_antenna_count=0,
            )
        return PipeRecord(
            pipe_id=row["pipe_id"], material=row["material"],
            diameter_mm=row["diameter_mm"], description=row["description"],
            status=row["status"], registered=bool(row["registered"]),
            current_zone=row["current_zone"], last_position=pos,
        )

    # -- rules ------------------------------------------------------------

    def upsert_rule(self, rule: Rule) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT INTO rules (rule_id, kind, params, enabled)
                   VALUES (?,?,?,?)
                   ON CONFLICT(rule_id) DO UPDATE SET kind=excluded.kind,
                       params=excluded.params, enabled=excluded.enabled""",
                (rule.rule_id, rule.kind, json.dumps(rule.params), int(rule.enabled)),
            )

    def list_rules(self) -> list[Rule]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM rules ORDER BY rule_id").fetchall()
        return [
            Rule(rule_id=r["rule_id"], kind=r["kind"],
                 params=json.loads(r["params"]), enabled=bool(r["enabled"]))
            for r in rows
        ]

    # -- events -----------------------------------------------------------

    def append_event(self, event: Event) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT INTO events (event_id, pipe_id, kind, from_zone, to_zone,
                       t, payload) VALUES (?,?,?,?,?,?,?)""",
                (event.event_id, event.pipe_id, event.kind, event.from_zone,
                 event.to_zone, event.t, json.dumps(event.payload)),
            )

    def list_events(self, pipe_id: str | None = None, since_id: int = 0,
                    limit: int = 1000) -> list[Event]:
        q = "SELECT * FROM events WHERE event_id > ?"
        args: list = [since_id]
        if pipe_id is not None:
            q += " AND pipe_id = ?"
            args.append(pipe_id)
        q += " ORDER BY event_id LIMIT ?"
        args.append(limit)
        with self._lock:
            rows = self._conn.execute(q, args).fetchall()
        return [
            Event(event_id=r["event_id"], pipe_id=r["pipe_id"], kind=r["kind"],
                  from_zone=r["from_zone"], to_zone=r["to_zone"], t=r["t"],
                  payload=json.loads(r["payload"]))
            for r in rows
        ]

    def max_event_id(self) -> int:
        with self._lock:
            row = self._conn.execute("SELECT MAX(event_id) AS m FROM events").fetchone()
        return int(row["m"] or 0)
