from __future__ import annotations

import json
import sqlite3
from pathlib import Path
from typing import Any, Iterable, Mapping


def connect(db_path: Path) -> sqlite3.Connection:
    conn = sqlite3.connect(str(db_path))
    conn.row_factory = sqlite3.Row
    return conn


def init_schema(conn: sqlite3.Connection) -> None:
    conn.executescript(
        """
        PRAGMA foreign_keys = ON;
        PRAGMA journal_mode = WAL;

        CREATE TABLE IF NOT EXISTS runs (
            run_id TEXT PRIMARY KEY,
            command TEXT NOT NULL,
            algorithm TEXT,
            alpha REAL,
            num_companies INTEGER,
            num_investors INTEGER,
            seed INTEGER,
            config_hash TEXT,
            config_json TEXT,

            status TEXT NOT NULL,
            error TEXT,

            started_at REAL NOT NULL,
            finished_at REAL
        );

        CREATE TABLE IF NOT EXISTS metrics (
            run_id TEXT NOT NULL,
            update_index INTEGER NOT NULL,
            env_steps INTEGER NOT NULL,
            row_json TEXT NOT NULL,

            PRIMARY KEY (run_id, update_index),
            FOREIGN KEY(run_id) REFERENCES runs(run_id)
        );

        CREATE INDEX IF NOT EXISTS idx_runs_group ON runs(algorithm, alpha);
        CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
        """
    )


def row_to_dict(row: sqlite3.Row | None) -> dict[str, Any] | None:
    if row is None:
        return None
    return dict(row)


def get_run(conn: sqlite3.Connection, run_id: str) -> dict[str, Any] | None:
    row = conn.execute("SELECT * FROM runs WHERE run_id = ?", (run_id,)).fetchone()
    return row_to_dict(row)


def upsert_run(
    conn: sqlite3.Connection,
    *,
    run_id: str,
    command: str,
    algorithm: str | None,
    alpha: float | None,
    num_companies: int | None,
    num_investors: int | None,
    seed: int | None,
    config_hash: str | None,
    config: Mapping[str, Any] | None,
    status: str,
    error: str | None,
    started_at: float,
    finished_at: float | None = None,
) -> None:
    conn.execute(
        """
        INSERT INTO runs (
            run_id, command, algorithm, alpha, num_companies, num_investors, seed,
            config_hash, config_json, status, error, started_at, finished_at
        )
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        ON CONFLICT(run_id) DO UPDATE SET
            command = excluded.command,
            algorithm = excluded.algorithm,
            alpha = excluded.alpha,
            num_companies = excluded.num_companies,
            num_investors = excluded.num_investors,
            seed = excluded.seed,
            config_hash = excluded.config_hash,
            config_json = excluded.config_json,
            status = excluded.status,
            error = excluded.error,
            finished_at = excluded.finished_at
        """,
        (
            run_id,
            command,
            algorithm,
            alpha,
            num_companies,
            num_investors,
            seed,
            config_hash,
            json.dumps(config, sort_keys=True) if config is not None else None,
            status,
            error,
            started_at,
            finished_at,
        ),
    )


def append_metrics(conn: sqlite3.Connection, run_id: str, rows: Iterable[Mapping[str, Any]]) -> int:
    n = 0
    for row in rows:
        conn.execute(
            """
            INSERT INTO metrics (run_id, update_index, env_steps, row_json)
            VALUES (?, ?, ?, ?)
            ON CONFLICT(run_id, update_index) DO UPDATE SET
                env_steps = excluded.env_steps,
                row_json = excluded.row_json
            """,
            (run_id, int(row["update"]), int(row["env_steps"]), json.dumps(row, sort_keys=True)),
        )
        n += 1
    return n


def truncate_metrics(conn: sqlite3.Connection, run_id: str, *, after_update: int) -> None:
    conn.execute("DELETE FROM metrics WHERE run_id = ? AND update_index > ?", (run_id, after_update))


def iter_runs(
    conn: sqlite3.Connection,
    *,
    where_sql: str = "",
    params: Iterable[Any] = (),
) -> list[dict[str, Any]]:
    sql = "SELECT * FROM runs"
    if where_sql.strip():
        sql += " WHERE " + where_sql
    sql += " ORDER BY started_at DESC"
    rows = conn.execute(sql, tuple(params)).fetchall()
    return [dict(r) for r in rows]


def metrics_for_run(conn: sqlite3.Connection, run_id: str) -> list[dict[str, Any]]:
    rows = conn.execute(
        "SELECT row_json FROM metrics WHERE run_id = ? ORDER BY update_index",
        (run_id,),
    ).fetchall()
    return [json.loads(r["row_json"]) for r in rows]
