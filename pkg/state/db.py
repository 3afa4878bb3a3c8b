from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import List

import numpy as np
from sqlalchemy import create_engine, text
from sqlalchemy.engine import Engine

from core.config import db_url

INIT_SQL = r"""
CREATE TABLE IF NOT EXISTS runs (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  label TEXT,
  spec TEXT,
  seed INTEGER,
  created_at TEXT
);

CREATE TABLE IF NOT EXISTS theta_iterates (
  run_id INTEGER,
  iteration INTEGER,
  theta TEXT,
  objective REAL,
  residual REAL,
  PRIMARY KEY (run_id, iteration)
);
"""


class RunStore:
    """Training runs and their theta iterates, one SQLite file per output directory"""

    def __init__(self, output_dir: str | Path):
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        self.engine: Engine = create_engine(db_url(output_dir), future=True)
        self.init_db()

    def init_db(self) -> None:
        with self.engine.begin() as conn:
            for stmt in INIT_SQL.split(";\n\n"):
                if stmt.strip():
                    conn.execute(text(stmt))

    def start_run(self, label: str, spec_json: str, seed: int) -> int:
        with self.engine.begin() as conn:
            result = conn.execute(
                text("INSERT INTO runs (label, spec, seed, created_at) VALUES (:l, :s, :seed, :t)"),
                {"l": label, "s": spec_json, "seed": seed,
                 "t": datetime.now(timezone.utc).isoformat()},
            )
            return int(result.lastrowid)

    def record_iterate(self, run_id: int, iteration: int, theta: np.ndarray,
                       objective: float, residual: float) -> None:
        with self.engine.begin() as conn:
            conn.execute(
                text("INSERT OR REPLACE INTO theta_iterates VALUES (:r, :i, :th, :o, :res)"),
                {"r": run_id, "i": iteration, "th": json.dumps([float(x) for x in theta]),
                 "o": objective, "res": residual},
            )

    def load_thetas(self, run_id: int) -> List[np.ndarray]:
        with self.engine.connect() as conn:
            rows = conn.execute(
                text("SELECT theta FROM theta_iterates WHERE run_id = :r ORDER BY iteration"),
                {"r": run_id},
            ).fetchall()
        return [np.array(json.loads(row[0])) for row in rows]

    def runs(self) -> List[dict]:
        with self.engine.connect() as conn:
            rows = conn.execute(text("SELECT id, label, spec, seed FROM runs ORDER BY id")).fetchall()
        return [dict(row._mapping) for row in rows]
