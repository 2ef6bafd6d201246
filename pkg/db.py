import json
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from records import SlopeFit, SweepRecord


class RecordDatabase:
    """SQLite store of finished runs and their sweep records, for comparing runs across deltas and configs."""

    def __init__(self, db_path: str = "results.db"):
        self.db_path = Path(db_path)
        self.init_database()

    def _connect(self) -> sqlite3.Connection:
        """Create a SQLite connection with foreign keys and Row factory enabled."""
        conn = sqlite3.connect(self.db_path)
        try:
            conn.execute("PRAGMA foreign_keys=ON")
        except sqlite3.OperationalError:
            pass
        conn.row_factory = sqlite3.Row
        return conn

    def init_database(self):
        """Create tables if they don't exist."""
        with self._connect() as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    name TEXT NOT NULL,
                    scenario TEXT NOT NULL,
                    output_dir TEXT NOT NULL,
                    passed INTEGER NOT NULL,
                    fits TEXT NOT NULL,          -- JSON array of SlopeFit
                    config TEXT NOT NULL,        -- JSON object
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)

            conn.execute("""
                CREATE TABLE IF NOT EXISTS records (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    eps REAL NOT NULL,
                    T REAL NOT NULL,
                    t REAL NOT NULL,
                    error REAL NOT NULL,
                    scenario TEXT NOT NULL,
                    path TEXT NOT NULL,
                    dt REAL NOT NULL,
                    delta REAL NOT NULL,
                    mass_drift REAL NOT NULL,
                    FOREIGN KEY (run_id) REFERENCES runs(id) ON DELETE CASCADE
                )
            """)

            conn.execute("CREATE INDEX IF NOT EXISTS idx_run_name ON runs(name)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_record_run ON records(run_id)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_record_delta ON records(delta)")
            conn.commit()

    def save_run(
        self,
        name: str,
        scenario: str,
        output_dir: str | Path,
        records: List[SweepRecord],
        fits: List[SlopeFit],
        passed: bool,
        config: Optional[dict] = None,
    ) -> int:
        """Store a run with its records. Returns the run ID."""
        with self._connect() as conn:
            cursor = conn.cursor()
            cursor.execute(
                """
                INSERT INTO runs (name, scenario, output_dir, passed, fits, config, created_at)
                VALUES (?, ?, ?, ?, ?, ?, ?)
                """,
                (
                    name,
                    scenario,
                    str(output_dir),
                    int(passed),
                    json.dumps([fit.model_dump() for fit in fits]),
                    json.dumps(config or {}, sort_keys=True),
                    datetime.now().isoformat(),
                ),
            )
            run_id = cursor.lastrowid
            cursor.executemany(
                """
                INSERT INTO records (run_id, eps, T, t, error, scenario, path, dt, delta, mass_drift)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                [
                    (run_id, r.eps, r.T, r.t, r.error, r.scenario, r.path, r.dt, r.delta, r.mass_drift)
                    for r in records
                ],
            )
            conn.commit()
            return run_id

    def get_run(self, run_id: int) -> Optional[dict]:
        with self._connect() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
            row = cursor.fetchone()
            return self._run_to_dict(dict(row)) if row else None

    def get_runs(self, name: Optional[str] = None) -> List[dict]:
        """All runs, newest first, optionally restricted to one config name."""
        with self._connect() as conn:
            cursor = conn.cursor()
            if name is None:
                cursor.execute("SELECT * FROM runs ORDER BY id DESC")
            else:
                cursor.execute("SELECT * FROM runs WHERE name = ? ORDER BY id DESC", (name,))
            return [self._run_to_dict(dict(row)) for row in cursor.fetchall()]

    def get_records(self, run_id: int) -> List[SweepRecord]:
        with self._connect() as conn:
            cursor = conn.cursor()
            cursor.execute(
                "SELECT * FROM records WHERE run_id = ? ORDER BY scenario, path, eps, t", (run_id,)
            )
            return [self._row_to_record(dict(row)) for row in cursor.fetchall()]

    def get_records_by_delta(self, delta: float) -> List[SweepRecord]:
        """Records of every run made with this regularization, for delta-sensitivity comparisons."""
        with self._connect() as conn:
            cursor = conn.cursor()
            cursor.execute(
                "SELECT * FROM records WHERE delta = ? ORDER BY scenario, path, eps, t", (delta,)
            )
            return [self._row_to_record(dict(row)) for row in cursor.fetchall()]

    def delete_run(self, run_id: int) -> bool:
        with self._connect() as conn:
            cursor = conn.cursor()
            cursor.execute("DELETE FROM runs WHERE id = ?", (run_id,))
            conn.commit()
            return cursor.rowcount > 0

    def get_stats(self) -> dict:
        with self._connect() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT COUNT(*) FROM runs")
            runs = cursor.fetchone()[0]
            cursor.execute("SELECT COUNT(*) FROM runs WHERE passed = 1")
            passed = cursor.fetchone()[0]
            cursor.execute("SELECT COUNT(*) FROM records")
            records = cursor.fetchone()[0]
            return {'total_runs': runs, 'passed_runs': passed, 'total_records': records}

    def _run_to_dict(self, row: dict) -> dict:
        row['passed'] = bool(row['passed'])
        row['fits'] = [SlopeFit.model_validate(fit) for fit in json.loads(row['fits'])]
        row['config'] = json.loads(row['config'])
        return row

    def _row_to_record(self, row: dict) -> SweepRecord:
        return SweepRecord(
            eps=row['eps'],
            T=row['T'],
            t=row['t'],
            error=row['error'],
            scenario=row['scenario'],
            path=row['path'],
            dt=row['dt'],
            delta=row['delta'],
            mass_drift=row['mass_drift'],
        )
