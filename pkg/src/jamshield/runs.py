"""Run directories, manifests, KPI/curve CSVs and the SQLite ledger of completed cells."""

import asyncio
import json
import sqlite3
import threading
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import pandas as pd

from jamshield.config import ExperimentConfig, config_hash, dump_config
from jamshield.env import KPI_COLUMNS, KpiRecord

LEDGER_NAME = "runs.db"


def code_version() -> str:
    try:
        return version("jamshield")
    except PackageNotFoundError:
        return "0+unknown"


def run_dir(out: str | Path, subcommand: str, variant: str, seed: int) -> Path:
    return Path(out) / subcommand / variant / f"seed-{seed}"


@dataclass
class RunManifest:
    subcommand: str
    variant: str
    seeds: list[int]
    config_hash: str
    outputs: dict[str, str] = field(default_factory=dict)
    code_version: str = field(default_factory=code_version)

    def write(self, directory: str | Path) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path

    @classmethod
    def read(cls, directory: str | Path) -> "RunManifest":
        return cls(**json.loads((Path(directory) / "manifest.json").read_text()))


def prepare_run_dir(
    out: str | Path, subcommand: str, variant: str, seed: int, cfg: ExperimentConfig
) -> tuple[Path, RunManifest]:
    directory = run_dir(out, subcommand, variant, seed)
    directory.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, directory / "config.resolved.toml")
    manifest = RunManifest(
        subcommand, variant, [seed], config_hash(cfg), {"config": "config.resolved.toml"}
    )
    return directory, manifest


def kpi_frame(kpis: list[KpiRecord]) -> pd.DataFrame:
    return pd.DataFrame([k.as_row() for k in kpis], columns=list(KPI_COLUMNS))


def write_kpi_csv(path: str | Path, kpis: list[KpiRecord]) -> None:
    kpi_frame(kpis).to_csv(path, index=False, float_format="%.17g")


def read_kpi_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_curve_csv(path: str | Path, curve: list[dict[str, float]]) -> None:
    pd.DataFrame(curve).to_csv(path, index=False, float_format="%.17g")


def packet_loss_cdf(packet_loss: np.ndarray | list[float]) -> pd.DataFrame:
    """Empirical CDF over the distinct packet-loss values; the last row is 1.0."""
    values = np.sort(np.asarray(packet_loss, dtype=np.float64))
    if values.size == 0:
        return pd.DataFrame({"packet_loss": [], "cdf": []})
    unique, counts = np.unique(values, return_counts=True)
    cdf = np.cumsum(counts) / values.size
    cdf[-1] = 1.0
    return pd.DataFrame({"packet_loss": unique, "cdf": cdf})


@dataclass
class RunRecord:
    subcommand: str
    variant: str
    seed: int
    config_hash: str
    status: str
    duration_s: float | None
    out_dir: str
    created_at: str = ""


class RunLedger:
    def __init__(self, db_path: str | Path) -> None:
        self._db_path = str(db_path)
        self._conn = sqlite3.connect(self._db_path, check_same_thread=False)
        self._lock = threading.Lock()
        self._conn.row_factory = sqlite3.Row
        self._init_tables()

    def _init_tables(self) -> None:
        self._conn.executescript(
            """
            CREATE TABLE IF NOT EXISTS runs (
                id          INTEGER PRIMARY KEY AUTOINCREMENT,
                subcommand  TEXT NOT NULL,
                variant     TEXT NOT NULL,
                seed        INTEGER NOT NULL,
                config_hash TEXT NOT NULL,
                status      TEXT NOT NULL,
                duration_s  REAL,
                out_dir     TEXT NOT NULL,
                created_at  TEXT DEFAULT (datetime('now')),
                UNIQUE (subcommand, variant, seed)
            );
            CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
            """
        )
        self._conn.commit()

    def _record_sync(self, record: RunRecord) -> None:
        with self._lock:
            self._conn.execute(
                """
                INSERT INTO runs (subcommand, variant, seed, config_hash, status, duration_s, out_dir)
                VALUES (?, ?, ?, ?, ?, ?, ?)
                ON CONFLICT(subcommand, variant, seed) DO UPDATE SET
                    config_hash = excluded.config_hash,
                    status = excluded.status,
                    duration_s = excluded.duration_s,
                    out_dir = excluded.out_dir,
                    created_at = datetime('now')
                """,
                (
                    record.subcommand,
                    record.variant,
                    record.seed,
                    record.config_hash,
                    record.status,
                    record.duration_s,
                    record.out_dir,
                ),
            )
            self._conn.commit()

    def _runs_sync(self, subcommand: str | None, status: str | None) -> list[RunRecord]:
        query = "SELECT * FROM runs WHERE 1 = 1"
        params: list = []
        if subcommand is not None:
            query += " AND subcommand = ?"
            params.append(subcommand)
        if status is not None:
            query += " AND status = ?"
            params.append(status)
        with self._lock:
            rows = self._conn.execute(query + " ORDER BY subcommand, variant, seed", params).fetchall()
        return [
            RunRecord(
                subcommand=row["subcommand"],
                variant=row["variant"],
                seed=row["seed"],
                config_hash=row["config_hash"],
                status=row["status"],
                duration_s=row["duration_s"],
                out_dir=row["out_dir"],
                created_at=row["created_at"],
            )
            for row in rows
        ]

    async def record(self, record: RunRecord) -> None:
        await asyncio.to_thread(self._record_sync, record)

    async def runs(self, subcommand: str | None = None, status: str | None = None) -> list[RunRecord]:
        return await asyncio.to_thread(self._runs_sync, subcommand, status)

    def close(self) -> None:
        with self._lock:
            self._conn.close()
