"""Tests for jamshield.runs module."""

import asyncio

import numpy as np
import pytest

from jamshield.config import ExperimentConfig, TrainerConfig, config_hash, load_config
from jamshield.env import KPI_COLUMNS, KpiRecord
from jamshield.runs import (
    RunLedger,
    RunManifest,
    RunRecord,
    packet_loss_cdf,
    prepare_run_dir,
    read_kpi_csv,
    run_dir,
    write_kpi_csv,
)


@pytest.fixture
def ledger(tmp_path):
    ledger = RunLedger(tmp_path / "runs.db")
    yield ledger
    ledger.close()


def _record(seed=0, status="ok", variant="mappo", subcommand="train"):
    return RunRecord(subcommand, variant, seed, "abc", status, 1.5, f"/runs/{variant}/seed-{seed}")


def _kpi(slot, loss):
    return KpiRecord(slot, loss, 1.0 + loss, 2.5e-4, 1e-5, 12.3456789012345, 1e-9, 3e-11, 0.1, -0.2)


async def test_table_auto_creation(tmp_path):
    ledger = RunLedger(tmp_path / "fresh.db")
    assert await ledger.runs() == []
    ledger.close()


async def test_record_and_list(ledger):
    await ledger.record(_record(seed=1))
    await ledger.record(_record(seed=0, variant="ippo"))
    runs = await ledger.runs()
    assert [(r.variant, r.seed) for r in runs] == [("ippo", 0), ("mappo", 1)]
    assert runs[1].out_dir == "/runs/mappo/seed-1"
    assert runs[1].created_at


async def test_rerun_replaces_cell(ledger):
    await ledger.record(_record(seed=2, status="failed"))
    await ledger.record(_record(seed=2, status="ok"))
    runs = await ledger.runs()
    assert len(runs) == 1
    assert runs[0].status == "ok"


async def test_filter_by_status_and_subcommand(ledger):
    await ledger.record(_record(seed=0, status="ok"))
    await ledger.record(_record(seed=1, status="failed"))
    await ledger.record(_record(seed=0, subcommand="evaluate"))
    assert len(await ledger.runs(status="ok")) == 2
    assert len(await ledger.runs(subcommand="train", status="ok")) == 1
    assert len(await ledger.runs(status="failed")) == 1
    assert len(await ledger.runs(subcommand="evaluate")) == 1


async def test_concurrent_records_all_land(ledger):
    cells = [(v, s) for v in ("ippo", "mappo") for s in range(40)]
    await asyncio.gather(*(ledger.record(_record(seed=s, variant=v)) for v, s in cells))
    runs = await ledger.runs()
    assert len(runs) == 80
    assert {(r.variant, r.seed) for r in runs} == set(cells)


def test_run_dir_layout(tmp_path):
    assert run_dir(tmp_path, "train", "mappo", 7) == tmp_path / "train" / "mappo" / "seed-7"


def test_prepare_run_dir_writes_resolved_config(tmp_path):
    cfg = ExperimentConfig(trainer=TrainerConfig(epochs=5))
    directory, manifest = prepare_run_dir(tmp_path, "train", "ippo", 3, cfg)
    assert directory.is_dir()
    assert config_hash(load_config(directory / "config.resolved.toml")) == config_hash(cfg)
    assert manifest.config_hash == config_hash(cfg)
    assert manifest.seeds == [3]


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest("evaluate", "mappo", [1, 2], "h", {"kpi": "kpi.csv"})
    manifest.write(tmp_path)
    assert RunManifest.read(tmp_path) == manifest
    assert manifest.code_version


def test_kpi_csv_header_and_precision(tmp_path):
    kpis = [_kpi(0, 0.1), _kpi(1, 0.3)]
    path = tmp_path / "kpi.csv"
    write_kpi_csv(path, kpis)
    assert path.read_text().splitlines()[0] == ",".join(KPI_COLUMNS)
    frame = read_kpi_csv(path)
    assert list(frame["packet_loss"]) == pytest.approx([0.1, 0.3])
    assert frame["sinr_eff"].iloc[0] == pytest.approx(12.3456789012345, rel=1e-14)


def test_packet_loss_cdf():
    cdf = packet_loss_cdf([0.5, 0.0, 0.5, 1.0])
    assert list(cdf["packet_loss"]) == [0.0, 0.5, 1.0]
    assert list(cdf["cdf"]) == [0.25, 0.75, 1.0]


def test_packet_loss_cdf_is_monotone_and_ends_at_one():
    values = np.random.default_rng(0).uniform(size=333)
    cdf = packet_loss_cdf(values)["cdf"].to_numpy()
    assert np.all(np.diff(cdf) >= 0)
    assert cdf[-1] == 1.0


def test_packet_loss_cdf_empty():
    assert packet_loss_cdf([]).empty
