"""Tests for jamshield.report module."""

import json

import numpy as np
import pandas as pd
import pytest

from jamshield.env import KpiRecord
from jamshield.report import (
    ACCEPTANCE_COLUMNS,
    LATENCY_COLUMNS,
    acceptance_summary,
    emit_reports,
    epochs_to_fraction,
    latency_summary,
    plot_learning_curves,
    plot_packet_loss_cdf,
)
from jamshield.runs import RunManifest, run_dir, write_curve_csv, write_kpi_csv


def _make_run(out, subcommand, variant, seed, with_curve=False, objective=None):
    directory = run_dir(out, subcommand, variant, seed)
    directory.mkdir(parents=True)
    rng = np.random.default_rng(seed)
    kpis = [
        KpiRecord(t, float(rng.uniform(0, 0.15)), 1.0, 2.5e-4 * (1 + t % 3), 1e-5, 5.0, 1e-9, 1e-11, 0.0, 0.0)
        for t in range(20)
    ]
    write_kpi_csv(directory / "kpi.csv", kpis)
    if with_curve:
        write_curve_csv(
            directory / "learning_curve.csv",
            [{"epoch": e, "reward": float(e + seed)} for e in range(10)],
        )
    if objective is not None:
        (directory / "objective.json").write_text(json.dumps(objective))
    RunManifest(subcommand, variant, [seed], "h").write(directory)
    return directory


def _objective(value, latency=False):
    return {"value": value, "violations": {"latency": latency, "jitter": False, "sinr": False, "notch": False}}


def test_epochs_to_fraction_on_linear_ramp():
    assert epochs_to_fraction(np.arange(100.0)) == 88


def test_epochs_to_fraction_with_negative_rewards():
    curve = np.concatenate([np.linspace(-200.0, -50.0, 100), np.full(100, -50.0)])
    assert 85 <= epochs_to_fraction(curve) <= 100


def test_epochs_to_fraction_on_decreasing_curve():
    assert epochs_to_fraction(-np.arange(100.0)) == 88


def test_epochs_to_fraction_flat_curve():
    assert epochs_to_fraction(np.ones(50)) == 0
    assert epochs_to_fraction([]) == 0


def test_learning_curve_plot_has_one_series_per_variant():
    curves = {v: pd.DataFrame({"epoch": [0, 1], "reward": [0.0, 1.0]}) for v in ("ippo", "mappo")}
    fig = plot_learning_curves(curves)
    assert len(fig.axes[0].lines) == 2


def test_cdf_plot_spans_unit_interval():
    fig = plot_packet_loss_cdf({"mappo": np.array([0.1, 0.2, 0.2])})
    ax = fig.axes[0]
    assert len(ax.lines) == 1
    assert ax.get_xlim() == (0.0, 1.0)


def test_latency_summary_columns():
    frame = pd.DataFrame({"latency_s": [1e-3, 2e-3, 3e-3]})
    summary = latency_summary({"fixed": [frame]})
    assert list(summary.columns) == LATENCY_COLUMNS
    assert summary["mean_ms"].iloc[0] == pytest.approx(2.0)
    assert summary["median_ms"].iloc[0] == pytest.approx(2.0)


def test_emit_reports(tmp_path):
    runs = [
        _make_run(tmp_path, "train", "mappo", 0, with_curve=True),
        _make_run(tmp_path, "train", "mappo", 1, with_curve=True),
        _make_run(tmp_path, "evaluate", "mappo", 0, objective=_objective(0.4)),
        _make_run(tmp_path, "evaluate", "random", 0, objective=_objective(0.9, latency=True)),
    ]
    paths = emit_reports(runs, tmp_path / "report")
    assert all(p.exists() for p in paths.values())
    assert paths["learning_curves"].read_text().lstrip().startswith("<?xml")

    acceptance = pd.read_csv(paths["acceptance_summary"])
    assert list(acceptance.columns) == ACCEPTANCE_COLUMNS
    assert list(acceptance["variant"]) == ["mappo", "random"]
    assert acceptance["frac_loss_below_threshold"].tolist() == [1.0, 1.0]
    assert acceptance["mean_objective"].tolist() == pytest.approx([0.4, 0.9])
    assert acceptance["violation_rate"].tolist() == [0.0, 1.0]

    latency = pd.read_csv(paths["latency_summary"])
    assert list(latency["variant"]) == ["mappo", "random"]


def test_reports_are_byte_stable(tmp_path):
    runs = [_make_run(tmp_path / "runs", "evaluate", "fixed", 0)]
    a = emit_reports(runs, tmp_path / "a")
    b = emit_reports(runs, tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes(), key


def test_acceptance_summary_averages_objective_over_runs():
    frame = pd.DataFrame({"packet_loss": [0.1, 0.3], "latency_s": [1e-3, 3e-3]})
    objectives = {"mappo": [_objective(0.2), _objective(0.6, latency=True), _objective(0.4)]}
    summary = acceptance_summary({}, {"mappo": [frame]}, 0.2, objectives)
    row = summary.iloc[0]
    assert row["mean_objective"] == pytest.approx(0.4)
    assert row["violation_rate"] == pytest.approx(1 / 3)
    assert row["frac_loss_below_threshold"] == pytest.approx(0.5)
    assert row["mean_latency_ms"] == pytest.approx(2.0)


def test_acceptance_summary_without_objectives_leaves_columns_empty():
    frame = pd.DataFrame({"packet_loss": [0.1], "latency_s": [1e-3]})
    summary = acceptance_summary({}, {"fixed": [frame]})
    assert list(summary.columns) == ACCEPTANCE_COLUMNS
    assert summary["mean_objective"].isna().all()
