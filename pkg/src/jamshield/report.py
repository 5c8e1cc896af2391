"""Static SVG charts and CSV summaries over completed run directories."""

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from jamshield.runs import RunManifest, packet_loss_cdf, read_kpi_csv  # noqa: E402

logger = logging.getLogger(__name__)

LATENCY_COLUMNS = ["variant", "mean_ms", "median_ms", "p95_ms"]
ACCEPTANCE_COLUMNS = [
    "variant",
    "epochs_to_90pct",
    "frac_loss_below_threshold",
    "mean_latency_ms",
    "mean_objective",
    "violation_rate",
]


def setup_style() -> None:
    plt.rcParams.update(
        {
            "font.family": "sans-serif",
            "font.size": 10,
            "axes.spines.top": False,
            "axes.spines.right": False,
            "svg.hashsalt": "jamshield",
            "svg.fonttype": "none",
            "savefig.bbox": "tight",
        }
    )


def epochs_to_fraction(rewards: pd.Series | np.ndarray, fraction: float = 0.9) -> int:
    """First epoch whose smoothed reward covers `fraction` of the way from the initial to the final mean.

    Works for negative rewards and for curves that improve downwards.
    """
    r = pd.Series(np.asarray(rewards, dtype=np.float64))
    if r.empty:
        return 0
    window = max(1, len(r) // 20)
    tail = max(1, len(r) // 10)
    smoothed = r.rolling(window, min_periods=1).mean().to_numpy()
    start = float(r.iloc[:tail].mean())
    final = float(r.iloc[-tail:].mean())
    target = start + fraction * (final - start)
    reached = np.flatnonzero(smoothed >= target if final >= start else smoothed <= target)
    return int(reached[0]) if reached.size else len(r) - 1


def _collect(run_dirs: list[Path]) -> tuple[dict, dict, dict[str, list[dict]]]:
    curves: dict[str, list[pd.DataFrame]] = {}
    kpis: dict[str, list[pd.DataFrame]] = {}
    objectives: dict[str, list[dict]] = {}
    for directory in run_dirs:
        manifest = RunManifest.read(directory)
        if (directory / "learning_curve.csv").exists():
            curves.setdefault(manifest.variant, []).append(pd.read_csv(directory / "learning_curve.csv"))
        if manifest.subcommand in ("evaluate", "simulate") and (directory / "kpi.csv").exists():
            kpis.setdefault(manifest.variant, []).append(read_kpi_csv(directory / "kpi.csv"))
            if (directory / "objective.json").exists():
                objective = json.loads((directory / "objective.json").read_text())
                objectives.setdefault(manifest.variant, []).append(objective)
    return curves, kpis, objectives


def mean_curves(curves: dict[str, list[pd.DataFrame]]) -> dict[str, pd.DataFrame]:
    out = {}
    for variant, frames in curves.items():
        stacked = pd.concat(frames)
        out[variant] = stacked.groupby("epoch", as_index=False)["reward"].mean()
    return out


def plot_learning_curves(curves: dict[str, pd.DataFrame]) -> Figure:
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant, frame in sorted(curves.items()):
        ax.plot(frame["epoch"], frame["reward"], label=variant)
    ax.set_xlabel("epoch")
    ax.set_ylabel("cumulative reward")
    ax.legend()
    return fig


def plot_packet_loss_cdf(losses: dict[str, np.ndarray]) -> Figure:
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant, values in sorted(losses.items()):
        cdf = packet_loss_cdf(values)
        ax.step(cdf["packet_loss"], cdf["cdf"], where="post", label=variant)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("packet loss")
    ax.set_ylabel("CDF")
    ax.legend()
    return fig


def latency_summary(kpis: dict[str, list[pd.DataFrame]]) -> pd.DataFrame:
    rows = []
    for variant, frames in sorted(kpis.items()):
        ms = pd.concat(frames)["latency_s"].to_numpy() * 1e3
        rows.append(
            {
                "variant": variant,
                "mean_ms": float(np.mean(ms)),
                "median_ms": float(np.median(ms)),
                "p95_ms": float(np.percentile(ms, 95)),
            }
        )
    return pd.DataFrame(rows, columns=LATENCY_COLUMNS)


def acceptance_summary(
    curves: dict[str, pd.DataFrame],
    kpis: dict[str, list[pd.DataFrame]],
    threshold: float = 0.2,
    objectives: dict[str, list[dict]] | None = None,
) -> pd.DataFrame:
    """One row per variant; `violation_rate` is the share of runs breaking any objective constraint."""
    objectives = objectives or {}
    rows = []
    for variant in sorted(set(curves) | set(kpis)):
        row: dict[str, object] = {"variant": variant}
        row["epochs_to_90pct"] = epochs_to_fraction(curves[variant]["reward"]) if variant in curves else None
        if variant in kpis:
            frame = pd.concat(kpis[variant])
            row["frac_loss_below_threshold"] = float((frame["packet_loss"] < threshold).mean())
            row["mean_latency_ms"] = float(frame["latency_s"].mean() * 1e3)
        if objectives.get(variant):
            runs = objectives[variant]
            row["mean_objective"] = float(np.mean([o["value"] for o in runs]))
            row["violation_rate"] = float(np.mean([any(o["violations"].values()) for o in runs]))
        rows.append(row)
    return pd.DataFrame(rows, columns=ACCEPTANCE_COLUMNS)


def _save(fig: Figure, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_reports(run_dirs: list[Path], report_dir: str | Path, threshold: float = 0.2) -> dict[str, Path]:
    """Render learning curves, the packet-loss CDF, the latency table and the acceptance table."""
    setup_style()
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    curves, kpis, objectives = _collect([Path(d) for d in run_dirs])
    averaged = mean_curves(curves)

    paths = {
        "learning_curves": report_dir / "learning_curves.svg",
        "packet_loss_cdf": report_dir / "packet_loss_cdf.svg",
        "latency_summary": report_dir / "latency_summary.csv",
        "acceptance_summary": report_dir / "acceptance_summary.csv",
    }
    _save(plot_learning_curves(averaged), paths["learning_curves"])
    losses = {v: pd.concat(frames)["packet_loss"].to_numpy() for v, frames in kpis.items()}
    _save(plot_packet_loss_cdf(losses), paths["packet_loss_cdf"])
    latency_summary(kpis).to_csv(paths["latency_summary"], index=False)
    acceptance_summary(averaged, kpis, threshold, objectives).to_csv(paths["acceptance_summary"], index=False)
    logger.info("Reports written to %s (%d runs)", report_dir, len(run_dirs))
    return paths
