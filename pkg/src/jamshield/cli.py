"""Command-line front-end: simulate, train, evaluate, detect-train and report."""

import argparse
import asyncio
import json
import logging
from collections.abc import Callable
from functools import partial
from pathlib import Path

from jamshield.campaign import CampaignRunner, Cell
from jamshield.config import ExperimentConfig, config_hash, get_settings, load_config
from jamshield.detector.dataset import simulate_windows
from jamshield.detector.training import DetectorRuntime, train_detector
from jamshield.env import (
    FixedPolicy,
    JammingEnv,
    JammingMultiAgentEnv,
    KpiRecord,
    RandomPolicy,
    eval_objective,
    run_episode,
)
from jamshield.errors import ConfigError, DivergenceError
from jamshield.marl.trainer import PolicySet, collect_episode, derive_seed, torch_generator, train
from jamshield.report import emit_reports
from jamshield.runs import (
    LEDGER_NAME,
    RunLedger,
    RunRecord,
    packet_loss_cdf,
    prepare_run_dir,
    run_dir,
    write_curve_csv,
    write_kpi_csv,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "train", "evaluate", "detect-train", "report")
BASELINES = ("fixed", "random")
LEARNED_VARIANTS = ("ppo", "ippo", "mappo", "mappo-det")
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
REPLAY_KEY = 10_000


def campaign_seeds(cfg: ExperimentConfig, seed: int | None) -> list[int]:
    if seed is not None:
        return [seed]
    return [derive_seed(cfg.evaluation.master_seed, i) for i in range(cfg.evaluation.n_seeds)]


def detector_path(out: Path) -> Path:
    return out / "detector" / "detector.bin"


def _write_kpis(cfg: ExperimentConfig, directory: Path, kpis: list[KpiRecord]) -> dict[str, str]:
    write_kpi_csv(directory / "kpi.csv", kpis)
    packet_loss_cdf([k.packet_loss_rate for k in kpis]).to_csv(
        directory / "packet_loss_cdf.csv", index=False, float_format="%.17g"
    )
    objective = eval_objective(kpis, cfg.scenario.objective)
    (directory / "objective.json").write_text(json.dumps(objective.as_dict(), indent=2))
    flagged = sorted(k for k, v in objective.violations.items() if v)
    if flagged:
        logger.info("Constraint violations in %s: %s", directory, ", ".join(flagged))
    return {"kpi": "kpi.csv", "packet_loss_cdf": "packet_loss_cdf.csv", "objective": "objective.json"}


def _replay(
    policy: PolicySet, env_factory: Callable[[int], JammingMultiAgentEnv], seeds: list[int]
) -> list[KpiRecord]:
    kpis = []
    for s in seeds:
        traj = collect_episode(policy.wrap(env_factory(s)), policy, torch_generator(s), deterministic=True)
        kpis += [info["kpi"] for info in traj.infos]
    return kpis


def _env_factory(cfg: ExperimentConfig, detector: DetectorRuntime | None) -> Callable[[int], JammingMultiAgentEnv]:
    return lambda s: JammingMultiAgentEnv(cfg.scenario, s, detector)


def simulate_cell(cfg: ExperimentConfig, out: Path, cell: Cell) -> Path:
    directory, manifest = prepare_run_dir(out, cell.subcommand, cell.variant, cell.seed, cfg)
    kpis = []
    for ep in range(cfg.evaluation.episodes):
        env = JammingEnv(cfg.scenario, derive_seed(cell.seed, ep))
        if cell.variant == "fixed":
            policy = FixedPolicy()
        else:
            policy = RandomPolicy(cfg.scenario, derive_seed(cell.seed, ep, 1))
        kpis += run_episode(env, policy)
    manifest.outputs.update(_write_kpis(cfg, directory, kpis))
    manifest.write(directory)
    return directory


def train_cell(cfg: ExperimentConfig, out: Path, detector: DetectorRuntime | None, cell: Cell) -> Path:
    directory, manifest = prepare_run_dir(out, cell.subcommand, cell.variant, cell.seed, cfg)
    factory = _env_factory(cfg, detector if cell.variant == "mappo-det" else None)
    result = train(cfg.trainer, cell.variant, factory, cell.seed)
    write_curve_csv(directory / "learning_curve.csv", result.curve)
    result.policy.save(directory / "policy.ckpt", cfg.trainer)
    write_kpi_csv(directory / "kpi.csv", _replay(result.policy, factory, [derive_seed(cell.seed, REPLAY_KEY)]))
    manifest.outputs.update(learning_curve="learning_curve.csv", policy="policy.ckpt", kpi="kpi.csv")
    manifest.write(directory)
    return directory


def evaluation_seeds(cfg: ExperimentConfig, seed: int) -> list[int]:
    return [derive_seed(cfg.evaluation.master_seed, seed, ep) for ep in range(cfg.evaluation.episodes)]


def evaluate_cell(cfg: ExperimentConfig, out: Path, detector: DetectorRuntime | None, cell: Cell) -> Path:
    seeds = evaluation_seeds(cfg, cell.seed)
    if cell.variant in BASELINES:
        kpis = []
        for s in seeds:
            policy = FixedPolicy() if cell.variant == "fixed" else RandomPolicy(cfg.scenario, derive_seed(s, 1))
            kpis += run_episode(JammingEnv(cfg.scenario, s), policy)
    else:
        ckpt = run_dir(out, "train", cell.variant, cell.seed) / "policy.ckpt"
        if not ckpt.exists():
            raise ConfigError(f"no trained policy at {ckpt}; run `train` first")
        factory = _env_factory(cfg, detector if cell.variant == "mappo-det" else None)
        kpis = _replay(PolicySet.load(ckpt), factory, seeds)
    directory, manifest = prepare_run_dir(out, cell.subcommand, cell.variant, cell.seed, cfg)
    manifest.outputs.update(_write_kpis(cfg, directory, kpis))
    manifest.write(directory)
    return directory


def detect_train(cfg: ExperimentConfig, out: Path, seed: int | None = None) -> Path:
    seed = cfg.detector.seed if seed is None else seed
    directory, manifest = prepare_run_dir(out, "detect-train", "detector", seed, cfg)
    windows = simulate_windows(
        cfg.scenario, cfg.detector.windows_per_class, cfg.detector.pipeline.window_len, seed
    )
    trained = train_detector(windows, cfg.detector, seed)
    target = detector_path(out)
    target.parent.mkdir(parents=True, exist_ok=True)
    trained.runtime.save(target)
    (target.parent / "metrics.json").write_text(json.dumps(trained.metrics.as_dict(), indent=2))
    manifest.outputs.update(detector=str(target), metrics=str(target.parent / "metrics.json"))
    manifest.write(directory)
    return directory


def _load_detector(cfg: ExperimentConfig, out: Path, variants: list[str], build: bool) -> DetectorRuntime | None:
    if "mappo-det" not in variants:
        return None
    path = detector_path(out)
    if not path.exists():
        if not build:
            raise ConfigError(f"no detector weights at {path}; run `detect-train` first")
        logger.info("No detector at %s, training one first", path)
        detect_train(cfg, out)
    return DetectorRuntime.load(path)


async def _run_cells(cfg: ExperimentConfig, out: Path, cells: list[Cell], fn: Callable[[Cell], Path]) -> None:
    ledger = RunLedger(out / LEDGER_NAME)
    try:
        await CampaignRunner(ledger, config_hash(cfg)).run(cells, fn)
    finally:
        ledger.close()


async def _completed_runs(out: Path) -> list[RunRecord]:
    ledger = RunLedger(out / LEDGER_NAME)
    try:
        return await ledger.runs(status="ok")
    finally:
        ledger.close()


def run_pipeline(
    cfg: ExperimentConfig,
    subcommand: str,
    out: str | Path,
    seed: int | None = None,
    variant: str | None = None,
) -> int:
    """Run one subcommand over its (variant, seed) cells and write all artifacts under `out`."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = campaign_seeds(cfg, seed)
    variants = [variant] if variant else list(cfg.evaluation.variants)

    if subcommand == "simulate":
        cells = [Cell("simulate", v, s) for v in BASELINES for s in seeds]
        asyncio.run(_run_cells(cfg, out, cells, partial(simulate_cell, cfg, out)))
    elif subcommand == "train":
        detector = _load_detector(cfg, out, variants, build=True)
        cells = [Cell("train", v, s) for v in variants for s in seeds]
        asyncio.run(_run_cells(cfg, out, cells, partial(train_cell, cfg, out, detector)))
    elif subcommand == "evaluate":
        detector = _load_detector(cfg, out, variants, build=False)
        cells = [Cell("evaluate", v, s) for v in [*variants, "random"] for s in seeds]
        asyncio.run(_run_cells(cfg, out, cells, partial(evaluate_cell, cfg, out, detector)))
    elif subcommand == "detect-train":
        cells = [Cell("detect-train", "detector", seed if seed is not None else cfg.detector.seed)]
        asyncio.run(_run_cells(cfg, out, cells, lambda cell: detect_train(cfg, out, cell.seed)))
    elif subcommand == "report":
        runs = asyncio.run(_completed_runs(out))
        completed = [r for r in runs if r.subcommand in ("simulate", "train", "evaluate")]
        if not completed:
            raise ConfigError(f"no completed runs under {out}")
        emit_reports([Path(r.out_dir) for r in completed], out / "report", cfg.evaluation.packet_loss_threshold)
    else:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jamshield", description="UAV anti-jamming MARL experiments")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="TOML config (defaults when omitted)")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="single seed instead of the campaign seeds")
    parser.add_argument("--variant", choices=LEARNED_VARIANTS, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
        logging.basicConfig(
            level=getattr(logging, settings.log_level, logging.INFO),
            format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
            force=True,
        )
        cfg = load_config(args.config)
        return run_pipeline(cfg, args.subcommand, args.out, args.seed, args.variant)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_CONFIG
    except DivergenceError as exc:
        logger.error("Training diverged: %s (%s)", exc, exc.diagnostics)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    raise SystemExit(main())
