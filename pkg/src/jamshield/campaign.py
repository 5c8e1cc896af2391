"""Async runner for (subcommand, variant, seed) cells with a worker cap and a run ledger."""

import asyncio
import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

from jamshield.config import get_settings
from jamshield.runs import RunLedger, RunRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cell:
    subcommand: str
    variant: str
    seed: int


@dataclass
class CellOutcome:
    cell: Cell
    status: str
    duration_s: float
    out_dir: str
    error: BaseException | None = None


class CampaignRunner:
    def __init__(self, ledger: RunLedger, config_hash: str, max_parallel: int | None = None) -> None:
        self._ledger = ledger
        self._config_hash = config_hash
        self._semaphore = asyncio.Semaphore(max_parallel or get_settings().threads)

    async def _run_cell(self, cell: Cell, fn: Callable[[Cell], Path]) -> CellOutcome:
        async with self._semaphore:
            start = time.perf_counter()
            try:
                out_dir = await asyncio.to_thread(fn, cell)
                outcome = CellOutcome(cell, "ok", time.perf_counter() - start, str(out_dir))
            except Exception as exc:
                logger.exception("Cell %s/%s seed %d failed", cell.subcommand, cell.variant, cell.seed)
                outcome = CellOutcome(cell, "failed", time.perf_counter() - start, "", exc)
        await self._ledger.record(
            RunRecord(
                subcommand=cell.subcommand,
                variant=cell.variant,
                seed=cell.seed,
                config_hash=self._config_hash,
                status=outcome.status,
                duration_s=outcome.duration_s,
                out_dir=outcome.out_dir,
            )
        )
        return outcome

    async def run(self, cells: Sequence[Cell], fn: Callable[[Cell], Path]) -> list[CellOutcome]:
        """Run every cell; re-raise the first failure once all cells have finished."""
        outcomes = await asyncio.gather(*(self._run_cell(cell, fn) for cell in cells))
        failed = [o for o in outcomes if o.error is not None]
        logger.info("Campaign finished: %d ok, %d failed", len(outcomes) - len(failed), len(failed))
        if failed:
            raise failed[0].error
        return list(outcomes)
