"""Effective SINR, BLER curve, HARQ retransmissions and latency tracking."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.special import expit, logsumexp

from jamshield.config import BwpConfig, EsmConfig
from jamshield.errors import DomainError

logger = logging.getLogger(__name__)

PerMode = Literal["as_written", "residual"]


@dataclass(frozen=True)
class HarqConfig:
    r_max: int
    mode: PerMode = "as_written"
    r_max_limit: int = 4

    def __post_init__(self) -> None:
        if not 0 <= self.r_max <= self.r_max_limit:
            raise DomainError(f"r_max={self.r_max} outside [0, {self.r_max_limit}]")


@dataclass(frozen=True)
class TimingState:
    last_latency_s: float | None = None
    count: int = 0
    mean_latency_s: float = 0.0
    jitter_s: float = 0.0
    n_diffs: int = 0


def effective_sinr(sinr: np.ndarray, cfg: EsmConfig) -> float:
    """Exponential ESM: -beta * ln(mean(exp(-sinr / beta)))."""
    s = np.asarray(sinr, dtype=np.float64)
    if s.size == 0:
        raise DomainError("effective SINR of an empty vector")
    if np.any(s < 0):
        raise DomainError("SINR entries must be >= 0")
    beta = cfg.beta_eesm
    eff = -beta * (logsumexp(-s / beta) - math.log(s.size))
    return float(np.clip(eff, s.min(), s.max()))


def sinr_to_bler(sinr_eff: float, cfg: EsmConfig) -> float:
    if sinr_eff < 0:
        raise DomainError("effective SINR must be >= 0")
    if sinr_eff == 0:
        return 1.0
    sinr_db = 10 * math.log10(sinr_eff)
    return float(expit(-cfg.bler_slope * (sinr_db - cfg.bler_sinr50_db)))


def per_closed_form(bler: float, r: int, mode: PerMode = "as_written") -> float:
    """Packet error rate after r retransmissions.

    `as_written` keeps 1 - (1 - BLER)^(r+1), which grows with r; `residual`
    is the all-attempts-fail probability BLER^(r+1).
    """
    if not 0 <= bler <= 1:
        raise DomainError(f"bler={bler} outside [0, 1]")
    if mode == "residual":
        return bler ** (r + 1)
    return 1 - (1 - bler) ** (r + 1)


def harq_episode(bler: float, harq: HarqConfig, rng: np.random.Generator) -> tuple[bool, int]:
    for attempt in range(1, harq.r_max + 2):
        if rng.random() >= bler:
            return True, attempt
    return False, harq.r_max + 1


def harq_batch(
    bler: float, harq: HarqConfig, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised HARQ over `n` packets.

    Always draws (n, r_max_limit + 1) uniforms so the stream position does not
    depend on the chosen budget or on the BLER.
    """
    u = rng.random((n, harq.r_max_limit + 1))[:, : harq.r_max + 1]
    success = u >= bler
    delivered = success.any(axis=1)
    attempts = np.where(delivered, success.argmax(axis=1) + 1, harq.r_max + 1)
    return delivered, attempts


def update_timing(
    attempts: int, bwp: BwpConfig, reconf_penalty_s: float, t: TimingState
) -> TimingState:
    if attempts < 1:
        raise DomainError("a packet needs at least one attempt")
    latency = attempts * bwp.slot_duration_s + reconf_penalty_s

    count = t.count + 1
    delta = latency - t.mean_latency_s
    mean = t.mean_latency_s + delta / count

    jitter, n_diffs = t.jitter_s, t.n_diffs
    if t.last_latency_s is not None:
        n_diffs += 1
        jitter += (abs(latency - t.last_latency_s) - jitter) / n_diffs

    return replace(
        t,
        last_latency_s=latency,
        count=count,
        mean_latency_s=mean,
        jitter_s=max(jitter, 0.0),
        n_diffs=n_diffs,
    )
