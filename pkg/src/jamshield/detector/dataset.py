"""Labelled RSSI/SINR windows: simulator-generated and a cleanly separable synthetic set."""

import logging
from dataclasses import dataclass

import numpy as np

from jamshield.config import ScenarioConfig
from jamshield.env import JammingEnv
from jamshield.errors import DomainError

logger = logging.getLogger(__name__)

BENIGN = 0
ATTACK = 1


@dataclass
class LabeledWindows:
    rssi: np.ndarray  # (n, window_len) dBm
    sinr: np.ndarray  # (n, window_len) dB
    labels: np.ndarray  # (n,) int

    def __post_init__(self) -> None:
        if self.rssi.shape != self.sinr.shape or self.rssi.shape[0] != self.labels.shape[0]:
            raise DomainError("windows and labels are misaligned")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, idx: np.ndarray) -> "LabeledWindows":
        return LabeledWindows(self.rssi[idx], self.sinr[idx], self.labels[idx])


def _attack_scenario(scenario: ScenarioConfig) -> ScenarioConfig:
    if scenario.jammer_configs():
        return scenario
    return scenario.model_copy(update={"n_attackers": 1, "jammers": None})


def _benign_scenario(scenario: ScenarioConfig) -> ScenarioConfig:
    return scenario.model_copy(update={"n_attackers": 0, "jammers": []})


def simulate_windows(
    scenario: ScenarioConfig, windows_per_class: int, window_len: int = 300, seed: int = 0
) -> LabeledWindows:
    """One probe window per reset; attack windows keep only resets where a jammer hit the band."""
    rng = np.random.default_rng(seed)
    rssi, sinr, labels = [], [], []
    for label, sc in ((BENIGN, _benign_scenario(scenario)), (ATTACK, _attack_scenario(scenario))):
        env = JammingEnv(sc, window_len=window_len)
        collected = attempts = 0
        while collected < windows_per_class:
            if attempts >= 4 * windows_per_class:
                raise DomainError(f"could not collect {windows_per_class} windows of class {label}")
            attempts += 1
            env.reset(seed=int(rng.integers(2**31)))
            if label == ATTACK and not env.last_jammed:
                continue
            r, s = env.buffer.window()
            rssi.append(r)
            sinr.append(s)
            labels.append(label)
            collected += 1
    logger.info("Simulated %d labelled windows (%d per class)", len(labels), windows_per_class)
    return LabeledWindows(np.array(rssi), np.array(sinr), np.array(labels, dtype=np.int64))


def synthetic_windows(windows_per_class: int, window_len: int = 300, seed: int = 0) -> LabeledWindows:
    """Benign noise-floor windows vs windows with a raised, SINR-depressing jammed band."""
    rng = np.random.default_rng(seed)
    n = windows_per_class
    band = slice(window_len // 4, window_len // 2)

    rssi = -95.0 + rng.normal(0.0, 1.0, (2 * n, window_len))
    sinr = 20.0 + rng.normal(0.0, 1.0, (2 * n, window_len))
    rssi[n:, band] += 25.0
    sinr[n:, band] -= 25.0
    labels = np.repeat([BENIGN, ATTACK], n)
    return LabeledWindows(rssi, sinr, labels)
