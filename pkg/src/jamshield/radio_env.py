"""Per-RB desired, jamming, interference and noise powers; SINR, notching, RSSI/RSRP."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from jamshield.config import SUBCARRIERS_PER_RB, BwpConfig, JammerConfig, NoiseModel, ScenarioConfig
from jamshield.errors import DomainError
from jamshield.propagation import (
    ArrayGeometry,
    BeamAngles,
    array_gain,
    channel_realization,
    directional_gain,
    path_loss,
    steering_vector,
)
from jamshield.topology import Topology, direction, los_state

logger = logging.getLogger(__name__)

CARRIER_LOW_HZ = 3.45e9
CARRIER_HIGH_HZ = 3.60e9


def dbm_to_w(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def w_to_dbm(w: float | np.ndarray) -> float | np.ndarray:
    return 10 * np.log10(np.maximum(w, 1e-30)) + 30


def lin_to_db(x: float | np.ndarray) -> float | np.ndarray:
    return 10 * np.log10(np.maximum(x, 1e-30))


@dataclass
class PerRbRadioState:
    p_uav: np.ndarray
    p_jam: np.ndarray
    p_interf: np.ndarray
    p_noise: np.ndarray
    sinr: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.p_uav = np.asarray(self.p_uav, dtype=np.float64)
        self.p_jam = np.asarray(self.p_jam, dtype=np.float64)
        self.p_interf = np.asarray(self.p_interf, dtype=np.float64)
        self.p_noise = np.asarray(self.p_noise, dtype=np.float64)
        n = len(self.p_uav)
        for name in ("p_uav", "p_jam", "p_interf", "p_noise"):
            v = getattr(self, name)
            if v.shape != (n,):
                raise DomainError(f"{name} must share length {n}")
            if np.any(v < 0):
                raise DomainError(f"{name} has negative power")

    @property
    def n_rb(self) -> int:
        return len(self.p_uav)


@dataclass(frozen=True)
class NotchVector:
    n: np.ndarray
    efficiency: float
    max_notched_rbs: int | None = None

    def __post_init__(self) -> None:
        n = np.asarray(self.n, dtype=np.float64)
        object.__setattr__(self, "n", n)
        if np.any((n < 0) | (n > 1)):
            raise DomainError("notch entries must lie in [0, 1]")
        if not 0 <= self.efficiency <= 1:
            raise DomainError("notch efficiency must lie in [0, 1]")
        if self.max_notched_rbs is not None and n.sum() > self.max_notched_rbs + 1e-9:
            raise DomainError(f"notch budget {self.max_notched_rbs} exceeded ({n.sum():g})")

    @classmethod
    def none(cls, n_rb: int, efficiency: float) -> "NotchVector":
        return cls(np.zeros(n_rb), efficiency)

    @classmethod
    def from_triple(
        cls,
        rb_start: int,
        rb_num: int,
        i_notch: int,
        n_rb: int,
        efficiency: float,
        max_notched_rbs: int | None = None,
    ) -> "NotchVector":
        """Expand [RB_start, RB_num, I_notch] into n_k, clamping the window into the band."""
        n = np.zeros(n_rb)
        if i_notch:
            start = min(max(int(rb_start), 0), n_rb - 1)
            num = min(max(int(rb_num), 0), n_rb - start)
            if max_notched_rbs is not None:
                num = min(num, max_notched_rbs)
            n[start : start + num] = 1.0
        return cls(n, efficiency, max_notched_rbs)

    @property
    def scheduled(self) -> np.ndarray:
        """RBs still carrying data."""
        return self.n < 1.0

    @property
    def total(self) -> float:
        return float(self.n.sum())


def noise_power_per_rb(noise: NoiseModel, bwp: BwpConfig) -> float:
    return noise.power_w(bwp.rb_bandwidth_hz)


def _window(bwp: BwpConfig, center_hz: float, rb_span: int) -> np.ndarray:
    mask = np.zeros(bwp.n_rb, dtype=bool)
    low = bwp.center_hz - bwp.n_rb * bwp.rb_bandwidth_hz / 2
    high = low + bwp.n_rb * bwp.rb_bandwidth_hz
    if not low <= center_hz < high:
        return mask
    k0 = int((center_hz - low) // bwp.rb_bandwidth_hz)
    start = max(0, k0 - rb_span // 2)
    mask[start : min(bwp.n_rb, start + rb_span)] = True
    return mask


def jammer_active_rbs(jammer: JammerConfig, bwp: BwpConfig, slot: int) -> np.ndarray:
    """Boolean mask of the BWP's RBs hit by the jammer in this slot."""
    if jammer.strategy == "barrage":
        return np.ones(bwp.n_rb, dtype=bool)
    if jammer.strategy == "narrowband":
        return _window(bwp, jammer.center_hz, jammer.rb_span)
    phase = (slot % jammer.period_slots) / jammer.period_slots
    center = CARRIER_LOW_HZ + phase * (CARRIER_HIGH_HZ - CARRIER_LOW_HZ)
    return _window(bwp, center, jammer.rb_span)


def assemble_per_rb_powers(
    scenario: ScenarioConfig,
    topology: Topology,
    bwp: BwpConfig,
    beams: BeamAngles,
    slot: int,
    rng: np.random.Generator,
) -> PerRbRadioState:
    gnb = topology.serving_gnb
    uav = topology.uav_position(slot * scenario.step_interval_s)
    n_rb = bwp.n_rb
    pl = scenario.propagation
    d0 = scenario.los_reference_m

    uav_geom = ArrayGeometry.ura(scenario.arrays.uav_elements, bwp.center_hz)
    gnb_geom = ArrayGeometry.ura(scenario.arrays.gnb_elements, bwp.center_hz)
    w_uav = steering_vector(beams.uav, uav_geom)
    w_gnb = steering_vector(beams.gnb, gnb_geom)

    los = los_state(uav, gnb, topology.los_draws["uav"], d0, topology.buildings)
    real = channel_realization(
        scenario.fading, scenario.shadow, los, n_rb, rng, rb_bandwidth_hz=bwp.rb_bandwidth_hz
    )
    g_tx = directional_gain(w_uav, direction(uav, gnb), uav_geom, real.aod_offsets, real.cluster_powers)
    g_rx = directional_gain(w_gnb, direction(gnb, uav), gnb_geom, real.aoa_offsets, real.cluster_powers)
    d = float(np.linalg.norm(uav - gnb))
    p_tx = dbm_to_w(scenario.uav_tx_power_dbm) / n_rb
    large_scale = path_loss(d, los, pl) * 10 ** (real.shadow_db / 10)
    p_uav = p_tx * g_tx * g_rx * large_scale * real.rb_gain

    p_jam = np.zeros(n_rb)
    for j, (jc, pos) in enumerate(zip(scenario.jammer_configs(), topology.jammers)):
        mask = jammer_active_rbs(jc, bwp, slot)
        if not mask.any():
            continue
        j_los = los_state(pos, gnb, topology.los_draws[f"jammer{j}"], d0, topology.buildings)
        gain = jc.antenna_gain_linear * array_gain(w_gnb, direction(gnb, pos), gnb_geom)
        dist = float(np.linalg.norm(pos - gnb))
        p_jam += mask * dbm_to_w(jc.tx_power_dbm) * gain * path_loss(dist, j_los, pl)

    p_interf = np.zeros(n_rb)
    p_cell = dbm_to_w(scenario.gnb_tx_power_dbm) / n_rb * scenario.interference_load
    for i, pos in enumerate(topology.interfering_gnbs):
        i_los = los_state(pos, gnb, topology.los_draws[f"interferer{i}"], d0, topology.buildings)
        gain = array_gain(w_gnb, direction(gnb, pos), gnb_geom)
        dist = float(np.linalg.norm(pos - gnb))
        p_interf += p_cell * gain * path_loss(dist, i_los, pl)

    p_noise = np.full(n_rb, noise_power_per_rb(scenario.noise, bwp))
    return PerRbRadioState(p_uav, p_jam, p_interf, p_noise)


def sinr_per_rb(state: PerRbRadioState) -> np.ndarray:
    denom = state.p_jam + state.p_interf + state.p_noise
    if np.any(denom <= 0):
        raise DomainError("SINR denominator is zero")
    return state.p_uav / denom


def notched_state(state: PerRbRadioState, notch: NotchVector) -> PerRbRadioState:
    if len(notch.n) != state.n_rb:
        raise DomainError("notch vector length does not match the RB count")
    return replace(
        state,
        p_uav=(1 - notch.n) * state.p_uav,
        p_jam=(1 - notch.efficiency * notch.n) * state.p_jam,
        sinr=None,
    )


def apply_notching(state: PerRbRadioState, notch: NotchVector) -> np.ndarray:
    return sinr_per_rb(notched_state(state, notch))


def reference_signal_powers(state: PerRbRadioState) -> np.ndarray:
    """One reference resource element per RB."""
    return state.p_uav / SUBCARRIERS_PER_RB


def measure_indicators(state: PerRbRadioState, ref_signal_powers: np.ndarray) -> tuple[float, float]:
    ref = np.asarray(ref_signal_powers, dtype=np.float64)
    if ref.size == 0:
        raise DomainError("RSRP needs at least one reference signal")
    rssi = float(np.sum(state.p_uav + state.p_jam + state.p_interf + state.p_noise))
    return rssi, float(ref.mean())


def rssi_per_rb(state: PerRbRadioState) -> np.ndarray:
    return state.p_uav + state.p_jam + state.p_interf + state.p_noise
