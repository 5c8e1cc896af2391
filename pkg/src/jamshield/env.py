"""Two-agent anti-jamming MDP: action decoding, normalisation, rewards and slot stepping."""

import logging
import math
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from jamshield.config import (
    BwpConfig,
    NormalizationPriors,
    ObjectiveWeights,
    RewardWeights,
    ScenarioConfig,
)
from jamshield.errors import ActionError, ContractError, DomainError
from jamshield.link_abstraction import (
    HarqConfig,
    TimingState,
    effective_sinr,
    harq_batch,
    sinr_to_bler,
    update_timing,
)
from jamshield.marl.policy import AgentAction, AgentSpec, HeadSpec
from jamshield.propagation import (
    ArrayGeometry,
    BeamAngles,
    channel_realization,
    path_loss,
    steering_matrix,
)
from jamshield.radio_env import (
    NotchVector,
    PerRbRadioState,
    assemble_per_rb_powers,
    dbm_to_w,
    jammer_active_rbs,
    lin_to_db,
    measure_indicators,
    noise_power_per_rb,
    notched_state,
    reference_signal_powers,
    rssi_per_rb,
    sinr_per_rb,
    w_to_dbm,
)
from jamshield.topology import Topology, direction, los_state, sample_topology

logger = logging.getLogger(__name__)

INVERTED_METRICS = frozenset({"latency_s", "jitter_s"})
SINR_FLOOR_DB = -30.0
POWER_FLOOR_DBM = -180.0

KPI_COLUMNS = (
    "slot",
    "packet_loss",
    "attempts",
    "latency_s",
    "jitter_s",
    "sinr_eff",
    "rssi_w",
    "rsrp_w",
    "r1",
    "r2",
    "l1",
    "l2",
)

NEUTRAL_RAW1 = (0, 0, 0, 0, 0)
NEUTRAL_RAW2 = (0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RecoveryAction:
    rb_start: int
    rb_num: int
    i_notch: int
    bwp_idx: int
    r_max: int
    beams: BeamAngles

    @property
    def notch_triple(self) -> tuple[int, int, int]:
        if not self.i_notch:
            return 0, 0, 0
        return self.rb_start, self.rb_num, 1


@dataclass
class AgentObservation:
    agent1: np.ndarray
    agent2: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [self.agent1, self.agent2]


@dataclass
class KpiRecord:
    slot_index: int
    packet_loss_rate: float
    attempts: float
    latency_s: float
    jitter_s: float
    sinr_eff: float
    rssi_w: float
    rsrp_w: float
    reward_agent1: float
    reward_agent2: float
    l1: float = 0.0
    l2: float = 0.0
    notched_rbs: int = 0
    bwp_idx: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.packet_loss_rate <= 1:
            raise DomainError("packet_loss_rate must lie in [0, 1]")
        if self.attempts < 1:
            raise DomainError("attempts must be >= 1")

    def as_row(self) -> dict[str, float]:
        return {
            "slot": self.slot_index,
            "packet_loss": self.packet_loss_rate,
            "attempts": self.attempts,
            "latency_s": self.latency_s,
            "jitter_s": self.jitter_s,
            "sinr_eff": self.sinr_eff,
            "rssi_w": self.rssi_w,
            "rsrp_w": self.rsrp_w,
            "r1": self.reward_agent1,
            "r2": self.reward_agent2,
            "l1": self.l1,
            "l2": self.l2,
        }


@dataclass
class StepResult:
    observation: AgentObservation
    rewards: tuple[float, float]
    kpi: KpiRecord
    done: bool


@dataclass
class ObjectiveResult:
    value: float
    packet_loss: float
    retransmissions: float
    latency_s: float
    jitter_s: float
    violations: dict[str, bool] = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "packet_loss": self.packet_loss,
            "retransmissions": self.retransmissions,
            "latency_s": self.latency_s,
            "jitter_s": self.jitter_s,
            "violations": dict(self.violations),
        }


class LogitSource(Protocol):
    """Frozen classifier mapping RSSI/SINR windows to (benign, attack) scores."""

    window_len: int

    def logits(self, rssi_dbm: np.ndarray, sinr_db: np.ndarray) -> tuple[float, float]: ...


# ---------------------------------------------------------------------------
# Action decoding
# ---------------------------------------------------------------------------
def _angle_pair(x_theta: float, x_phi: float) -> tuple[float, float]:
    x_theta = min(1.0, max(-1.0, x_theta))
    x_phi = min(1.0, max(-1.0, x_phi))
    theta = (x_theta + 1) / 2 * math.pi
    phi = ((x_phi + 1) / 2 * 2 * math.pi) % (2 * math.pi)
    return theta, phi


def decode_joint_action(
    raw1: Sequence[int],
    raw2: Sequence[float],
    bwps: Sequence[BwpConfig],
    r_max_limit: int,
    max_notched_rbs: int | None = None,
) -> RecoveryAction:
    """Map raw head outputs onto a valid RecoveryAction.

    raw1 is [rb_start, rb_num, i_notch, bwp_idx, r_max]; raw2 is
    [theta_uav, phi_uav, theta_gnb, phi_gnb] in (-1, 1).
    """
    values = np.asarray(raw2, dtype=np.float64)
    if values.shape != (4,) or not np.all(np.isfinite(values)):
        raise ActionError(f"continuous action must be 4 finite values, got {raw2!r}")
    if len(raw1) != 5:
        raise ActionError(f"discrete action must have 5 entries, got {raw1!r}")

    rb_start, rb_num, i_notch, bwp_idx, r_max = (int(v) for v in raw1)
    bwp_idx = min(max(bwp_idx, 0), len(bwps) - 1)
    n_rb = next(b for b in bwps if b.index == bwp_idx).n_rb

    if rb_start >= n_rb:
        rb_start, rb_num = n_rb - 1, 0
    else:
        rb_start = max(rb_start, 0)
        rb_num = min(max(rb_num, 0), n_rb - rb_start)
    if max_notched_rbs is not None:
        rb_num = min(rb_num, max_notched_rbs)

    theta_uav, phi_uav = _angle_pair(values[0], values[1])
    theta_gnb, phi_gnb = _angle_pair(values[2], values[3])
    return RecoveryAction(
        rb_start=rb_start,
        rb_num=rb_num,
        i_notch=1 if i_notch > 0 else 0,
        bwp_idx=bwp_idx,
        r_max=min(max(r_max, 0), r_max_limit),
        beams=BeamAngles(theta_uav, phi_uav, theta_gnb, phi_gnb),
    )


def notch_for(action: RecoveryAction, bwp: BwpConfig, efficiency: float, max_notched: int | None) -> NotchVector:
    return NotchVector.from_triple(
        action.rb_start, action.rb_num, action.i_notch, bwp.n_rb, efficiency, max_notched
    )


def reconfiguration_penalty(
    previous: RecoveryAction | None, action: RecoveryAction, scenario: ScenarioConfig
) -> float:
    if previous is None:
        return 0.0
    link = scenario.link
    penalty = 0.0
    if previous.bwp_idx != action.bwp_idx:
        penalty += link.bwp_switch_penalty_s
    if previous.beams.max_deviation_deg(action.beams) > link.beam_tolerance_deg:
        penalty += link.beam_update_penalty_s
    if previous.notch_triple != action.notch_triple:
        penalty += link.notch_update_penalty_s
    return penalty


# ---------------------------------------------------------------------------
# Normalisation and rewards
# ---------------------------------------------------------------------------
class NormalizationTracker:
    def __init__(self, bounds: Mapping[str, tuple[float, float]]) -> None:
        self.bounds: dict[str, tuple[float, float]] = {}
        for name, (lo, hi) in bounds.items():
            if lo > hi:
                raise DomainError(f"{name}: min must not exceed max")
            self.bounds[name] = (float(lo), float(hi))

    @classmethod
    def from_priors(cls, priors: NormalizationPriors) -> "NormalizationTracker":
        return cls(priors.model_dump())


def normalize_metric(
    tracker: NormalizationTracker, metric: str, value: float, update: bool = True
) -> float:
    if metric not in tracker.bounds:
        raise DomainError(f"unknown metric {metric!r}")
    lo, hi = tracker.bounds[metric]
    if update and math.isfinite(value):
        lo, hi = min(lo, value), max(hi, value)
        tracker.bounds[metric] = (lo, hi)
    ratio = (value - lo) / (hi - lo) if hi > lo else 0.0
    ratio = min(1.0, max(0.0, ratio))
    return 1.0 - ratio if metric in INVERTED_METRICS else ratio


def compute_rewards(metrics: Mapping[str, float], weights: RewardWeights) -> tuple[float, float]:
    for name, value in metrics.items():
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"metric {name}={value} outside [0, 1]")

    def score(agent_weights: Mapping[str, float]) -> float:
        total = 0.0
        for name, w in agent_weights.items():
            if name not in metrics:
                raise ContractError(f"missing metric {name}")
            total += w * metrics[name]
        return min(1.0, max(-1.0, 2.0 * total - 1.0))

    return score(weights.agent1), score(weights.agent2)


def eval_objective(kpis: Sequence[KpiRecord], w: ObjectiveWeights) -> ObjectiveResult:
    """Weighted P1 cost over an episode plus constraint flags."""
    if not kpis:
        raise DomainError("objective needs at least one KPI record")
    p_l = float(np.mean([k.packet_loss_rate for k in kpis]))
    r_a = float(np.mean([k.attempts for k in kpis])) - 1.0
    lat = float(np.mean([k.latency_s for k in kpis]))
    jit = float(np.mean([k.jitter_s for k in kpis]))
    value = w.phi * p_l + w.beta * r_a + w.mu * lat + w.psi * jit

    sinr_db = float(np.mean([lin_to_db(k.sinr_eff) for k in kpis]))
    violations = {
        "latency": lat > w.latency_max_s,
        "jitter": jit > w.jitter_max_s,
        "sinr": not w.sinr_min_db <= sinr_db <= w.sinr_max_db,
        "notch": w.max_notched_rbs is not None
        and any(k.notched_rbs > w.max_notched_rbs for k in kpis),
    }
    return ObjectiveResult(value, p_l, r_a, lat, jit, violations)


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------
@dataclass
class _Measurement:
    state: PerRbRadioState
    sinr: np.ndarray
    sinr_eff: float
    bler: float
    rssi_w: float
    rsrp_w: float
    notch: NotchVector


class SignalBuffer:
    """Rolling per-RB RSSI (dBm) and SINR (dB) samples across steps."""

    def __init__(self, window_len: int) -> None:
        self.window_len = window_len
        self._rssi: deque[float] = deque(maxlen=window_len)
        self._sinr: deque[float] = deque(maxlen=window_len)

    def push(self, rssi_dbm: np.ndarray, sinr_db: np.ndarray) -> None:
        self._rssi.extend(np.asarray(rssi_dbm, dtype=np.float64).tolist())
        self._sinr.extend(np.asarray(sinr_db, dtype=np.float64).tolist())

    @property
    def full(self) -> bool:
        return len(self._rssi) >= self.window_len

    def window(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._rssi), np.array(self._sinr)


class JammingEnv:
    def __init__(
        self,
        scenario: ScenarioConfig,
        seed: int = 0,
        detector: LogitSource | None = None,
        window_len: int = 300,
    ) -> None:
        self.scenario = scenario
        self.seed = seed
        self.detector = detector
        self.rng = np.random.default_rng(seed)
        self.buffer = SignalBuffer(detector.window_len if detector is not None else window_len)
        self.topology: Topology | None = None
        self.kpis: list[KpiRecord] = []
        self.slot = 0
        self.done = True
        self.last_jammed = False
        self._tracker = NormalizationTracker.from_priors(scenario.normalization)
        self._timing = TimingState()
        self._previous: RecoveryAction | None = None

    @property
    def include_logits(self) -> bool:
        return self.detector is not None

    def decode(self, raw1: Sequence[int], raw2: Sequence[float]) -> RecoveryAction:
        return decode_joint_action(
            raw1,
            raw2,
            self.scenario.bwps,
            self.scenario.link.r_max_limit,
            self.scenario.notch.max_notched_rbs,
        )

    def _measure(self, action: RecoveryAction) -> _Measurement:
        sc = self.scenario
        bwp = sc.bwp(action.bwp_idx)
        state = assemble_per_rb_powers(sc, self.topology, bwp, action.beams, self.slot, self.rng)
        notch = notch_for(action, bwp, sc.notch.efficiency, sc.notch.max_notched_rbs)
        notched = notched_state(state, notch)
        sinr = sinr_per_rb(notched)
        scheduled = notch.scheduled
        if scheduled.any():
            esm = sc.link.esm_for(bwp.numerology)
            sinr_eff = effective_sinr(sinr[scheduled], esm)
            bler = sinr_to_bler(sinr_eff, esm)
        else:
            sinr_eff, bler = 0.0, 1.0
        rssi, rsrp = measure_indicators(notched, reference_signal_powers(notched))
        self.buffer.push(w_to_dbm(rssi_per_rb(notched)), lin_to_db(sinr))
        self.last_jammed = bool(np.any(state.p_jam > 0))
        return _Measurement(notched, sinr, sinr_eff, bler, rssi, rsrp, notch)

    def _logits(self) -> tuple[float, float]:
        if self.detector is None:
            return 0.0, 0.0
        rssi, sinr = self.buffer.window()
        l1, l2 = self.detector.logits(rssi, sinr)
        return float(l1), float(l2)

    def _raw_metrics(self, m: _Measurement, packet_loss: float, latency: float, jitter: float) -> dict[str, float]:
        return {
            "packet_delivery": 1.0 - packet_loss,
            "sinr_db": max(SINR_FLOOR_DB, float(lin_to_db(m.sinr_eff))),
            "rssi_dbm": max(POWER_FLOOR_DBM, float(w_to_dbm(m.rssi_w))),
            "rsrp_dbm": max(POWER_FLOOR_DBM, float(w_to_dbm(m.rsrp_w))),
            "latency_s": latency,
            "jitter_s": jitter,
        }

    def _observe(
        self, raw: Mapping[str, float], packet_loss: float, update: bool
    ) -> tuple[AgentObservation, dict[str, float]]:
        norm = {k: normalize_metric(self._tracker, k, v, update) for k, v in raw.items()}
        agent1 = [packet_loss, norm["latency_s"], norm["jitter_s"]]
        agent2 = [norm["sinr_db"], norm["rssi_dbm"], norm["rsrp_dbm"]]
        if self.include_logits:
            l1, l2 = self._logits()
            agent1 += [l1, l2]
            agent2 += [l1, l2]
        return AgentObservation(np.array(agent1), np.array(agent2)), norm

    def reset(self, seed: int | None = None) -> AgentObservation:
        """Start a new episode and return the observation of a neutral probe."""
        if seed is not None:
            self.seed = seed
            self.rng = np.random.default_rng(seed)
        self.topology = sample_topology(self.scenario, self.rng)
        self.kpis = []
        self.slot = 0
        self.done = False
        self._tracker = NormalizationTracker.from_priors(self.scenario.normalization)
        self._timing = TimingState()
        self._previous = None
        self.buffer = SignalBuffer(self.buffer.window_len)

        probe = self.decode(NEUTRAL_RAW1, NEUTRAL_RAW2)
        m = self._measure(probe)
        while not self.buffer.full:
            m = self._measure(probe)
        latency = self.scenario.bwp(probe.bwp_idx).slot_duration_s
        raw = self._raw_metrics(m, m.bler, latency, 0.0)
        obs, _ = self._observe(raw, m.bler, update=False)
        return obs

    def step(self, action: RecoveryAction) -> StepResult:
        if self.done or self.topology is None:
            raise DomainError("episode is not active; call reset()")
        sc = self.scenario
        try:
            m = self._measure(action)
            bwp = sc.bwp(action.bwp_idx)
            harq = HarqConfig(action.r_max, sc.link.per_mode, sc.link.r_max_limit)
            delivered, attempts = harq_batch(m.bler, harq, self.rng, sc.link.packets_per_slot)

            penalty = reconfiguration_penalty(self._previous, action, sc)
            latencies = []
            for i, a in enumerate(attempts):
                self._timing = update_timing(int(a), bwp, penalty if i == 0 else 0.0, self._timing)
                latencies.append(self._timing.last_latency_s)
            latency = float(np.mean(latencies))
            jitter = self._timing.jitter_s
            packet_loss = float(1.0 - delivered.mean())

            raw = self._raw_metrics(m, packet_loss, latency, jitter)
            obs, norm = self._observe(raw, packet_loss, update=True)
            r1, r2 = compute_rewards(
                {
                    "packet_delivery": norm["packet_delivery"],
                    "sinr": norm["sinr_db"],
                    "rsrp": norm["rsrp_dbm"],
                    "latency": norm["latency_s"],
                    "jitter": norm["jitter_s"],
                },
                sc.rewards,
            )
        except DomainError:
            self.done = True
            logger.error("Episode (seed %d) terminated at slot %d", self.seed, self.slot)
            raise

        l1, l2 = (float(obs.agent1[-2]), float(obs.agent1[-1])) if self.include_logits else (0.0, 0.0)
        kpi = KpiRecord(
            slot_index=self.slot,
            packet_loss_rate=packet_loss,
            attempts=float(np.mean(attempts)),
            latency_s=latency,
            jitter_s=jitter,
            sinr_eff=m.sinr_eff,
            rssi_w=m.rssi_w,
            rsrp_w=m.rsrp_w,
            reward_agent1=r1,
            reward_agent2=r2,
            l1=l1,
            l2=l2,
            notched_rbs=int(round(m.notch.total)),
            bwp_idx=action.bwp_idx,
        )
        self.kpis.append(kpi)
        self._previous = action
        self.slot += 1
        self.done = self.slot >= sc.episode_slots
        return StepResult(obs, (r1, r2), kpi, self.done)

    def step_raw(self, raw1: Sequence[int], raw2: Sequence[float]) -> StepResult:
        if self.done or self.topology is None:
            raise DomainError("episode is not active; call reset()")
        try:
            action = self.decode(raw1, raw2)
        except DomainError:
            self.done = True
            logger.error("Episode (seed %d) terminated at slot %d: invalid action", self.seed, self.slot)
            raise
        return self.step(action)


# ---------------------------------------------------------------------------
# Baseline policies and the multi-agent adapter
# ---------------------------------------------------------------------------
class FixedPolicy:
    def __init__(self, raw1: Sequence[int] = NEUTRAL_RAW1, raw2: Sequence[float] = NEUTRAL_RAW2) -> None:
        self.raw1 = tuple(int(v) for v in raw1)
        self.raw2 = tuple(float(v) for v in raw2)

    def act(self, observation: AgentObservation) -> tuple[tuple[int, ...], tuple[float, ...]]:
        return self.raw1, self.raw2


class RandomPolicy:
    """Uniform over the raw action space; draws from its own stream only."""

    def __init__(self, scenario: ScenarioConfig, seed: int = 0) -> None:
        self._rng = np.random.default_rng(seed)
        self._heads = agent_head_specs(scenario)

    def act(self, observation: AgentObservation) -> tuple[tuple[int, ...], tuple[float, ...]]:
        raw1 = tuple(int(self._rng.integers(0, k)) for k in self._heads[0].discrete)
        raw2 = tuple(float(x) for x in self._rng.uniform(-1.0, 1.0, 4))
        return raw1, raw2


def agent_head_specs(scenario: ScenarioConfig) -> tuple[HeadSpec, HeadSpec]:
    n_rb = scenario.max_n_rb
    notch_head = HeadSpec(
        discrete=(n_rb, n_rb + 1, 2, len(scenario.bwps), scenario.link.r_max_limit + 1)
    )
    return notch_head, HeadSpec(continuous=4)


def run_episode(env: JammingEnv, policy: FixedPolicy | RandomPolicy, seed: int | None = None) -> list[KpiRecord]:
    obs = env.reset(seed)
    while not env.done:
        raw1, raw2 = policy.act(obs)
        obs = env.step_raw(raw1, raw2).observation
    return list(env.kpis)


class JammingMultiAgentEnv:
    """Adapter exposing JammingEnv through the generic multi-agent interface."""

    def __init__(self, scenario: ScenarioConfig, seed: int = 0, detector: LogitSource | None = None) -> None:
        self.env = JammingEnv(scenario, seed, detector)
        extra = 2 if detector is not None else 0
        head1, head2 = agent_head_specs(scenario)
        self.agent_specs = [
            AgentSpec("notching", 3 + extra, head1),
            AgentSpec("beamforming", 3 + extra, head2),
        ]

    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        return self.env.reset(seed).as_list()

    def step(self, actions: Sequence[AgentAction]) -> tuple[list[np.ndarray], list[float], bool, dict]:
        result = self.env.step_raw(actions[0].discrete, actions[1].continuous)
        return result.observation.as_list(), list(result.rewards), result.done, {"kpi": result.kpi}


# ---------------------------------------------------------------------------
# Beam grid-search oracle
# ---------------------------------------------------------------------------
@dataclass
class _LinkBudget:
    uav_base: np.ndarray
    uav_tx_dirs: np.ndarray
    uav_rx_dirs: np.ndarray
    cluster_powers: np.ndarray
    jam_dirs: list[tuple[float, float]]
    jam_rb_power: list[np.ndarray]
    int_dirs: list[tuple[float, float]]
    int_rb_power: list[np.ndarray]
    noise: np.ndarray


def _link_budget(env: JammingEnv, bwp: BwpConfig, slot: int) -> _LinkBudget:
    sc, topo = env.scenario, env.topology
    rng = np.random.default_rng([env.seed, slot])
    gnb = topo.serving_gnb
    uav = topo.uav_position(slot * sc.step_interval_s)
    d0, pl = sc.los_reference_m, sc.propagation

    los = los_state(uav, gnb, topo.los_draws["uav"], d0, topo.buildings)
    real = channel_realization(sc.fading, sc.shadow, los, bwp.n_rb, rng, bwp.rb_bandwidth_hz)
    d = float(np.linalg.norm(uav - gnb))
    base = (
        dbm_to_w(sc.uav_tx_power_dbm) / bwp.n_rb
        * path_loss(d, los, pl)
        * 10 ** (real.shadow_db / 10)
        * real.rb_gain
    )
    tx = np.array(direction(uav, gnb)) + real.aod_offsets
    rx = np.array(direction(gnb, uav)) + real.aoa_offsets

    jam_dirs, jam_power = [], []
    for j, (jc, pos) in enumerate(zip(sc.jammer_configs(), topo.jammers)):
        mask = jammer_active_rbs(jc, bwp, slot)
        j_los = los_state(pos, gnb, topo.los_draws[f"jammer{j}"], d0, topo.buildings)
        dist = float(np.linalg.norm(pos - gnb))
        jam_dirs.append(direction(gnb, pos))
        jam_power.append(mask * dbm_to_w(jc.tx_power_dbm) * jc.antenna_gain_linear * path_loss(dist, j_los, pl))

    int_dirs, int_power = [], []
    p_cell = dbm_to_w(sc.gnb_tx_power_dbm) / bwp.n_rb * sc.interference_load
    for i, pos in enumerate(topo.interfering_gnbs):
        i_los = los_state(pos, gnb, topo.los_draws[f"interferer{i}"], d0, topo.buildings)
        dist = float(np.linalg.norm(pos - gnb))
        int_dirs.append(direction(gnb, pos))
        int_power.append(np.full(bwp.n_rb, p_cell * path_loss(dist, i_los, pl)))

    return _LinkBudget(
        uav_base=base,
        uav_tx_dirs=tx,
        uav_rx_dirs=rx,
        cluster_powers=real.cluster_powers,
        jam_dirs=jam_dirs,
        jam_rb_power=jam_power,
        int_dirs=int_dirs,
        int_rb_power=int_power,
        noise=np.full(bwp.n_rb, noise_power_per_rb(sc.noise, bwp)),
    )


def _gains(weights: np.ndarray, dirs: np.ndarray, geom: ArrayGeometry) -> np.ndarray:
    """Array gain of each weight row toward each direction row, shape (G, D)."""
    a = steering_matrix(dirs[:, 0], dirs[:, 1], geom)
    return np.abs(weights @ a.conj().T) ** 2 * geom.num_elements


def _eesm_rows(sinr: np.ndarray, beta: float) -> np.ndarray:
    return -beta * (logsumexp(-sinr / beta, axis=-1) - math.log(sinr.shape[-1]))


def _grid(resolution_deg: float) -> tuple[np.ndarray, np.ndarray]:
    thetas = np.radians(np.arange(0.0, 180.0 + 1e-9, resolution_deg))
    phis = np.radians(np.arange(0.0, 360.0, resolution_deg))
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    return tt.ravel(), pp.ravel()


def beam_grid_search(
    env: JammingEnv, resolution_deg: float = 2.0, bwp_idx: int = 0, slot: int | None = None
) -> tuple[BeamAngles, float]:
    """Exhaustive beam search; returns the best beams and their effective SINR (linear).

    The UAV beam only scales the desired signal, so both ends are searched
    separately over the same channel draw.
    """
    if env.topology is None:
        raise DomainError("reset the environment before searching beams")
    sc = env.scenario
    bwp = sc.bwp(bwp_idx)
    slot = env.slot if slot is None else slot
    budget = _link_budget(env, bwp, slot)
    uav_geom = ArrayGeometry.ura(sc.arrays.uav_elements, bwp.center_hz)
    gnb_geom = ArrayGeometry.ura(sc.arrays.gnb_elements, bwp.center_hz)

    thetas, phis = _grid(resolution_deg)
    tx_w = steering_matrix(thetas, phis, uav_geom)
    g_tx = _gains(tx_w, budget.uav_tx_dirs, uav_geom) @ budget.cluster_powers
    best_tx = int(np.argmax(g_tx))

    rx_w = steering_matrix(thetas, phis, gnb_geom)
    g_rx = _gains(rx_w, budget.uav_rx_dirs, gnb_geom) @ budget.cluster_powers
    signal = g_tx[best_tx] * g_rx[:, None] * budget.uav_base[None, :]
    denom = np.broadcast_to(budget.noise, signal.shape).copy()
    for dirs, power in ((budget.jam_dirs, budget.jam_rb_power), (budget.int_dirs, budget.int_rb_power)):
        for dir_, p in zip(dirs, power):
            g = _gains(rx_w, np.array([dir_]), gnb_geom)[:, 0]
            denom += g[:, None] * p[None, :]
    esm = sc.link.esm_for(bwp.numerology)
    eff = _eesm_rows(signal / denom, esm.beta_eesm)
    best_rx = int(np.argmax(eff))

    beams = BeamAngles(
        float(thetas[best_tx]), float(phis[best_tx]), float(thetas[best_rx]), float(phis[best_rx])
    )
    return beams, float(eff[best_rx])


def isotropic_sinr(env: JammingEnv, bwp_idx: int = 0, slot: int | None = None) -> float:
    """Effective SINR of the same channel draw with single-element arrays at both ends."""
    if env.topology is None:
        raise DomainError("reset the environment before measuring")
    sc = env.scenario
    bwp = sc.bwp(bwp_idx)
    budget = _link_budget(env, bwp, env.slot if slot is None else slot)
    denom = budget.noise + sum(budget.jam_rb_power, np.zeros(bwp.n_rb)) + sum(
        budget.int_rb_power, np.zeros(bwp.n_rb)
    )
    sinr = budget.uav_base / denom
    return float(_eesm_rows(sinr, sc.link.esm_for(bwp.numerology).beta_eesm))


