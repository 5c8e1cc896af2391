"""Tests for jamshield.env module."""

import math

import numpy as np
import pytest

from jamshield.config import (
    ATTACKER_POWER_PRESET_DBM,
    NormalizationPriors,
    ObjectiveWeights,
    RewardWeights,
    ScenarioConfig,
    default_bwps,
)
from jamshield.errors import ActionError, ContractError, DomainError
from jamshield.env import (
    NEUTRAL_RAW1,
    NEUTRAL_RAW2,
    FixedPolicy,
    JammingEnv,
    JammingMultiAgentEnv,
    KpiRecord,
    NormalizationTracker,
    RandomPolicy,
    SignalBuffer,
    beam_grid_search,
    compute_rewards,
    decode_joint_action,
    eval_objective,
    isotropic_sinr,
    normalize_metric,
    reconfiguration_penalty,
    run_episode,
)
from jamshield.marl.policy import AgentAction


@pytest.fixture
def scenario():
    return ScenarioConfig(episode_slots=6, n_buildings=5)


def _kpi(packet_loss=0.0, attempts=1.0, latency=0.0, jitter=0.0, **kw):
    return KpiRecord(
        slot_index=kw.pop("slot", 0),
        packet_loss_rate=packet_loss,
        attempts=attempts,
        latency_s=latency,
        jitter_s=jitter,
        sinr_eff=kw.pop("sinr_eff", 10.0),
        rssi_w=1e-9,
        rsrp_w=1e-11,
        reward_agent1=0.0,
        reward_agent2=0.0,
        **kw,
    )


# ---------------------------------------------------------------------------
# Action decoding
# ---------------------------------------------------------------------------
def test_zero_continuous_action_points_beams_mid_range():
    action = decode_joint_action(NEUTRAL_RAW1, NEUTRAL_RAW2, default_bwps(), 4)
    assert action.beams.theta_uav == pytest.approx(math.pi / 2)
    assert action.beams.phi_uav == pytest.approx(math.pi)
    assert action.beams.theta_gnb == pytest.approx(math.pi / 2)
    assert action.beams.phi_gnb == pytest.approx(math.pi)


def test_rb_start_beyond_band_is_clamped():
    action = decode_joint_action((135 + 5, 7, 1, 0, 0), NEUTRAL_RAW2, default_bwps(), 4)
    assert action.rb_start == 134
    assert action.rb_num == 0


def test_disabled_notch_ignores_rb_fields():
    action = decode_joint_action((10, 20, 0, 0, 0), NEUTRAL_RAW2, default_bwps(), 4)
    assert action.notch_triple == (0, 0, 0)


def test_out_of_range_fields_are_clamped():
    action = decode_joint_action((3, 500, 1, 9, 11), (2.0, -3.0, 1.0, 1.0), default_bwps(), 4)
    assert action.bwp_idx == 1
    assert action.rb_num == 32 - 3
    assert action.r_max == 4
    assert action.beams.theta_uav == pytest.approx(math.pi)
    assert action.beams.phi_uav == pytest.approx(0.0)


def test_notch_budget_limits_rb_num():
    action = decode_joint_action((0, 100, 1, 0, 0), NEUTRAL_RAW2, default_bwps(), 4, max_notched_rbs=10)
    assert action.rb_num == 10


def test_non_finite_continuous_action_rejected():
    with pytest.raises(ActionError):
        decode_joint_action(NEUTRAL_RAW1, (0.0, float("nan"), 0.0, 0.0), default_bwps(), 4)
    with pytest.raises(ActionError):
        decode_joint_action((0, 0, 0), NEUTRAL_RAW2, default_bwps(), 4)


def test_reconfiguration_penalties(scenario):
    bwps = scenario.bwps
    base = decode_joint_action(NEUTRAL_RAW1, NEUTRAL_RAW2, bwps, 4)
    assert reconfiguration_penalty(None, base, scenario) == 0.0
    assert reconfiguration_penalty(base, base, scenario) == 0.0
    switched = decode_joint_action((0, 0, 0, 1, 0), NEUTRAL_RAW2, bwps, 4)
    assert reconfiguration_penalty(base, switched, scenario) == pytest.approx(1e-3)
    steered = decode_joint_action(NEUTRAL_RAW1, (0.5, 0.0, 0.0, 0.0), bwps, 4)
    assert reconfiguration_penalty(base, steered, scenario) == pytest.approx(0.125e-3)
    notched = decode_joint_action((0, 4, 1, 0, 0), NEUTRAL_RAW2, bwps, 4)
    assert reconfiguration_penalty(base, notched, scenario) == pytest.approx(0.25e-3)


# ---------------------------------------------------------------------------
# Normalisation, rewards and the objective
# ---------------------------------------------------------------------------
def test_normalize_metric_endpoints():
    tracker = NormalizationTracker({"sinr_db": (0.0, 10.0), "latency_s": (0.0, 10.0)})
    assert normalize_metric(tracker, "sinr_db", 0.0) == 0.0
    assert normalize_metric(tracker, "sinr_db", 10.0) == 1.0
    assert normalize_metric(tracker, "sinr_db", 5.0) == pytest.approx(0.5)
    assert normalize_metric(tracker, "latency_s", 0.0) == 1.0
    assert normalize_metric(tracker, "latency_s", 10.0) == 0.0


def test_normalize_metric_widens_bounds():
    tracker = NormalizationTracker({"sinr_db": (0.0, 10.0)})
    assert normalize_metric(tracker, "sinr_db", 20.0) == 1.0
    assert tracker.bounds["sinr_db"] == (0.0, 20.0)
    assert normalize_metric(tracker, "sinr_db", 10.0) == pytest.approx(0.5)


def test_normalize_metric_without_update_clips():
    tracker = NormalizationTracker({"sinr_db": (0.0, 10.0)})
    assert normalize_metric(tracker, "sinr_db", 30.0, update=False) == 1.0
    assert tracker.bounds["sinr_db"] == (0.0, 10.0)


def test_normalize_unknown_metric():
    with pytest.raises(DomainError):
        normalize_metric(NormalizationTracker({}), "sinr_db", 1.0)


def test_tracker_from_priors_covers_observed_metrics():
    tracker = NormalizationTracker.from_priors(NormalizationPriors())
    assert set(tracker.bounds) == {
        "packet_delivery",
        "sinr_db",
        "rssi_dbm",
        "rsrp_dbm",
        "latency_s",
        "jitter_s",
    }


def _metrics(value):
    return {k: value for k in ("packet_delivery", "sinr", "rsrp", "latency", "jitter")}


def test_rewards_at_extremes():
    assert compute_rewards(_metrics(1.0), RewardWeights()) == pytest.approx((1.0, 1.0))
    assert compute_rewards(_metrics(0.0), RewardWeights()) == pytest.approx((-1.0, -1.0))


def test_agent2_reward_weighting():
    metrics = {"packet_delivery": 1.0, "sinr": 0.5, "rsrp": 0.0, "latency": 0.0, "jitter": 0.0}
    _, r2 = compute_rewards(metrics, RewardWeights())
    assert r2 == pytest.approx(0.2)


def test_rewards_reject_unnormalised_metrics():
    with pytest.raises(ContractError):
        compute_rewards({**_metrics(0.5), "sinr": 1.5}, RewardWeights())


def test_objective_zero_weights():
    w = ObjectiveWeights(phi=0, beta=0, mu=0, psi=0)
    assert eval_objective([_kpi(0.3, 2.0, 1e-3, 1e-4)], w).value == 0.0


def test_objective_packet_loss_only():
    w = ObjectiveWeights(phi=1, beta=0, mu=0, psi=0)
    kpis = [_kpi(0.2), _kpi(0.4)]
    assert eval_objective(kpis, w).value == pytest.approx(0.3)


def test_objective_weighted_sum():
    result = eval_objective([_kpi(0.2, 3.0, 0.001, 0.0005)], ObjectiveWeights())
    assert result.value == pytest.approx(0.700625)
    assert float(result) == result.value
    assert result.retransmissions == pytest.approx(2.0)
    assert not any(result.violations.values())


def test_objective_flags_violations():
    w = ObjectiveWeights(max_notched_rbs=4)
    result = eval_objective([_kpi(0.0, 1.0, 0.05, 0.0, sinr_eff=1e-3, notched_rbs=8)], w)
    assert result.violations == {"latency": True, "jitter": False, "sinr": True, "notch": True}
    payload = result.as_dict()
    assert payload["violations"] == result.violations
    assert payload["latency_s"] == pytest.approx(0.05)
    assert set(payload) == {"value", "packet_loss", "retransmissions", "latency_s", "jitter_s", "violations"}


def test_objective_needs_records():
    with pytest.raises(DomainError):
        eval_objective([], ObjectiveWeights())


def test_kpi_record_validation():
    with pytest.raises(DomainError):
        _kpi(packet_loss=1.5)
    with pytest.raises(DomainError):
        _kpi(attempts=0.5)


# ---------------------------------------------------------------------------
# Environment stepping
# ---------------------------------------------------------------------------
def test_signal_buffer_keeps_latest_samples():
    buf = SignalBuffer(4)
    buf.push(np.arange(3.0), -np.arange(3.0))
    assert not buf.full
    buf.push(np.arange(3.0, 6.0), -np.arange(3.0, 6.0))
    assert buf.full
    rssi, sinr = buf.window()
    np.testing.assert_array_equal(rssi, [2.0, 3.0, 4.0, 5.0])
    np.testing.assert_array_equal(sinr, [-2.0, -3.0, -4.0, -5.0])


def test_reset_returns_normalised_observations(scenario):
    env = JammingEnv(scenario, seed=1)
    obs = env.reset()
    assert obs.agent1.shape == (3,)
    assert obs.agent2.shape == (3,)
    assert np.all((obs.agent1 >= 0) & (obs.agent1 <= 1))
    assert np.all((obs.agent2 >= 0) & (obs.agent2 <= 1))
    assert env.buffer.full
    assert env.kpis == []


def test_step_before_reset_raises(scenario):
    env = JammingEnv(scenario)
    with pytest.raises(DomainError):
        env.step_raw(NEUTRAL_RAW1, NEUTRAL_RAW2)


def test_episode_runs_to_configured_length(scenario):
    kpis = run_episode(JammingEnv(scenario, seed=2), FixedPolicy())
    assert len(kpis) == scenario.episode_slots
    assert [k.slot_index for k in kpis] == list(range(scenario.episode_slots))
    for k in kpis:
        assert 0.0 <= k.packet_loss_rate <= 1.0
        assert -1.0 <= k.reward_agent1 <= 1.0
        assert -1.0 <= k.reward_agent2 <= 1.0
        assert k.latency_s > 0


def test_full_notch_loses_every_packet(scenario):
    env = JammingEnv(scenario, seed=3)
    env.reset()
    result = env.step_raw((0, 135, 1, 0, 0), NEUTRAL_RAW2)
    assert result.kpi.packet_loss_rate == 1.0
    assert result.kpi.sinr_eff == 0.0
    assert result.kpi.notched_rbs == 135
    assert result.kpi.attempts == 1.0


def test_episodes_are_deterministic(scenario):
    a = run_episode(JammingEnv(scenario, seed=4), RandomPolicy(scenario, seed=9))
    b = run_episode(JammingEnv(scenario, seed=4), RandomPolicy(scenario, seed=9))
    assert [k.as_row() for k in a] == [k.as_row() for k in b]


def test_reset_seed_overrides_constructor_seed(scenario):
    a = run_episode(JammingEnv(scenario, seed=0), FixedPolicy(), seed=5)
    b = run_episode(JammingEnv(scenario, seed=5), FixedPolicy())
    assert [k.as_row() for k in a] == [k.as_row() for k in b]


class _ConstantDetector:
    window_len = 300

    def __init__(self):
        self.calls = 0

    def logits(self, rssi_dbm, sinr_db):
        self.calls += 1
        assert len(rssi_dbm) == self.window_len
        assert len(sinr_db) == self.window_len
        return 1.5, -0.5


def test_detector_logits_are_appended(scenario):
    detector = _ConstantDetector()
    env = JammingEnv(scenario, seed=6, detector=detector)
    obs = env.reset()
    assert obs.agent1.shape == (5,)
    np.testing.assert_array_equal(obs.agent2[-2:], [1.5, -0.5])
    result = env.step_raw(NEUTRAL_RAW1, NEUTRAL_RAW2)
    assert (result.kpi.l1, result.kpi.l2) == (1.5, -0.5)
    assert detector.calls == 2


def test_multi_agent_adapter(scenario):
    env = JammingMultiAgentEnv(scenario, seed=7)
    assert [s.name for s in env.agent_specs] == ["notching", "beamforming"]
    assert env.agent_specs[0].head.discrete == (135, 136, 2, 2, 5)
    assert env.agent_specs[1].head.continuous == 4
    obs = env.reset()
    assert [o.shape for o in obs] == [(3,), (3,)]
    actions = [AgentAction(discrete=list(NEUTRAL_RAW1)), AgentAction(continuous=np.zeros(4))]
    obs, rewards, done, info = env.step(actions)
    assert len(rewards) == 2
    assert not done
    assert isinstance(info["kpi"], KpiRecord)


def test_detector_variant_observation_width(scenario):
    env = JammingMultiAgentEnv(scenario, detector=_ConstantDetector())
    assert [s.obs_dim for s in env.agent_specs] == [5, 5]


@pytest.mark.slow
def test_clear_channel_with_searched_beams_delivers():
    sc = ScenarioConfig(
        n_attackers=0,
        n_gnbs=1,
        n_buildings=0,
        los_reference_m=1e6,
        uav_tx_power_dbm=30.0,
        uav_mobility="static",
        episode_slots=50,
    )
    env = JammingEnv(sc, seed=8)
    env.reset()
    beams, _ = beam_grid_search(env, resolution_deg=4.0)
    raw2 = (
        beams.theta_uav / math.pi * 2 - 1,
        beams.phi_uav / math.pi - 1,
        beams.theta_gnb / math.pi * 2 - 1,
        beams.phi_gnb / math.pi - 1,
    )
    losses = []
    while not env.done:
        losses.append(env.step_raw((0, 0, 0, 0, 4), raw2).kpi.packet_loss_rate)
    assert np.mean(losses) < 0.01


@pytest.mark.slow
def test_searched_beams_beat_isotropic_arrays():
    sc = ScenarioConfig(n_attackers=0, n_gnbs=1, n_buildings=0, los_reference_m=1e6)
    for seed in range(3):
        env = JammingEnv(sc, seed=seed)
        env.reset()
        _, searched = beam_grid_search(env, resolution_deg=4.0)
        assert searched >= isotropic_sinr(env)


@pytest.mark.slow
def test_stronger_jammer_never_lowers_packet_loss():
    def mean_loss(power_dbm):
        sc = ScenarioConfig(attacker_power_dbm=power_dbm, episode_slots=20)
        losses = []
        for seed in range(20):
            kpis = run_episode(JammingEnv(sc, seed=seed), RandomPolicy(sc, seed=100 + seed))
            losses += [k.packet_loss_rate for k in kpis]
        return float(np.mean(losses))

    means = [mean_loss(p) for p in ATTACKER_POWER_PRESET_DBM]
    assert all(a <= b for a, b in zip(means, means[1:]))


def _raw_beams(beams):
    return (
        beams.theta_uav / math.pi * 2 - 1,
        beams.phi_uav / math.pi - 1,
        beams.theta_gnb / math.pi * 2 - 1,
        beams.phi_gnb / math.pi - 1,
    )


def _replay_with_searched_beams(sc, seed, search_env=None, every=5):
    """Play r_max=4, no notch on BWP 0, pointing beams found on `search_env` (default: the same env)."""
    env = JammingEnv(sc, seed=seed)
    env.reset()
    if search_env is not None:
        search_env.reset(seed)
    losses = []
    while not env.done:
        if env.slot % every == 0:
            beams, _ = beam_grid_search(search_env or env, resolution_deg=4.0, slot=env.slot)
            raw2 = _raw_beams(beams)
        losses.append(env.step_raw((0, 0, 0, 0, 4), raw2).kpi.packet_loss_rate)
    return np.array(losses)


@pytest.mark.slow
def test_default_cell_is_usable_without_jamming():
    sc = ScenarioConfig(n_attackers=0, episode_slots=20)
    losses = np.concatenate([_replay_with_searched_beams(sc, seed) for seed in range(30)])
    assert np.mean(losses < 0.2) >= 0.65


@pytest.mark.slow
def test_jammer_raises_loss_on_the_same_geometry():
    clear = ScenarioConfig(n_attackers=0, episode_slots=20)
    jammed = clear.model_copy(update={"n_attackers": 1, "attacker_strategy": "barrage", "attacker_power_dbm": 10.0})
    clear_loss, jammed_loss = [], []
    for seed in range(10):
        clear_loss.append(_replay_with_searched_beams(clear, seed))
        jammed_loss.append(_replay_with_searched_beams(jammed, seed, search_env=JammingEnv(clear)))
    clear_loss, jammed_loss = np.concatenate(clear_loss), np.concatenate(jammed_loss)
    assert np.all(jammed_loss >= clear_loss)
    assert jammed_loss.mean() > clear_loss.mean()


def test_grid_search_beats_isotropic_baseline_with_one_jammer():
    sc = ScenarioConfig(n_attackers=1, attacker_strategy="barrage")
    assert sc.arrays.uav_elements == sc.arrays.gnb_elements == 4
    env = JammingEnv(sc)
    gains_db = []
    for seed in range(50):
        env.reset(seed)
        _, searched = beam_grid_search(env, resolution_deg=2.0)
        gains_db.append(10 * math.log10(searched / isotropic_sinr(env)))
    assert np.mean(np.array(gains_db) >= 3.0) >= 0.9


def test_invalid_raw_action_ends_the_episode(scenario):
    env = JammingEnv(scenario, seed=9)
    env.reset()
    with pytest.raises(ActionError):
        env.step_raw(NEUTRAL_RAW1, (float("nan"), 0.0, 0.0, 0.0))
    assert env.done
    with pytest.raises(DomainError, match="not active"):
        env.step_raw(NEUTRAL_RAW1, NEUTRAL_RAW2)
    env.reset()
    assert not env.done
