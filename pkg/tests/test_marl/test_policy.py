"""Tests for jamshield.marl.policy module."""

import math

import numpy as np
import pytest
import torch
from torch.distributions import Categorical, Normal

from jamshield.errors import InapplicableError
from jamshield.marl.networks import DTYPE
from jamshield.marl.policy import (
    HeadOutputs,
    HeadSpec,
    HybridActor,
    agent_kl_proximity,
    evaluate_actions,
    kl_proximity,
    sample_actions,
    tanh_log_det_jacobian,
)


def _outputs(logits=None, mean=None, log_std=None):
    logits = torch.zeros(1, 0, dtype=DTYPE) if logits is None else torch.as_tensor(logits, dtype=DTYPE)
    batch = logits.shape[0]
    mean = torch.zeros(batch, 0, dtype=DTYPE) if mean is None else torch.as_tensor(mean, dtype=DTYPE)
    log_std = torch.zeros(mean.shape[-1], dtype=DTYPE) if log_std is None else torch.as_tensor(log_std, dtype=DTYPE)
    return HeadOutputs(logits, mean, log_std)


def test_saturated_softmax_picks_dominant_class():
    out = _outputs(logits=[[1e9, -1e9]])
    sampled = sample_actions(out, HeadSpec(discrete=(2,)), torch.Generator().manual_seed(0))
    assert int(sampled.discrete[0, 0]) == 0
    assert float(sampled.log_prob[0]) == pytest.approx(0.0, abs=1e-9)


def test_vanishing_std_gives_squashed_mean():
    mean = [[0.3, -1.2]]
    out = _outputs(mean=mean, log_std=[-30.0, -30.0])
    sampled = sample_actions(out, HeadSpec(continuous=2), torch.Generator().manual_seed(0))
    np.testing.assert_allclose(sampled.continuous.numpy(), np.tanh(mean), atol=1e-9)


def test_deterministic_sampling_uses_modes():
    out = _outputs(logits=[[0.1, 2.0, -1.0]], mean=[[0.5]], log_std=[0.0])
    sampled = sample_actions(out, HeadSpec(discrete=(3,), continuous=1), deterministic=True)
    assert int(sampled.discrete[0, 0]) == 1
    assert float(sampled.continuous[0, 0]) == pytest.approx(math.tanh(0.5))


def test_categorical_frequencies_match_softmax():
    n = 100_000
    logits = torch.tensor([0.5, -0.2, 1.1], dtype=DTYPE)
    out = _outputs(logits=logits.repeat(n, 1))
    sampled = sample_actions(out, HeadSpec(discrete=(3,)), torch.Generator().manual_seed(1))
    freq = np.bincount(sampled.discrete[:, 0].numpy(), minlength=3) / n
    probs = torch.softmax(logits, 0).numpy()
    sigma = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) <= 4 * sigma)


def test_uniform_categorical_entropy():
    out = _outputs(logits=torch.zeros(1, 4))
    sampled = sample_actions(out, HeadSpec(discrete=(4,)), torch.Generator().manual_seed(0))
    assert float(sampled.entropy[0]) == pytest.approx(math.log(4))


def test_evaluate_actions_reproduces_sampling_log_prob():
    gen = torch.Generator().manual_seed(3)
    actor = HybridActor(2, HeadSpec(discrete=(3, 2), continuous=2), hidden=(8,), generator=gen)
    out = actor(torch.randn(6, 2, generator=gen, dtype=DTYPE))
    sampled = sample_actions(out, actor.head, gen)
    log_prob, entropy = evaluate_actions(out, actor.head, sampled.discrete, sampled.pre_squash)
    torch.testing.assert_close(log_prob, sampled.log_prob)
    torch.testing.assert_close(entropy, sampled.entropy)


def test_tanh_jacobian_is_stable():
    u = torch.linspace(-3, 3, 13, dtype=DTYPE)
    torch.testing.assert_close(tanh_log_det_jacobian(u), torch.log(1 - torch.tanh(u) ** 2))
    assert torch.isfinite(tanh_log_det_jacobian(torch.tensor([50.0, -50.0], dtype=DTYPE))).all()


def test_actor_log_std_is_clamped():
    actor = HybridActor(1, HeadSpec(continuous=1), hidden=(4,), log_std_init=-40.0)
    assert float(actor(torch.ones(1, 1, dtype=DTYPE)).log_std[0]) == -5.0


def test_kl_identical_categoricals_is_zero():
    p = Categorical(probs=torch.tensor([0.2, 0.8], dtype=DTYPE))
    assert float(kl_proximity(p, p)) == pytest.approx(0.0)


def test_kl_unit_gaussians():
    p = Normal(torch.tensor(0.0, dtype=DTYPE), torch.tensor(1.0, dtype=DTYPE))
    q = Normal(torch.tensor(1.0, dtype=DTYPE), torch.tensor(1.0, dtype=DTYPE))
    assert float(kl_proximity(p, q)) == pytest.approx(0.5)


def test_kl_categorical_closed_form():
    p = Categorical(probs=torch.tensor([0.5, 0.5], dtype=DTYPE))
    q = Categorical(probs=torch.tensor([0.9, 0.1], dtype=DTYPE))
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert float(kl_proximity(p, q)) == pytest.approx(expected)
    assert expected == pytest.approx(0.5108, abs=1e-4)


def test_kl_mismatched_support_is_inapplicable():
    p = Categorical(probs=torch.tensor([0.5, 0.5], dtype=DTYPE))
    q = Categorical(probs=torch.tensor([0.2, 0.3, 0.5], dtype=DTYPE))
    with pytest.raises(InapplicableError):
        kl_proximity(p, q)
    with pytest.raises(InapplicableError):
        kl_proximity(p, Normal(torch.tensor(0.0), torch.tensor(1.0)))


def test_agent_kl_requires_shared_head():
    a = _outputs(logits=torch.zeros(1, 3))
    b = _outputs(mean=torch.zeros(1, 4), log_std=torch.zeros(4))
    with pytest.raises(InapplicableError):
        agent_kl_proximity(a, HeadSpec(discrete=(3,)), b, HeadSpec(continuous=4))
    same = agent_kl_proximity(a, HeadSpec(discrete=(3,)), a, HeadSpec(discrete=(3,)))
    assert float(same[0]) == pytest.approx(0.0)


def test_categorical_log_prob_passes_gradcheck():
    gen = torch.Generator().manual_seed(0)
    head = HeadSpec(discrete=(3, 5))
    logits = torch.randn(100, 8, generator=gen, dtype=DTYPE, requires_grad=True)
    actions = torch.stack(
        [torch.randint(0, 3, (100,), generator=gen), torch.randint(0, 5, (100,), generator=gen)], dim=-1
    )
    no_gaussian = torch.zeros(100, 0, dtype=DTYPE)

    def log_prob(l):
        outputs = HeadOutputs(l, no_gaussian, torch.zeros(0, dtype=DTYPE))
        return evaluate_actions(outputs, head, actions, no_gaussian)[0]

    assert torch.autograd.gradcheck(log_prob, (logits,), eps=1e-6, atol=1e-8, rtol=1e-4)


def test_squashed_gaussian_log_prob_passes_gradcheck():
    gen = torch.Generator().manual_seed(1)
    head = HeadSpec(continuous=4)
    mean = torch.randn(100, 4, generator=gen, dtype=DTYPE, requires_grad=True)
    log_std = (0.3 * torch.randn(4, generator=gen, dtype=DTYPE)).requires_grad_(True)
    pre_squash = torch.randn(100, 4, generator=gen, dtype=DTYPE)
    no_categorical = torch.zeros(100, 0, dtype=DTYPE)
    no_discrete = torch.zeros(100, 0, dtype=torch.long)

    def log_prob(m, s):
        return evaluate_actions(HeadOutputs(no_categorical, m, s), head, no_discrete, pre_squash)[0]

    assert torch.autograd.gradcheck(log_prob, (mean, log_std), eps=1e-6, atol=1e-8, rtol=1e-4)
