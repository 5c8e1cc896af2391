"""Tests for jamshield.detector.model module."""

import math

import numpy as np
import pytest
import torch

from jamshield.config import DetectorLoss, UNetTransformerSpec
from jamshield.detector.model import (
    UNetTransformer,
    combine_loss,
    detector_loss,
    prediction_entropy,
    transformer_logits,
)
from jamshield.errors import DomainError
from jamshield.marl.networks import DTYPE


def _model(seed=0, input_dim=90, spec=None):
    return UNetTransformer(input_dim, spec or UNetTransformerSpec.toy(), torch.Generator().manual_seed(seed))


def test_zero_weights_output_head_bias():
    model = _model()
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
        model.head.bias.copy_(torch.tensor([0.3, -0.2], dtype=DTYPE))
    logits = transformer_logits(np.random.default_rng(0).normal(size=(4, 90)), model)
    np.testing.assert_allclose(logits, np.tile([0.3, -0.2], (4, 1)), atol=1e-12)


def test_trace_mirrors_encoder_widths():
    assert _model().trace(np.zeros((2, 90))) == [32, 16, 8, 8, 16, 32]


def test_trace_with_wide_preset():
    model = _model(input_dim=54, spec=UNetTransformerSpec.large())
    assert model.trace(np.zeros((1, 54))) == [256, 128, 64, 64, 128, 256]


def test_logits_shape_and_determinism():
    x = np.random.default_rng(1).normal(size=(5, 90))
    a = transformer_logits(x, _model(seed=3))
    b = transformer_logits(x, _model(seed=3))
    assert a.shape == (5, 2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, transformer_logits(x, _model(seed=4)))


def test_input_width_checked():
    with pytest.raises(DomainError):
        transformer_logits(np.zeros((1, 54)), _model())


def test_entropy_values():
    assert float(prediction_entropy([0.5, 0.5])) == pytest.approx(math.log(2))
    assert float(prediction_entropy([1.0, 0.0])) == 0.0
    assert float(prediction_entropy([0.9, 0.1])) == pytest.approx(0.3251, abs=1e-4)


def test_entropy_bounded_by_ln2():
    p = np.random.default_rng(2).dirichlet([1.0, 1.0], size=100)
    e = prediction_entropy(p)
    assert torch.all(e >= 0)
    assert torch.all(e <= math.log(2) + 1e-12)


def test_entropy_rejects_invalid_distributions():
    with pytest.raises(DomainError, match="non-negative"):
        prediction_entropy([1.2, -0.2])
    with pytest.raises(DomainError, match="sum to 1"):
        prediction_entropy([0.5, 0.6])


def test_combined_loss_arithmetic():
    assert float(combine_loss(0.5, 0.3, DetectorLoss(alpha_uncertainty=0.1))) == pytest.approx(0.47)
    g1 = combine_loss(0.8, 0.4, DetectorLoss(alpha_uncertainty=0.2, grad_accum_steps=1))
    g2 = combine_loss(0.8, 0.4, DetectorLoss(alpha_uncertainty=0.2, grad_accum_steps=2))
    assert float(g2) == float(g1) / 2


def test_loss_without_uncertainty_is_cross_entropy():
    logits = torch.tensor([[2.0, -1.0], [0.1, 0.4]], dtype=DTYPE)
    labels = torch.tensor([0, 1])
    loss = detector_loss(logits, labels, DetectorLoss(alpha_uncertainty=0.0))
    assert float(loss) == pytest.approx(float(torch.nn.functional.cross_entropy(logits, labels)))


def test_empty_batch_rejected():
    with pytest.raises(DomainError):
        detector_loss(torch.zeros(0, 2, dtype=DTYPE), torch.zeros(0, dtype=torch.long), DetectorLoss())


def test_logits_do_not_depend_on_batch_order():
    x = np.random.default_rng(5).normal(size=(9, 90))
    perm = np.random.default_rng(6).permutation(9)
    model = _model(seed=7)
    shuffled = transformer_logits(x[perm], model)
    np.testing.assert_allclose(shuffled, transformer_logits(x, model)[perm], rtol=0, atol=1e-12)


def test_detector_loss_passes_gradcheck():
    gen = torch.Generator().manual_seed(8)
    logits = torch.randn(100, 2, generator=gen, dtype=DTYPE, requires_grad=True)
    labels = torch.randint(0, 2, (100,), generator=gen)
    cfg = DetectorLoss(alpha_uncertainty=0.3, grad_accum_steps=2)
    assert torch.autograd.gradcheck(
        lambda l: detector_loss(l, labels, cfg), (logits,), eps=1e-6, atol=1e-8, rtol=1e-4
    )
