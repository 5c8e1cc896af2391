"""Actor/critic MLPs and a functional forward/backward pass over explicit parameters."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import torch
from torch import nn

from jamshield.errors import DomainError

logger = logging.getLogger(__name__)

DTYPE = torch.float64


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise DomainError("an MLP needs at least an input and an output width")
        if any(w <= 0 for w in widths):
            raise DomainError("layer widths must be positive")
        if self.activation != "tanh":
            raise DomainError(f"unsupported activation {self.activation!r}")

    @classmethod
    def actor(cls, obs_dim: int, n_outputs: int, hidden: Sequence[int] = (128, 128)) -> "MlpSpec":
        return cls((obs_dim, *hidden, n_outputs))

    @classmethod
    def critic(cls, obs_dim: int, hidden: Sequence[int] = (128, 128), n_values: int = 1) -> "MlpSpec":
        return cls((obs_dim, *hidden, n_values))

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


class Mlp(nn.Module):
    """Affine + tanh stack with a linear output layer, float64 throughout."""

    def __init__(
        self, spec: MlpSpec, generator: torch.Generator | None = None, output_gain: float = 1.0
    ) -> None:
        super().__init__()
        self.spec = spec
        widths = spec.layer_widths
        self.layers = nn.ModuleList(
            nn.Linear(widths[i], widths[i + 1], dtype=DTYPE) for i in range(spec.n_layers)
        )
        for i, layer in enumerate(self.layers):
            gain = output_gain if i == spec.n_layers - 1 else math.sqrt(2)
            nn.init.orthogonal_(layer.weight, gain=gain, generator=generator)
            nn.init.zeros_(layer.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < self.spec.n_layers - 1:
                x = torch.tanh(x)
        return x

    def flat_parameters(self) -> list[torch.Tensor]:
        params = []
        for layer in self.layers:
            params += [layer.weight, layer.bias]
        return params


def _check_shapes(spec: MlpSpec, params: Sequence[torch.Tensor], x: torch.Tensor) -> None:
    if len(params) != 2 * spec.n_layers:
        raise DomainError(f"expected {2 * spec.n_layers} parameter tensors, got {len(params)}")
    widths = spec.layer_widths
    for i in range(spec.n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        if tuple(w.shape) != (widths[i + 1], widths[i]) or tuple(b.shape) != (widths[i + 1],):
            raise DomainError(f"layer {i} parameters do not match widths {widths[i]}->{widths[i + 1]}")
    if x.shape[-1] != widths[0]:
        raise DomainError(f"input width {x.shape[-1]} != {widths[0]}")


def mlp_forward(spec: MlpSpec, params: Sequence[torch.Tensor], x: torch.Tensor) -> torch.Tensor:
    """Evaluate the MLP with weights stored as (out, in) matrices."""
    for i in range(spec.n_layers):
        x = x @ params[2 * i].T + params[2 * i + 1]
        if i < spec.n_layers - 1:
            x = torch.tanh(x)
    return x


def forward_backward(
    spec: MlpSpec,
    params: Sequence[torch.Tensor],
    x: torch.Tensor,
    upstream: torch.Tensor,
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Outputs of the stack and d(sum(outputs * upstream))/d(params) by reverse mode."""
    x = torch.as_tensor(x, dtype=DTYPE)
    if not torch.all(torch.isfinite(x)):
        raise DomainError("MLP input contains non-finite values")
    leaves = [torch.as_tensor(p, dtype=DTYPE).detach().clone().requires_grad_(True) for p in params]
    _check_shapes(spec, leaves, x)
    out = mlp_forward(spec, leaves, x)
    upstream = torch.as_tensor(upstream, dtype=DTYPE)
    if upstream.shape != out.shape:
        raise DomainError(f"upstream shape {tuple(upstream.shape)} != output shape {tuple(out.shape)}")
    grads = torch.autograd.grad(out, leaves, grad_outputs=upstream, allow_unused=False)
    return out.detach(), list(grads)
