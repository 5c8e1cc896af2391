"""U-shaped attention classifier over the feature vector, plus the uncertainty-aware loss."""

import logging

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from jamshield.config import DetectorLoss, UNetTransformerSpec
from jamshield.errors import DomainError
from jamshield.marl.networks import DTYPE

logger = logging.getLogger(__name__)


class AttentionStage(nn.Module):
    """Token resample -> LayerNorm -> conv over tokens -> residual self-attention -> GELU."""

    def __init__(self, n_in: int, n_out: int, spec: UNetTransformerSpec, skip: bool = False) -> None:
        super().__init__()
        d = spec.d_model
        self.resample = nn.Linear(n_in, n_out, dtype=DTYPE)
        self.merge = nn.Linear(2 * d, d, dtype=DTYPE) if skip else None
        self.norm = nn.LayerNorm(d, dtype=DTYPE)
        self.conv = nn.Conv1d(d, d, spec.kernel_size, padding=spec.kernel_size // 2, dtype=DTYPE)
        self.attn = nn.MultiheadAttention(d, spec.heads, batch_first=True, dtype=DTYPE)

    def forward(self, x: torch.Tensor, skip: torch.Tensor | None = None) -> torch.Tensor:
        # x: (B, tokens, d)
        x = self.resample(x.transpose(1, 2)).transpose(1, 2)
        if self.merge is not None:
            x = self.merge(torch.cat([x, skip], dim=-1))
        h = self.norm(x)
        h = self.conv(h.transpose(1, 2)).transpose(1, 2)
        attended, _ = self.attn(h, h, h, need_weights=False)
        return F.gelu(h + attended)


class UNetTransformer(nn.Module):
    def __init__(
        self, input_dim: int, spec: UNetTransformerSpec, generator: torch.Generator | None = None
    ) -> None:
        super().__init__()
        self.input_dim = input_dim
        self.spec = spec
        d = spec.d_model
        self.embed = nn.Linear(1, d, dtype=DTYPE)
        enc = spec.encoder_widths
        self.encoder = nn.ModuleList(
            AttentionStage(n_in, n_out, spec) for n_in, n_out in zip([input_dim, *enc[:-1]], enc)
        )
        dec = spec.decoder_widths
        self.decoder = nn.ModuleList(
            AttentionStage(n_in, n_out, spec, skip=True) for n_in, n_out in zip([enc[-1], *dec[:-1]], dec)
        )
        self.head = nn.Linear(d, 2, dtype=DTYPE)
        if generator is not None:
            self._init(generator)

    def _init(self, generator: torch.Generator) -> None:
        for name, p in self.named_parameters():
            if p.dim() > 1:
                nn.init.xavier_uniform_(p, generator=generator)
            elif "norm" not in name:
                nn.init.zeros_(p)

    def _run(self, x: torch.Tensor) -> tuple[torch.Tensor, list[int]]:
        if x.dim() != 2 or x.shape[-1] != self.input_dim:
            raise DomainError(f"expected (batch, {self.input_dim}) features, got {tuple(x.shape)}")
        h = self.embed(x.unsqueeze(-1))
        widths = []
        skips = []
        for stage in self.encoder:
            h = stage(h)
            skips.append(h)
            widths.append(h.shape[1])
        for stage in self.decoder:
            h = stage(h, skips.pop())
            widths.append(h.shape[1])
        return self.head(h.mean(dim=1)), widths

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self._run(x)[0]

    def trace(self, x: torch.Tensor) -> list[int]:
        """Token widths after every encoder and decoder stage."""
        with torch.no_grad():
            return self._run(torch.as_tensor(x, dtype=DTYPE))[1]


def transformer_logits(features: np.ndarray | torch.Tensor, model: UNetTransformer) -> np.ndarray:
    """Pre-softmax (l1 benign, l2 attack) scores, shape (batch, 2)."""
    x = torch.as_tensor(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    model.eval()
    with torch.no_grad():
        return model(x).numpy()


def prediction_entropy(probabilities: np.ndarray | torch.Tensor) -> torch.Tensor:
    """Shannon entropy in nats along the last axis."""
    p = torch.as_tensor(probabilities, dtype=DTYPE)
    if torch.any(p < 0):
        raise DomainError("probabilities must be non-negative")
    if torch.any((p.sum(-1) - 1.0).abs() > 1e-9):
        raise DomainError("probabilities must sum to 1")
    return -torch.special.xlogy(p, p).sum(-1)


def combine_loss(primary: torch.Tensor | float, entropy: torch.Tensor | float, cfg: DetectorLoss) -> torch.Tensor:
    return (torch.as_tensor(primary, dtype=DTYPE) - cfg.alpha_uncertainty * torch.as_tensor(entropy, dtype=DTYPE)) / (
        cfg.grad_accum_steps
    )


def detector_loss(logits: torch.Tensor, labels: torch.Tensor, cfg: DetectorLoss) -> torch.Tensor:
    if logits.shape[0] == 0:
        raise DomainError("empty batch")
    ce = F.cross_entropy(logits, labels)
    probs = torch.softmax(logits, dim=-1)
    entropy = -torch.special.xlogy(probs, probs).sum(-1).mean()
    return combine_loss(ce, entropy, cfg)
