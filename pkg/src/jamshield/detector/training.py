"""Detector training and the frozen inference runtime used by the DET variant."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from jamshield.config import DetectorConfig, DetectorLoss, FeaturePipelineConfig, UNetTransformerSpec
from jamshield.detector.dataset import LabeledWindows
from jamshield.detector.features import FeaturePipeline
from jamshield.detector.model import UNetTransformer, detector_loss, prediction_entropy
from jamshield.errors import DomainError
from jamshield.marl.checkpoint import load_tensors, save_tensors
from jamshield.marl.networks import DTYPE

logger = logging.getLogger(__name__)


@dataclass
class DetectorMetrics:
    accuracy: float
    margins: dict[str, float]
    final_loss: float
    entropy_trace: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "margins": self.margins,
            "final_loss": self.final_loss,
            "entropy_trace": self.entropy_trace,
        }


def class_margins(logits: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    """Mean (true-class logit - other logit) per class."""
    out = {}
    for label, name in ((0, "benign"), (1, "attack")):
        rows = logits[labels == label]
        out[name] = float((rows[:, label] - rows[:, 1 - label]).mean()) if len(rows) else float("nan")
    return out


def fit_batch(
    model: UNetTransformer,
    features: torch.Tensor,
    labels: torch.Tensor,
    loss_cfg: DetectorLoss,
    steps: int,
    lr: float = 1e-2,
) -> list[tuple[float, float]]:
    """Full-batch optimisation on a fixed batch; returns (cross-entropy, mean entropy) per step."""
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    model.train()
    for _ in range(steps):
        logits = model(features)
        loss = detector_loss(logits, labels, loss_cfg)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        with torch.no_grad():
            logits = model(features)
            ce = torch.nn.functional.cross_entropy(logits, labels)
            entropy = prediction_entropy(torch.softmax(logits, dim=-1)).mean()
        history.append((float(ce), float(entropy)))
    return history


@dataclass
class DetectorRuntime:
    """Frozen detector: raw windows in, (l1 benign, l2 attack) logits out."""

    model: UNetTransformer
    pipeline: FeaturePipeline
    scaler_mean: np.ndarray
    scaler_scale: np.ndarray

    def __post_init__(self) -> None:
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    @property
    def window_len(self) -> int:
        return self.pipeline.config.window_len

    def features(self, rssi_windows: np.ndarray, sinr_windows: np.ndarray) -> np.ndarray:
        raw = self.pipeline.transform(rssi_windows, sinr_windows)
        return (raw - self.scaler_mean) / self.scaler_scale

    def batch_logits(self, rssi_windows: np.ndarray, sinr_windows: np.ndarray) -> np.ndarray:
        x = torch.as_tensor(self.features(rssi_windows, sinr_windows), dtype=DTYPE)
        with torch.no_grad():
            return self.model(x).numpy()

    def logits(self, rssi_dbm: np.ndarray, sinr_db: np.ndarray) -> tuple[float, float]:
        w = self.window_len
        rssi = np.asarray(rssi_dbm, dtype=np.float64)
        sinr = np.asarray(sinr_db, dtype=np.float64)
        if len(rssi) < w or len(sinr) < w:
            raise DomainError(f"detector needs {w} samples, got {len(rssi)}")
        l1, l2 = self.batch_logits(rssi[-w:][None, :], sinr[-w:][None, :])[0]
        return float(l1), float(l2)

    def save(self, path: str | Path) -> None:
        header = {
            "kind": "detector",
            "input_dim": self.model.input_dim,
            "pipeline": self.pipeline.config.model_dump(mode="json"),
            "model": self.model.spec.model_dump(mode="json"),
        }
        tensors = {f"model.{k}": v.detach().numpy() for k, v in self.model.state_dict().items()}
        tensors.update(self.pipeline.tensors())
        tensors["scaler.mean"] = self.scaler_mean
        tensors["scaler.scale"] = self.scaler_scale
        save_tensors(path, header, tensors)

    @classmethod
    def load(cls, path: str | Path) -> "DetectorRuntime":
        header, tensors = load_tensors(path)
        if header.get("kind") != "detector":
            raise DomainError(f"{path} does not hold detector weights")
        pipeline_cfg = FeaturePipelineConfig.model_validate(header["pipeline"])
        model = UNetTransformer(header["input_dim"], UNetTransformerSpec.model_validate(header["model"]))
        model.load_state_dict(
            {k.removeprefix("model."): torch.from_numpy(v.copy()) for k, v in tensors.items() if k.startswith("model.")}
        )
        pipeline = FeaturePipeline.from_tensors(pipeline_cfg, tensors)
        return cls(model, pipeline, tensors["scaler.mean"], tensors["scaler.scale"])


@dataclass
class TrainedDetector:
    runtime: DetectorRuntime
    metrics: DetectorMetrics


def train_detector(data: LabeledWindows, config: DetectorConfig, seed: int | None = None) -> TrainedDetector:
    """Fit the feature pipeline and classifier; report held-out accuracy and per-class margins."""
    if len(data.classes) < 2:
        raise DomainError("detector training needs both benign and attack windows")
    seed = config.seed if seed is None else seed
    generator = torch.Generator()
    generator.manual_seed(seed)

    train_idx, test_idx = train_test_split(
        np.arange(len(data)), test_size=config.holdout_fraction, stratify=data.labels, random_state=seed
    )
    train, test = data.subset(train_idx), data.subset(test_idx)

    pipeline = FeaturePipeline(config.pipeline).fit(train.rssi, train.sinr)
    scaler = StandardScaler().fit(pipeline.transform(train.rssi, train.sinr))
    model = UNetTransformer(pipeline.output_dim, config.model, generator)
    runtime = DetectorRuntime(model, pipeline, scaler.mean_, scaler.scale_)
    for p in model.parameters():
        p.requires_grad_(True)

    x = torch.as_tensor(runtime.features(train.rssi, train.sinr), dtype=DTYPE)
    y = torch.as_tensor(train.labels, dtype=torch.long)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    accum = config.loss.grad_accum_steps
    entropy_trace = []
    loss_value = float("nan")

    model.train()
    for epoch in range(config.epochs):
        perm = torch.randperm(len(y), generator=generator)
        optimizer.zero_grad()
        pending = False
        for i, start in enumerate(range(0, len(y), config.batch_size)):
            idx = perm[start : start + config.batch_size]
            loss = detector_loss(model(x[idx]), y[idx], config.loss)
            loss.backward()
            loss_value = float(loss) * accum
            pending = (i + 1) % accum != 0
            if not pending:
                optimizer.step()
                optimizer.zero_grad()
        if pending:
            optimizer.step()
        with torch.no_grad():
            entropy_trace.append(float(prediction_entropy(torch.softmax(model(x), dim=-1)).mean()))
        logger.debug("detector epoch %d loss=%.4f", epoch, loss_value)

    for p in model.parameters():
        p.requires_grad_(False)
    model.eval()
    logits = runtime.batch_logits(test.rssi, test.sinr)
    accuracy = float((logits.argmax(axis=1) == test.labels).mean())
    metrics = DetectorMetrics(accuracy, class_margins(logits, test.labels), loss_value, entropy_trace)
    logger.info("Detector trained: held-out accuracy %.3f on %d windows", accuracy, len(test))
    return TrainedDetector(runtime, metrics)
