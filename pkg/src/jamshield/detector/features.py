"""Windowed RSSI/SINR feature pipeline: nine transforms, per-group PCA, raw-window summaries."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import uniform_filter1d
from scipy.signal import detrend
from sklearn.decomposition import PCA

from jamshield.config import FeaturePipelineConfig
from jamshield.errors import DomainError

logger = logging.getLogger(__name__)

SIGNALS = ("rssi", "sinr")


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _first_difference(x: np.ndarray, w: int) -> np.ndarray:
    return np.diff(x, axis=-1, prepend=x[..., :1])


def _moving_mean(x: np.ndarray, w: int) -> np.ndarray:
    return uniform_filter1d(x, size=w, axis=-1, mode="nearest")


def _moving_std(x: np.ndarray, w: int) -> np.ndarray:
    mean = uniform_filter1d(x, size=w, axis=-1, mode="nearest")
    mean_sq = uniform_filter1d(x * x, size=w, axis=-1, mode="nearest")
    return np.sqrt(np.maximum(mean_sq - mean**2, 0.0))


def _zscore(x: np.ndarray, w: int) -> np.ndarray:
    centred = x - x.mean(axis=-1, keepdims=True)
    return _safe_divide(centred, np.broadcast_to(x.std(axis=-1, keepdims=True), x.shape).copy())


def _minmax(x: np.ndarray, w: int) -> np.ndarray:
    lo = x.min(axis=-1, keepdims=True)
    span = np.broadcast_to(x.max(axis=-1, keepdims=True) - lo, x.shape).copy()
    return _safe_divide(x - lo, span)


TRANSFORM_FUNCS: dict[str, Callable[[np.ndarray, int], np.ndarray]] = {
    "identity": lambda x, w: x.copy(),
    "first_difference": _first_difference,
    "moving_mean": _moving_mean,
    "moving_std": _moving_std,
    "squared_magnitude": lambda x, w: x * x,
    "cumulative_sum": lambda x, w: np.cumsum(x, axis=-1),
    "detrended": lambda x, w: detrend(x, axis=-1, type="linear"),
    "zscore": _zscore,
    "minmax": _minmax,
}

SUMMARY_FUNCS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "mean": lambda x: x.mean(axis=-1),
    "std": lambda x: x.std(axis=-1),
    "max": lambda x: x.max(axis=-1),
    "min": lambda x: x.min(axis=-1),
}


def apply_transform(name: str, windows: np.ndarray, moving_window: int = 10) -> np.ndarray:
    """Apply one named transform row-wise to a (n_windows, window_len) matrix."""
    try:
        func = TRANSFORM_FUNCS[name]
    except KeyError:
        raise DomainError(f"unknown transform {name!r}") from None
    return func(np.asarray(windows, dtype=np.float64), moving_window)


def sliding_windows(series: np.ndarray, window_len: int, stride: int) -> np.ndarray:
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or len(series) < window_len:
        raise DomainError(f"series of length {len(series)} is shorter than the {window_len}-sample window")
    return sliding_window_view(series, window_len)[::stride]


@dataclass
class PcaBasis:
    """Mean, orthonormal components (k x d, zero rows past the data rank) and their variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def project(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if data.shape[-1] != self.mean.shape[0]:
            raise DomainError(f"data width {data.shape[-1]} != basis width {self.mean.shape[0]}")
        return (data - self.mean) @ self.components.T


def fit_pca(data: np.ndarray, components: int) -> PcaBasis:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError("PCA needs a non-empty 2-D matrix")
    n_rows, n_cols = data.shape
    basis = np.zeros((components, n_cols))
    variance = np.zeros(components)
    mean = data.mean(axis=0)
    k = min(components, n_rows - 1, n_cols)
    if k > 0:
        pca = PCA(n_components=k, svd_solver="full").fit(data)
        basis[:k] = pca.components_
        variance[:k] = pca.explained_variance_
        mean = pca.mean_
    if k < components:
        logger.debug("PCA rank limited to %d of %d components; padding with zeros", max(k, 0), components)
    return PcaBasis(mean, basis, variance)


def fit_project_pca(
    data: np.ndarray, components: int, mode: str = "fit", basis: PcaBasis | None = None
) -> PcaBasis | np.ndarray:
    if mode == "fit":
        return fit_pca(data, components)
    if mode == "project":
        if basis is None:
            raise DomainError("project mode needs a fitted basis")
        return basis.project(data)
    raise DomainError(f"unknown PCA mode {mode!r}")


@dataclass
class FeaturePipeline:
    config: FeaturePipelineConfig
    bases: dict[tuple[str, str], PcaBasis] = field(default_factory=dict)

    @property
    def fitted(self) -> bool:
        return len(self.bases) == len(SIGNALS) * len(self.config.transforms)

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def _groups(self, rssi: np.ndarray, sinr: np.ndarray):
        cfg = self.config
        for signal, windows in zip(SIGNALS, (rssi, sinr)):
            for name in cfg.transforms:
                yield signal, name, apply_transform(name, windows, cfg.moving_window)

    def fit(self, rssi_windows: np.ndarray, sinr_windows: np.ndarray) -> "FeaturePipeline":
        rssi, sinr = self._check(rssi_windows, sinr_windows)
        self.bases = {
            (signal, name): fit_pca(group, self.config.pca_components)
            for signal, name, group in self._groups(rssi, sinr)
        }
        return self

    def transform(self, rssi_windows: np.ndarray, sinr_windows: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise DomainError("feature pipeline has not been fitted")
        rssi, sinr = self._check(rssi_windows, sinr_windows)
        k = self.config.selected_features
        columns = [
            self.bases[(signal, name)].project(group)[:, :k] for signal, name, group in self._groups(rssi, sinr)
        ]
        for windows in (rssi, sinr):
            columns += [SUMMARY_FUNCS[stat](windows)[:, None] for stat in self.config.summary_stats]
        return np.concatenate(columns, axis=1)

    def _check(self, rssi: np.ndarray, sinr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rssi = np.atleast_2d(np.asarray(rssi, dtype=np.float64))
        sinr = np.atleast_2d(np.asarray(sinr, dtype=np.float64))
        if rssi.shape != sinr.shape or rssi.shape[1] != self.config.window_len:
            raise DomainError(
                f"expected matching (n, {self.config.window_len}) windows, got {rssi.shape} and {sinr.shape}"
            )
        return rssi, sinr

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for (signal, name), basis in self.bases.items():
            out[f"pca.{signal}.{name}.mean"] = basis.mean
            out[f"pca.{signal}.{name}.components"] = basis.components
            out[f"pca.{signal}.{name}.variance"] = basis.explained_variance
        return out

    @classmethod
    def from_tensors(cls, config: FeaturePipelineConfig, tensors: dict[str, np.ndarray]) -> "FeaturePipeline":
        bases = {
            (signal, name): PcaBasis(
                tensors[f"pca.{signal}.{name}.mean"],
                tensors[f"pca.{signal}.{name}.components"],
                tensors[f"pca.{signal}.{name}.variance"],
            )
            for signal in SIGNALS
            for name in config.transforms
        }
        return cls(config, bases)


def extract_features(
    rssi: np.ndarray,
    sinr: np.ndarray,
    config: FeaturePipelineConfig,
    pipeline: FeaturePipeline | None = None,
) -> np.ndarray:
    """Windows x features matrix; fits the PCA groups on these windows when no pipeline is given."""
    if len(rssi) != len(sinr):
        raise DomainError("RSSI and SINR series must have equal length")
    rssi_w = sliding_windows(rssi, config.window_len, config.stride)
    sinr_w = sliding_windows(sinr, config.window_len, config.stride)
    if pipeline is None:
        pipeline = FeaturePipeline(config).fit(rssi_w, sinr_w)
    return pipeline.transform(rssi_w, sinr_w)
