"""Large-scale path loss, shadowing, simplified cluster fading and antenna-array gain."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from jamshield.config import SPEED_OF_LIGHT, ClusterFadingConfig, PathLossConstants, ShadowFading
from jamshield.errors import DomainError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BeamAngles:
    """Zenith/azimuth pointing of the UAV (transmit) and gNB (receive) arrays, radians."""

    theta_uav: float
    phi_uav: float
    theta_gnb: float
    phi_gnb: float

    def __post_init__(self) -> None:
        for name in ("theta_uav", "theta_gnb"):
            v = getattr(self, name)
            if not 0.0 <= v <= math.pi:
                raise DomainError(f"{name}={v} outside [0, pi]")
        for name in ("phi_uav", "phi_gnb"):
            v = getattr(self, name)
            if not 0.0 <= v < TWO_PI:
                raise DomainError(f"{name}={v} outside [0, 2pi)")

    @property
    def uav(self) -> tuple[float, float]:
        return self.theta_uav, self.phi_uav

    @property
    def gnb(self) -> tuple[float, float]:
        return self.theta_gnb, self.phi_gnb

    @classmethod
    def boresight(cls) -> "BeamAngles":
        return cls(math.pi / 2, 0.0, math.pi / 2, 0.0)

    def max_deviation_deg(self, other: "BeamAngles") -> float:
        """Largest per-angle change, azimuths compared on the circle."""
        d_theta = max(abs(self.theta_uav - other.theta_uav), abs(self.theta_gnb - other.theta_gnb))
        d_phi = 0.0
        for a, b in ((self.phi_uav, other.phi_uav), (self.phi_gnb, other.phi_gnb)):
            diff = abs(a - b) % TWO_PI
            d_phi = max(d_phi, min(diff, TWO_PI - diff))
        return math.degrees(max(d_theta, d_phi))


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int
    element_positions: np.ndarray
    wavelength_m: float

    def __post_init__(self) -> None:
        positions = np.asarray(self.element_positions, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "element_positions", positions)
        if self.num_elements < 1 or len(positions) != self.num_elements:
            raise DomainError("element_positions must hold exactly num_elements 3-vectors")
        if self.wavelength_m <= 0:
            raise DomainError("wavelength_m must be > 0")

    @classmethod
    def ura(cls, num_elements: int, fc_hz: float) -> "ArrayGeometry":
        """Uniform rectangular array in the x-y plane, half-wavelength spacing, centred."""
        wavelength = SPEED_OF_LIGHT / fc_hz
        rows = max(r for r in range(1, math.isqrt(num_elements) + 1) if num_elements % r == 0)
        cols = num_elements // rows
        spacing = wavelength / 2
        ix, iy = np.meshgrid(np.arange(cols), np.arange(rows))
        positions = np.stack(
            [
                (ix.ravel() - (cols - 1) / 2) * spacing,
                (iy.ravel() - (rows - 1) / 2) * spacing,
                np.zeros(num_elements),
            ],
            axis=1,
        )
        return cls(num_elements, positions, wavelength)


@dataclass
class ChannelRealization:
    """One small-scale draw for a link: per-RB power factors plus the shadowing sample."""

    rb_gain: np.ndarray
    shadow_db: float
    cluster_powers: np.ndarray
    aoa_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    aod_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))


def path_loss(d: float, los: bool, c: PathLossConstants) -> float:
    if d <= 0:
        raise DomainError(f"path loss needs a positive distance, got {d}")
    constant = c.gamma_los if los else c.eta_nlos
    return constant * d ** (-c.alpha)


def channel_realization(
    cfg: ClusterFadingConfig,
    shadow: ShadowFading,
    los: bool,
    n_rb: int,
    rng: np.random.Generator,
    rb_bandwidth_hz: float = 720e3,
) -> ChannelRealization:
    """Draw a tapped-cluster frequency response over `n_rb` RBs.

    Cluster powers decay exponentially and sum to one, so every per-RB factor
    has unit expectation over the random phases.
    """
    if n_rb < 1:
        raise DomainError("n_rb must be >= 1")
    sigma = shadow.sigma_los_db if los else shadow.sigma_nlos_db
    shadow_db = float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0

    clusters = np.arange(cfg.num_clusters)
    powers = 10 ** (-cfg.per_cluster_power_decay_db * clusters / 10)
    powers /= powers.sum()
    delays = cfg.delay_spread_s * clusters
    phases = rng.uniform(0.0, TWO_PI, cfg.num_clusters)

    freqs = np.arange(n_rb) * rb_bandwidth_hz
    response = np.zeros(n_rb, dtype=np.complex128)
    for p, tau, phase in zip(powers, delays, phases):
        response += math.sqrt(p) * np.exp(1j * (phase - TWO_PI * freqs * tau))

    aoa = np.column_stack(
        [
            rng.normal(0.0, math.radians(cfg.zsa_deg), cfg.num_clusters),
            rng.normal(0.0, math.radians(cfg.asa_deg), cfg.num_clusters),
        ]
    )
    aod = np.column_stack(
        [
            rng.normal(0.0, math.radians(cfg.zsd_deg), cfg.num_clusters),
            rng.normal(0.0, math.radians(cfg.asd_deg), cfg.num_clusters),
        ]
    )
    return ChannelRealization(
        rb_gain=np.abs(response) ** 2,
        shadow_db=shadow_db,
        cluster_powers=powers,
        aoa_offsets=aoa,
        aod_offsets=aod,
    )


def wave_vectors(thetas: np.ndarray, phis: np.ndarray, wavelength_m: float) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=np.float64)
    phis = np.asarray(phis, dtype=np.float64)
    k = TWO_PI / wavelength_m
    return k * np.stack(
        [np.sin(thetas) * np.cos(phis), np.sin(thetas) * np.sin(phis), np.cos(thetas)], axis=-1
    )


def steering_matrix(thetas: np.ndarray, phis: np.ndarray, geom: ArrayGeometry) -> np.ndarray:
    """Unit-norm steering vectors for a batch of directions, shape (..., M)."""
    kv = wave_vectors(thetas, phis, geom.wavelength_m)
    phase = kv @ geom.element_positions.T
    return np.exp(1j * phase) / math.sqrt(geom.num_elements)


def steering_vector(angles: tuple[float, float], geom: ArrayGeometry) -> np.ndarray:
    theta, phi = angles
    return steering_matrix(np.asarray(theta), np.asarray(phi), geom)


def array_gain(w: np.ndarray, channel_direction: tuple[float, float], geom: ArrayGeometry) -> float:
    if np.linalg.norm(w) > 1 + 1e-9:
        raise DomainError("beamforming weights must have norm <= 1")
    a = steering_vector(channel_direction, geom)
    return float(np.abs(np.vdot(a, w)) ** 2 * geom.num_elements)


def directional_gain(
    w: np.ndarray,
    direction: tuple[float, float],
    geom: ArrayGeometry,
    offsets: np.ndarray,
    cluster_powers: np.ndarray,
) -> float:
    """Cluster-power-weighted array gain around a nominal direction."""
    theta, phi = direction
    a = steering_matrix(theta + offsets[:, 0], phi + offsets[:, 1], geom)
    gains = np.abs(a.conj() @ w) ** 2 * geom.num_elements
    return float(np.dot(cluster_powers, gains))
