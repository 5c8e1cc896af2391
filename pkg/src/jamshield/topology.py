"""Scenario geometry: node placement, buildings, LoS state and scripted UAV mobility."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from jamshield.config import ScenarioConfig
from jamshield.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Building:
    x0: float
    y0: float
    x1: float
    y1: float
    height: float


@dataclass
class Topology:
    gnbs: list[np.ndarray]
    uav_start: np.ndarray
    uav_heading: np.ndarray
    uav_speed_mps: float
    jammers: list[np.ndarray]
    buildings: list[Building]
    area_m: float
    # Episode-fixed uniforms keep LoS spatially consistent across steps
    los_draws: dict[str, float] = field(default_factory=dict)

    @property
    def serving_gnb(self) -> np.ndarray:
        if not self.gnbs:
            raise ConfigError("topology has no gNB")
        return self.gnbs[0]

    @property
    def interfering_gnbs(self) -> list[np.ndarray]:
        return self.gnbs[1:]

    def uav_position(self, t: float) -> np.ndarray:
        pos = self.uav_start + self.uav_heading * self.uav_speed_mps * t
        pos[:2] = np.clip(pos[:2], 0.0, self.area_m)
        return pos


def sample_topology(scenario: ScenarioConfig, rng: np.random.Generator) -> Topology:
    """Place cells, the UAV, jammers and buildings uniformly at random in the area.

    Each entity group draws from its own child stream, so adding or removing
    an attacker leaves the rest of the geometry untouched.
    """
    cell_rng, building_rng, jammer_rng, los_rng = rng.spawn(4)
    area = scenario.area_m
    d = scenario.uav_distance_m
    margin = min(d, area / 2)

    serving = np.array(
        [*cell_rng.uniform(margin, area - margin, 2), scenario.gnb_height_m], dtype=np.float64
    )
    gnbs = [serving]
    for _ in range(scenario.n_gnbs - 1):
        gnbs.append(np.array([*cell_rng.uniform(0.0, area, 2), scenario.gnb_height_m]))

    bearing = cell_rng.uniform(0.0, 2 * math.pi)
    heading = np.array([math.cos(bearing), math.sin(bearing), 0.0])
    uav_start = serving + heading * d
    uav_start[2] = scenario.uav_height_m
    uav_start[:2] = np.clip(uav_start[:2], 0.0, area)
    speed = scenario.uav_speed_mps if scenario.uav_mobility == "away" else 0.0

    buildings = []
    smin, smax = scenario.building_size_m
    hmin, hmax = scenario.building_height_m
    for _ in range(scenario.n_buildings):
        cx, cy = building_rng.uniform(0.0, area, 2)
        sx, sy = building_rng.uniform(smin, smax, 2)
        height = float(building_rng.uniform(hmin, hmax))
        buildings.append(Building(cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2, height))

    jammers = []
    lo, hi = scenario.attacker_height_m
    for jc in scenario.jammer_configs():
        xy = jammer_rng.uniform(0.0, area, 2)
        h = jammer_rng.uniform(lo, hi)
        jammers.append(np.asarray(jc.position, dtype=np.float64) if jc.position else np.array([*xy, h]))

    los_draws = {"uav": float(los_rng.uniform())}
    for i in range(len(gnbs) - 1):
        los_draws[f"interferer{i}"] = float(los_rng.uniform())
    for j in range(len(jammers)):
        los_draws[f"jammer{j}"] = float(los_rng.uniform())

    logger.debug(
        "Sampled topology: %d gNBs, %d jammers, %d buildings", len(gnbs), len(jammers), len(buildings)
    )
    return Topology(
        gnbs=gnbs,
        uav_start=uav_start,
        uav_heading=heading,
        uav_speed_mps=speed,
        jammers=jammers,
        buildings=buildings,
        area_m=area,
        los_draws=los_draws,
    )


def segment_blocked(a: np.ndarray, b: np.ndarray, building: Building) -> bool:
    """Slab test of the segment a->b against the building's bounding box."""
    lo = np.array([building.x0, building.y0, 0.0])
    hi = np.array([building.x1, building.y1, building.height])
    delta = b - a
    t_min, t_max = 0.0, 1.0
    for axis in range(3):
        if abs(delta[axis]) < 1e-12:
            if a[axis] < lo[axis] or a[axis] > hi[axis]:
                return False
            continue
        t1 = (lo[axis] - a[axis]) / delta[axis]
        t2 = (hi[axis] - a[axis]) / delta[axis]
        t_min = max(t_min, min(t1, t2))
        t_max = min(t_max, max(t1, t2))
        if t_min > t_max:
            return False
    return True


def los_probability(d: float, d0: float) -> float:
    if d <= 0:
        raise DomainError("distance must be > 0")
    return min(1.0, d0 / d)


def los_state(
    tx: np.ndarray, rx: np.ndarray, u: float, d0: float, buildings: list[Building]
) -> bool:
    d = float(np.linalg.norm(rx - tx))
    if any(segment_blocked(tx, rx, b) for b in buildings):
        return False
    return u < los_probability(d, d0)


def direction(origin: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """Zenith and azimuth (radians) of the vector from origin to target."""
    v = np.asarray(target, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0:
        raise DomainError("direction between coincident points is undefined")
    theta = math.acos(max(-1.0, min(1.0, v[2] / norm)))
    phi = math.atan2(v[1], v[0]) % (2 * math.pi)
    return theta, phi
