"""Declarative experiment models, TOML loading and environment settings."""

import hashlib
import json
import logging
import math
import os
import sys
from functools import lru_cache
from pathlib import Path
from typing import Literal

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from jamshield.errors import ConfigError

BOLTZMANN = 1.380649e-23
SPEED_OF_LIGHT = 299_792_458.0
SUBCARRIERS_PER_RB = 12

# Table presets of the reference scenario
ATTACKER_POWER_PRESET_DBM = (0.0, 2.0, 5.0, 10.0)
TERRESTRIAL_USER_PRESET = (0, 3, 5, 10)
UAV_DISTANCE_PRESET_M = (100.0, 200.0)

METRICS = ("packet_delivery", "sinr", "rsrp", "latency", "jitter")

TRANSFORMS = (
    "identity",
    "first_difference",
    "moving_mean",
    "moving_std",
    "squared_magnitude",
    "cumulative_sum",
    "detrended",
    "zscore",
    "minmax",
)
SUMMARY_STATS = ("mean", "std", "max", "min")

Variant = Literal["ppo", "ippo", "mappo", "mappo-det"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------
def _calibrated_gamma(
    fc_hz: float, ref_loss_db: float, ref_distance_m: float, alpha: float
) -> float:
    # Free-space scaling with carrier relative to the 3.5 GHz calibration point
    return 10 ** (ref_loss_db / 10) * ref_distance_m**alpha * (3.5e9 / fc_hz) ** 2


_DEFAULT_GAMMA = _calibrated_gamma(3.5e9, -83.5, 100.0, 2.0)
# NLoS excess loss over LoS for the elevated UAV and attacker links
NLOS_OFFSET_DB = -10.0


class PathLossConstants(_Model):
    gamma_los: float = _DEFAULT_GAMMA
    eta_nlos: float = _DEFAULT_GAMMA * 10 ** (NLOS_OFFSET_DB / 10)
    alpha: float = 2.0
    fc_hz: float = 3.5e9

    @field_validator("gamma_los", "eta_nlos", "fc_hz")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        if v < 1:
            raise ValueError("alpha must be >= 1")
        return v

    @model_validator(mode="after")
    def validate_ordering(self) -> "PathLossConstants":
        if self.eta_nlos > self.gamma_los:
            raise ValueError("eta_nlos must not exceed gamma_los")
        return self

    @classmethod
    def calibrated(
        cls,
        fc_hz: float = 3.5e9,
        ref_loss_db: float = -83.5,
        ref_distance_m: float = 100.0,
        alpha: float = 2.0,
        nlos_offset_db: float = NLOS_OFFSET_DB,
    ) -> "PathLossConstants":
        """Constants whose LoS loss at `ref_distance_m` equals `ref_loss_db`."""
        gamma = _calibrated_gamma(fc_hz, ref_loss_db, ref_distance_m, alpha)
        return cls(
            gamma_los=gamma,
            eta_nlos=gamma * 10 ** (nlos_offset_db / 10),
            alpha=alpha,
            fc_hz=fc_hz,
        )


class ShadowFading(_Model):
    sigma_los_db: float = 4.0
    sigma_nlos_db: float = 7.82

    @field_validator("sigma_los_db", "sigma_nlos_db")
    @classmethod
    def validate_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("standard deviation must be >= 0")
        return v


class ClusterFadingConfig(_Model):
    num_clusters: int = 8
    delay_spread_s: float = 130e-9
    asa_deg: float = 20.0
    asd_deg: float = 10.0
    zsa_deg: float = 8.0
    zsd_deg: float = 5.0
    per_cluster_power_decay_db: float = 3.0

    @field_validator("num_clusters")
    @classmethod
    def validate_clusters(cls, v: int) -> int:
        if v < 1:
            raise ValueError("num_clusters must be >= 1")
        return v

    @field_validator("delay_spread_s", "asa_deg", "asd_deg", "zsa_deg", "zsd_deg")
    @classmethod
    def validate_spread(cls, v: float) -> float:
        if v < 0:
            raise ValueError("spreads must be >= 0")
        return v


class ArrayConfig(_Model):
    uav_elements: int = 4
    gnb_elements: int = 4

    @field_validator("uav_elements", "gnb_elements")
    @classmethod
    def validate_elements(cls, v: int) -> int:
        if v < 1:
            raise ValueError("arrays need at least one element")
        return v


# ---------------------------------------------------------------------------
# Radio environment
# ---------------------------------------------------------------------------
class NoiseModel(_Model):
    boltzmann: float = BOLTZMANN
    temperature_k: float = 290.0
    noise_figure_linear: float = 10 ** (5.0 / 10)

    @field_validator("temperature_k")
    @classmethod
    def validate_temperature(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("temperature_k must be > 0")
        return v

    @field_validator("noise_figure_linear")
    @classmethod
    def validate_noise_figure(cls, v: float) -> float:
        if v < 1:
            raise ValueError("noise_figure_linear must be >= 1")
        return v

    def power_w(self, bandwidth_hz: float) -> float:
        return self.boltzmann * self.temperature_k * bandwidth_hz * self.noise_figure_linear


class JammerConfig(_Model):
    # None places the jammer uniformly at random
    position: tuple[float, float, float] | None = None
    tx_power_dbm: float = 5.0
    antenna_gain_linear: float = 1.0
    strategy: Literal["barrage", "narrowband", "sweep"] = "narrowband"
    rb_span: int = 16
    center_hz: float = 3.47e9
    period_slots: int = 40

    @field_validator("rb_span", "period_slots")
    @classmethod
    def validate_span(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("antenna_gain_linear")
    @classmethod
    def validate_gain(cls, v: float) -> float:
        if v < 0:
            raise ValueError("antenna_gain_linear must be >= 0")
        return v


class BwpConfig(_Model):
    index: int
    center_hz: float
    bandwidth_hz: float
    numerology: int
    n_rb: int

    @model_validator(mode="after")
    def validate_numerology(self) -> "BwpConfig":
        expected = {0: (2, 100e6), 1: (3, 50e6)}
        if self.index not in expected:
            raise ValueError("BWP index must be 0 or 1")
        mu, bandwidth = expected[self.index]
        if self.numerology != mu or not math.isclose(self.bandwidth_hz, bandwidth):
            raise ValueError(
                f"BWP {self.index} requires numerology {mu} and {bandwidth / 1e6:.0f} MHz"
            )
        if self.n_rb < 1 or self.n_rb * self.rb_bandwidth_hz > self.bandwidth_hz:
            raise ValueError("n_rb must be >= 1 and fit inside the bandwidth part")
        return self

    @property
    def slot_duration_s(self) -> float:
        return 1e-3 / 2**self.numerology

    @property
    def rb_bandwidth_hz(self) -> float:
        return SUBCARRIERS_PER_RB * 15e3 * 2**self.numerology

    def rb_centers_hz(self) -> list[float]:
        low = self.center_hz - self.n_rb * self.rb_bandwidth_hz / 2
        return [low + (k + 0.5) * self.rb_bandwidth_hz for k in range(self.n_rb)]


def default_bwps() -> list[BwpConfig]:
    return [
        BwpConfig(index=0, center_hz=3.5e9, bandwidth_hz=100e6, numerology=2, n_rb=135),
        BwpConfig(index=1, center_hz=3.575e9, bandwidth_hz=50e6, numerology=3, n_rb=32),
    ]


class NotchConfig(_Model):
    efficiency: float = 0.9
    max_notched_rbs: int | None = None

    @field_validator("efficiency")
    @classmethod
    def validate_efficiency(cls, v: float) -> float:
        if not 0 <= v <= 1:
            raise ValueError("efficiency must be in [0, 1]")
        return v


# ---------------------------------------------------------------------------
# Link abstraction
# ---------------------------------------------------------------------------
class EsmConfig(_Model):
    beta_eesm: float = 2.0
    bler_sinr50_db: float = 1.0
    bler_slope: float = 1.0

    @field_validator("beta_eesm", "bler_slope")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be > 0")
        return v


class LinkConfig(_Model):
    esm: EsmConfig = Field(default_factory=EsmConfig)
    esm_by_numerology: dict[int, EsmConfig] = Field(default_factory=dict)
    r_max_limit: int = 4
    per_mode: Literal["as_written", "residual"] = "as_written"
    packets_per_slot: int = 10
    bwp_switch_penalty_s: float = 1.0e-3
    beam_update_penalty_s: float = 0.125e-3
    notch_update_penalty_s: float = 0.25e-3
    beam_tolerance_deg: float = 1.0

    @field_validator("r_max_limit", "packets_per_slot")
    @classmethod
    def validate_counts(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    def esm_for(self, numerology: int) -> EsmConfig:
        return self.esm_by_numerology.get(numerology, self.esm)


# ---------------------------------------------------------------------------
# Environment: rewards, normalisation and the evaluation objective
# ---------------------------------------------------------------------------
def _validate_weights(weights: dict[str, float]) -> dict[str, float]:
    unknown = set(weights) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown reward metrics: {sorted(unknown)}")
    if any(w < 0 for w in weights.values()):
        raise ValueError("reward weights must be >= 0")
    if not math.isclose(sum(weights.values()), 1.0, abs_tol=1e-9):
        raise ValueError("reward weights must sum to 1")
    return weights


class RewardWeights(_Model):
    agent1: dict[str, float] = Field(
        default_factory=lambda: {"packet_delivery": 0.4, "sinr": 0.2, "latency": 0.2, "jitter": 0.2}
    )
    agent2: dict[str, float] = Field(
        default_factory=lambda: {"packet_delivery": 0.4, "sinr": 0.4, "rsrp": 0.2}
    )

    @field_validator("agent1", "agent2")
    @classmethod
    def validate_agent_weights(cls, v: dict[str, float]) -> dict[str, float]:
        return _validate_weights(v)


class NormalizationPriors(_Model):
    """Cold-start (min, max) bounds per tracked metric."""

    packet_delivery: tuple[float, float] = (0.0, 1.0)
    sinr_db: tuple[float, float] = (-10.0, 40.0)
    rssi_dbm: tuple[float, float] = (-140.0, -40.0)
    rsrp_dbm: tuple[float, float] = (-140.0, -40.0)
    latency_s: tuple[float, float] = (0.0, 20e-3)
    jitter_s: tuple[float, float] = (0.0, 10e-3)

    @model_validator(mode="after")
    def validate_bounds(self) -> "NormalizationPriors":
        for name, (lo, hi) in self.model_dump().items():
            if not lo < hi:
                raise ValueError(f"{name}: min must be < max")
        return self


class ObjectiveWeights(_Model):
    phi: float = 1.0
    beta: float = 0.25
    mu: float = 0.5
    psi: float = 0.25
    sinr_min_db: float = -10.0
    sinr_max_db: float = 60.0
    latency_max_s: float = 20e-3
    jitter_max_s: float = 10e-3
    max_notched_rbs: int | None = None

    @field_validator("phi", "beta", "mu", "psi")
    @classmethod
    def validate_weight(cls, v: float) -> float:
        if v < 0:
            raise ValueError("objective weights must be >= 0")
        return v


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------
class ScenarioConfig(_Model):
    label: str = "UMi"
    seed: int = 7
    area_m: float = 1000.0
    n_gnbs: int = 2
    gnb_height_m: float = 10.0
    gnb_tx_power_dbm: float = 4.0
    n_uavs: int = 1
    uav_height_m: float = 50.0
    uav_tx_power_dbm: float = 2.0
    uav_speed_mps: float = 10.0
    uav_mobility: Literal["away", "static"] = "away"
    uav_distance_m: float = 100.0
    n_attackers: int = 1
    attacker_power_dbm: float = 5.0
    attacker_strategy: Literal["barrage", "narrowband", "sweep"] = "narrowband"
    attacker_height_m: tuple[float, float] = (20.0, 80.0)
    jammers: list[JammerConfig] | None = None
    terrestrial_users: int = 0
    interference_load_base: float = 0.2
    interference_load_per_user: float = 0.08
    sim_time_s: float = 10.0
    episode_slots: int = 200
    n_buildings: int = 20
    building_size_m: tuple[float, float] = (20.0, 60.0)
    building_height_m: tuple[float, float] = (10.0, 40.0)
    los_reference_m: float = 150.0

    propagation: PathLossConstants = Field(default_factory=PathLossConstants)
    shadow: ShadowFading = Field(default_factory=ShadowFading)
    fading: ClusterFadingConfig = Field(default_factory=ClusterFadingConfig)
    arrays: ArrayConfig = Field(default_factory=ArrayConfig)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    bwps: list[BwpConfig] = Field(default_factory=default_bwps)
    notch: NotchConfig = Field(default_factory=NotchConfig)
    link: LinkConfig = Field(default_factory=LinkConfig)
    rewards: RewardWeights = Field(default_factory=RewardWeights)
    normalization: NormalizationPriors = Field(default_factory=NormalizationPriors)
    objective: ObjectiveWeights = Field(default_factory=ObjectiveWeights)

    @field_validator("n_attackers", "terrestrial_users", "n_buildings")
    @classmethod
    def validate_counts(cls, v: int) -> int:
        if v < 0:
            raise ValueError("counts must be >= 0")
        return v

    @field_validator("area_m", "sim_time_s", "uav_distance_m", "los_reference_m")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @model_validator(mode="after")
    def validate_topology(self) -> "ScenarioConfig":
        if self.n_gnbs < 1:
            raise ValueError("scenario needs at least one gNB")
        if self.n_uavs != 1:
            raise ValueError("exactly one authenticated UAV is supported")
        if self.episode_slots < 1:
            raise ValueError("episode_slots must be >= 1")
        if sorted(b.index for b in self.bwps) != list(range(len(self.bwps))) or not self.bwps:
            raise ValueError("bwps must be indexed 0..n-1")
        return self

    @property
    def step_interval_s(self) -> float:
        return self.sim_time_s / self.episode_slots

    @property
    def max_n_rb(self) -> int:
        return max(b.n_rb for b in self.bwps)

    @property
    def interference_load(self) -> float:
        load = self.interference_load_base + self.interference_load_per_user * self.terrestrial_users
        return min(1.0, max(0.0, load))

    def bwp(self, index: int) -> BwpConfig:
        return next(b for b in self.bwps if b.index == index)

    def jammer_configs(self) -> list[JammerConfig]:
        if self.jammers is not None:
            return list(self.jammers)
        return [
            JammerConfig(tx_power_dbm=self.attacker_power_dbm, strategy=self.attacker_strategy)
            for _ in range(self.n_attackers)
        ]


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------
class TrainerConfig(_Model):
    gamma: float = 0.95
    clip_eps: float = 0.2
    kl_chi: float = 0.0
    gae_lambda: float = 0.95
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    batch_start: int = 32
    batch_end: int = 1024
    epochs: int = 2000
    ppo_epochs: int = 4
    episodes_per_iter: int = 2
    workers: int = 2
    training_episodes: int = 49
    hidden_widths: list[int] = Field(default_factory=lambda: [128, 128])
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    log_std_init: float = -0.5
    log_every: int = 50

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError("gamma ∈ [0,1)")
        return v

    @field_validator("clip_eps")
    @classmethod
    def validate_clip(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("clip_eps ∈ (0,1)")
        return v

    @field_validator("gae_lambda")
    @classmethod
    def validate_lambda(cls, v: float) -> float:
        if not 0 <= v <= 1:
            raise ValueError("gae_lambda ∈ [0,1]")
        return v

    @field_validator("kl_chi", "entropy_coef", "value_coef", "max_grad_norm")
    @classmethod
    def validate_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("epochs", "ppo_epochs", "episodes_per_iter", "workers", "log_every")
    @classmethod
    def validate_positive_count(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("hidden_widths")
    @classmethod
    def validate_widths(cls, v: list[int]) -> list[int]:
        if not v or any(w <= 0 for w in v):
            raise ValueError("hidden widths must be positive")
        return v

    @model_validator(mode="after")
    def validate_schedules(self) -> "TrainerConfig":
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError("learning-rate schedule must decay: 0 < lr_end <= lr_start")
        if self.batch_start < 1 or self.batch_end < self.batch_start:
            raise ValueError("batch schedule must grow: 1 <= batch_start <= batch_end")
        ratio = self.batch_end / self.batch_start
        if ratio != 2 ** round(math.log2(ratio)):
            raise ValueError("batch_end must be batch_start times a power of two")
        return self

    @classmethod
    def full_scale(cls) -> "TrainerConfig":
        return cls(epochs=200_000)


# ---------------------------------------------------------------------------
# Detector
# ---------------------------------------------------------------------------
class FeaturePipelineConfig(_Model):
    window_len: int = 300
    stride: int = 50
    transforms: list[str] = Field(default_factory=lambda: list(TRANSFORMS))
    pca_components: int = 8
    selected_features: int = 5
    summary_stats: list[str] = Field(default_factory=list)
    scenario: Literal["los", "nlos"] = "los"
    moving_window: int = 10

    @field_validator("transforms")
    @classmethod
    def validate_transforms(cls, v: list[str]) -> list[str]:
        unknown = set(v) - set(TRANSFORMS)
        if unknown or not v:
            raise ValueError(f"unknown transforms: {sorted(unknown)}")
        return v

    @field_validator("summary_stats")
    @classmethod
    def validate_stats(cls, v: list[str]) -> list[str]:
        unknown = set(v) - set(SUMMARY_STATS)
        if unknown:
            raise ValueError(f"unknown summary stats: {sorted(unknown)}")
        return v

    @model_validator(mode="after")
    def validate_dimension(self) -> "FeaturePipelineConfig":
        if self.window_len < 2 or self.stride < 1:
            raise ValueError("window_len must be >= 2 and stride >= 1")
        if not 1 <= self.selected_features <= self.pca_components:
            raise ValueError("selected_features must be in [1, pca_components]")
        if self.output_dim != self.target_dim:
            raise ValueError(
                f"pipeline emits {self.output_dim} features, {self.scenario} target is {self.target_dim}"
            )
        return self

    @property
    def target_dim(self) -> int:
        return 90 if self.scenario == "los" else 54

    @property
    def output_dim(self) -> int:
        return 2 * (len(self.transforms) * self.selected_features + len(self.summary_stats))

    @classmethod
    def los(cls) -> "FeaturePipelineConfig":
        return cls()

    @classmethod
    def nlos(cls) -> "FeaturePipelineConfig":
        return cls(
            scenario="nlos",
            transforms=[
                "identity",
                "first_difference",
                "moving_mean",
                "moving_std",
                "detrended",
                "zscore",
            ],
            selected_features=4,
            summary_stats=["mean", "std", "max"],
        )


class UNetTransformerSpec(_Model):
    encoder_widths: list[int] = Field(default_factory=lambda: [32, 16, 8])
    decoder_widths: list[int] = Field(default_factory=lambda: [8, 16, 32])
    heads: int = 2
    d_model: int = 8
    kernel_size: int = 3

    @model_validator(mode="after")
    def validate_mirror(self) -> "UNetTransformerSpec":
        if not self.encoder_widths or any(w <= 0 for w in self.encoder_widths):
            raise ValueError("encoder widths must be positive")
        if self.decoder_widths != self.encoder_widths[::-1]:
            raise ValueError("decoder must mirror the encoder")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd for same padding")
        return self

    @classmethod
    def toy(cls) -> "UNetTransformerSpec":
        return cls()

    @classmethod
    def large(cls) -> "UNetTransformerSpec":
        return cls(
            encoder_widths=[256, 128, 64], decoder_widths=[64, 128, 256], heads=4, d_model=16
        )


class DetectorLoss(_Model):
    alpha_uncertainty: float = 0.05
    grad_accum_steps: int = 1

    @field_validator("alpha_uncertainty")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        if v < 0:
            raise ValueError("alpha_uncertainty must be >= 0")
        return v

    @field_validator("grad_accum_steps")
    @classmethod
    def validate_steps(cls, v: int) -> int:
        if v < 1:
            raise ValueError("grad_accum_steps must be >= 1")
        return v


class DetectorConfig(_Model):
    pipeline: FeaturePipelineConfig = Field(default_factory=FeaturePipelineConfig.los)
    model: UNetTransformerSpec = Field(default_factory=UNetTransformerSpec.toy)
    loss: DetectorLoss = Field(default_factory=DetectorLoss)
    lr: float = 3e-3
    epochs: int = 60
    batch_size: int = 32
    holdout_fraction: float = 0.25
    windows_per_class: int = 120
    seed: int = 11

    @field_validator("holdout_fraction")
    @classmethod
    def validate_holdout(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("holdout_fraction ∈ (0,1)")
        return v


# ---------------------------------------------------------------------------
# Evaluation campaign
# ---------------------------------------------------------------------------
class EvaluationConfig(_Model):
    master_seed: int = 2024
    n_seeds: int = 3
    episodes: int = 5
    variants: list[Variant] = Field(default_factory=lambda: ["ippo", "mappo", "mappo-det"])
    packet_loss_threshold: float = 0.2

    @field_validator("n_seeds", "episodes")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v


class ExperimentConfig(_Model):
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse a TOML file into a fully-resolved ExperimentConfig."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    """Write the resolved config as TOML (None fields fall back to defaults on reload)."""
    with open(path, "wb") as fh:
        tomli_w.dump(cfg.model_dump(mode="json", exclude_none=True), fh)


def config_hash(cfg: BaseModel) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Process settings from the environment
# ---------------------------------------------------------------------------
ENV_PREFIX = "JAMSHIELD_"


class Settings(BaseModel):
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1)
    log_level: str = "INFO"

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        if v < 1:
            raise ValueError("JAMSHIELD_THREADS must be >= 1")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        numeric = getattr(logging, v.upper(), None)
        if not isinstance(numeric, int):
            raise ValueError(f"Invalid log level: {v}")
        return v.upper()


def _load_from_env() -> Settings:
    """Build Settings from JAMSHIELD_* environment variables."""
    env = {}
    for field_name in Settings.model_fields:
        val = os.environ.get(ENV_PREFIX + field_name.upper())
        if val is not None:
            env[field_name] = val
    try:
        return Settings(**env)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return a cached singleton Settings instance."""
    return _load_from_env()
