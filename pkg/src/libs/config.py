"""Configuration management using Pydantic Settings."""

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import (BaseSettings, PydanticBaseSettingsSource,
                               SettingsConfigDict, TomlConfigSettingsSource)

from .exceptions import ConfigError

DEFAULT_CONFIG_FILE = "gridgraph.toml"

LocalizationMethod = Literal["mcl", "mcl-uniform", "mcl-ser", "gbl", "hybrid"]


class MapIOSettings(BaseModel):
    """Thresholds used when reading and writing trinary maps."""

    occupied_thresh: float = Field(
        default=0.65, gt=0.0, lt=1.0, description="Occupancy probability above which a cell is Occupied"
    )
    free_thresh: float = Field(
        default=0.196, gt=0.0, lt=1.0, description="Occupancy probability below which a cell is Free"
    )
    negate: Literal[0, 1] = Field(default=0, description="Invert pixel darkness when reading")

    @model_validator(mode="after")
    def validate_thresholds(self) -> "MapIOSettings":
        """Free threshold must sit strictly below the occupied threshold."""
        if self.free_thresh >= self.occupied_thresh:
            raise ConfigError(
                f"mapio.free_thresh ({self.free_thresh}) must be below "
                f"mapio.occupied_thresh ({self.occupied_thresh})"
            )
        return self


class SlicerSettings(BaseModel):
    """Building model slicing."""

    resolution: float = Field(default=0.05, gt=0.0, description="Cell size in meters")
    cut_heights: list[float] = Field(
        default_factory=lambda: [1.0],
        min_length=1,
        description="Cut heights in meters, one per story",
    )
    post_size: float | None = Field(
        default=None,
        gt=0.0,
        description="Reference post footprint edge in meters (defaults to one cell)",
    )


class SkeletonSettings(BaseModel):
    """Skeleton extraction and coverage region dilation."""

    dilation_radius: int = Field(default=3, ge=0, description="Chebyshev dilation radius in cells")
    max_iterations: int = Field(default=10_000, ge=1, description="Thinning iteration cap")


class CoverageSettings(BaseModel):
    """Wavefront coverage planning."""

    stride: int = Field(default=5, ge=1, description="Waypoint spacing in visit-path steps")


class SimulatorSettings(BaseModel):
    """Scan model, robot kinematics and odometry noise."""

    fov_deg: float = Field(default=270.0, gt=0.0, le=360.0, description="Field of view in degrees")
    n_beams: int = Field(default=1081, ge=2, description="Beams per scan")
    range_min: float = Field(default=0.06, ge=0.0, description="Minimum range in meters")
    range_max: float = Field(default=10.0, gt=0.0, description="Maximum range in meters")
    rate: float = Field(default=40.0, gt=0.0, description="Scan rate in Hz")
    noise_sigma: float = Field(default=0.01, ge=0.0, description="Range noise standard deviation in meters")
    linear_velocity: float = Field(default=1.0, gt=0.0, description="Linear velocity limit in m/s")
    angular_velocity_deg: float = Field(
        default=1.0, gt=0.0, description="Angular velocity limit in deg/s"
    )
    odom_alphas: tuple[float, float, float, float] = Field(
        default=(0.05, 0.05, 0.01, 0.01),
        description="Odometry noise (rot<-rot, rot<-trans, trans<-trans, trans<-rot)",
    )
    odom_initial_offset: tuple[float, float, float] = Field(
        default=(0.0, 0.0, 0.0), description="Odometry frame offset [x, y, theta]"
    )

    @model_validator(mode="after")
    def validate_ranges(self) -> "SimulatorSettings":
        """Range limits must define a non-empty interval."""
        if self.range_min >= self.range_max:
            raise ConfigError(
                f"simulator.range_min ({self.range_min}) must be below "
                f"simulator.range_max ({self.range_max})"
            )
        if any(a < 0 for a in self.odom_alphas):
            raise ConfigError("simulator.odom_alphas must be non-negative")
        return self


class PoseGraphSettings(BaseModel):
    """Trajectory builder for pose-graph maps."""

    nodes_per_submap: int = Field(default=30, ge=1, description="Nodes inserted per submap (K)")
    hit_prob: float = Field(default=0.7, gt=0.5, lt=1.0, description="Inverse sensor model hit probability")
    miss_prob: float = Field(default=0.4, gt=0.0, lt=0.5, description="Inverse sensor model miss probability")
    info_diag: tuple[float, float, float] = Field(
        default=(100.0, 100.0, 1000.0), description="NodeToSubmap information diagonal"
    )
    odom_info_diag: tuple[float, float, float] = Field(
        default=(50.0, 50.0, 100.0), description="NodeToNode information diagonal"
    )
    scan_noise_sigma: float = Field(
        default=0.0, ge=0.0, description="Range noise used when simulating map-building scans"
    )

    @model_validator(mode="after")
    def validate_information(self) -> "PoseGraphSettings":
        """Information diagonals must be positive."""
        if min(self.info_diag) <= 0 or min(self.odom_info_diag) <= 0:
            raise ConfigError("posegraph information diagonals must be positive")
        return self


class MCLSettings(BaseModel):
    """Monte Carlo localization."""

    n_particles: int = Field(default=500, ge=1, description="Particles for tracking initialization")
    n_global: int = Field(default=3000, ge=1, description="Particles for global initialization")
    n_min: int = Field(default=100, ge=1, description="Adaptive population lower bound")
    n_max: int = Field(default=5000, ge=1, description="Adaptive population upper bound")
    init_sigma: tuple[float, float, float] = Field(
        default=(0.3, 0.3, 0.1), description="Tracking initialization spread [m, m, rad]"
    )
    alphas: tuple[float, float, float, float] = Field(
        default=(0.05, 0.05, 0.02, 0.02), description="Motion model noise"
    )
    sigma_hit: float = Field(default=0.2, gt=0.0, description="Likelihood field sigma in meters")
    z_hit: float = Field(default=0.95, ge=0.0, le=1.0, description="Hit mixture weight")
    z_rand: float = Field(default=0.05, ge=0.0, le=1.0, description="Random mixture weight")
    d_max: float = Field(default=2.0, gt=0.0, description="Distance cap in meters")
    beam_stride: int = Field(default=10, ge=1, description="Use every k-th beam")
    resample_frac: float = Field(default=0.5, gt=0.0, le=1.0, description="Resample when Neff < frac*N")
    kld_err: float = Field(default=0.05, gt=0.0, description="KLD bound epsilon")
    kld_z: float = Field(default=0.99, gt=0.0, lt=1.0, description="KLD bound confidence (1 - delta)")
    bin_xy: float = Field(default=0.5, gt=0.0, description="KLD histogram bin size in meters")
    bin_theta_deg: float = Field(default=10.0, gt=0.0, description="KLD histogram bin size in degrees")
    update_min_d: float = Field(default=0.2, ge=0.0, description="Translation before a filter update")
    update_min_a: float = Field(default=math.pi / 6.0, ge=0.0, description="Rotation before a filter update")
    converge_threshold: float = Field(
        default=0.05, ge=0.0, description="Covariance gate on the max positional eigenvalue (m^2)"
    )
    init_attempts: int = Field(default=100, ge=1, description="Redraws for particles off Free cells")
    ser_fraction: float = Field(default=0.1, gt=0.0, le=1.0, description="Best fraction of Free cells kept in the SER")
    ser_cell_stride: int = Field(default=1, ge=1, description="Free-cell stride for SER signatures")

    @model_validator(mode="after")
    def validate_mixture(self) -> "MCLSettings":
        """Mixture weights and population bounds must be consistent."""
        if self.z_hit + self.z_rand > 1.0 + 1e-12:
            raise ConfigError("mcl.z_hit + mcl.z_rand must not exceed 1")
        if self.n_min > self.n_max:
            raise ConfigError(f"mcl.n_min ({self.n_min}) exceeds mcl.n_max ({self.n_max})")
        return self


class GBLSettings(BaseModel):
    """Graph-based localization: scan matcher and sliding window."""

    window_size: int = Field(default=10, ge=2, description="Nodes kept in the sliding window (W)")
    min_score: float = Field(default=0.55, ge=0.0, le=1.0, description="Match acceptance score")
    search_xy: float = Field(default=0.5, gt=0.0, description="Linear search half-window in meters")
    search_theta_deg: float = Field(default=10.0, gt=0.0, description="Angular search half-window in degrees")
    beam_stride: int = Field(default=8, ge=1, description="Use every k-th beam for matching")
    coarse_factor: int = Field(default=4, ge=1, description="Coarse search cell multiple")
    candidate_submaps: int = Field(default=2, ge=1, description="Nearest submaps matched per scan")
    odom_info_diag: tuple[float, float, float] = Field(
        default=(50.0, 50.0, 100.0), description="Odometry constraint information"
    )
    match_info_diag: tuple[float, float, float] = Field(
        default=(400.0, 400.0, 1000.0), description="Matcher constraint information (scaled by score)"
    )
    prior_info_diag: tuple[float, float, float] = Field(
        default=(10.0, 10.0, 10.0), description="Prior on the oldest window node"
    )
    max_blind: int = Field(default=20, ge=1, description="Steps without accepted match before divergence")
    lm_lambda0: float = Field(default=1e-4, gt=0.0, description="Initial damping")
    lm_lambda_max: float = Field(default=1e8, gt=0.0, description="Damping ceiling")
    lm_max_iterations: int = Field(default=50, ge=1, description="Iteration cap")
    lm_rel_tol: float = Field(default=1e-6, gt=0.0, description="Relative cost change tolerance")
    lm_step_tol: float = Field(default=1e-8, gt=0.0, description="Step infinity-norm tolerance")


class ScenarioSettings(BaseModel):
    """Scan-map deviation scenarios."""

    clutter_reality: float = Field(default=0.15, ge=0.0, lt=1.0, description="Clutter fraction for level 2")
    clutter_disaster: float = Field(default=0.35, ge=0.0, lt=1.0, description="Clutter fraction for level 3")
    n_blocked: int = Field(default=2, ge=0, description="Blocked doorways in level 3")
    n_debris: int = Field(default=10, ge=0, description="Debris rectangles in level 3")
    n_breaches: int = Field(default=1, ge=0, description="Wall breaches in level 3")
    breach_width: float = Field(default=0.8, gt=0.0, description="Edge of the square opened by a breach")
    furniture_size: tuple[float, float] = Field(default=(0.4, 1.2), description="Furniture edge range in meters")
    debris_size: tuple[float, float] = Field(default=(0.2, 0.6), description="Debris edge range in meters")
    max_door_width: float = Field(default=1.2, gt=0.0, description="Widest gap treated as a doorway")
    placement_attempts: int = Field(default=5000, ge=1, description="Random placement budget")
    n_agents: int = Field(default=5, ge=0, description="Agents in levels 1 and 2")
    n_agents_disaster: int = Field(default=6, ge=0, description="Agents in level 3")
    agent_speed: float = Field(default=1.0, gt=0.0, description="Agent speed in m/s")
    disaster_speed_factor: float = Field(default=1.5, gt=0.0, description="Agent speed multiplier in level 3")
    agent_radius: float = Field(default=0.25, gt=0.0, description="Agent disk radius in meters")
    trajectory_stride: int = Field(default=10, ge=1, description="Coverage stride for the scenario trajectory")

    @model_validator(mode="after")
    def validate_sizes(self) -> "ScenarioSettings":
        for name in ("furniture_size", "debris_size"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"scenarios.{name} must be an increasing pair of positive lengths, got {(lo, hi)}")
        return self


class EvaluationSettings(BaseModel):
    """Trajectory evaluation."""

    association_tol: float = Field(default=0.05, gt=0.0, description="Max stamp difference in seconds")
    convergence_radius: float = Field(default=0.5, gt=0.0, description="Convergence distance in meters")
    debounce: int = Field(default=5, ge=1, description="Consecutive samples required for convergence")
    failure_fraction: float = Field(default=0.95, gt=0.0, le=1.0, description="Share of the sequence allowed for convergence")


class BenchScenario(BaseModel):
    """One benchmark matrix row: a scenario and its prebuilt artifacts."""

    name: str = Field(..., description="Scenario name, e.g. '2-static'")
    map: str = Field(..., description="Base map YAML used by particle filters")
    pgbm: str = Field(..., description="Pose-graph map container used by graph-based methods")
    sequence: str = Field(..., description="Sequence JSONL recorded in the scenario world")


class BenchSettings(BaseModel):
    """Benchmark protocol."""

    repeats: int = Field(default=30, ge=1, description="Runs per stochastic method")
    seed0: int = Field(default=0, description="Seed of the first run")
    methods: list[LocalizationMethod] = Field(
        default_factory=lambda: ["mcl", "gbl"], description="Methods to benchmark"
    )
    scenarios: list[BenchScenario] = Field(default_factory=list, description="Matrix rows")


class GridGraphSettings(BaseSettings):
    """Resolved gridgraph configuration."""

    model_config = SettingsConfigDict(
        env_prefix="GRIDGRAPH_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        toml_file=DEFAULT_CONFIG_FILE,
        extra="ignore",
    )

    threads: int = Field(default=1, ge=1, le=256, description="Worker threads")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="WARNING", description="Logging verbosity"
    )

    mapio: MapIOSettings = Field(default_factory=MapIOSettings)
    slicer: SlicerSettings = Field(default_factory=SlicerSettings)
    skeleton: SkeletonSettings = Field(default_factory=SkeletonSettings)
    coverage: CoverageSettings = Field(default_factory=CoverageSettings)
    simulator: SimulatorSettings = Field(default_factory=SimulatorSettings)
    posegraph: PoseGraphSettings = Field(default_factory=PoseGraphSettings)
    mcl: MCLSettings = Field(default_factory=MCLSettings)
    gbl: GBLSettings = Field(default_factory=GBLSettings)
    scenarios: ScenarioSettings = Field(default_factory=ScenarioSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    bench: BenchSettings = Field(default_factory=BenchSettings)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            TomlConfigSettingsSource(settings_cls),
            file_secret_settings,
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every setting that affects results.

        ``threads`` and ``log_level`` are excluded so outputs do not depend on
        how a run was scheduled.
        """
        payload = self.model_dump(mode="json", exclude={"threads", "log_level"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_settings(config_path: str | Path | None = None, **overrides) -> GridGraphSettings:
    """Load settings from defaults, a TOML file, ``.env`` and the environment.

    Args:
        config_path: TOML file to read. ``gridgraph.toml`` in the working
            directory is used (when present) if omitted.
        **overrides: Highest-priority values, as accepted by the constructor.

    Returns:
        Resolved settings.

    Raises:
        ConfigError: The file is missing or a value is invalid.
    """
    settings_cls: type[GridGraphSettings] = GridGraphSettings
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")

        class FileSettings(GridGraphSettings):
            model_config = SettingsConfigDict(toml_file=path)

        settings_cls = FileSettings

    try:
        return settings_cls(**overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
