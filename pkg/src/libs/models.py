"""Pydantic models for gridgraph file schemas and shared value types."""

import math
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import (BuildingModelError, MapFormatError, SimulationError)
from .geometry import polygon_is_simple


class MapMetadata(BaseModel):
    """Map-server style metadata stored next to a PGM image."""

    image: str = Field(..., description="Image path, relative to the YAML file")
    resolution: float = Field(..., description="Meters per cell")
    origin: tuple[float, float, float] = Field(
        ..., description="World pose [x, y, yaw] of the lower-left corner of cell (0, 0)"
    )
    negate: int = Field(default=0, description="1 inverts pixel darkness")
    occupied_thresh: float = Field(default=0.65, description="Occupied probability threshold")
    free_thresh: float = Field(default=0.196, description="Free probability threshold")
    mode: str | None = Field(default=None, description="Only 'trinary' is supported")

    @field_validator("resolution")
    @classmethod
    def validate_resolution(cls, v: float) -> float:
        if not (v > 0 and math.isfinite(v)):
            raise MapFormatError(f"resolution must be positive, got {v}")
        return v

    @field_validator("negate")
    @classmethod
    def validate_negate(cls, v: int) -> int:
        if v not in (0, 1):
            raise MapFormatError(f"negate must be 0 or 1, got {v}")
        return v

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: str | None) -> str | None:
        if v is not None and v != "trinary":
            raise MapFormatError(f"Unsupported map mode '{v}' (only 'trinary')")
        return v

    @model_validator(mode="after")
    def validate_thresholds(self) -> "MapMetadata":
        """Thresholds are fractions with free below occupied."""
        for name in ("occupied_thresh", "free_thresh"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise MapFormatError(f"{name} must be in (0, 1), got {value}")
        if self.free_thresh >= self.occupied_thresh:
            raise MapFormatError(
                f"free_thresh ({self.free_thresh}) must be below "
                f"occupied_thresh ({self.occupied_thresh})"
            )
        return self

    def to_yaml_dict(self) -> dict:
        """Key order and names as written to disk."""
        data = {
            "image": self.image,
            "resolution": self.resolution,
            "origin": list(self.origin),
            "negate": self.negate,
            "occupied_thresh": self.occupied_thresh,
            "free_thresh": self.free_thresh,
        }
        if self.mode is not None:
            data["mode"] = self.mode
        return data


# Building model


class ElementClass(StrEnum):
    WALL = "Wall"
    COLUMN = "Column"
    SLAB = "Slab"
    STAIR = "Stair"
    DOOR = "Door"
    WINDOW = "Window"
    SPACE = "Space"
    FURNITURE = "Furniture"
    OTHER = "Other"


STRUCTURAL_CLASSES = frozenset(
    {ElementClass.WALL, ElementClass.COLUMN, ElementClass.SLAB, ElementClass.STAIR, ElementClass.OTHER}
)


class BuildingElement(BaseModel):
    """A prism: a simple polygon footprint extruded over [z_min, z_max]."""

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    id: str = Field(..., description="Element identifier")
    element_class: ElementClass = Field(..., alias="class", description="Entity class")
    footprint: list[tuple[float, float]] = Field(..., description="Footprint vertices in meters")
    z_min: float = Field(..., description="Bottom elevation in meters")
    z_max: float = Field(..., description="Top elevation in meters")

    @model_validator(mode="after")
    def validate_geometry(self) -> "BuildingElement":
        """Non-degenerate height span and a simple footprint polygon."""
        if not self.z_min < self.z_max:
            raise BuildingModelError(
                f"Element '{self.id}': z_min ({self.z_min}) must be below z_max ({self.z_max})"
            )
        if len(self.footprint) < 3:
            raise BuildingModelError(f"Element '{self.id}': footprint needs at least 3 vertices")
        if not polygon_is_simple(np.asarray(self.footprint)):
            raise BuildingModelError(f"Element '{self.id}': footprint is not a simple polygon")
        return self

    @property
    def is_structural(self) -> bool:
        return self.element_class in STRUCTURAL_CLASSES


class BuildingModel(BaseModel):
    """Prism-based building model document."""

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    schema_version: int = Field(default=1, alias="schema", description="Document schema version")
    rotation: tuple[float, float, float, float] = Field(
        default=(1.0, 0.0, 0.0, 0.0), description="Unit quaternion [w, x, y, z]"
    )
    elements: list[BuildingElement] = Field(default_factory=list, description="Prisms")

    @field_validator("schema_version")
    @classmethod
    def validate_schema(cls, v: int) -> int:
        if v != 1:
            raise BuildingModelError(f"Unsupported building model schema {v} (expected 1)")
        return v

    @field_validator("rotation")
    @classmethod
    def validate_rotation(cls, v: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        norm = math.sqrt(sum(c * c for c in v))
        if abs(norm - 1.0) > 1e-9:
            raise BuildingModelError(f"rotation quaternion must have unit norm, got {norm:.12f}")
        return v

    @model_validator(mode="after")
    def validate_ids(self) -> "BuildingModel":
        ids = [e.id for e in self.elements]
        if len(ids) != len(set(ids)):
            raise BuildingModelError("Element ids must be unique")
        return self


# Sensor and agents


class ScanSpec(BaseModel):
    """2D LiDAR geometry and noise."""

    model_config = ConfigDict(frozen=True)

    fov: float = Field(default=math.radians(270.0), description="Field of view in radians")
    n_beams: int = Field(default=1081, description="Beams per scan")
    range_min: float = Field(default=0.06, description="Meters")
    range_max: float = Field(default=10.0, description="Meters")
    rate: float = Field(default=40.0, description="Hz")
    noise_sigma: float = Field(default=0.01, description="Meters")

    @model_validator(mode="after")
    def validate_spec(self) -> "ScanSpec":
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise SimulationError(f"fov must be in (0, 2pi], got {self.fov}")
        if self.n_beams < 2:
            raise SimulationError(f"n_beams must be at least 2, got {self.n_beams}")
        if not 0.0 <= self.range_min < self.range_max:
            raise SimulationError(
                f"need 0 <= range_min < range_max, got {self.range_min}, {self.range_max}"
            )
        if self.rate <= 0 or self.noise_sigma < 0:
            raise SimulationError("rate must be positive and noise_sigma non-negative")
        return self

    @classmethod
    def from_settings(cls, sim, noise_sigma: float | None = None) -> "ScanSpec":
        """Build from :class:`SimulatorSettings`."""
        return cls(
            fov=math.radians(sim.fov_deg),
            n_beams=sim.n_beams,
            range_min=sim.range_min,
            range_max=sim.range_max,
            rate=sim.rate,
            noise_sigma=sim.noise_sigma if noise_sigma is None else noise_sigma,
        )

    def bearings(self) -> np.ndarray:
        """Beam bearings relative to the sensor heading, evenly spanning the fov."""
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, self.n_beams)


class Agent(BaseModel):
    """A dynamic agent walking a polyline."""

    model_config = ConfigDict(frozen=True)

    path: list[tuple[float, float]] = Field(..., min_length=1, description="World polyline")
    speed: float = Field(..., description="m/s")
    radius: float = Field(..., description="Disk radius in meters")
    loop: bool = Field(default=True, description="Restart from the first point at the end")

    @model_validator(mode="after")
    def validate_agent(self) -> "Agent":
        if self.speed <= 0 or self.radius <= 0:
            raise SimulationError("agent speed and radius must be positive")
        return self


# Evaluation


class RunMetrics(BaseModel):
    """Outcome of one localization run."""

    scenario: str = Field(..., description="Scenario name")
    method: str = Field(..., description="Localization method id")
    seed: int = Field(..., description="Run seed")
    trans_rmse_cm: float | None = Field(default=None, description="Translational RMSE after convergence")
    rot_rmse_deg: float | None = Field(default=None, description="Rotational RMSE after convergence")
    convergence_time: float | None = Field(default=None, description="Seconds from sequence start; None on failure")

    @model_validator(mode="after")
    def validate_failure(self) -> "RunMetrics":
        if self.convergence_time is None and (
            self.trans_rmse_cm is not None or self.rot_rmse_deg is not None
        ):
            raise ValueError("failed runs carry no RMSE")
        return self

    @property
    def failed(self) -> bool:
        return self.convergence_time is None
