"""Library modules for gridgraph."""

from .config import GridGraphSettings, load_settings
from .exceptions import (ConfigError, GridGraphError, LocalizationError,
                         MapError, PoseGraphError, SimulationError)
from .geometry import Pose2, StampedPose
from .mapio import OccupancyGrid
from .models import Agent, BuildingModel, MapMetadata, RunMetrics, ScanSpec

__all__ = [
    "GridGraphSettings",
    "load_settings",
    "ConfigError",
    "GridGraphError",
    "LocalizationError",
    "MapError",
    "PoseGraphError",
    "SimulationError",
    "Pose2",
    "StampedPose",
    "OccupancyGrid",
    "Agent",
    "BuildingModel",
    "MapMetadata",
    "RunMetrics",
    "ScanSpec",
]
