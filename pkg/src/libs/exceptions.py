"""Custom exception hierarchy for gridgraph."""


class GridGraphError(Exception):
    """Base exception for all gridgraph errors."""

    pass


class ConfigError(GridGraphError):
    """Configuration errors (missing or invalid settings)."""

    pass


# Map exceptions


class MapError(GridGraphError):
    """Base exception for occupancy grid errors."""

    pass


class MapFormatError(MapError):
    """Malformed PGM image or map metadata."""

    pass


class MapDimensionError(MapError):
    """Grids that must share a frame do not."""

    pass


# Building model exceptions


class BuildingModelError(GridGraphError):
    """Invalid building model document or element geometry."""

    pass


class SlicerError(GridGraphError):
    """Slicing parameters cannot produce a grid."""

    pass


# Planning and simulation exceptions


class CoverageError(GridGraphError):
    """Coverage planning preconditions violated."""

    pass


class SimulationError(GridGraphError):
    """Base exception for scan and sequence simulation errors."""

    pass


class RayOriginError(SimulationError):
    """Ray origin lies outside the grid."""

    pass


class AgentBoundsError(SimulationError):
    """A dynamic agent path leaves the grid."""

    pass


class SequenceFormatError(SimulationError):
    """Malformed sequence or trajectory file."""

    pass


# Pose graph exceptions


class PoseGraphError(GridGraphError):
    """Base exception for pose-graph map errors."""

    pass


class PoseGraphFormatError(PoseGraphError):
    """Corrupt container payload (base64, shapes, information matrices)."""

    pass


class PoseGraphSchemaError(PoseGraphError):
    """Container schema version not supported."""

    pass


# Localization exceptions


class LocalizationError(GridGraphError):
    """Base exception for localization errors."""

    pass


class MatchError(LocalizationError):
    """Scan matching has no candidate inside the submap bounds."""

    pass


# Orchestration exceptions


class ScenarioError(GridGraphError):
    """Scenario generation preconditions violated."""

    pass


class EvaluationError(GridGraphError):
    """Trajectories cannot be associated for evaluation."""

    pass


class BenchmarkError(GridGraphError):
    """Benchmark matrix is unusable."""

    pass
