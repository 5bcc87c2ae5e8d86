"""Graph-based localization: scan matching and sliding-window optimization."""

from .matcher import MatchResult, angular_step, match, score
from .optimizer import (OptimizationResult, WindowConstraint, WindowNode,
                        WindowState, optimize_window)
from .tracker import DIAGNOSTIC_FIELDS, TrackResult, nearest_submaps, track

__all__ = [
    "DIAGNOSTIC_FIELDS",
    "MatchResult",
    "OptimizationResult",
    "TrackResult",
    "WindowConstraint",
    "WindowNode",
    "WindowState",
    "angular_step",
    "match",
    "nearest_submaps",
    "optimize_window",
    "score",
    "track",
]
