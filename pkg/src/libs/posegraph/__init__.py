"""Pose-graph maps: submaps, trajectory builder, container and rasterization."""

from .builder import build_from_sequence
from .container import (PGBM_SCHEMA, Constraint, ConstraintKind, Node,
                        PoseGraphMap, deserialize, is_connected, is_spd,
                        read_pgbm, serialize, write_pgbm)
from .raster import observed_mask, occupied_iou, rasterize_global
from .submap import Lattice, Submap

__all__ = [
    "PGBM_SCHEMA",
    "Constraint",
    "ConstraintKind",
    "Lattice",
    "Node",
    "PoseGraphMap",
    "Submap",
    "build_from_sequence",
    "deserialize",
    "is_connected",
    "is_spd",
    "observed_mask",
    "occupied_iou",
    "rasterize_global",
    "read_pgbm",
    "serialize",
    "write_pgbm",
]
