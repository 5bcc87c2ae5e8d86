"""Trajectory builder: pose-graph maps from sequences with known poses."""

import logging

import numpy as np

from ..config import PoseGraphSettings
from ..exceptions import PoseGraphError
from ..simulator import Sequence
from .container import (PGBM_SCHEMA, Constraint, ConstraintKind, Node,
                        PoseGraphMap, is_connected)
from .submap import Lattice, Submap

logger = logging.getLogger(__name__)


def build_from_sequence(
    seq: Sequence,
    lattice: Lattice,
    params: PoseGraphSettings | None = None,
    config_hash: str | None = None,
) -> PoseGraphMap:
    """Build a pose-graph map from the scans of a sequence at their true poses.

    Node ``i`` goes into submap ``i // K`` and, for overlap, into the previous
    submap. Each insertion yields a NodeToSubmap constraint; consecutive nodes
    are linked by NodeToNode constraints. No optimization is needed since the
    poses are exact.

    Args:
        seq: Sequence whose ground truth gives each scan's pose.
        lattice: Cell lattice of the source map.
        params: Submap size, inverse sensor model and information diagonals.
        config_hash: Recorded in the map metadata.

    Returns:
        Connected pose-graph map.
    """
    params = params or PoseGraphSettings()
    if not seq.scans:
        raise PoseGraphError("Cannot build a pose-graph map from an empty sequence")
    if len(seq.ground_truth) != len(seq.scans):
        raise PoseGraphError("Sequence needs one ground-truth pose per scan")

    k = params.nodes_per_submap
    node_info = np.diag(np.asarray(params.info_diag, dtype=float))
    odom_info = np.diag(np.asarray(params.odom_info_diag, dtype=float))
    bearings = seq.spec.bearings()

    nodes: list[Node] = []
    submaps: list[Submap] = []
    constraints: list[Constraint] = []
    for i, (truth, scan) in enumerate(zip(seq.ground_truth, seq.scans)):
        node = Node(i, truth.pose, scan, scan.stamp)
        nodes.append(node)
        current = i // k
        if i % k == 0:
            submaps.append(Submap(id=current, origin=truth.pose, lattice=lattice))
        targets = [current - 1, current] if current > 0 else [current]
        for sid in targets:
            submap = submaps[sid]
            submap.insert(truth.pose, scan.ranges, bearings, params.hit_prob, params.miss_prob)
            submap.inserted_nodes.append(i)
            constraints.append(
                Constraint(
                    ConstraintKind.NODE_TO_SUBMAP,
                    submap.id,
                    i,
                    submap.origin.between(truth.pose),
                    node_info.copy(),
                )
            )
        if i > 0:
            prev = nodes[i - 1]
            constraints.append(
                Constraint(ConstraintKind.NODE_TO_NODE, prev.id, i, prev.pose.between(truth.pose), odom_info.copy())
            )

    pgbm = PoseGraphMap(
        lattice=lattice,
        nodes=nodes,
        submaps=submaps,
        constraints=constraints,
        meta={
            "schema_version": PGBM_SCHEMA,
            "source_grid_hash": seq.static_map_id,
            "builder": params.model_dump(mode="json"),
            "config_hash": config_hash,
        },
    )
    if not is_connected(pgbm):
        raise PoseGraphError("Built pose graph is not connected")
    logger.info(
        "Built pose-graph map: %d nodes, %d submaps, %d constraints",
        len(nodes),
        len(submaps),
        len(constraints),
    )
    return pgbm
