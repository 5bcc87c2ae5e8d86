"""Pose-graph map types and the versioned JSON container."""

import base64
import binascii
import json
import logging
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..exceptions import PoseGraphFormatError, PoseGraphSchemaError
from ..geometry import Pose2
from ..models import ScanSpec
from ..simulator import Scan
from .submap import Lattice, Submap

logger = logging.getLogger(__name__)

PGBM_SCHEMA = 1


class ConstraintKind(StrEnum):
    NODE_TO_SUBMAP = "NodeToSubmap"
    NODE_TO_NODE = "NodeToNode"


@dataclass(frozen=True)
class Node:
    id: int
    pose: Pose2
    scan: Scan
    stamp: float


@dataclass(frozen=True, eq=False)
class Constraint:
    """Relative pose ``from⁻¹ ∘ to`` with a 3x3 information matrix.

    For NodeToSubmap the ``from_id`` is a submap id and ``to_id`` a node id.
    """

    kind: ConstraintKind
    from_id: int
    to_id: int
    relative: Pose2
    information: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Constraint):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.from_id == other.from_id
            and self.to_id == other.to_id
            and self.relative == other.relative
            and np.array_equal(self.information, other.information)
        )

    __hash__ = None  # type: ignore[assignment]


def is_spd(matrix: np.ndarray, tol: float = 0.0) -> bool:
    """Symmetric with every eigenvalue strictly positive."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)) or not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        return False
    return bool(np.linalg.eigvalsh(m).min() > tol)


@dataclass(eq=True)
class PoseGraphMap:
    """Nodes, submaps and constraints of a prior map."""

    lattice: Lattice
    nodes: list[Node] = field(default_factory=list)
    submaps: list[Submap] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def node(self, node_id: int) -> Node:
        return self.nodes[self._node_index()[node_id]]

    def submap(self, submap_id: int) -> Submap:
        for s in self.submaps:
            if s.id == submap_id:
                return s
        raise KeyError(submap_id)

    def _node_index(self) -> dict[int, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @property
    def is_empty(self) -> bool:
        return not self.submaps or all(s.is_empty for s in self.submaps)


# ========== Connectivity ==========


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def is_connected(pgbm: PoseGraphMap) -> bool:
    """True if every node and submap is reachable through constraints."""
    uf = _UnionFind()
    for n in pgbm.nodes:
        uf.find(("node", n.id))
    for s in pgbm.submaps:
        uf.find(("submap", s.id))
    for c in pgbm.constraints:
        a = ("submap", c.from_id) if c.kind == ConstraintKind.NODE_TO_SUBMAP else ("node", c.from_id)
        uf.union(a, ("node", c.to_id))
    roots = {uf.find(k) for k in list(uf.parent)}
    return len(roots) <= 1


# ========== Wire format ==========


class NodeRecord(BaseModel):
    id: int = Field(..., description="Node id")
    stamp: float = Field(..., description="Seconds")
    pose: tuple[float, float, float] = Field(..., description="Global pose [x, y, theta]")
    ranges: list[float | None] = Field(..., description="Scan ranges, null for no return")


class SubmapRecord(BaseModel):
    id: int = Field(..., description="Submap id")
    origin: tuple[float, float, float] = Field(..., description="Global pose of the local frame")
    offset: tuple[int, int] = Field(..., description="Lattice (col, row) of cell [0, 0]")
    width: int = Field(..., ge=0)
    height: int = Field(..., ge=0)
    probabilities: str = Field(..., description="base64 of row-major uint8 probabilities")
    known: str = Field(..., description="base64 of numpy.packbits of the row-major known mask")
    inserted_nodes: list[int] = Field(default_factory=list)


class ConstraintRecord(BaseModel):
    kind: ConstraintKind
    from_id: int
    to_id: int
    relative: tuple[float, float, float]
    information: list[list[float]]


class LatticeRecord(BaseModel):
    origin: tuple[float, float, float]
    resolution: float = Field(..., gt=0.0)


class PGBMDocument(BaseModel):
    pgbm_schema: int
    meta: dict = Field(default_factory=dict)
    lattice: LatticeRecord
    scan_spec: ScanSpec | None = None
    nodes: list[NodeRecord] = Field(default_factory=list)
    submaps: list[SubmapRecord] = Field(default_factory=list)
    constraints: list[ConstraintRecord] = Field(default_factory=list)


def _pose_list(p: Pose2) -> tuple[float, float, float]:
    return (p.x, p.y, p.theta)


def _b64decode(text: str, what: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError) as e:
        raise PoseGraphFormatError(f"Corrupt base64 in {what}: {e}") from e


def serialize(pgbm: PoseGraphMap) -> bytes:
    """Encode a pose-graph map as the versioned JSON container."""
    spec = pgbm.nodes[0].scan.spec if pgbm.nodes else None
    doc = PGBMDocument(
        pgbm_schema=PGBM_SCHEMA,
        meta=pgbm.meta,
        lattice=LatticeRecord(origin=_pose_list(pgbm.lattice.origin), resolution=pgbm.lattice.resolution),
        scan_spec=spec,
        nodes=[
            NodeRecord(
                id=n.id,
                stamp=n.stamp,
                pose=_pose_list(n.pose),
                ranges=[float(r) if np.isfinite(r) else None for r in n.scan.ranges],
            )
            for n in pgbm.nodes
        ],
        submaps=[
            SubmapRecord(
                id=s.id,
                origin=_pose_list(s.origin),
                offset=(int(s.offset[0]), int(s.offset[1])),
                width=s.shape[1],
                height=s.shape[0],
                probabilities=base64.b64encode(np.ascontiguousarray(s.probabilities).tobytes()).decode("ascii"),
                known=base64.b64encode(np.packbits(s.known.reshape(-1)).tobytes()).decode("ascii"),
                inserted_nodes=list(s.inserted_nodes),
            )
            for s in pgbm.submaps
        ],
        constraints=[
            ConstraintRecord(
                kind=c.kind,
                from_id=c.from_id,
                to_id=c.to_id,
                relative=_pose_list(c.relative),
                information=np.asarray(c.information, dtype=float).tolist(),
            )
            for c in pgbm.constraints
        ],
    )
    return json.dumps(doc.model_dump(mode="json"), sort_keys=True, indent=1).encode("utf-8")


def deserialize(data: bytes | str) -> PoseGraphMap:
    """Decode and validate a container.

    Raises:
        PoseGraphSchemaError: Unsupported ``pgbm_schema``.
        PoseGraphFormatError: Malformed JSON, base64, shapes, dangling ids or
            information matrices that are not SPD.
    """
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise PoseGraphFormatError(f"Invalid container JSON: {e}") from e
    if not isinstance(raw, dict) or "pgbm_schema" not in raw:
        raise PoseGraphFormatError("Container has no pgbm_schema field")
    if raw["pgbm_schema"] != PGBM_SCHEMA:
        raise PoseGraphSchemaError(f"Unsupported pgbm_schema {raw['pgbm_schema']!r} (expected {PGBM_SCHEMA})")
    try:
        doc = PGBMDocument.model_validate(raw)
    except ValidationError as e:
        raise PoseGraphFormatError(f"Invalid container: {e}") from e

    lattice = Lattice(Pose2(*doc.lattice.origin), doc.lattice.resolution)
    nodes = []
    if doc.nodes and doc.scan_spec is None:
        raise PoseGraphFormatError("Container has nodes but no scan_spec")
    for rec in doc.nodes:
        if len(rec.ranges) != doc.scan_spec.n_beams:
            raise PoseGraphFormatError(f"Node {rec.id}: {len(rec.ranges)} ranges, expected {doc.scan_spec.n_beams}")
        ranges = np.array([np.inf if r is None else r for r in rec.ranges], dtype=float)
        nodes.append(Node(rec.id, Pose2(*rec.pose), Scan(rec.stamp, ranges, doc.scan_spec), rec.stamp))

    submaps = []
    for rec in doc.submaps:
        size = rec.width * rec.height
        probs = np.frombuffer(_b64decode(rec.probabilities, f"submap {rec.id} probabilities"), dtype=np.uint8)
        if probs.size != size:
            raise PoseGraphFormatError(f"Submap {rec.id}: {probs.size} probabilities, expected {size}")
        packed = np.frombuffer(_b64decode(rec.known, f"submap {rec.id} known mask"), dtype=np.uint8)
        if packed.size != (size + 7) // 8:
            raise PoseGraphFormatError(f"Submap {rec.id}: known mask has {packed.size} bytes")
        known = np.unpackbits(packed)[:size].astype(bool)
        submaps.append(
            Submap(
                id=rec.id,
                origin=Pose2(*rec.origin),
                lattice=lattice,
                offset=rec.offset,
                probabilities=probs.reshape(rec.height, rec.width).copy(),
                known=known.reshape(rec.height, rec.width),
                inserted_nodes=list(rec.inserted_nodes),
            )
        )

    node_ids = {n.id for n in nodes}
    submap_ids = {s.id for s in submaps}
    constraints = []
    for i, rec in enumerate(doc.constraints):
        info = np.asarray(rec.information, dtype=float)
        if not is_spd(info):
            raise PoseGraphFormatError(f"Constraint {i}: information matrix is not symmetric positive-definite")
        from_ok = rec.from_id in (submap_ids if rec.kind == ConstraintKind.NODE_TO_SUBMAP else node_ids)
        if not from_ok or rec.to_id not in node_ids:
            raise PoseGraphFormatError(f"Constraint {i} references unknown ids {rec.from_id} -> {rec.to_id}")
        constraints.append(Constraint(rec.kind, rec.from_id, rec.to_id, Pose2(*rec.relative), info))

    return PoseGraphMap(lattice, nodes, submaps, constraints, dict(doc.meta))


def write_pgbm(path: str | Path, pgbm: PoseGraphMap) -> None:
    Path(path).write_bytes(serialize(pgbm))
    logger.info("Wrote pose-graph map %s (%d nodes, %d submaps)", path, len(pgbm.nodes), len(pgbm.submaps))


def read_pgbm(path: str | Path) -> PoseGraphMap:
    return deserialize(Path(path).read_bytes())
