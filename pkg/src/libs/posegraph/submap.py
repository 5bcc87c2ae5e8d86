"""Probability-grid submaps on a shared lattice."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose2
from ..mapio import OccupancyGrid
from ..raycast import traverse

P_MIN = 0.1
P_MAX = 0.9
# Lookup value for cells no beam has observed
UNKNOWN_PROBABILITY = P_MIN


def quantize(p: np.ndarray) -> np.ndarray:
    return np.round(np.clip(p, P_MIN, P_MAX) * 255.0).astype(np.uint8)


def dequantize(q: np.ndarray) -> np.ndarray:
    return q.astype(np.float64) / 255.0


def logodds(p: float | np.ndarray):
    return np.log(p / (1.0 - p))


@dataclass(frozen=True)
class Lattice:
    """Cell lattice shared by all submaps: a frame and a cell size."""

    origin: Pose2
    resolution: float

    @classmethod
    def from_grid(cls, grid: OccupancyGrid) -> "Lattice":
        return cls(grid.origin, grid.resolution)

    def world_to_local(self, points: np.ndarray) -> np.ndarray:
        """World points to continuous lattice coordinates in cell units."""
        return self.origin.inverse().transform_points(points) / self.resolution

    def world_to_cells(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        local = np.floor(self.world_to_local(points)).astype(np.int64)
        return local[:, 0], local[:, 1]

    def cells_to_world(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        local = np.column_stack([(np.asarray(cols) + 0.5), (np.asarray(rows) + 0.5)]) * self.resolution
        return self.origin.transform_points(local)


@dataclass(eq=False)
class Submap:
    """Local probability grid anchored at ``origin``.

    Cells live on the shared lattice; ``offset`` is the lattice (col, row) of
    ``probabilities[0, 0]``. Probabilities are 8-bit (q = round(255 p)) and
    meaningful only where ``known`` is set.
    """

    id: int
    origin: Pose2
    lattice: Lattice
    offset: tuple[int, int] = (0, 0)
    probabilities: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.uint8))
    known: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))
    inserted_nodes: list[int] = field(default_factory=list)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Submap):
            return NotImplemented
        return (
            self.id == other.id
            and self.origin == other.origin
            and self.lattice == other.lattice
            and tuple(self.offset) == tuple(other.offset)
            and np.array_equal(self.probabilities, other.probabilities)
            and np.array_equal(self.known, other.known)
            and self.inserted_nodes == other.inserted_nodes
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.probabilities.shape

    @property
    def is_empty(self) -> bool:
        return not self.known.any()

    def _grow(self, cols: np.ndarray, rows: np.ndarray) -> None:
        """Extend the grid to cover the given lattice cells."""
        h, w = self.shape
        c0, r0 = self.offset
        if h == 0:
            lo_c, hi_c = int(cols.min()), int(cols.max())
            lo_r, hi_r = int(rows.min()), int(rows.max())
        else:
            lo_c, hi_c = min(c0, int(cols.min())), max(c0 + w - 1, int(cols.max()))
            lo_r, hi_r = min(r0, int(rows.min())), max(r0 + h - 1, int(rows.max()))
        if h and (lo_c, lo_r) == (c0, r0) and (hi_c, hi_r) == (c0 + w - 1, r0 + h - 1):
            return
        probs = np.zeros((hi_r - lo_r + 1, hi_c - lo_c + 1), dtype=np.uint8)
        known = np.zeros(probs.shape, dtype=bool)
        if h:
            probs[r0 - lo_r : r0 - lo_r + h, c0 - lo_c : c0 - lo_c + w] = self.probabilities
            known[r0 - lo_r : r0 - lo_r + h, c0 - lo_c : c0 - lo_c + w] = self.known
        self.probabilities, self.known, self.offset = probs, known, (lo_c, lo_r)

    def insert(self, pose: Pose2, ranges: np.ndarray, bearings: np.ndarray, hit_prob: float, miss_prob: float) -> None:
        """Integrate one scan taken at ``pose`` with log-odds updates.

        Beams are extended by half a cell so boundary hits land in the struck
        cell. Cells crossed by a beam get one miss update and endpoint cells
        one hit update per scan; hits win. No-return beams are ignored.
        """
        finite = np.isfinite(ranges)
        if not finite.any():
            return
        res = self.lattice.resolution
        angles = pose.theta + bearings[finite]
        dist = ranges[finite] + 0.5 * res
        ends = np.column_stack([pose.x + dist * np.cos(angles), pose.y + dist * np.sin(angles)])
        start = self.lattice.world_to_local(np.array([[pose.x, pose.y]]))[0]
        end_local = self.lattice.world_to_local(ends)

        end_cols = np.floor(end_local[:, 0]).astype(np.int64)
        end_rows = np.floor(end_local[:, 1]).astype(np.int64)
        start_cell = np.floor(start).astype(np.int64)
        self._grow(np.append(end_cols, start_cell[0]), np.append(end_rows, start_cell[1]))

        c0, r0 = self.offset
        local_start = np.repeat((start - [c0, r0])[None, :], len(dist), axis=0)
        lattice_angles = angles - self.lattice.origin.theta
        _, trav = traverse(None, self.shape, local_start, lattice_angles, dist / res, collect=True)

        hit = np.zeros(self.shape, dtype=bool)
        hit[end_rows - r0, end_cols - c0] = True
        miss = np.zeros(self.shape, dtype=bool)
        miss[trav.rows, trav.cols] = True
        miss &= ~hit

        self._update(hit, logodds(hit_prob))
        self._update(miss, logodds(miss_prob))

    def _update(self, mask: np.ndarray, delta: float) -> None:
        if not mask.any():
            return
        p = np.where(self.known[mask], dequantize(self.probabilities[mask]), 0.5)
        updated = 1.0 / (1.0 + np.exp(-(logodds(p) + delta)))
        self.probabilities[mask] = quantize(updated)
        self.known[mask] = True

    def lookup_table(self) -> np.ndarray:
        """Float probabilities with unobserved cells at the minimum probability."""
        return np.where(self.known, dequantize(self.probabilities), UNKNOWN_PROBABILITY)

    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """World axis-aligned bounding box of the grid."""
        h, w = self.shape
        c0, r0 = self.offset
        corners = self.lattice.origin.transform_points(
            np.array([[c0, r0], [c0 + w, r0], [c0, r0 + h], [c0 + w, r0 + h]], dtype=float) * self.lattice.resolution
        )
        return corners.min(axis=0), corners.max(axis=0)

    def distance_to(self, pose: Pose2) -> float:
        return math.hypot(self.origin.x - pose.x, self.origin.y - pose.y)
