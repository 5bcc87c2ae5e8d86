"""Planar poses and angle helpers."""

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi].

    Values already inside the interval are returned unchanged, so wrapping is
    idempotent bit for bit.
    """
    if -math.pi < angle <= math.pi:
        return angle
    wrapped = math.fmod(angle + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def normalize_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorised :func:`normalize_angle`."""
    angles = np.asarray(angles, dtype=float)
    inside = (angles > -math.pi) & (angles <= math.pi)
    wrapped = np.mod(angles + math.pi, TWO_PI)
    wrapped = np.where(wrapped <= 0.0, wrapped + TWO_PI, wrapped) - math.pi
    return np.where(inside, angles, wrapped)


def rotation_matrix(theta: float) -> np.ndarray:
    """2x2 rotation matrix for ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, slots=True)
class Pose2:
    """Planar pose [x, y, theta] with theta kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def from_array(cls, values: np.ndarray | list[float] | tuple[float, ...]) -> "Pose2":
        """Build a pose from ``[x, y, theta]``."""
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def as_array(self) -> np.ndarray:
        """Return ``[x, y, theta]`` as a float array."""
        return np.array([self.x, self.y, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def compose(self, other: "Pose2") -> "Pose2":
        """Return ``self ∘ other`` (``other`` expressed in this pose's frame)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def __matmul__(self, other: "Pose2") -> "Pose2":
        return self.compose(other)

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )

    def between(self, other: "Pose2") -> "Pose2":
        """Relative transform ``self⁻¹ ∘ other``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = other.x - self.x, other.y - self.y
        return Pose2(
            c * dx + s * dy,
            -s * dx + c * dy,
            other.theta - self.theta,
        )

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        """Map Nx2 points from this pose's frame into the parent frame."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return points @ rotation_matrix(self.theta).T + self.translation

    def distance_to(self, other: "Pose2") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def is_close(self, other: "Pose2", tol: float = 1e-9) -> bool:
        return (
            abs(self.x - other.x) <= tol
            and abs(self.y - other.y) <= tol
            and abs(normalize_angle(self.theta - other.theta)) <= tol
        )


@dataclass(frozen=True, slots=True)
class StampedPose:
    """A pose with a timestamp in seconds."""

    stamp: float
    pose: Pose2


# ========== Polygons ==========


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _on_segment(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> bool:
    return (
        min(a[0], b[0]) - 1e-12 <= p[0] <= max(a[0], b[0]) + 1e-12
        and min(a[1], b[1]) - 1e-12 <= p[1] <= max(a[1], b[1]) + 1e-12
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True if closed segments p1-p2 and q1-q2 share a point."""
    p1, p2, q1, q2 = (np.asarray(p, dtype=float) for p in (p1, p2, q1, q2))
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def polygon_is_simple(vertices: np.ndarray) -> bool:
    """Check that a closed polygon has non-zero area and no self-intersection."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    if n < 3 or abs(polygon_area(v)) <= 1e-15:
        return False
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        if np.allclose(a1, a2):
            return False
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(a1, a2, v[j], v[(j + 1) % n]):
                return False
    return True


def polygon_is_convex(vertices: np.ndarray) -> bool:
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    signs = set()
    for i in range(n):
        cross = _orient(v[i], v[(i + 1) % n], v[(i + 2) % n])
        if abs(cross) > 1e-12:
            signs.add(cross > 0)
    return len(signs) <= 1


def triangulate(vertices: np.ndarray) -> list[np.ndarray]:
    """Ear-clipping triangulation of a simple polygon.

    Returns:
        List of 3x2 vertex arrays, counter-clockwise.
    """
    v = np.asarray(vertices, dtype=float)
    if polygon_area(v) < 0:
        v = v[::-1]
    index = list(range(len(v)))
    triangles: list[np.ndarray] = []
    guard = 0
    while len(index) > 3 and guard < 10 * len(v) ** 2:
        guard += 1
        n = len(index)
        for k in range(n):
            i_prev, i, i_next = index[k - 1], index[k], index[(k + 1) % n]
            a, b, c = v[i_prev], v[i], v[i_next]
            if _orient(a, b, c) <= 1e-15:
                continue
            others = [v[j] for j in index if j not in (i_prev, i, i_next)]
            if any(
                _orient(a, b, p) >= 0 and _orient(b, c, p) >= 0 and _orient(c, a, p) >= 0
                for p in others
            ):
                continue
            triangles.append(np.array([a, b, c]))
            index.pop(k)
            break
        else:
            break
    if len(index) == 3:
        triangles.append(v[index])
    return triangles
