"""2D LiDAR scan simulation, robot kinematics, odometry and dynamic agents."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .coverage import WaypointPath
from .exceptions import AgentBoundsError, SimulationError
from .geometry import Pose2, StampedPose, normalize_angle
from .mapio import OccupancyGrid
from .models import Agent, ScanSpec
from .odometry import decompose, sample_motion
from .raycast import cast_rays

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Scan:
    """One sweep. ``ranges`` holds meters with ``inf`` for no return."""

    stamp: float
    ranges: np.ndarray
    spec: ScanSpec

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scan):
            return NotImplemented
        return self.stamp == other.stamp and self.spec == other.spec and np.array_equal(self.ranges, other.ranges)

    __hash__ = None  # type: ignore[assignment]

    def bearings(self) -> np.ndarray:
        return self.spec.bearings()

    def finite(self) -> np.ndarray:
        return np.isfinite(self.ranges)

    def endpoints(self, pose: Pose2, extend: float = 0.0, stride: int = 1) -> np.ndarray:
        """World endpoints (M, 2) of finite beams, optionally pushed ``extend`` meters further."""
        idx = np.arange(0, self.spec.n_beams, stride)
        r = self.ranges[idx]
        ok = np.isfinite(r)
        angles = pose.theta + self.bearings()[idx][ok]
        dist = r[ok] + extend
        return np.column_stack([pose.x + dist * np.cos(angles), pose.y + dist * np.sin(angles)])


@dataclass
class Sequence:
    """Time-aligned ground truth, odometry and scans."""

    ground_truth: list[StampedPose]
    odometry: list[StampedPose]
    scans: list[Scan]
    spec: ScanSpec
    static_map_id: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.scans)

    @property
    def duration(self) -> float:
        if not self.scans:
            return 0.0
        return self.scans[-1].stamp - self.scans[0].stamp


# ========== Scans ==========


def simulate_scan(
    grid: OccupancyGrid,
    pose: Pose2,
    spec: ScanSpec,
    rng_seed: int | np.random.Generator | None = 0,
    stamp: float = 0.0,
    occupied: np.ndarray | None = None,
) -> Scan:
    """Ray-cast one scan from ``pose``.

    Args:
        grid: Map frame and obstacles.
        pose: Sensor pose in the world.
        spec: Sensor geometry and noise.
        rng_seed: Seed or generator for range noise.
        stamp: Scan time in seconds.
        occupied: Obstacle mask overriding the grid's Occupied cells.

    Returns:
        Finite ranges are noisy and clamped to [range_min, range_max].
    """
    rng = np.random.default_rng(rng_seed)
    ranges = cast_rays(grid, np.array([[pose.x, pose.y]]), pose.theta + spec.bearings(), spec.range_max, occupied)
    finite = np.isfinite(ranges)
    if spec.noise_sigma > 0.0:
        noise = rng.normal(0.0, spec.noise_sigma, spec.n_beams)
        ranges = np.where(finite, ranges + noise, ranges)
    ranges = np.where(finite, np.clip(ranges, spec.range_min, spec.range_max), np.inf)
    return Scan(stamp=stamp, ranges=ranges, spec=spec)


# ========== Agents ==========


class AgentTrack:
    """Position of an agent along its polyline over time."""

    def __init__(self, agent: Agent):
        self.agent = agent
        self.points = np.asarray(agent.path, dtype=float).reshape(-1, 2)
        seg = np.diff(self.points, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1]) if len(seg) else np.zeros(0)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])

    def position(self, t: float) -> np.ndarray:
        if self.length <= 0.0:
            return self.points[0]
        s = self.agent.speed * t
        s = math.fmod(s, self.length) if self.agent.loop else min(s, self.length)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        u = (s - self.cum[i]) / self.seg_len[i] if self.seg_len[i] > 0 else 0.0
        return self.points[i] + u * (self.points[i + 1] - self.points[i])


def check_agent_bounds(grid: OccupancyGrid, agents: list[Agent]) -> None:
    for k, agent in enumerate(agents):
        cols, rows = grid.world_to_cells(np.asarray(agent.path, dtype=float).reshape(-1, 2))
        if not np.all(grid.in_bounds(cols, rows)):
            raise AgentBoundsError(f"Agent {k} path leaves the grid")


def rasterize_agents(grid: OccupancyGrid, positions: list[np.ndarray], radii: list[float]) -> np.ndarray:
    """Copy of the grid's Occupied mask with agent disks added."""
    occupied = grid.occupied.copy()
    res = grid.resolution
    for center, radius in zip(positions, radii):
        local = grid.world_to_grid_frame(center[None, :])[0] / res
        r = radius / res
        c0 = max(int(math.floor(local[0] - r)), 0)
        c1 = min(int(math.ceil(local[0] + r)), grid.width - 1)
        r0 = max(int(math.floor(local[1] - r)), 0)
        r1 = min(int(math.ceil(local[1] + r)), grid.height - 1)
        if c0 > c1 or r0 > r1:
            continue
        cc, rr = np.meshgrid(np.arange(c0, c1 + 1) + 0.5, np.arange(r0, r1 + 1) + 0.5)
        disk = (cc - local[0]) ** 2 + (rr - local[1]) ** 2 <= r * r
        occupied[r0 : r1 + 1, c0 : c1 + 1] |= disk
    return occupied


# ========== Kinematics ==========


def drive(waypoints: list[Pose2], rate: float, linear_velocity: float, angular_velocity: float) -> list[StampedPose]:
    """Holonomic robot following waypoints under velocity limits.

    The robot translates toward the next waypoint at ``linear_velocity`` while
    its heading turns toward the direction of travel at no more than
    ``angular_velocity`` (rad/s). One pose per tick of ``rate``.
    """
    if not waypoints:
        raise SimulationError("Path is empty")
    pos = waypoints[0].translation.astype(float)
    theta = waypoints[0].theta
    travel = theta
    step = linear_velocity / rate
    turn = angular_velocity / rate
    poses = [StampedPose(0.0, Pose2(pos[0], pos[1], theta))]
    target = 1
    tick = 0
    while target < len(waypoints):
        budget = step
        while budget > 0.0 and target < len(waypoints):
            d = waypoints[target].translation - pos
            dist = math.hypot(d[0], d[1])
            if dist > 1e-12:
                travel = math.atan2(d[1], d[0])
            if dist <= budget:
                pos = waypoints[target].translation.astype(float)
                budget -= dist
                target += 1
            else:
                pos = pos + d / dist * budget
                budget = 0.0
        theta = normalize_angle(theta + float(np.clip(normalize_angle(travel - theta), -turn, turn)))
        tick += 1
        poses.append(StampedPose(tick / rate, Pose2(pos[0], pos[1], theta)))
    return poses


def synthesize_odometry(
    truth: list[StampedPose],
    alphas: tuple[float, float, float, float],
    rng: np.random.Generator,
    initial_offset: Pose2 | None = None,
) -> list[StampedPose]:
    """Integrate noisy ground-truth increments into an odometry stream."""
    start = truth[0].pose if initial_offset is None else truth[0].pose.compose(initial_offset)
    odom = [StampedPose(truth[0].stamp, start)]
    current = start.as_array()[None, :]
    noisy = any(a > 0 for a in alphas)
    for prev, curr in zip(truth, truth[1:]):
        delta = decompose(prev.pose, curr.pose)
        current = sample_motion(current, delta, alphas, rng if noisy else None)
        odom.append(StampedPose(curr.stamp, Pose2.from_array(current[0])))
    return odom


# ========== Sequences ==========


def simulate_sequence(
    grid: OccupancyGrid,
    path: WaypointPath | list[StampedPose],
    spec: ScanSpec,
    odom_noise: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0),
    agents: list[Agent] | None = None,
    rng_seed: int = 0,
    linear_velocity: float = 1.0,
    angular_velocity: float = math.radians(1.0),
    initial_offset: Pose2 | None = None,
) -> Sequence:
    """Drive a path, casting a scan and recording odometry at every tick.

    Args:
        grid: Static world map; never modified.
        path: Waypoints to drive, or an explicit timestamped trajectory.
        spec: Sensor model; scans are produced at ``spec.rate``.
        odom_noise: Odometry noise alphas.
        agents: Dynamic agents, drawn as Occupied disks at every scan.
        rng_seed: Seed for scan and odometry noise.
        linear_velocity: m/s limit.
        angular_velocity: rad/s limit.
        initial_offset: Odometry frame offset composed onto the first true pose.
    """
    agents = agents or []
    if isinstance(path, WaypointPath):
        if not path.waypoints:
            raise SimulationError("Path is empty")
        truth = drive(path.waypoints, spec.rate, linear_velocity, angular_velocity)
    else:
        if not path:
            raise SimulationError("Path is empty")
        truth = list(path)
    check_agent_bounds(grid, agents)

    scan_seed, odom_seed = np.random.SeedSequence(rng_seed).spawn(2)
    scan_rng = np.random.default_rng(scan_seed)
    odom_rng = np.random.default_rng(odom_seed)
    tracks = [AgentTrack(a) for a in agents]
    radii = [a.radius for a in agents]

    scans = []
    for sample in truth:
        occupied = None
        if tracks:
            occupied = rasterize_agents(grid, [t.position(sample.stamp) for t in tracks], radii)
        scans.append(simulate_scan(grid, sample.pose, spec, scan_rng, sample.stamp, occupied))

    odometry = synthesize_odometry(truth, odom_noise, odom_rng, initial_offset)
    meta = {
        "seed": rng_seed,
        "linear_velocity": linear_velocity,
        "angular_velocity_deg": math.degrees(angular_velocity),
        "odom_alphas": list(odom_noise),
        "n_agents": len(agents),
    }
    logger.info("Simulated %d scans over %.1f s with %d agents", len(scans), truth[-1].stamp, len(agents))
    return Sequence(truth, odometry, scans, spec, grid.content_hash(), meta)


def simulate_waypoint_scans(
    grid: OccupancyGrid, path: WaypointPath, spec: ScanSpec, rng_seed: int = 0
) -> Sequence:
    """One scan per waypoint with exact poses, as used for map building."""
    if not path.waypoints:
        raise SimulationError("Path is empty")
    rng = np.random.default_rng(rng_seed)
    truth = [StampedPose(i / spec.rate, p) for i, p in enumerate(path.waypoints)]
    scans = [simulate_scan(grid, s.pose, spec, rng, s.stamp) for s in truth]
    meta = {"seed": rng_seed, "waypoint_scans": True}
    logger.info("Simulated %d waypoint scans", len(scans))
    return Sequence(truth, list(truth), scans, spec, grid.content_hash(), meta)
