import math

import numpy as np
import pytest

from src.libs.coverage import wavefront_plan
from src.libs.exceptions import AgentBoundsError, SimulationError
from src.libs.geometry import Pose2, StampedPose
from src.libs.mapio import OccupancyGrid
from src.libs.models import Agent, ScanSpec
from src.libs.odometry import apply_delta, decompose
from src.libs.simulator import (AgentTrack, drive, simulate_scan, simulate_sequence,
                                simulate_waypoint_scans, synthesize_odometry)
from src.libs.skeleton import CellMask

EXACT = ScanSpec(fov=math.pi, n_beams=3, range_min=0.06, range_max=10.0, noise_sigma=0.0)


def test_exact_scan(room: OccupancyGrid) -> None:
    scan = simulate_scan(room, Pose2(2.0, 1.5, 0.0), EXACT)
    np.testing.assert_allclose(scan.ranges, [1.4, 1.9, 1.4])
    np.testing.assert_allclose(scan.endpoints(Pose2(2.0, 1.5, 0.0))[1], [3.9, 1.5])


def test_ranges_are_clamped(room: OccupancyGrid) -> None:
    short = EXACT.model_copy(update={"range_max": 1.0})
    assert np.isinf(simulate_scan(room, Pose2(2.0, 1.5, 0.0), short).ranges).all()
    near = simulate_scan(room, Pose2(0.12, 1.5, math.pi), EXACT)
    assert near.ranges[1] == pytest.approx(0.06)


def test_noise_is_seeded(room: OccupancyGrid) -> None:
    spec = EXACT.model_copy(update={"noise_sigma": 0.05})
    a = simulate_scan(room, Pose2(2.0, 1.5, 0.3), spec, 7)
    b = simulate_scan(room, Pose2(2.0, 1.5, 0.3), spec, 7)
    c = simulate_scan(room, Pose2(2.0, 1.5, 0.3), spec, 8)
    assert a == b
    assert a != c


def test_drive_straight_line() -> None:
    poses = drive([Pose2(0, 0, 0), Pose2(1, 0, 0)], rate=4.0, linear_velocity=1.0, angular_velocity=1.0)
    assert [p.stamp for p in poses] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert poses[-1].pose.x == 1.0


def test_drive_limits_turn_rate() -> None:
    poses = drive([Pose2(0, 0, 0), Pose2(0, 1, 0)], rate=4.0, linear_velocity=1.0, angular_velocity=0.5)
    assert poses[-1].pose.theta == pytest.approx(0.5)
    assert poses[-1].pose.y == 1.0


def test_odometry_without_noise_follows_truth() -> None:
    truth = drive([Pose2(0, 0, 0), Pose2(1, 0, 0), Pose2(1, 1, 0)], 10.0, 1.0, math.pi)
    offset = Pose2(5.0, -2.0, 1.0)
    odom = synthesize_odometry(truth, (0.0, 0.0, 0.0, 0.0), np.random.default_rng(0), offset)
    assert odom[0].pose.is_close(truth[0].pose @ offset)
    for i in range(1, len(truth)):
        expected = truth[i - 1].pose.between(truth[i].pose)
        assert odom[i - 1].pose.between(odom[i].pose).is_close(expected, 1e-9)


def test_decompose_round_trip() -> None:
    a, b = Pose2(1.0, 2.0, 0.3), Pose2(1.5, 1.0, -2.0)
    assert apply_delta(a, decompose(a, b)).is_close(b, 1e-9)


def test_sequence_is_aligned(room: OccupancyGrid) -> None:
    before = room.cells.copy()
    path = wavefront_plan(room, CellMask(room.free, room), stride=40)
    seq = simulate_sequence(room, path, EXACT, odom_noise=(0.01, 0.01, 0.01, 0.01), rng_seed=3)
    assert len(seq) == len(seq.ground_truth) == len(seq.odometry)
    assert [s.stamp for s in seq.scans] == [g.stamp for g in seq.ground_truth]
    assert seq.static_map_id == room.content_hash()
    assert seq.meta["seed"] == 3
    assert (room.cells == before).all()


def test_agents_block_beams(room: OccupancyGrid) -> None:
    truth = [StampedPose(0.0, Pose2(2.0, 1.5, 0.0))]
    agent = Agent(path=[(3.0, 1.5)], speed=1.0, radius=0.25)
    seq = simulate_sequence(room, truth, EXACT, agents=[agent])
    assert seq.scans[0].ranges[1] == pytest.approx(0.8)


def test_agent_outside_grid(room: OccupancyGrid) -> None:
    agent = Agent(path=[(1.0, 1.0), (9.0, 1.0)], speed=1.0, radius=0.2)
    with pytest.raises(AgentBoundsError):
        simulate_sequence(room, [StampedPose(0.0, Pose2(2.0, 1.5, 0.0))], EXACT, agents=[agent])


def test_agent_validation() -> None:
    with pytest.raises(SimulationError):
        Agent(path=[(0.0, 0.0)], speed=0.0, radius=0.2)


def test_agent_track_loops() -> None:
    track = AgentTrack(Agent(path=[(0.0, 0.0), (2.0, 0.0)], speed=1.0, radius=0.1))
    np.testing.assert_allclose(track.position(1.5), [1.5, 0.0])
    np.testing.assert_allclose(track.position(2.5), [0.5, 0.0])
    once = AgentTrack(Agent(path=[(0.0, 0.0), (2.0, 0.0)], speed=1.0, radius=0.1, loop=False))
    np.testing.assert_allclose(once.position(5.0), [2.0, 0.0])


def test_empty_path(room: OccupancyGrid) -> None:
    with pytest.raises(SimulationError):
        simulate_sequence(room, [], EXACT)


def test_waypoint_scans(room: OccupancyGrid) -> None:
    path = wavefront_plan(room, CellMask(room.free, room), stride=60)
    seq = simulate_waypoint_scans(room, path, EXACT)
    assert len(seq) == len(path)
    assert [g.pose for g in seq.ground_truth] == path.waypoints
    assert seq.odometry == seq.ground_truth
    assert seq.scans[1].stamp == pytest.approx(1.0 / EXACT.rate)


def test_range_noise_has_configured_sigma(room: OccupancyGrid) -> None:
    spec = ScanSpec(fov=0.001, n_beams=10_000, range_max=10.0, noise_sigma=0.01)
    pose = Pose2(2.0, 1.5, 0.0)
    noisy = simulate_scan(room, pose, spec, 11)
    exact = simulate_scan(room, pose, spec.model_copy(update={"noise_sigma": 0.0}))
    residual = noisy.ranges - exact.ranges
    assert np.isfinite(residual).all()
    assert residual.std(ddof=1) == pytest.approx(0.01, rel=0.05)
    assert abs(residual.mean()) < 0.001
