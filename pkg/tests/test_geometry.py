import math

import numpy as np
import pytest

from src.libs.geometry import (Pose2, normalize_angle, normalize_angles, polygon_area,
                               polygon_is_convex, polygon_is_simple, triangulate)


@pytest.mark.parametrize(
    "angle, expected",
    [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (2 * math.pi + 0.5, 0.5),
        (-2 * math.pi - 0.5, -0.5),
    ],
)
def test_normalize_angle(angle: float, expected: float) -> None:
    assert normalize_angle(angle) == pytest.approx(expected)


def test_normalize_angle_is_idempotent() -> None:
    for a in np.linspace(-20, 20, 101):
        once = normalize_angle(float(a))
        assert normalize_angle(once) == once


def test_normalize_angles_matches_scalar() -> None:
    angles = np.linspace(-12, 12, 57)
    expected = [normalize_angle(float(a)) for a in angles]
    np.testing.assert_allclose(normalize_angles(angles), expected)


def test_pose_theta_is_wrapped() -> None:
    assert Pose2(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)


def test_compose_and_inverse() -> None:
    a = Pose2(1.0, 2.0, math.pi / 2)
    b = Pose2(0.5, 0.0, 0.1)
    c = a @ b
    assert c.is_close(Pose2(1.0, 2.5, math.pi / 2 + 0.1))
    assert (a @ a.inverse()).is_close(Pose2(), 1e-12)


def test_between_is_relative_transform() -> None:
    a = Pose2(1.0, -1.0, 0.7)
    b = Pose2(-2.0, 0.5, -2.9)
    rel = a.between(b)
    assert (a @ rel).is_close(b, 1e-12)
    assert rel.is_close(a.inverse() @ b, 1e-12)


def test_transform_points() -> None:
    pose = Pose2(1.0, 0.0, math.pi / 2)
    out = pose.transform_points(np.array([[1.0, 0.0], [0.0, 2.0]]))
    np.testing.assert_allclose(out, [[1.0, 1.0], [-1.0, 0.0]], atol=1e-12)


def test_polygon_area_sign() -> None:
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert polygon_area(square) == pytest.approx(1.0)
    assert polygon_area(square[::-1]) == pytest.approx(-1.0)


def test_polygon_simple_and_convex() -> None:
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    assert not polygon_is_simple(bowtie)
    l_shape = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
    assert polygon_is_simple(l_shape)
    assert not polygon_is_convex(l_shape)


def test_triangulate_preserves_area() -> None:
    l_shape = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
    triangles = triangulate(l_shape)
    assert len(triangles) == 4
    assert sum(polygon_area(t) for t in triangles) == pytest.approx(3.0)
