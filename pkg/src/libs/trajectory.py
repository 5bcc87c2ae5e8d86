"""Sequence (JSON lines) and TUM trajectory files."""

import json
import math
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .exceptions import SequenceFormatError
from .geometry import Pose2, StampedPose
from .models import ScanSpec
from .simulator import Scan, Sequence


def _ranges_to_json(ranges: np.ndarray) -> list[float | None]:
    return [float(r) if math.isfinite(r) else None for r in ranges]


def _ranges_from_json(values: list[float | None]) -> np.ndarray:
    return np.array([np.inf if v is None else float(v) for v in values], dtype=float)


def write_sequence_jsonl(path: str | Path, seq: Sequence, config_hash: str | None = None) -> None:
    """Write a sequence as JSON lines: one ``meta`` record, then truth/odom/scan per stamp."""
    meta = {
        "type": "meta",
        "static_map_id": seq.static_map_id,
        "scan_spec": seq.spec.model_dump(),
        "config_hash": config_hash,
        **{k: v for k, v in seq.meta.items() if k not in ("type", "static_map_id", "scan_spec", "config_hash")},
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for truth, odom, scan in zip(seq.ground_truth, seq.odometry, seq.scans):
            f.write(json.dumps({"t": truth.stamp, "type": "truth", "pose": list(truth.pose.as_array())}) + "\n")
            f.write(json.dumps({"t": odom.stamp, "type": "odom", "pose": list(odom.pose.as_array())}) + "\n")
            f.write(json.dumps({"t": scan.stamp, "type": "scan", "ranges": _ranges_to_json(scan.ranges)}) + "\n")


def read_sequence_jsonl(path: str | Path) -> Sequence:
    """Read a sequence written by :func:`write_sequence_jsonl`."""
    truth: list[StampedPose] = []
    odom: list[StampedPose] = []
    raw_scans: list[tuple[float, list]] = []
    meta: dict | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                kind = record["type"]
                if kind == "meta":
                    meta = record
                elif kind == "truth":
                    truth.append(StampedPose(float(record["t"]), Pose2.from_array(record["pose"])))
                elif kind == "odom":
                    odom.append(StampedPose(float(record["t"]), Pose2.from_array(record["pose"])))
                elif kind == "scan":
                    raw_scans.append((float(record["t"]), record["ranges"]))
                else:
                    raise SequenceFormatError(f"{path}:{lineno}: unknown record type '{kind}'")
            except (json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as e:
                raise SequenceFormatError(f"{path}:{lineno}: malformed record: {e}") from e
    if meta is None:
        raise SequenceFormatError(f"{path}: missing meta record")
    try:
        spec = ScanSpec.model_validate(meta["scan_spec"])
    except (KeyError, ValidationError) as e:
        raise SequenceFormatError(f"{path}: invalid scan spec: {e}") from e
    if not (len(truth) == len(odom) == len(raw_scans)):
        raise SequenceFormatError(
            f"{path}: stream lengths differ (truth {len(truth)}, odom {len(odom)}, scans {len(raw_scans)})"
        )
    scans = []
    for stamp, ranges in raw_scans:
        if len(ranges) != spec.n_beams:
            raise SequenceFormatError(f"{path}: scan at t={stamp} has {len(ranges)} beams, expected {spec.n_beams}")
        scans.append(Scan(stamp, _ranges_from_json(ranges), spec))
    extra = {k: v for k, v in meta.items() if k not in ("type", "static_map_id", "scan_spec")}
    return Sequence(truth, odom, scans, spec, meta.get("static_map_id", ""), extra)


def yaw_quaternion(theta: float) -> tuple[float, float, float, float]:
    """(qx, qy, qz, qw) of a rotation about z."""
    return 0.0, 0.0, math.sin(theta / 2.0), math.cos(theta / 2.0)


def write_tum(path: str | Path, poses: list[StampedPose], comments: list[str] | None = None) -> None:
    """Write ``timestamp tx ty tz qx qy qz qw`` lines (z = 0)."""
    with open(path, "w", encoding="utf-8") as f:
        for c in comments or []:
            f.write(f"# {c}\n")
        for s in poses:
            qx, qy, qz, qw = yaw_quaternion(s.pose.theta)
            f.write(
                f"{s.stamp:.6f} {s.pose.x:.6f} {s.pose.y:.6f} 0.000000 "
                f"{qx:.9f} {qy:.9f} {qz:.9f} {qw:.9f}\n"
            )


def read_tum(path: str | Path) -> list[StampedPose]:
    """Read a TUM trajectory; yaw is recovered from the quaternion."""
    poses = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise SequenceFormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            t, x, y, _z, qx, qy, qz, qw = (float(p) for p in parts)
            theta = math.atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))
            poses.append(StampedPose(t, Pose2(x, y, theta)))
    return poses
