"""Pinhole camera model, poses, and trajectory interpolation.

Camera convention (fixed, never configurable): x right, y down, z forward.
Pose orientation is the world-from-camera rotation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

from .geometry import Quat, Ray, Vec3

DEFAULT_WIDTH = 768
DEFAULT_HEIGHT = 512
DEFAULT_VFOV_DEG = 60.0


class CameraError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point outside image")

    @staticmethod
    def from_vfov(
        width: int = DEFAULT_WIDTH,
        height: int = DEFAULT_HEIGHT,
        vfov_deg: float = DEFAULT_VFOV_DEG,
    ) -> "Intrinsics":
        f = (height / 2.0) / math.tan(math.radians(vfov_deg) / 2.0)
        return Intrinsics(width, height, f, f, width / 2.0, height / 2.0)

    def to_dict(self) -> dict:
        return {
            "width": self.width, "height": self.height,
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
        }

    @staticmethod
    def from_dict(d: dict) -> "Intrinsics":
        return Intrinsics(
            int(d["width"]), int(d["height"]),
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
        )


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: Quat

    def forward(self) -> Vec3:
        return self.orientation.rotate(Vec3(0.0, 0.0, 1.0))


@dataclass(frozen=True)
class CameraTrajectory:
    intrinsics: Intrinsics
    poses: tuple[Pose, ...]
    frame_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.poses:
            raise ValueError("trajectory must have at least one pose")
        if not self.frame_ids:
            object.__setattr__(
                self, "frame_ids", tuple(f"frame_{i:05d}" for i in range(len(self.poses)))
            )
        if len(self.frame_ids) != len(self.poses):
            raise ValueError("frame_ids and poses must be the same length")

    def __len__(self) -> int:
        return len(self.poses)


def pixel_ray(intr: Intrinsics, pose: Pose, px: float, py: float) -> Ray:
    """World-space unit ray through an image point (pixel centers at n+0.5)."""
    d_cam = Vec3((px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy, 1.0).normalized()
    return Ray(pose.position, pose.orientation.rotate(d_cam))


def look_at_pose(eye: Vec3, target: Vec3, up_hint: Vec3 = Vec3(0, 0, 1)) -> Pose:
    """Pose whose camera z points at the target, camera y opposing up_hint."""
    to_target = target - eye
    if to_target.norm() < 1e-9:
        raise CameraError("DEGENERATE_LOOKAT", "target coincides with eye")
    forward = to_target.normalized()
    right = forward.cross(up_hint)
    if right.norm() < 1e-9:
        raise CameraError("DEGENERATE_LOOKAT", "up_hint parallel to view direction")
    right = right.normalized()
    down = forward.cross(right)  # camera y axis (points opposite up_hint)
    # columns of world-from-camera: x=right, y=down, z=forward
    m = (
        (right.x, down.x, forward.x),
        (right.y, down.y, forward.y),
        (right.z, down.z, forward.z),
    )
    return Pose(eye, _quat_from_matrix(m))


def _quat_from_matrix(m: Sequence[Sequence[float]]) -> Quat:
    tr = m[0][0] + m[1][1] + m[2][2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        w = 0.25 * s
        x = (m[2][1] - m[1][2]) / s
        y = (m[0][2] - m[2][0]) / s
        z = (m[1][0] - m[0][1]) / s
    elif m[0][0] > m[1][1] and m[0][0] > m[2][2]:
        s = math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2
        w = (m[2][1] - m[1][2]) / s
        x = 0.25 * s
        y = (m[0][1] + m[1][0]) / s
        z = (m[0][2] + m[2][0]) / s
    elif m[1][1] > m[2][2]:
        s = math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2
        w = (m[0][2] - m[2][0]) / s
        x = (m[0][1] + m[1][0]) / s
        y = 0.25 * s
        z = (m[1][2] + m[2][1]) / s
    else:
        s = math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2
        w = (m[1][0] - m[0][1]) / s
        x = (m[0][2] + m[2][0]) / s
        y = (m[1][2] + m[2][1]) / s
        z = 0.25 * s
    return Quat.normalize(w, x, y, z)


def slerp(a: Quat, b: Quat, t: float) -> Quat:
    """Shortest-arc spherical interpolation with sign canonicalization."""
    dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
    bw, bx, by, bz = b.w, b.x, b.y, b.z
    if dot < 0.0:
        dot = -dot
        bw, bx, by, bz = -bw, -bx, -by, -bz
    if dot > 1.0 - 1e-10:
        # nearly parallel: normalized lerp is exact enough and stable
        return Quat.normalize(
            a.w + t * (bw - a.w), a.x + t * (bx - a.x),
            a.y + t * (by - a.y), a.z + t * (bz - a.z),
        )
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    wa = math.sin((1.0 - t) * theta) / s
    wb = math.sin(t * theta) / s
    return Quat.normalize(
        wa * a.w + wb * bw, wa * a.x + wb * bx, wa * a.y + wb * by, wa * a.z + wb * bz
    )


def interpolate_trajectory(
    keyframes: Sequence[Pose],
    samples_per_segment: int,
    intrinsics: Intrinsics | None = None,
) -> CameraTrajectory:
    """Linear positions, slerp orientations; keyframes reproduced exactly.

    samples_per_segment counts the interior+endpoint samples added per
    segment, so each segment contributes samples_per_segment poses after the
    segment's start keyframe.
    """
    if len(keyframes) < 2:
        raise ValueError("need at least 2 keyframes")
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    poses: list[Pose] = [keyframes[0]]
    for a, b in zip(keyframes, keyframes[1:]):
        for k in range(1, samples_per_segment + 1):
            t = k / samples_per_segment
            if t >= 1.0:
                poses.append(b)
                continue
            pos = Vec3(
                a.position.x + t * (b.position.x - a.position.x),
                a.position.y + t * (b.position.y - a.position.y),
                a.position.z + t * (b.position.z - a.position.z),
            )
            poses.append(Pose(pos, slerp(a.orientation, b.orientation, t)))
    intr = intrinsics or Intrinsics.from_vfov()
    return CameraTrajectory(intr, tuple(poses))


# ---------------------------------------------------------------------------
# JSON interchange

def trajectory_to_dict(traj: CameraTrajectory) -> dict:
    return {
        "intrinsics": traj.intrinsics.to_dict(),
        "frames": [
            {
                "frame_id": fid,
                "position": list(p.position.as_tuple()),
                "rotation_quat": list(p.orientation.as_tuple()),
            }
            for fid, p in zip(traj.frame_ids, traj.poses)
        ],
    }


def trajectory_from_dict(doc: dict) -> CameraTrajectory:
    intr = Intrinsics.from_dict(doc["intrinsics"])
    poses = []
    frame_ids = []
    for fr in doc["frames"]:
        frame_ids.append(str(fr["frame_id"]))
        poses.append(
            Pose(
                Vec3(*[float(v) for v in fr["position"]]),
                Quat.normalize(*[float(v) for v in fr["rotation_quat"]]),
            )
        )
    return CameraTrajectory(intr, tuple(poses), tuple(frame_ids))


def save_trajectory(traj: CameraTrajectory, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(trajectory_to_dict(traj), indent=2, sort_keys=True))


def load_trajectory(path: Union[str, Path]) -> CameraTrajectory:
    return trajectory_from_dict(json.loads(Path(path).read_text()))
