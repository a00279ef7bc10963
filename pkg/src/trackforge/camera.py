"""Pinhole camera model with Brown-Conrady distortion, plus camera-rig I/O.

A rig is a set of cameras, each with intrinsics (including distortion
coefficients) and a world-frame pose.  The camera frame has +z forward,
+x right, +y down; points with z <= 0 are behind the camera and project
to the ``BEHIND_CAMERA`` sentinel value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from trackforge.errors import ParseError, ValidationError
from trackforge.fileio import atomic_write_text
from trackforge.geometry import EulerXYZ, Pose, euler_to_rotation, rotation_to_euler

SCHEMA_VERSION = "tomie/1"


class _BehindCamera:
    __slots__ = ()

    def __repr__(self):
        return "BEHIND_CAMERA"


#: Sentinel returned for points at or behind the image plane (a value, not an error).
BEHIND_CAMERA = _BehindCamera()


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole parameters in pixels plus Brown-Conrady distortion coefficients."""

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    width: int = 1920
    height: int = 1200

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image size must be positive, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point must lie inside the image")


def distort(intr: Intrinsics, x: float, y: float) -> tuple[float, float]:
    """Apply radial (k1, k2, k3) and tangential (p1, p2) distortion to
    normalized image coordinates."""
    r2 = x * x + y * y
    radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    return (xd, yd)


def project_point(intr: Intrinsics, p_cam):
    """Project one camera-frame point (mm) to pixel coordinates.

    Returns an (u, v) tuple, or BEHIND_CAMERA when z <= 0.
    """
    p = np.asarray(p_cam, dtype=np.float64)
    if p.shape != (3,):
        raise ValidationError(f"expected a 3-vector, got shape {p.shape}")
    if not np.isfinite(p).all():
        raise ValidationError(f"non-finite point {p!r}")
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    if z <= 0.0:
        return BEHIND_CAMERA
    xd, yd = distort(intr, x / z, y / z)
    return (intr.fx * xd + intr.cx, intr.fy * yd + intr.cy)


def undistort(intr: Intrinsics, xd: float, yd: float, iterations: int = 20) -> tuple[float, float]:
    """Invert :func:`distort` by fixed-point iteration (exact for zero coefficients)."""
    x, y = xd, yd
    for _ in range(iterations):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
        dx = 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
        dy = intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
        x = (xd - dx) / radial
        y = (yd - dy) / radial
    return (x, y)


def unproject_pixel(intr: Intrinsics, u: float, v: float, depth_mm: float) -> np.ndarray:
    """Camera-frame point at the given depth that projects to pixel (u, v)."""
    if depth_mm <= 0:
        raise ValidationError("depth must be positive")
    x, y = undistort(intr, (u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy)
    return np.array([x * depth_mm, y * depth_mm, depth_mm])


@dataclass(frozen=True)
class RigCamera:
    """One rig camera: id, intrinsics, and its pose in the world frame."""

    camera_id: int
    intrinsics: Intrinsics
    pose: Pose

    def __post_init__(self):
        if self.camera_id < 1:
            raise ValidationError(f"camera_id must be >= 1, got {self.camera_id}")


@dataclass
class CameraRig:
    cameras: list[RigCamera] = field(default_factory=list)

    def __post_init__(self):
        ids = [c.camera_id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate camera ids in rig: {ids}")

    def by_id(self, camera_id: int) -> RigCamera:
        for c in self.cameras:
            if c.camera_id == camera_id:
                return c
        raise KeyError(camera_id)


def _intrinsics_to_json(i: Intrinsics) -> dict:
    return {
        "fx": i.fx, "fy": i.fy, "cx": i.cx, "cy": i.cy,
        "width": i.width, "height": i.height,
        "distortion": {"k1": i.k1, "k2": i.k2, "k3": i.k3, "p1": i.p1, "p2": i.p2},
    }


def _intrinsics_from_json(obj: dict) -> Intrinsics:
    dist = obj.get("distortion", {})
    return Intrinsics(
        fx=float(obj["fx"]), fy=float(obj["fy"]),
        cx=float(obj["cx"]), cy=float(obj["cy"]),
        k1=float(dist.get("k1", 0.0)), k2=float(dist.get("k2", 0.0)),
        k3=float(dist.get("k3", 0.0)),
        p1=float(dist.get("p1", 0.0)), p2=float(dist.get("p2", 0.0)),
        width=int(obj["width"]), height=int(obj["height"]),
    )


def save_rig(rig: CameraRig, path) -> None:
    cams = []
    for c in rig.cameras:
        e = rotation_to_euler(c.pose.rotation)
        cams.append({
            "camera_id": c.camera_id,
            "intrinsics": _intrinsics_to_json(c.intrinsics),
            "pose": {
                "position_mm": list(c.pose.translation),
                "orientation_rad": [e.x, e.y, e.z],
            },
        })
    atomic_write_text(path, json.dumps({"schema": SCHEMA_VERSION, "cameras": cams}, indent=2) + "\n")


def load_rig(path) -> CameraRig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read rig file: {exc}", path=path) from exc
    if obj.get("schema") != SCHEMA_VERSION:
        raise ParseError(f"unknown schema {obj.get('schema')!r}, expected {SCHEMA_VERSION!r}", path=path)
    cameras = []
    for entry in obj.get("cameras", []):
        try:
            pose_obj = entry["pose"]
            rx, ry, rz = (float(v) for v in pose_obj["orientation_rad"])
            pose = Pose(
                euler_to_rotation(EulerXYZ(rx, ry, rz)),
                np.array([float(v) for v in pose_obj["position_mm"]]),
            )
            cameras.append(RigCamera(int(entry["camera_id"]), _intrinsics_from_json(entry["intrinsics"]), pose))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad camera entry: {exc}", path=path) from exc
    return CameraRig(cameras)


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World pose of a camera at ``eye`` with its optical axis toward ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        raise ValidationError("eye and target coincide")
    z = forward / norm
    right = np.cross(up, z)
    rn = np.linalg.norm(right)
    if rn < 1e-9:  # looking straight up/down: pick an arbitrary horizontal right
        right = np.array([1.0, 0.0, 0.0])
        rn = 1.0
    x = right / rn
    y = np.cross(z, x)
    r = np.column_stack([x, y, z])
    # Re-orthonormalize to meet the strict rotation tolerance.
    uu, _, vt = np.linalg.svd(r)
    r = uu @ vt
    if np.linalg.det(r) < 0:
        r = -r
    return Pose(r, eye)


def demo_rig(width: int = 1920, height: int = 1200) -> CameraRig:
    """Six-camera rig overlooking a 16 m x 8 m floor, with mild distortion.

    Plausible stand-in values; real calibrations are loaded from rig files.
    """
    intr = Intrinsics(
        fx=1155.0, fy=1160.0, cx=width / 2.0, cy=height / 2.0,
        k1=-0.09, k2=0.03, k3=0.0, p1=0.0005, p2=-0.0004,
        width=width, height=height,
    )
    positions = [
        (-7500.0, -3800.0, 5200.0),
        (0.0, -3900.0, 5400.0),
        (7500.0, -3800.0, 5200.0),
        (-7500.0, 3800.0, 5300.0),
        (0.0, 3900.0, 5500.0),
        (7500.0, 3800.0, 5200.0),
    ]
    cameras = [
        RigCamera(i + 1, intr, look_at_pose(pos, (0.0, 0.0, 500.0)))
        for i, pos in enumerate(positions)
    ]
    return CameraRig(cameras)
