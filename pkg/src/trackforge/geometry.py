"""SE(3) rigid transforms and intrinsic-XYZ Euler conversions.

Conventions used throughout the toolkit:

* Rotations are 3x3 orthonormal matrices with determinant +1.
* Translations are millimetres; angles are radians.
* Euler angles are *intrinsic XYZ*: rotate about the body X axis, then the
  new Y axis, then the new Z axis.  As a matrix product this is

      R = Rx(tx) @ Ry(ty) @ Rz(tz)

  Worked example: (tx, ty, tz) = (0, 0, pi/2) maps the x-axis onto the
  y-axis, i.e. R @ [1, 0, 0] == [0, 1, 0].
* A `Pose` stores the transform of a frame expressed in a parent frame:
  if `p` is the pose of an entity in the world frame, then
  `p.apply(v_entity) == v_world`.

Extraction (`rotation_to_euler`) returns canonical angles with
tx, tz in (-pi, pi] and ty in [-pi/2, pi/2].  At gimbal lock
(|cos ty| < 1e-9) the decomposition is not unique; the returned solution
fixes tx = 0, absorbs the free degree of freedom into tz, and is marked
with ``gimbal_lock=True``.  Re-composing the returned angles always
reproduces the input matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from trackforge.errors import ValidationError

ROTATION_TOL = 1e-9
_GIMBAL_EPS = 1e-9


def _canonical_angle(a: float) -> float:
    # atan2 yields [-pi, pi]; fold the single excluded endpoint.
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class EulerXYZ:
    """Intrinsic XYZ Euler angles in radians."""

    x: float
    y: float
    z: float
    gimbal_lock: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValidationError(f"non-finite Euler angles: {(self.x, self.y, self.z)}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


def check_rotation(r: np.ndarray) -> np.ndarray:
    """Validate a 3x3 rotation matrix (orthonormal, det +1, within 1e-9)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValidationError(f"rotation must be 3x3, got shape {r.shape}")
    if not np.isfinite(r).all():
        raise ValidationError("rotation matrix has non-finite entries")
    err = np.abs(r @ r.T - np.eye(3)).max()
    if err > ROTATION_TOL:
        raise ValidationError(f"rotation not orthonormal (max deviation {err:.3e})")
    det = float(np.linalg.det(r))
    if abs(det - 1.0) > ROTATION_TOL:
        raise ValidationError(f"rotation determinant {det!r} != +1")
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation plus translation in millimetres."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,):
            raise ValidationError(f"translation must have shape (3,), got {t.shape}")
        if not np.isfinite(t).all():
            raise ValidationError("translation has non-finite components")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_parts(cls, euler: EulerXYZ, translation) -> "Pose":
        return cls(euler_to_rotation(euler), np.asarray(translation, dtype=np.float64))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4) or not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValidationError("expected a 4x4 homogeneous matrix")
        return cls(m[:3, :3], m[:3, 3])

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or many points (N, 3) into the parent frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


def euler_to_rotation(e: EulerXYZ) -> np.ndarray:
    """Compose the rotation matrix Rx(x) @ Ry(y) @ Rz(z)."""
    cx, sx = math.cos(e.x), math.sin(e.x)
    cy, sy = math.cos(e.y), math.sin(e.y)
    cz, sz = math.cos(e.z), math.sin(e.z)
    return np.array(
        [
            [cy * cz, -cy * sz, sy],
            [cx * sz + sx * sy * cz, cx * cz - sx * sy * sz, -sx * cy],
            [sx * sz - cx * sy * cz, sx * cz + cx * sy * sz, cx * cy],
        ]
    )


def rotation_to_euler(r: np.ndarray) -> EulerXYZ:
    """Extract intrinsic-XYZ angles; inverse of :func:`euler_to_rotation`.

    The returned angles re-compose to ``r`` element-wise within 1e-9.  At
    gimbal lock the result has ``gimbal_lock=True`` and x fixed to 0.
    """
    r = check_rotation(r)
    sy = float(r[0, 2])
    cy = math.hypot(float(r[0, 0]), float(r[0, 1]))
    ty = math.atan2(sy, cy)  # in [-pi/2, pi/2] because cy >= 0
    if cy < _GIMBAL_EPS:
        # r reduces to Ry(+-pi/2) @ Rz(tz - tx*sign); fold everything into z.
        tz = math.atan2(float(r[1, 0]), float(r[1, 1]))
        return EulerXYZ(0.0, ty, _canonical_angle(tz), gimbal_lock=True)
    tx = math.atan2(-float(r[1, 2]), float(r[2, 2]))
    tz = math.atan2(-float(r[0, 1]), float(r[0, 0]))
    return EulerXYZ(_canonical_angle(tx), ty, _canonical_angle(tz))


def compose(a: Pose, b: Pose) -> Pose:
    """Pose of frame c in frame a, given b-in-a and c-in-b."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


def relative_pose(camera_pose: Pose, entity_pose: Pose) -> Pose:
    """Entity pose expressed in the camera frame.

    Both arguments are poses in the same (world) frame; the result maps
    entity-frame points into camera-frame points.
    """
    return compose(inverse(camera_pose), entity_pose)
