"""Projection-based auto-annotation: entity shapes, box fitting, row records.

Entities are annotated without touching pixels: the 3D shape is placed at
its camera-relative pose, its vertices are projected through the camera
model, and an axis-aligned box is fitted to the projected hull.  Pixel k
covers [k, k+1), so a box over pixel indices [x0, x1] x [y0, y1] is stored
as (x0, y0, x1-x0+1, y1-y0+1); entities with no projected pixel inside the
image get the all -1 sentinel box and visible = 0.  Entities that partially
leave the frame are clipped, not dropped.  No occlusion reasoning is done
between entities; a box is produced wherever the shape alone would be seen.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from trackforge import _kernels
from trackforge.camera import BEHIND_CAMERA, Intrinsics, RigCamera, project_point
from trackforge.errors import ParseError, ValidationError
from trackforge.fileio import atomic_write_text, num_or_int
from trackforge.geometry import EulerXYZ, Pose, rotation_to_euler

SCHEMA_VERSION = "tomie/1"

ENTITY_CLASSES = (
    "pallet",
    "mesh_box",
    "small_load_carrier",
    "cardboard_box",
    "barrel",
    "forklift",
)


@dataclass(frozen=True)
class EntityModel:
    """A named entity instance with a 3D shape in its own model frame.

    The shape is either an oriented box (full extents, centered on the
    origin) or an explicit vertex list.  Box shapes are expanded to their
    8 corners; for convex shapes that yields the same projected hull as
    the full mesh.
    """

    class_name: str
    name: str
    extents_mm: tuple[float, float, float] | None = None
    vertices_mm: np.ndarray | None = None

    def __post_init__(self):
        if self.class_name not in ENTITY_CLASSES:
            raise ValidationError(f"unknown entity class {self.class_name!r}")
        if (self.extents_mm is None) == (self.vertices_mm is None):
            raise ValidationError(f"{self.name}: exactly one of extents_mm / vertices_mm required")
        if self.extents_mm is not None:
            ext = tuple(float(v) for v in self.extents_mm)
            if len(ext) != 3 or any(v <= 0 for v in ext):
                raise ValidationError(f"{self.name}: extents must be 3 positive numbers")
            object.__setattr__(self, "extents_mm", ext)
            hx, hy, hz = ext[0] / 2.0, ext[1] / 2.0, ext[2] / 2.0
            corners = np.array(
                [[sx * hx, sy * hy, sz * hz]
                 for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
            )
            object.__setattr__(self, "vertices_mm", corners)
        else:
            v = np.asarray(self.vertices_mm, dtype=np.float64)
            if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] == 0:
                raise ValidationError(f"{self.name}: vertex list must be a non-empty (N, 3) array")
            if not np.isfinite(v).all():
                raise ValidationError(f"{self.name}: non-finite vertex")
            object.__setattr__(self, "vertices_mm", v)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box (x, y, w, h), top-left origin.

    The all -1 box is the sentinel for "not visible".  Boxes produced by
    :func:`fit_bbox` are integer-valued with w, h >= 1.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite bbox {vals}")
        if vals == (-1, -1, -1, -1):
            return
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"bbox needs positive size (or the -1 sentinel), got {vals}")

    @property
    def is_sentinel(self) -> bool:
        return (self.x, self.y, self.w, self.h) == (-1, -1, -1, -1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


SENTINEL_BBOX = BBox(-1, -1, -1, -1)


@dataclass(frozen=True)
class AnnotationRow:
    """One annotation record: where one entity appears in one image."""

    image_path: str
    entity_name: str
    position_mm: tuple[float, float, float]
    orientation_rad: EulerXYZ
    delta_time_s: float
    bbox: BBox
    visible: int

    def __post_init__(self):
        if self.visible not in (0, 1):
            raise ValidationError(f"visible must be 0 or 1, got {self.visible!r}")
        if (self.visible == 0) != self.bbox.is_sentinel:
            raise ValidationError(
                f"{self.entity_name}: visible={self.visible} does not match bbox {self.bbox.as_tuple()}"
            )
        pos = tuple(float(v) for v in self.position_mm)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValidationError(f"{self.entity_name}: bad position {self.position_mm!r}")
        object.__setattr__(self, "position_mm", pos)
        if not math.isfinite(self.delta_time_s):
            raise ValidationError(f"{self.entity_name}: non-finite delta_time")


def project_model(intr: Intrinsics, rel: Pose, model: EntityModel) -> list:
    """Project every model vertex at its camera-relative pose.

    Returns one entry per vertex, in order: an (u, v) tuple or BEHIND_CAMERA.
    """
    pts = rel.apply(model.vertices_mm)
    return [project_point(intr, p) for p in pts]


def fit_bbox(projected, intr: Intrinsics) -> BBox:
    """Axis-aligned box over the in-front projected vertices, clipped to the
    image; the sentinel when nothing lands inside the image rectangle."""
    us = []
    vs = []
    for p in projected:
        if p is BEHIND_CAMERA:
            continue
        u, v = p
        if not (math.isfinite(u) and math.isfinite(v)):
            continue
        us.append(u)
        vs.append(v)
    if not us:
        return SENTINEL_BBOX
    x0 = math.floor(min(us))
    x1 = math.floor(max(us))
    y0 = math.floor(min(vs))
    y1 = math.floor(max(vs))
    if x1 < 0 or x0 > intr.width - 1 or y1 < 0 or y0 > intr.height - 1:
        return SENTINEL_BBOX
    x0 = max(x0, 0)
    x1 = min(x1, intr.width - 1)
    y0 = max(y0, 0)
    y1 = min(y1, intr.height - 1)
    return BBox(float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))


def _bbox_from_row(row: np.ndarray) -> BBox:
    if row[2] < 0:
        return SENTINEL_BBOX
    return BBox(float(row[0]), float(row[1]), float(row[2]), float(row[3]))


def annotate_frame(camera: RigCamera, entities, image_path: str,
                   pose_frame: str = "camera") -> list[AnnotationRow]:
    """Annotate one image: one row per entity with a usable pose.

    ``entities`` is a sequence of (EntityModel, world Pose, delta_time)
    triples.  Entities whose pose carries non-finite values (a filtered
    motion-capture gap) are omitted rather than written as invisible.
    ``pose_frame`` selects whether the stored position/orientation are
    camera-relative ("camera", default) or world-frame ("world").
    """
    if pose_frame not in ("camera", "world"):
        raise ValidationError(f"pose_frame must be 'camera' or 'world', got {pose_frame!r}")
    kept = []
    for model, pose, delta_t in entities:
        if not (np.isfinite(pose.translation).all() and np.isfinite(pose.rotation).all()
                and math.isfinite(delta_t)):
            continue
        kept.append((model, pose, delta_t))
    if not kept:
        return []

    rc = camera.pose.rotation
    tc = camera.pose.translation
    rot_e = np.stack([p.rotation for _, p, _ in kept])
    trans_e = np.stack([p.translation for _, p, _ in kept])
    # T_cam<-entity = inverse(camera pose) o entity pose, batched.
    rel_rot = np.ascontiguousarray(np.einsum("ji,njk->nik", rc, rot_e))
    rel_trans = np.ascontiguousarray((trans_e - tc) @ rc)

    verts = np.ascontiguousarray(np.concatenate([m.vertices_mm for m, _, _ in kept]))
    counts = np.array([m.vertices_mm.shape[0] for m, _, _ in kept], dtype=np.int64)
    offsets = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(counts)])

    intr = camera.intrinsics
    boxes = _kernels.project_hulls(
        intr.fx, intr.fy, intr.cx, intr.cy,
        intr.k1, intr.k2, intr.k3, intr.p1, intr.p2,
        intr.width, intr.height,
        rel_rot, rel_trans, verts, offsets,
    )

    rows = []
    for i, (model, pose, delta_t) in enumerate(kept):
        bbox = _bbox_from_row(boxes[i])
        if pose_frame == "camera":
            position = tuple(rel_trans[i])
            orientation = rotation_to_euler(rel_rot[i])
        else:
            position = tuple(pose.translation)
            orientation = rotation_to_euler(pose.rotation)
        rows.append(AnnotationRow(
            image_path=image_path,
            entity_name=model.name,
            position_mm=position,
            orientation_rad=orientation,
            delta_time_s=delta_t,
            bbox=bbox,
            visible=0 if bbox.is_sentinel else 1,
        ))
    return rows


def save_models(models, path) -> None:
    entries = []
    for m in models:
        if m.extents_mm is not None:
            shape = {"type": "box", "extents_mm": [num_or_int(v) for v in m.extents_mm]}
        else:
            shape = {"type": "mesh",
                     "vertices_mm": [[num_or_int(v) for v in row] for row in m.vertices_mm]}
        entries.append({"class": m.class_name, "name": m.name, "shape": shape})
    payload = {"schema": SCHEMA_VERSION, "entities": entries}
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_models(path) -> list[EntityModel]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read model catalog: {exc}", path=path) from exc
    if obj.get("schema") != SCHEMA_VERSION:
        raise ParseError(f"unknown schema {obj.get('schema')!r}", path=path)
    models = []
    names = set()
    for entry in obj.get("entities", []):
        try:
            shape = entry["shape"]
            if shape["type"] == "box":
                model = EntityModel(entry["class"], entry["name"],
                                    extents_mm=tuple(shape["extents_mm"]))
            elif shape["type"] == "mesh":
                model = EntityModel(entry["class"], entry["name"],
                                    vertices_mm=np.asarray(shape["vertices_mm"], dtype=np.float64))
            else:
                raise ValueError(f"unknown shape type {shape['type']!r}")
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ParseError(f"bad entity entry: {exc}", path=path) from exc
        if model.name in names:
            raise ParseError(f"duplicate entity name {model.name!r}", path=path)
        names.add(model.name)
        models.append(model)
    return models
