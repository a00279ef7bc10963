"""Annotation files (JSONL primary, CSV mirror), MOT-Challenge interchange,
and dataset statistics.

All files carry the schema tag "tomie/1".  Numbers are serialized exactly:
integral values as integers, everything else as the shortest decimal string
that round-trips the float, so write -> read -> write is byte-identical.

Annotation rows are grouped by image in capture order.  Positions and
orientations are stored per row; the header's ``pose_frame`` field records
whether they are camera-relative or world-frame, since the row format
itself does not say.

MOT-Challenge text is one line per visible box:

    frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z

with conf = 1 for ground truth and x = y = z = -1 (no 3D data).  Frames
are numbered from 1 in first-appearance order of the image paths; entity
names map to integer ids through a persistable mapping table so ids stay
stable across exports.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field

from trackforge.annotation import SENTINEL_BBOX, AnnotationRow, BBox
from trackforge.errors import ParseError, ValidationError
from trackforge.fileio import atomic_write_text, fmt_num, num_or_int
from trackforge.geometry import EulerXYZ
from trackforge.metrics import TrackEntry, TrackSequence

SCHEMA_VERSION = "tomie/1"

#: Average annotation cost per entity instance, in seconds.
SECONDS_PER_INSTANCE = 1.5

_CSV_COLUMNS = ["Image Path", "Entity Name", "Position", "Orientation",
                "Delta Time", "Bounding Box", "Visible"]


@dataclass(frozen=True)
class AnnotationHeader:
    camera_id: int | None = None
    rig: str | None = None
    pose_frame: str = "camera"

    def __post_init__(self):
        if self.pose_frame not in ("camera", "world"):
            raise ValidationError(f"pose_frame must be 'camera' or 'world', got {self.pose_frame!r}")


@dataclass
class AnnotationFile:
    header: AnnotationHeader
    rows: list[AnnotationRow] = field(default_factory=list)

    def __post_init__(self):
        self.check_grouping()

    def check_grouping(self) -> None:
        """Rows must be grouped by image: a path never reappears after a gap."""
        seen = set()
        prev = None
        for i, row in enumerate(self.rows, start=1):
            if row.image_path != prev:
                if row.image_path in seen:
                    raise ValidationError(
                        f"row {i}: image {row.image_path!r} reappears out of capture order"
                    )
                seen.add(row.image_path)
                prev = row.image_path

    def image_paths(self) -> list[str]:
        out = []
        prev = None
        for row in self.rows:
            if row.image_path != prev:
                out.append(row.image_path)
                prev = row.image_path
        return out


def _vector_cell(values) -> str:
    return "[" + ", ".join(fmt_num(v) for v in values) + "]"


def _parse_vector(cell: str, expected_len: int) -> list[float]:
    cell = cell.strip()
    if not (cell.startswith("[") and cell.endswith("]")):
        raise ValueError(f"expected a bracketed vector, got {cell!r}")
    parts = [p.strip() for p in cell[1:-1].split(",")]
    if len(parts) != expected_len:
        raise ValueError(f"expected {expected_len} components, got {len(parts)}")
    return [float(p) for p in parts]


def _row_to_json(row: AnnotationRow) -> dict:
    return {
        "image_path": row.image_path,
        "entity_name": row.entity_name,
        "position": [num_or_int(v) for v in row.position_mm],
        "orientation": [num_or_int(v) for v in row.orientation_rad.as_tuple()],
        "delta_time": num_or_int(row.delta_time_s),
        "bbox": [num_or_int(v) for v in row.bbox.as_tuple()],
        "visible": row.visible,
    }


def _row_from_fields(image_path, entity_name, position, orientation,
                     delta_time, bbox_vals, visible) -> AnnotationRow:
    bbox = SENTINEL_BBOX if tuple(bbox_vals) == (-1, -1, -1, -1) else BBox(*bbox_vals)
    return AnnotationRow(
        image_path=image_path,
        entity_name=entity_name,
        position_mm=tuple(position),
        orientation_rad=EulerXYZ(*orientation),
        delta_time_s=delta_time,
        bbox=bbox,
        visible=visible,
    )


def write_annotations(afile: AnnotationFile, path) -> None:
    """Serialize to .jsonl or .csv depending on the path suffix."""
    afile.check_grouping()
    path = str(path)
    h = afile.header
    if path.endswith(".jsonl"):
        lines = [json.dumps({
            "schema": SCHEMA_VERSION,
            "kind": "annotations",
            "camera_id": h.camera_id,
            "rig": h.rig,
            "pose_frame": h.pose_frame,
        })]
        lines.extend(json.dumps(_row_to_json(r)) for r in afile.rows)
        atomic_write_text(path, "\n".join(lines) + "\n")
        return
    if not path.endswith(".csv"):
        raise ValidationError(f"unsupported annotation format: {path!r} (use .jsonl or .csv)")
    buf = io.StringIO()
    meta = [SCHEMA_VERSION, "annotations", f"pose_frame={h.pose_frame}"]
    if h.camera_id is not None:
        meta.append(f"camera_id={h.camera_id}")
    if h.rig is not None:
        meta.append(f"rig={h.rig}")
    buf.write("# " + " ".join(meta) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in afile.rows:
        writer.writerow([
            row.image_path,
            row.entity_name,
            _vector_cell(row.position_mm),
            _vector_cell(row.orientation_rad.as_tuple()),
            fmt_num(row.delta_time_s),
            _vector_cell(row.bbox.as_tuple()),
            row.visible,
        ])
    atomic_write_text(path, buf.getvalue())


def read_annotations(path) -> AnnotationFile:
    path = str(path)
    if path.endswith(".jsonl"):
        return _read_annotations_jsonl(path)
    if path.endswith(".csv"):
        return _read_annotations_csv(path)
    raise ValidationError(f"unsupported annotation format: {path!r} (use .jsonl or .csv)")


def _read_annotations_jsonl(path) -> AnnotationFile:
    header = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc}", path=path, line=line_no) from exc
            if header is None:
                if obj.get("schema") != SCHEMA_VERSION or obj.get("kind") != "annotations":
                    raise ParseError(
                        f"unknown schema {obj.get('schema')!r} (expected {SCHEMA_VERSION!r} annotations)",
                        path=path, line=1)
                header = AnnotationHeader(
                    camera_id=obj.get("camera_id"),
                    rig=obj.get("rig"),
                    pose_frame=obj.get("pose_frame", "camera"),
                )
                continue
            try:
                rows.append(_row_from_fields(
                    str(obj["image_path"]), str(obj["entity_name"]),
                    [float(v) for v in obj["position"]],
                    [float(v) for v in obj["orientation"]],
                    float(obj["delta_time"]),
                    [float(v) for v in obj["bbox"]],
                    int(obj["visible"]),
                ))
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise ParseError(f"bad annotation row: {exc}", path=path, row=line_no - 1) from exc
    if header is None:
        raise ParseError("empty file: missing header line", path=path)
    try:
        return AnnotationFile(header, rows)
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from exc


def _parse_header_comment(line: str, path) -> AnnotationHeader:
    tokens = line.lstrip("#").split()
    if len(tokens) < 2 or tokens[0] != SCHEMA_VERSION or tokens[1] != "annotations":
        raise ParseError(f"unknown schema header {line!r}", path=path, line=1)
    kwargs = {}
    for tok in tokens[2:]:
        key, _, value = tok.partition("=")
        if key == "camera_id":
            kwargs["camera_id"] = int(value)
        elif key == "rig":
            kwargs["rig"] = value
        elif key == "pose_frame":
            kwargs["pose_frame"] = value
    return AnnotationHeader(**kwargs)


def _read_annotations_csv(path) -> AnnotationFile:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("#"):
            raise ParseError("missing schema header line", path=path, line=1)
        header = _parse_header_comment(first, path)
        reader = csv.reader(fh)
        columns = next(reader, None)
        if columns != _CSV_COLUMNS:
            raise ParseError(f"bad column header {columns!r}", path=path, line=2)
        for row_no, rec in enumerate(reader, start=1):
            if not rec:
                continue
            try:
                if len(rec) != len(_CSV_COLUMNS):
                    raise ValueError(f"expected {len(_CSV_COLUMNS)} columns, got {len(rec)}")
                rows.append(_row_from_fields(
                    rec[0], rec[1],
                    _parse_vector(rec[2], 3),
                    _parse_vector(rec[3], 3),
                    float(rec[4]),
                    _parse_vector(rec[5], 4),
                    int(rec[6]),
                ))
            except (TypeError, ValueError, ValidationError) as exc:
                raise ParseError(f"bad annotation row: {exc}", path=path, row=row_no) from exc
    try:
        return AnnotationFile(header, rows)
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from exc


# --- MOT-Challenge interchange ---------------------------------------------


def build_id_map(names) -> dict[str, int]:
    """Deterministic entity-name -> integer-id mapping (sorted, from 1)."""
    return {name: i + 1 for i, name in enumerate(sorted(set(names)))}


def save_id_map(id_map: dict[str, int], path) -> None:
    payload = {"schema": SCHEMA_VERSION, "kind": "id_map",
               "entities": {k: id_map[k] for k in sorted(id_map)}}
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_id_map(path) -> dict[str, int]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read id map: {exc}", path=path) from exc
    if obj.get("schema") != SCHEMA_VERSION or obj.get("kind") != "id_map":
        raise ParseError("not an id-map file", path=path)
    return {str(k): int(v) for k, v in obj["entities"].items()}


def export_mot(source, id_map: dict[str, int] | None = None) -> tuple[str, dict[str, int]]:
    """Render visible boxes as MOT-Challenge text.

    ``source`` is an AnnotationFile (frames numbered by first appearance of
    each image path) or a TrackSequence (frames numbered from 1).  Returns
    the text and the entity-name -> id mapping used (empty when ids were
    already integers).
    """
    lines = []
    if isinstance(source, AnnotationFile):
        if id_map is None:
            id_map = build_id_map(r.entity_name for r in source.rows)
        frame_of = {p: i + 1 for i, p in enumerate(source.image_paths())}
        for row in source.rows:
            if not row.visible:
                continue
            if row.entity_name not in id_map:
                raise ValidationError(f"entity {row.entity_name!r} missing from id map")
            b = row.bbox
            lines.append(
                f"{frame_of[row.image_path]},{id_map[row.entity_name]},"
                f"{fmt_num(b.x)},{fmt_num(b.y)},{fmt_num(b.w)},{fmt_num(b.h)},1,-1,-1,-1"
            )
        return "\n".join(lines) + ("\n" if lines else ""), id_map
    if isinstance(source, TrackSequence):
        all_int = all(isinstance(e.track_id, int) for f in source.frames for e in f)
        if all_int and id_map is None:
            id_map = {}
        elif id_map is None:
            id_map = build_id_map(str(e.track_id) for f in source.frames for e in f)
        for t, frame in enumerate(source.frames, start=1):
            for e in frame:
                tid = e.track_id if (all_int and not id_map) else id_map[str(e.track_id)]
                b = e.box
                lines.append(
                    f"{t},{tid},{fmt_num(b.x)},{fmt_num(b.y)},{fmt_num(b.w)},{fmt_num(b.h)},"
                    f"{fmt_num(e.confidence)},-1,-1,-1"
                )
        return "\n".join(lines) + ("\n" if lines else ""), id_map
    raise ValidationError(f"cannot export {type(source).__name__} as MOT text")


def import_tracker_results(path, num_frames: int | None = None) -> TrackSequence:
    """Parse MOT-Challenge text into a TrackSequence.

    Frames must be non-decreasing; widths/heights must be positive.  When
    ``num_frames`` is given the sequence is padded with empty frames up to
    that length (and lines beyond it are an error).
    """
    path = str(path)
    per_frame: dict[int, list[TrackEntry]] = {}
    last_frame = 0
    max_frame = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 7:
                raise ParseError(f"expected at least 7 fields, got {len(parts)}",
                                 path=path, line=line_no)
            try:
                frame = int(parts[0])
                tid = int(parts[1])
                x, y, w, h = (float(v) for v in parts[2:6])
                conf = float(parts[6])
            except ValueError as exc:
                raise ParseError(f"bad field: {exc}", path=path, line=line_no) from exc
            if frame < 1:
                raise ParseError(f"frame numbers start at 1, got {frame}", path=path, line=line_no)
            if frame < last_frame:
                raise ParseError(f"frames must be non-decreasing ({frame} after {last_frame})",
                                 path=path, line=line_no)
            if w <= 0 or h <= 0:
                raise ParseError(f"box size must be positive, got w={w} h={h}",
                                 path=path, line=line_no)
            if num_frames is not None and frame > num_frames:
                raise ParseError(f"frame {frame} beyond declared length {num_frames}",
                                 path=path, line=line_no)
            last_frame = frame
            max_frame = max(max_frame, frame)
            entries = per_frame.setdefault(frame, [])
            if any(e.track_id == tid for e in entries):
                raise ParseError(f"duplicate id {tid} in frame {frame}", path=path, line=line_no)
            try:
                entries.append(TrackEntry(tid, BBox(x, y, w, h), conf))
            except ValidationError as exc:
                raise ParseError(str(exc), path=path, line=line_no) from exc
    n = num_frames if num_frames is not None else max_frame
    return TrackSequence([per_frame.get(t, []) for t in range(1, n + 1)])


def annotations_to_track_sequence(afile: AnnotationFile,
                                  id_map: dict[str, int] | None = None) -> TrackSequence:
    """Visible rows as a TrackSequence (same frame numbering as export_mot)."""
    if id_map is None:
        id_map = build_id_map(r.entity_name for r in afile.rows)
    paths = afile.image_paths()
    frame_of = {p: i for i, p in enumerate(paths)}
    frames: list[list[TrackEntry]] = [[] for _ in paths]
    for row in afile.rows:
        if row.visible:
            frames[frame_of[row.image_path]].append(
                TrackEntry(id_map[row.entity_name], row.bbox, 1.0))
    return TrackSequence(frames)


# --- dataset statistics -----------------------------------------------------


@dataclass(frozen=True)
class CameraStats:
    instances: int
    frames: int
    annotation_time_min: float


@dataclass
class DatasetStats:
    per_camera: dict
    per_class: dict[str, int]
    seconds_per_instance: float

    def __post_init__(self):
        per_cam = sum(c.instances for c in self.per_camera.values())
        per_cls = sum(self.per_class.values())
        if per_cam != per_cls:
            raise ValidationError(
                f"class total {per_cls} disagrees with camera total {per_cam}")

    @property
    def total_instances(self) -> int:
        return sum(c.instances for c in self.per_camera.values())

    @property
    def total_frames(self) -> int:
        return sum(c.frames for c in self.per_camera.values())


def annotation_time_minutes(instances: int,
                            seconds_per_instance: float = SECONDS_PER_INSTANCE) -> float:
    return instances * seconds_per_instance / 60.0


_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def class_from_entity_name(name: str) -> str:
    """Heuristic entity-name -> class ("MeshBox_3" -> "mesh_box"); used when
    no model catalog is supplied."""
    base = re.sub(r"_\d+$", "", name)
    return _CAMEL_BOUNDARY.sub("_", base).lower()


def compute_stats(files, seconds_per_instance: float = SECONDS_PER_INSTANCE,
                  class_by_name: dict[str, str] | None = None) -> DatasetStats:
    """Count visible instances and frames per camera and per class.

    The annotation-time estimate uses the configured seconds-per-instance
    constant.  Results do not depend on the order of the input files.
    """
    per_camera_counts: dict = {}
    per_class: dict[str, int] = {}
    for afile in files:
        key = afile.header.camera_id if afile.header.camera_id is not None else 0
        instances, frames = per_camera_counts.get(key, (0, 0))
        frames += len(afile.image_paths())
        for row in afile.rows:
            if not row.visible:
                continue
            instances += 1
            if class_by_name is not None:
                cls = class_by_name.get(row.entity_name, "unknown")
            else:
                cls = class_from_entity_name(row.entity_name)
            per_class[cls] = per_class.get(cls, 0) + 1
        per_camera_counts[key] = (instances, frames)
    per_camera = {
        key: CameraStats(inst, frames, annotation_time_minutes(inst, seconds_per_instance))
        for key, (inst, frames) in per_camera_counts.items()
    }
    return DatasetStats(per_camera, per_class, seconds_per_instance)


def stats_text_table(stats: DatasetStats) -> str:
    cams = sorted(stats.per_camera)
    lines = []
    header = f"{'Sequence':<24}" + "".join(f"{str(c):>12}" for c in cams)
    lines.append(header)
    lines.append(f"{'# instances':<24}"
                 + "".join(f"{stats.per_camera[c].instances:>12d}" for c in cams))
    lines.append(f"{'# frames':<24}"
                 + "".join(f"{stats.per_camera[c].frames:>12d}" for c in cams))
    lines.append(f"{'Annotation time (min)':<24}"
                 + "".join(f"{stats.per_camera[c].annotation_time_min:>12.1f}" for c in cams))
    lines.append("")
    lines.append(f"{'Entity':<24}{'# instances':>12}")
    for cls in sorted(stats.per_class):
        lines.append(f"{cls:<24}{stats.per_class[cls]:>12d}")
    return "\n".join(lines)


def stats_to_dict(stats: DatasetStats) -> dict:
    return {
        "seconds_per_instance": stats.seconds_per_instance,
        "per_camera": {
            str(k): {
                "instances": v.instances,
                "frames": v.frames,
                "annotation_time_min": v.annotation_time_min,
            }
            for k, v in sorted(stats.per_camera.items(), key=lambda kv: str(kv[0]))
        },
        "per_class": {k: stats.per_class[k] for k in sorted(stats.per_class)},
        "total_instances": stats.total_instances,
        "total_frames": stats.total_frames,
    }
