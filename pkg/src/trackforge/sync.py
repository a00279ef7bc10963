"""Trigger-locked multi-camera capture simulation and pose/image matching.

Capture protocol: every cycle triggers a single capture on each camera and
locks it; the next trigger is released on all cameras simultaneously only
once every camera has finished retrieving its image.  Each cycle therefore
takes as long as the slowest camera's capture + retrieval, which pins the
system frame rate, and every camera ends up with exactly the same number
of frames.

Pose matching: an image timestamp is paired with the valid pose sample
minimizing the absolute timestamp difference.  The stored offset is signed,

    delta_time = t_pose - t_image

so a negative value means the pose was sampled before the image.  Exact
ties resolve to the earlier pose.  There is no offset cutoff by default
(slow-moving entities make neighbouring poses acceptable across short
gaps); pass ``max_delta_s`` to enforce one.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from trackforge.errors import ParseError, ProtocolError, ValidationError
from trackforge.fileio import atomic_write_text, fmt_num, num_or_int
from trackforge.geometry import EulerXYZ, Pose, euler_to_rotation

SCHEMA_VERSION = "tomie/1"

#: Motion-capture pose update rate.
POSE_RATE_HZ = 200.0


@dataclass(frozen=True)
class ImageEvent:
    camera_id: int
    frame_index: int
    timestamp: float
    image_path: str


@dataclass(frozen=True)
class PoseSample:
    """One motion-capture sample for one entity, in the world frame."""

    timestamp: float
    entity_name: str
    position_mm: tuple[float, float, float]
    orientation_rad: EulerXYZ
    valid: bool = True

    @property
    def pose(self) -> Pose:
        return Pose(euler_to_rotation(self.orientation_rad),
                    np.asarray(self.position_mm, dtype=np.float64))


@dataclass(frozen=True)
class LatencyDist:
    """Latency distribution: constant, uniform(lo, hi) or normal(mean, sigma).

    Normal draws are redrawn while non-positive, so sampled latencies are
    always > 0.
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if self.a <= 0:
                raise ValidationError(f"latency must be positive, got {self.a}")
        elif self.kind == "uniform":
            if self.a <= 0 or self.b < self.a:
                raise ValidationError(f"need 0 < lo <= hi, got ({self.a}, {self.b})")
        elif self.kind == "normal":
            if self.a <= 0 or self.b < 0:
                raise ValidationError(f"need mean > 0 and sigma >= 0, got ({self.a}, {self.b})")
        else:
            raise ValidationError(f"unknown latency distribution {self.kind!r}")

    def sample(self, rng: random.Random) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b)
        for _ in range(1000):
            v = rng.gauss(self.a, self.b)
            if v > 0:
                return v
        raise ValidationError(f"normal({self.a}, {self.b}) keeps sampling non-positive latencies")

    @classmethod
    def constant(cls, v: float) -> "LatencyDist":
        return cls("constant", v)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "LatencyDist":
        return cls("uniform", lo, hi)

    @classmethod
    def normal(cls, mean: float, sigma: float) -> "LatencyDist":
        return cls("normal", mean, sigma)


@dataclass(frozen=True)
class CameraLatency:
    camera_id: int
    capture: LatencyDist
    retrieval: LatencyDist


@dataclass(frozen=True)
class CameraCycle:
    capture_latency: float
    retrieval_latency: float


@dataclass(frozen=True)
class CaptureCycle:
    cycle_index: int
    release_time: float
    cameras: dict[int, CameraCycle]

    @property
    def completion_time(self) -> float:
        return self.release_time + max(c.capture_latency + c.retrieval_latency
                                       for c in self.cameras.values())


DEFAULT_PATH_TEMPLATE = "camera_{camera}/images/{frame}.jpg"


def simulate_capture(latencies, duration_s: float, seed: int,
                     path_template: str = DEFAULT_PATH_TEMPLATE):
    """Run the trigger-locked protocol for ``duration_s`` seconds.

    Returns (streams, cycles) where streams maps camera_id to its list of
    ImageEvents (equal length across cameras by construction) and cycles is
    the per-cycle log.  Deterministic for a given seed.
    """
    if not latencies:
        raise ValidationError("need at least one camera latency model")
    if duration_s <= 0:
        raise ValidationError(f"duration must be positive, got {duration_s}")
    ids = [lat.camera_id for lat in latencies]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate camera ids: {ids}")

    rng = random.Random(seed)
    streams: dict[int, list[ImageEvent]] = {cid: [] for cid in ids}
    cycles: list[CaptureCycle] = []
    release = 0.0
    index = 0
    while release < duration_s:
        per_camera = {}
        for lat in latencies:  # fixed draw order keeps runs reproducible
            cap = lat.capture.sample(rng)
            ret = lat.retrieval.sample(rng)
            per_camera[lat.camera_id] = CameraCycle(cap, ret)
        cycle = CaptureCycle(index, release, per_camera)
        cycles.append(cycle)
        for lat in latencies:
            cc = per_camera[lat.camera_id]
            streams[lat.camera_id].append(ImageEvent(
                camera_id=lat.camera_id,
                frame_index=index,
                timestamp=release + cc.capture_latency,
                image_path=path_template.format(camera=lat.camera_id, frame=index),
            ))
        release = cycle.completion_time
        index += 1
    return streams, cycles


def achieved_fps(streams) -> float:
    """System frame rate (N-1)/(t_last - t_first) from the event streams.

    Raises ProtocolError when per-camera frame counts differ and
    ValidationError with fewer than 2 frames.
    """
    if not streams:
        raise ValidationError("no camera streams")
    counts = {cid: len(evts) for cid, evts in streams.items()}
    if len(set(counts.values())) != 1:
        raise ProtocolError(f"unequal per-camera frame counts: {counts}")
    n = next(iter(counts.values()))
    if n < 2:
        raise ValidationError(f"need at least 2 frames to measure FPS, got {n}")
    rates = []
    for evts in streams.values():
        span = evts[-1].timestamp - evts[0].timestamp
        if span <= 0:
            raise ValidationError("non-increasing timestamps")
        rates.append((n - 1) / span)
    return float(np.mean(rates))


def filter_invalid(samples) -> list[PoseSample]:
    """Drop samples flagged invalid or carrying non-finite components."""
    out = []
    for s in samples:
        if not s.valid:
            continue
        if not all(math.isfinite(v) for v in s.position_mm):
            continue
        if not all(math.isfinite(v) for v in s.orientation_rad.as_tuple()):
            continue
        out.append(s)
    return out


class EntityPoseIndex:
    """Nearest-timestamp lookup over one entity's valid, sorted samples."""

    def __init__(self, samples):
        self._samples = list(samples)
        self._ts = [s.timestamp for s in self._samples]
        if any(b < a for a, b in zip(self._ts, self._ts[1:])):
            raise ValidationError("pose samples must be sorted by timestamp")

    def __len__(self):
        return len(self._samples)

    def match(self, image_ts: float, max_delta_s: float | None = None):
        """Sample minimizing |t_pose - t_image| plus the signed offset, or
        None when the stream is empty or the cutoff is exceeded."""
        if not self._samples:
            return None
        i = bisect.bisect_left(self._ts, image_ts)
        best = None
        if i > 0:
            best = i - 1
        if i < len(self._ts):
            if best is None:
                best = i
            else:
                d_left = image_ts - self._ts[best]
                d_right = self._ts[i] - image_ts
                if d_right < d_left:  # ties keep the earlier sample
                    best = i
        sample = self._samples[best]
        delta = sample.timestamp - image_ts
        if max_delta_s is not None and abs(delta) > max_delta_s:
            return None
        return sample, delta


def match_pose(image_ts: float, samples, max_delta_s: float | None = None):
    """One-shot nearest-pose match; see EntityPoseIndex.match for semantics."""
    return EntityPoseIndex(samples).match(image_ts, max_delta_s)


# --- stream files ---------------------------------------------------------

_POSE_COLUMNS = ["timestamp", "entity_name", "px", "py", "pz", "rx", "ry", "rz", "valid"]


def write_pose_stream(samples, path) -> None:
    """Write a pose stream as CSV (.csv) or JSONL (.jsonl); exact round-trip."""
    path = str(path)
    if path.endswith(".jsonl"):
        lines = [json.dumps({"schema": SCHEMA_VERSION, "kind": "pose_stream"})]
        for s in samples:
            lines.append(json.dumps({
                "timestamp": num_or_int(s.timestamp),
                "entity_name": s.entity_name,
                "position_mm": [num_or_int(v) for v in s.position_mm],
                "orientation_rad": [num_or_int(v) for v in s.orientation_rad.as_tuple()],
                "valid": 1 if s.valid else 0,
            }))
        atomic_write_text(path, "\n".join(lines) + "\n")
        return
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_VERSION} pose_stream\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_POSE_COLUMNS)
    for s in samples:
        writer.writerow([
            fmt_num(s.timestamp), s.entity_name,
            fmt_num(s.position_mm[0]), fmt_num(s.position_mm[1]), fmt_num(s.position_mm[2]),
            fmt_num(s.orientation_rad.x), fmt_num(s.orientation_rad.y), fmt_num(s.orientation_rad.z),
            1 if s.valid else 0,
        ])
    atomic_write_text(path, buf.getvalue())


def read_pose_stream(path) -> list[PoseSample]:
    path = str(path)
    samples: list[PoseSample] = []
    last_ts: dict[str, float] = {}

    def add(ts, name, pos, rot, valid, line_no):
        if name in last_ts and ts < last_ts[name]:
            raise ParseError(f"timestamps for {name!r} go backwards", path=path, line=line_no)
        last_ts[name] = ts
        samples.append(PoseSample(ts, name, tuple(pos), EulerXYZ(*rot), valid))

    if path.endswith(".jsonl"):
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"bad JSON: {exc}", path=path, line=line_no) from exc
                if line_no == 1:
                    if obj.get("schema") != SCHEMA_VERSION or obj.get("kind") != "pose_stream":
                        raise ParseError("missing pose_stream header", path=path, line=1)
                    continue
                try:
                    add(float(obj["timestamp"]), str(obj["entity_name"]),
                        [float(v) for v in obj["position_mm"]],
                        [float(v) for v in obj["orientation_rad"]],
                        bool(obj["valid"]), line_no)
                except (KeyError, TypeError, ValueError, ValidationError) as exc:
                    raise ParseError(f"bad pose row: {exc}", path=path, line=line_no) from exc
        return samples

    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith(f"# {SCHEMA_VERSION} pose_stream"):
            raise ParseError("missing pose_stream header", path=path, line=1)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _POSE_COLUMNS:
            raise ParseError(f"bad column header {header!r}", path=path, line=2)
        for line_no, rec in enumerate(reader, start=3):
            if not rec:
                continue
            try:
                add(float(rec[0]), rec[1], [float(v) for v in rec[2:5]],
                    [float(v) for v in rec[5:8]], bool(int(rec[8])), line_no)
            except (IndexError, TypeError, ValueError, ValidationError) as exc:
                raise ParseError(f"bad pose row: {exc}", path=path, line=line_no) from exc
    return samples


@dataclass(frozen=True)
class PoseMatch:
    """One synchronized (image, entity pose) pair, ready for annotation."""

    camera_id: int
    frame_index: int
    image_path: str
    image_timestamp: float
    entity_name: str
    position_mm: tuple[float, float, float]
    orientation_rad: EulerXYZ
    delta_time_s: float


def match_streams(streams, samples, max_delta_s: float | None = None) -> list[PoseMatch]:
    """Pair every image event with each entity's nearest valid pose.

    Entities keep their first-seen order from the pose stream; entities
    with no valid sample (or none within the cutoff) are omitted for that
    image rather than emitted as invalid.
    """
    order: list[str] = []
    by_entity: dict[str, list[PoseSample]] = {}
    for s in samples:
        if s.entity_name not in by_entity:
            by_entity[s.entity_name] = []
            order.append(s.entity_name)
        by_entity[s.entity_name].append(s)
    indexes = {name: EntityPoseIndex(filter_invalid(by_entity[name])) for name in order}

    matches: list[PoseMatch] = []
    for cid in sorted(streams):
        for event in streams[cid]:
            for name in order:
                hit = indexes[name].match(event.timestamp, max_delta_s)
                if hit is None:
                    continue
                sample, delta = hit
                matches.append(PoseMatch(
                    camera_id=cid,
                    frame_index=event.frame_index,
                    image_path=event.image_path,
                    image_timestamp=event.timestamp,
                    entity_name=name,
                    position_mm=sample.position_mm,
                    orientation_rad=sample.orientation_rad,
                    delta_time_s=delta,
                ))
    return matches


def write_pose_matches(matches, path) -> None:
    lines = [json.dumps({"schema": SCHEMA_VERSION, "kind": "pose_matches"})]
    for m in matches:
        lines.append(json.dumps({
            "camera_id": m.camera_id,
            "frame_index": m.frame_index,
            "image_path": m.image_path,
            "image_timestamp": num_or_int(m.image_timestamp),
            "entity_name": m.entity_name,
            "position_mm": [num_or_int(v) for v in m.position_mm],
            "orientation_rad": [num_or_int(v) for v in m.orientation_rad.as_tuple()],
            "delta_time": num_or_int(m.delta_time_s),
        }))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_pose_matches(path) -> list[PoseMatch]:
    matches: list[PoseMatch] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc}", path=path, line=line_no) from exc
            if line_no == 1:
                if obj.get("schema") != SCHEMA_VERSION or obj.get("kind") != "pose_matches":
                    raise ParseError("missing pose_matches header", path=path, line=1)
                continue
            try:
                matches.append(PoseMatch(
                    camera_id=int(obj["camera_id"]),
                    frame_index=int(obj["frame_index"]),
                    image_path=str(obj["image_path"]),
                    image_timestamp=float(obj["image_timestamp"]),
                    entity_name=str(obj["entity_name"]),
                    position_mm=tuple(float(v) for v in obj["position_mm"]),
                    orientation_rad=EulerXYZ(*(float(v) for v in obj["orientation_rad"])),
                    delta_time_s=float(obj["delta_time"]),
                ))
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise ParseError(f"bad pose match: {exc}", path=path, line=line_no) from exc
    return matches


_EVENT_COLUMNS = ["camera_id", "frame_index", "timestamp", "image_path"]


def write_image_events(streams, path) -> None:
    """Write image events as CSV, cycle-major then camera order."""
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_VERSION} image_events\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_EVENT_COLUMNS)
    ordered = sorted(streams.items())
    if ordered:
        n = max(len(evts) for _, evts in ordered)
        for k in range(n):
            for cid, evts in ordered:
                if k < len(evts):
                    e = evts[k]
                    writer.writerow([cid, e.frame_index, fmt_num(e.timestamp), e.image_path])
    atomic_write_text(path, buf.getvalue())


def read_image_events(path) -> dict[int, list[ImageEvent]]:
    streams: dict[int, list[ImageEvent]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith(f"# {SCHEMA_VERSION} image_events"):
            raise ParseError("missing image_events header", path=path, line=1)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _EVENT_COLUMNS:
            raise ParseError(f"bad column header {header!r}", path=path, line=2)
        for line_no, rec in enumerate(reader, start=3):
            if not rec:
                continue
            try:
                event = ImageEvent(int(rec[0]), int(rec[1]), float(rec[2]), rec[3])
            except (IndexError, TypeError, ValueError) as exc:
                raise ParseError(f"bad image event: {exc}", path=path, line=line_no) from exc
            streams.setdefault(event.camera_id, []).append(event)
    for cid, evts in streams.items():
        for prev, cur in zip(evts, evts[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ParseError(f"camera {cid}: timestamps not strictly increasing", path=path)
        if [e.frame_index for e in evts] != list(range(len(evts))):
            raise ParseError(f"camera {cid}: frame indices not dense from 0", path=path)
    return streams
