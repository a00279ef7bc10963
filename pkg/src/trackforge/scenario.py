"""Deterministic warehouse scenario generation and controlled track corruption.

Two scenario families are generated on a 16 m x 8 m floor:

* ``lanes_broad`` / ``lanes_narrow`` -- an inbound flow: the loading area
  starts empty and pallets are brought in one by one and parked in two
  lanes.  The two variants differ only in the gap between parked pallets.
* ``block_2x2`` / ``block_3x3`` -- a block store: pallets start pre-stacked
  in a grid and are pulled out one by one and driven out of the tracked
  region (after which their samples are flagged invalid).  The 3x3 layout
  exists only for the loaded-pallet stage.

Stages: ``empty_pallets`` uses bare pallets; ``loaded_pallets`` stacks
three layers of small load carriers on each pallet, which only changes the
box height.  Trajectories are piecewise-linear with trapezoidal speed
ramps peaking at 0.8 m/s, keeping every finite-difference speed below the
1 m/s envelope the pose-matching tolerances assume.  Pose streams are
emitted at the 200 Hz motion-capture rate; everything is a pure function
of (spec, seed).

``corrupt_tracks`` damages a ground-truth sequence in controlled ways
(dropout, box jitter, id switches, spurious boxes) and returns a ledger
from which the expected per-frame tallies are computable in closed form
when jitter is zero: spurious boxes are placed with zero overlap against
every ground-truth box of their frame, so they can never be matched.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from trackforge.annotation import ENTITY_CLASSES, BBox, EntityModel
from trackforge.errors import ParseError, ValidationError
from trackforge.fileio import atomic_write_text, num_or_int
from trackforge.geometry import EulerXYZ
from trackforge.metrics import FrameTally, TrackEntry, TrackSequence
from trackforge.sync import POSE_RATE_HZ, CameraLatency, LatencyDist, PoseSample

SCHEMA_VERSION = "tomie/1"

SCENARIO_KINDS = ("lanes_broad", "lanes_narrow", "block_2x2", "block_3x3")
STAGES = ("empty_pallets", "loaded_pallets")

#: Full (length, width, height) boxes per entity class, mm.
DEFAULT_EXTENTS_MM = {
    "pallet": (1200.0, 800.0, 144.0),
    "small_load_carrier": (600.0, 400.0, 280.0),
    "mesh_box": (1240.0, 835.0, 970.0),
    "cardboard_box": (600.0, 400.0, 400.0),
    "barrel": (600.0, 600.0, 900.0),
    "forklift": (2500.0, 1200.0, 2100.0),
}
#: Loaded pallet = pallet + three layers of small load carriers on top.
LOADED_PALLET_EXTENTS_MM = (1200.0, 800.0, 144.0 + 3 * 280.0)

CRUISE_SPEED_MM_S = 600.0
PEAK_SPEED_MM_S = 800.0  # trapezoid peak for the ramp fractions below

#: Tracked region of operation; poses outside are flagged invalid.
REGION_X_MM = 8200.0
REGION_Y_MM = 4200.0

FLOOR_Z = 0.0

SWITCH_ID_BASE = 1_000_000
FP_ID_BASE = 2_000_000


def _pascal(cls: str) -> str:
    return "".join(part.capitalize() for part in cls.split("_"))


def default_roster(kind: str, n_extra: int = 2) -> list[tuple[str, str]]:
    """(class, name) pairs: the moved pallets plus a little static dressing."""
    n_pallets = {"lanes_broad": 6, "lanes_narrow": 6, "block_2x2": 4, "block_3x3": 9}[kind]
    roster = [("pallet", f"Pallet_{i + 1}") for i in range(n_pallets)]
    if kind.startswith("lanes"):
        extras = ["barrel", "cardboard_box", "mesh_box", "forklift"][:n_extra]
        roster.extend((cls, f"{_pascal(cls)}_1") for cls in extras)
    return roster


@dataclass
class ScenarioSpec:
    kind: str
    stage: str
    duration_s: float
    seed: int
    roster: list[tuple[str, str]] | None = None
    lane_gap_broad_mm: float = 2000.0
    lane_gap_narrow_mm: float = 200.0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if self.stage not in STAGES:
            raise ValidationError(f"unknown stage {self.stage!r}")
        if self.kind == "block_3x3" and self.stage != "loaded_pallets":
            raise ValidationError("block_3x3 exists only for the loaded_pallets stage")
        if self.duration_s < 0 or not math.isfinite(self.duration_s):
            raise ValidationError(f"duration must be >= 0, got {self.duration_s}")
        if self.roster is not None:
            for cls, name in self.roster:
                if cls not in ENTITY_CLASSES:
                    raise ValidationError(f"unknown entity class {cls!r} for {name!r}")
            names = [name for _, name in self.roster]
            if len(set(names)) != len(names):
                raise ValidationError("duplicate entity names in roster")


@dataclass(frozen=True)
class ScenarioEvent:
    entity_name: str
    action: str  # "move_in" | "pull_out" | "static"
    t_start: float
    t_end: float
    start_mm: tuple[float, float]
    end_mm: tuple[float, float]
    removed_at: float | None = None


@dataclass
class Scenario:
    spec: ScenarioSpec
    models: list[EntityModel]
    streams: dict[str, list[PoseSample]]
    events: list[ScenarioEvent]

    def roster_classes(self) -> dict[str, str]:
        return {m.name: m.class_name for m in self.models}

    def all_samples(self) -> list[PoseSample]:
        """Every sample, time-major then entity order (the file layout)."""
        names = [m.name for m in self.models]
        per_entity = [self.streams[n] for n in names]
        out = []
        for k in range(max((len(s) for s in per_entity), default=0)):
            for stream in per_entity:
                if k < len(stream):
                    out.append(stream[k])
        return out


class _Trajectory:
    """Hold, then follow a polyline with a trapezoidal speed profile, then hold."""

    def __init__(self, waypoints, t_start: float):
        self.points = [(float(x), float(y)) for x, y in waypoints]
        self.t_start = t_start
        self.seg_len = []
        total = 0.0
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            d = math.hypot(x1 - x0, y1 - y0)
            self.seg_len.append(d)
            total += d
        self.length = total
        self.t_move = total / CRUISE_SPEED_MM_S if total > 0 else 0.0
        self.t_end = t_start + self.t_move

    def _arc(self, t: float) -> float:
        if self.length == 0 or t <= self.t_start:
            return 0.0
        if t >= self.t_end:
            return self.length
        tt = t - self.t_start
        T = self.t_move
        ramp = T / 4.0
        vpeak = self.length / (T - ramp)
        a = vpeak / ramp
        if tt < ramp:
            return 0.5 * a * tt * tt
        if tt < T - ramp:
            return 0.5 * vpeak * ramp + vpeak * (tt - ramp)
        dt = T - tt
        return self.length - 0.5 * a * dt * dt

    def position(self, t: float) -> tuple[float, float]:
        s = self._arc(t)
        for (x0, y0), (x1, y1), d in zip(self.points, self.points[1:], self.seg_len):
            if s <= d or d == 0.0:
                f = 0.0 if d == 0.0 else s / d
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
            s -= d
        return self.points[-1]


def _entity_models(spec: ScenarioSpec) -> list[EntityModel]:
    roster = spec.roster if spec.roster is not None else default_roster(spec.kind)
    models = []
    for cls, name in roster:
        if cls == "pallet" and spec.stage == "loaded_pallets":
            extents = LOADED_PALLET_EXTENTS_MM
        else:
            extents = DEFAULT_EXTENTS_MM[cls]
        models.append(EntityModel(cls, name, extents_mm=extents))
    return models


def _in_region(x: float, y: float) -> bool:
    return abs(x) <= REGION_X_MM and abs(y) <= REGION_Y_MM


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Generate 200 Hz world-frame pose streams plus the event script."""
    models = _entity_models(spec)
    rng = random.Random(spec.seed)

    pallets = [m for m in models if m.class_name == "pallet"]
    extras = [m for m in models if m.class_name != "pallet"]

    trajectories: dict[str, _Trajectory] = {}
    events: list[ScenarioEvent] = []

    if spec.kind.startswith("lanes"):
        gap = spec.lane_gap_broad_mm if spec.kind == "lanes_broad" else spec.lane_gap_narrow_mm
        step = 1200.0 + gap
        slot = spec.duration_s / max(len(pallets), 1)
        for i, m in enumerate(pallets):
            lane = i % 2
            col = i // 2
            spot = (-5000.0 + col * step, -1200.0 if lane == 0 else 1200.0)
            staging = (-7200.0 + i * 1400.0, 3300.0)
            traj = _Trajectory([staging, (staging[0], 2400.0), spot], t_start=i * slot)
            trajectories[m.name] = traj
            events.append(ScenarioEvent(m.name, "move_in", traj.t_start, traj.t_end,
                                        staging, spot))
    else:
        n_side = 2 if spec.kind == "block_2x2" else 3
        pitch_x, pitch_y = 1300.0, 900.0
        spots = [
            (pitch_x * (i - (n_side - 1) / 2.0), pitch_y * (j - (n_side - 1) / 2.0))
            for j in range(n_side) for i in range(n_side)
        ]
        if len(pallets) > len(spots):
            raise ValidationError(
                f"{spec.kind} offers {len(spots)} grid spots for {len(pallets)} pallets")
        order = list(range(len(pallets)))
        rng.shuffle(order)
        slot = spec.duration_s / max(len(pallets), 1)
        for k, idx in enumerate(order):
            m = pallets[idx]
            spot = spots[idx]
            exit_point = (9400.0, 3000.0)
            traj = _Trajectory([spot, (spot[0], 3000.0), exit_point], t_start=k * slot)
            trajectories[m.name] = traj
            events.append(ScenarioEvent(m.name, "pull_out", traj.t_start, traj.t_end,
                                        spot, exit_point))

    extra_spots = [(6200.0, -3200.0), (6800.0, -2200.0), (6200.0, -1200.0),
                   (6800.0, -200.0), (6200.0, 800.0), (6800.0, 1800.0)]
    for i, m in enumerate(extras):
        spot = extra_spots[i % len(extra_spots)]
        trajectories[m.name] = _Trajectory([spot], t_start=0.0)
        events.append(ScenarioEvent(m.name, "static", 0.0, 0.0, spot, spot))

    num_steps = int(round(spec.duration_s * POSE_RATE_HZ))
    timestamps = [k / POSE_RATE_HZ for k in range(num_steps + 1)]

    streams: dict[str, list[PoseSample]] = {}
    removed_at: dict[str, float] = {}
    for m in models:
        traj = trajectories[m.name]
        z = m.extents_mm[2] / 2.0 + FLOOR_Z
        samples = []
        for t in timestamps:
            x, y = traj.position(t)
            valid = _in_region(x, y)
            if not valid and m.name not in removed_at:
                removed_at[m.name] = t
            samples.append(PoseSample(
                timestamp=t,
                entity_name=m.name,
                position_mm=(x, y, z),
                orientation_rad=EulerXYZ(0.0, 0.0, 0.0),
                valid=valid,
            ))
        streams[m.name] = samples

    events = [
        ScenarioEvent(e.entity_name, e.action, e.t_start, e.t_end, e.start_mm, e.end_mm,
                      removed_at.get(e.entity_name))
        for e in events
    ]
    return Scenario(spec, models, streams, events)


def save_event_script(scenario: Scenario, path) -> None:
    payload = {
        "schema": SCHEMA_VERSION,
        "kind": "scenario_script",
        "scenario": {
            "kind": scenario.spec.kind,
            "stage": scenario.spec.stage,
            "duration_s": num_or_int(scenario.spec.duration_s),
            "seed": scenario.spec.seed,
        },
        "roster": scenario.roster_classes(),
        "events": [
            {
                "entity_name": e.entity_name,
                "action": e.action,
                "t_start": num_or_int(e.t_start),
                "t_end": num_or_int(e.t_end),
                "start_mm": [num_or_int(v) for v in e.start_mm],
                "end_mm": [num_or_int(v) for v in e.end_mm],
                "removed_at": None if e.removed_at is None else num_or_int(e.removed_at),
            }
            for e in scenario.events
        ],
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_scenario_spec(path) -> tuple[ScenarioSpec, list[CameraLatency] | None]:
    """Read a scenario spec JSON, plus an optional capture-latency section."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read scenario spec: {exc}", path=path) from exc
    if obj.get("schema") != SCHEMA_VERSION:
        raise ParseError(f"unknown schema {obj.get('schema')!r}", path=path)
    try:
        roster = None
        if "roster" in obj:
            roster = [(str(e["class"]), str(e["name"])) for e in obj["roster"]]
        spec = ScenarioSpec(
            kind=str(obj["kind"]),
            stage=str(obj["stage"]),
            duration_s=float(obj["duration_s"]),
            seed=int(obj["seed"]),
            roster=roster,
            lane_gap_broad_mm=float(obj.get("lane_gap_broad_mm", 2000.0)),
            lane_gap_narrow_mm=float(obj.get("lane_gap_narrow_mm", 200.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad scenario spec: {exc}", path=path) from exc

    latencies = None
    if "capture" in obj:
        try:
            latencies = [
                CameraLatency(
                    camera_id=int(c["camera_id"]),
                    capture=_latency_from_json(c["capture"]),
                    retrieval=_latency_from_json(c["retrieval"]),
                )
                for c in obj["capture"]["cameras"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad capture section: {exc}", path=path) from exc
    return spec, latencies


def _latency_from_json(obj) -> LatencyDist:
    return LatencyDist(str(obj["kind"]), float(obj["a"]), float(obj.get("b", 0.0)))


def default_capture_latencies(n_cameras: int = 6) -> list[CameraLatency]:
    """Constant 22 ms capture + 28 ms retrieval per camera: 20 FPS cycles."""
    return [
        CameraLatency(i + 1, LatencyDist.constant(0.022), LatencyDist.constant(0.028))
        for i in range(n_cameras)
    ]


# --- controlled corruption --------------------------------------------------


@dataclass
class CorruptionSpec:
    dropout_prob: float = 0.0
    jitter_sigma_px: float = 0.0
    idswitch_rate: float = 0.0
    fp_rate: float = 0.0
    seed: int = 0
    frame_size: tuple[int, int] = (1920, 1200)

    def __post_init__(self):
        for name in ("dropout_prob", "idswitch_rate", "fp_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.jitter_sigma_px < 0:
            raise ValidationError("jitter sigma must be >= 0")


@dataclass
class CorruptionLedger:
    """Exact record of every injected error.

    ``assigned`` maps (frame, gt id) to the emitted predicted id for each
    surviving box, which is enough to reconstruct the expected per-frame
    tallies in closed form when jitter is zero.
    """

    dropped: list[tuple[int, object]] = field(default_factory=list)
    switches: list[tuple[int, object, int]] = field(default_factory=list)
    injected: list[tuple[int, int]] = field(default_factory=list)
    assigned: dict[tuple[int, object], object] = field(default_factory=dict)

    @property
    def n_dropped(self) -> int:
        return len(self.dropped)

    @property
    def n_injected(self) -> int:
        return len(self.injected)

    def is_empty(self) -> bool:
        return not (self.dropped or self.switches or self.injected)

    def expected_id_switches(self, gt: TrackSequence) -> int:
        return sum(t.ids for t in self.expected_tallies(gt))

    def expected_tallies(self, gt: TrackSequence) -> list[FrameTally]:
        """Per-frame tallies a matcher must report for the corrupted output
        (exact for jitter_sigma_px = 0)."""
        n = gt.num_frames
        fn = [0] * n
        fp = [0] * n
        ids = [0] * n
        for t, _ in self.dropped:
            fn[t] += 1
        for t, _ in self.injected:
            fp[t] += 1
        per_track: dict[object, list[tuple[int, object]]] = {}
        for t, frame in enumerate(gt.frames):
            for e in frame:
                pid = self.assigned.get((t, e.track_id))
                if pid is not None:
                    per_track.setdefault(e.track_id, []).append((t, pid))
        for lst in per_track.values():
            last = None
            for t, pid in lst:
                if last is not None and pid != last:
                    ids[t] += 1
                last = pid
        return [
            FrameTally(tp=len(gt.frames[t]) - fn[t], fp=fp[t], fn=fn[t],
                       ids=ids[t], gt=len(gt.frames[t]))
            for t in range(n)
        ]


def _sample_clear_box(rng: random.Random, gt_frame, frame_size, tries: int = 25):
    """A box with zero overlap against every ground-truth box of the frame."""
    width, height = frame_size
    for _ in range(tries):
        w = rng.uniform(40.0, 160.0)
        h = rng.uniform(40.0, 160.0)
        x = rng.uniform(0.0, width - w)
        y = rng.uniform(0.0, height - h)
        clear = True
        for e in gt_frame:
            b = e.box
            if x < b.x + b.w and b.x < x + w and y < b.y + b.h and b.y < y + h:
                clear = False
                break
        if clear:
            return BBox(x, y, w, h)
    return None


def corrupt_tracks(gt: TrackSequence, spec: CorruptionSpec):
    """Apply dropout, jitter, id switches, and spurious boxes to a sequence.

    Deterministic per (gt, spec); returns (corrupted, ledger).
    """
    rng = random.Random(spec.seed)
    ledger = CorruptionLedger()
    frames_out: list[list[TrackEntry]] = []
    first_seen: dict[object, int] = {}
    alias: dict[object, int] = {}
    next_switch = SWITCH_ID_BASE
    next_fp = FP_ID_BASE
    width, height = spec.frame_size

    for t, frame in enumerate(gt.frames):
        out: list[TrackEntry] = []
        for e in frame:
            g = e.track_id
            if g not in first_seen:
                first_seen[g] = t
            elif spec.idswitch_rate > 0 and rng.random() < spec.idswitch_rate:
                alias[g] = next_switch
                ledger.switches.append((t, g, next_switch))
                next_switch += 1
            if spec.dropout_prob > 0 and rng.random() < spec.dropout_prob:
                ledger.dropped.append((t, g))
                continue
            box = e.box
            if spec.jitter_sigma_px > 0:
                s = spec.jitter_sigma_px
                box = BBox(
                    box.x + rng.gauss(0.0, s),
                    box.y + rng.gauss(0.0, s),
                    max(1.0, box.w + rng.gauss(0.0, s)),
                    max(1.0, box.h + rng.gauss(0.0, s)),
                )
            pid = alias.get(g, g)
            out.append(TrackEntry(pid, box, e.confidence))
            ledger.assigned[(t, g)] = pid
        if spec.fp_rate > 0 and rng.random() < spec.fp_rate:
            box = _sample_clear_box(rng, frame, (width, height))
            if box is not None:
                out.append(TrackEntry(next_fp, box, 1.0))
                ledger.injected.append((t, next_fp))
                next_fp += 1
        frames_out.append(out)
    return TrackSequence(frames_out), ledger
