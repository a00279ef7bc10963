"""Multi-object tracking evaluation: MOTA, HOTA, IDF1, ID switches, AP/AR.

Matching conventions
--------------------
Frame matching for the CLEAR tallies keeps each ground-truth track's
previous match when that pair still overlaps at the threshold, then runs a
Hungarian assignment over the remaining boxes that maximizes the number of
matched pairs first and the total IoU second, accepting only pairs with
IoU >= alpha.  An ID switch is counted when a ground truth is matched to a
different predicted id than its most recent match (gaps do not reset the
memory).

    MOTA = 1 - sum_t(FP_t + FN_t + IDs_t) / sum_t GT_t

HOTA runs the same Hungarian convention independently per frame (no
carryover) at each threshold alpha.  For a matched detection c with ground
truth g and prediction p, the association sets over the whole sequence are
counted as

    |TPA(c)| = frames where (g, p) are matched to each other
    |FNA(c)| = detections of g not matched to p
    |FPA(c)| = detections of p not matched to g

    HOTA_alpha = sqrt( sum_c A(c) / (TP + FN + FP) ),
    A(c) = |TPA| / (|TPA| + |FNA| + |FPA|)

and the headline HOTA averages HOTA_alpha over alpha in {0.05, ..., 0.95}.
This is the plain per-frame-IoU form; the global-alignment re-weighting
used by some toolkits before the per-frame assignment is intentionally not
applied.

IDF1 assigns ground-truth ids to predicted ids one-to-one over the whole
sequence, maximizing the number of overlapping detections IDTP (a frame
counts for a pair when the two boxes reach the IoU threshold), then

    IDF1 = 2 IDTP / (2 IDTP + IDFP + IDFN).

Detection AP follows the 101-point interpolation with greedy
confidence-descending matching and at most 100 detections per image; AR is
the recall averaged over IoU thresholds 0.50:0.05:0.95, and F1 is the best
2PR/(P+R) over confidence cutoffs at IoU 0.50.

Undefined metrics (empty denominators) raise UndefinedMetricError instead
of returning 0, which would silently corrupt comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from trackforge import _kernels
from trackforge.annotation import BBox
from trackforge.errors import UndefinedMetricError, ValidationError

DEFAULT_ALPHA = 0.5
HOTA_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
DETECTION_IOU_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
MAX_DETECTIONS_PER_IMAGE = 100


@dataclass(frozen=True)
class TrackEntry:
    track_id: object
    box: BBox
    confidence: float = 1.0

    def __post_init__(self):
        if self.box.is_sentinel:
            raise ValidationError("track entries must carry real boxes, not the sentinel")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass
class TrackSequence:
    """Per-frame sets of identified boxes (ground truth or tracker output)."""

    frames: list[list[TrackEntry]] = field(default_factory=list)

    def __post_init__(self):
        for t, frame in enumerate(self.frames):
            ids = [e.track_id for e in frame]
            if len(set(ids)) != len(ids):
                raise ValidationError(f"frame {t}: duplicate track ids {ids}")

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def total_boxes(self) -> int:
        return sum(len(f) for f in self.frames)

    def all_ids(self) -> set:
        out = set()
        for frame in self.frames:
            out.update(e.track_id for e in frame)
        return out


@dataclass(frozen=True)
class FrameTally:
    tp: int
    fp: int
    fn: int
    ids: int
    gt: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.ids, self.gt) < 0:
            raise ValidationError("tallies must be non-negative")
        if self.tp + self.fn != self.gt:
            raise ValidationError(f"TP + FN must equal GT, got {self.tp}+{self.fn} != {self.gt}")
        if self.ids > self.tp:
            raise ValidationError("cannot switch more ids than matches")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    if iw <= 0:
        return 0.0
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def _boxes_array(entries) -> np.ndarray:
    arr = np.empty((len(entries), 4), dtype=np.float64)
    for i, e in enumerate(entries):
        arr[i, 0] = e.box.x
        arr[i, 1] = e.box.y
        arr[i, 2] = e.box.w
        arr[i, 3] = e.box.h
    return arr


def iou_matrix(gt_entries, pred_entries) -> np.ndarray:
    if not gt_entries or not pred_entries:
        return np.zeros((len(gt_entries), len(pred_entries)))
    return _kernels.iou_matrix(_boxes_array(gt_entries), _boxes_array(pred_entries))


def _max_matching(iou_mat: np.ndarray, alpha: float):
    """One-to-one pairs with IoU >= alpha maximizing (count, total IoU)."""
    valid = iou_mat >= alpha
    if not valid.any():
        return []
    big = float(iou_mat.shape[0] + iou_mat.shape[1] + 1)
    cost = np.where(valid, -(iou_mat + big), 0.0)
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if valid[r, c]]


def match_frame(gt_entries, pred_entries, alpha: float = DEFAULT_ALPHA, carryover=None):
    """Match one frame's boxes and tally it.

    ``carryover`` maps each ground-truth id to its most recent matched
    predicted id; pairs that still overlap at the threshold persist before
    the Hungarian stage (first ground truth in frame order wins a contested
    prediction).  Returns (matches, FrameTally, updated_carryover) and
    leaves the input mapping untouched.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    carryover = dict(carryover or {})
    ious = iou_matrix(gt_entries, pred_entries)
    pred_index = {e.track_id: j for j, e in enumerate(pred_entries)}

    matches: dict = {}
    used_gt: set[int] = set()
    used_pred: set[int] = set()
    for gi, g in enumerate(gt_entries):
        prev = carryover.get(g.track_id)
        if prev is None:
            continue
        pj = pred_index.get(prev)
        if pj is None or pj in used_pred:
            continue
        if ious[gi, pj] >= alpha:
            matches[g.track_id] = prev
            used_gt.add(gi)
            used_pred.add(pj)

    rem_g = [gi for gi in range(len(gt_entries)) if gi not in used_gt]
    rem_p = [pj for pj in range(len(pred_entries)) if pj not in used_pred]
    if rem_g and rem_p:
        sub = ious[np.ix_(rem_g, rem_p)]
        for r, c in _max_matching(sub, alpha):
            matches[gt_entries[rem_g[r]].track_id] = pred_entries[rem_p[c]].track_id

    switches = sum(
        1 for gid, pid in matches.items()
        if gid in carryover and carryover[gid] != pid
    )
    tp = len(matches)
    tally = FrameTally(tp=tp, fp=len(pred_entries) - tp, fn=len(gt_entries) - tp,
                       ids=switches, gt=len(gt_entries))
    carryover.update(matches)
    return matches, tally, carryover


def _check_frames(gt: TrackSequence, pred: TrackSequence) -> None:
    if gt.num_frames != pred.num_frames:
        raise ValidationError(
            f"sequences must have equal frame counts, got {gt.num_frames} != {pred.num_frames}"
        )


def clear_tallies(gt: TrackSequence, pred: TrackSequence, alpha: float = DEFAULT_ALPHA):
    """Per-frame CLEAR tallies over a whole sequence pair."""
    _check_frames(gt, pred)
    carry: dict = {}
    tallies = []
    for gt_frame, pred_frame in zip(gt.frames, pred.frames):
        _, tally, carry = match_frame(gt_frame, pred_frame, alpha, carry)
        tallies.append(tally)
    return tallies


def mota(gt: TrackSequence, pred: TrackSequence, alpha: float = DEFAULT_ALPHA):
    """MOTA value plus the per-frame tallies it was computed from."""
    tallies = clear_tallies(gt, pred, alpha)
    gt_total = sum(t.gt for t in tallies)
    if gt_total == 0:
        raise UndefinedMetricError("MOTA is undefined without ground-truth boxes")
    errors = sum(t.fp + t.fn + t.ids for t in tallies)
    return 1.0 - errors / gt_total, tallies


def id_switch_count(gt: TrackSequence, pred: TrackSequence, alpha: float = DEFAULT_ALPHA) -> int:
    return sum(t.ids for t in clear_tallies(gt, pred, alpha))


def _frame_matchings(gt: TrackSequence, pred: TrackSequence, alpha: float):
    """Independent per-frame matchings (no carryover), as (gt_id, pred_id) pairs."""
    per_frame = []
    for gt_frame, pred_frame in zip(gt.frames, pred.frames):
        ious = iou_matrix(gt_frame, pred_frame)
        pairs = _max_matching(ious, alpha)
        per_frame.append([
            (gt_frame[r].track_id, pred_frame[c].track_id) for r, c in pairs
        ])
    return per_frame


def hota_alpha(gt: TrackSequence, pred: TrackSequence, alpha: float) -> float:
    """HOTA at a single localization threshold."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    _check_frames(gt, pred)
    total_gt = gt.total_boxes()
    total_pred = pred.total_boxes()
    if total_gt + total_pred == 0:
        raise UndefinedMetricError("HOTA is undefined on empty sequences")

    match_counts: dict[tuple, int] = {}
    gt_counts: dict = {}
    pred_counts: dict = {}
    for frame in gt.frames:
        for e in frame:
            gt_counts[e.track_id] = gt_counts.get(e.track_id, 0) + 1
    for frame in pred.frames:
        for e in frame:
            pred_counts[e.track_id] = pred_counts.get(e.track_id, 0) + 1
    for pairs in _frame_matchings(gt, pred, alpha):
        for g, p in pairs:
            match_counts[(g, p)] = match_counts.get((g, p), 0) + 1

    tp = sum(match_counts.values())
    fn = total_gt - tp
    fp = total_pred - tp
    assoc = 0.0
    for (g, p), m in match_counts.items():
        assoc += m * (m / (gt_counts[g] + pred_counts[p] - m))
    return math.sqrt(assoc / (tp + fn + fp))


def hota_alphas(gt: TrackSequence, pred: TrackSequence,
                grid=HOTA_ALPHA_GRID) -> dict[float, float]:
    return {a: hota_alpha(gt, pred, a) for a in grid}


def hota_integrated(gt: TrackSequence, pred: TrackSequence,
                    grid=HOTA_ALPHA_GRID) -> float:
    values = hota_alphas(gt, pred, grid)
    return sum(values.values()) / len(values)


def idf1(gt: TrackSequence, pred: TrackSequence, alpha: float = DEFAULT_ALPHA) -> float:
    """IDF1 under the globally optimal one-to-one identity assignment."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    _check_frames(gt, pred)
    total_gt = gt.total_boxes()
    total_pred = pred.total_boxes()
    if total_gt + total_pred == 0:
        raise UndefinedMetricError("IDF1 is undefined on empty sequences")

    gt_ids = sorted(gt.all_ids(), key=str)
    pred_ids = sorted(pred.all_ids(), key=str)
    overlap = np.zeros((len(gt_ids), len(pred_ids)))
    g_index = {g: i for i, g in enumerate(gt_ids)}
    p_index = {p: j for j, p in enumerate(pred_ids)}
    for gt_frame, pred_frame in zip(gt.frames, pred.frames):
        ious = iou_matrix(gt_frame, pred_frame)
        for gi, g in enumerate(gt_frame):
            for pj, p in enumerate(pred_frame):
                if ious[gi, pj] >= alpha:
                    overlap[g_index[g.track_id], p_index[p.track_id]] += 1

    idtp = 0
    if overlap.size:
        rows, cols = linear_sum_assignment(-overlap)
        idtp = int(overlap[rows, cols].sum())
    return 2.0 * idtp / (total_gt + total_pred)


@dataclass(frozen=True)
class DetectionMetrics:
    ap50: float
    ap75: float
    ap_50_95: float
    ar: float
    f1: float


def _ap_101(recalls: np.ndarray, precisions: np.ndarray) -> float:
    if len(recalls) == 0:
        return 0.0
    # Precision envelope, then sample 101 evenly spaced recall levels.
    prec = precisions.copy()
    for i in range(len(prec) - 2, -1, -1):
        prec[i] = max(prec[i], prec[i + 1])
    levels = np.linspace(0.0, 1.0, 101)
    idx = np.searchsorted(recalls, levels, side="left")
    sampled = np.where(idx < len(prec), prec[np.minimum(idx, len(prec) - 1)], 0.0)
    return float(sampled.mean())


def detection_ap_ar(gt: TrackSequence, pred: TrackSequence,
                    max_dets: int = MAX_DETECTIONS_PER_IMAGE) -> DetectionMetrics:
    """COCO-style AP/AR/F1 for the boxes, ignoring identities."""
    _check_frames(gt, pred)
    total_gt = gt.total_boxes()
    if total_gt == 0:
        raise UndefinedMetricError("AP/AR are undefined without ground-truth boxes")

    # Per frame, detections sorted by descending confidence (stable), capped.
    frames = []
    for gt_frame, pred_frame in zip(gt.frames, pred.frames):
        order = sorted(range(len(pred_frame)), key=lambda i: -pred_frame[i].confidence)
        order = order[:max_dets]
        dets = [pred_frame[i] for i in order]
        ious = iou_matrix(dets, gt_frame)
        frames.append((len(gt_frame), dets, ious))

    aps = {}
    recalls_at = {}
    f1_best = 0.0
    for tau in DETECTION_IOU_GRID:
        confs = []
        flags = []
        matched = 0
        for n_gt, dets, ious in frames:
            taken = [False] * n_gt
            for i, det in enumerate(dets):
                best_j = -1
                best_iou = tau
                for j in range(n_gt):
                    if taken[j]:
                        continue
                    v = ious[i, j]
                    if v >= best_iou:
                        best_iou = v
                        best_j = j
                confs.append(det.confidence)
                if best_j >= 0:
                    taken[best_j] = True
                    flags.append(1)
                    matched += 1
                else:
                    flags.append(0)
        recalls_at[tau] = matched / total_gt
        if confs:
            order = np.argsort(-np.asarray(confs), kind="stable")
            tp_cum = np.cumsum(np.asarray(flags, dtype=np.float64)[order])
            ranks = np.arange(1, len(order) + 1, dtype=np.float64)
            precision = tp_cum / ranks
            recall = tp_cum / total_gt
            aps[tau] = _ap_101(recall, precision)
            if tau == DEFAULT_ALPHA:
                f1_vals = 2.0 * precision * recall / np.maximum(precision + recall, 1e-12)
                f1_best = float(f1_vals.max())
        else:
            aps[tau] = 0.0

    return DetectionMetrics(
        ap50=aps[0.5],
        ap75=aps[0.75],
        ap_50_95=float(np.mean([aps[t] for t in DETECTION_IOU_GRID])),
        ar=float(np.mean([recalls_at[t] for t in DETECTION_IOU_GRID])),
        f1=f1_best,
    )


@dataclass
class MetricReport:
    """Full evaluation summary plus the per-frame tallies behind it."""

    mota: float
    idf1: float
    hota: float
    hota_alpha: dict[float, float]
    id_switches: int
    detection: DetectionMetrics
    frame_tallies: list[FrameTally]
    alpha: float

    def __post_init__(self):
        eps = 1e-12
        if self.mota > 1.0 + eps:
            raise ValidationError(f"MOTA cannot exceed 1, got {self.mota}")
        for name, v in [("IDF1", self.idf1), ("HOTA", self.hota)]:
            if not (-eps <= v <= 1.0 + eps):
                raise ValidationError(f"{name} out of [0, 1]: {v}")
        if self.id_switches < 0:
            raise ValidationError("negative id switch count")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "MOTA": self.mota,
            "IDF1": self.idf1,
            "HOTA": self.hota,
            "HOTA_alpha": {f"{a:.2f}": v for a, v in sorted(self.hota_alpha.items())},
            "IDs": self.id_switches,
            "AP50": self.detection.ap50,
            "AP75": self.detection.ap75,
            "AP50_95": self.detection.ap_50_95,
            "AR": self.detection.ar,
            "F1": self.detection.f1,
            "frames": [
                {"TP": t.tp, "FP": t.fp, "FN": t.fn, "IDs": t.ids, "GT": t.gt}
                for t in self.frame_tallies
            ],
        }

    def text_table(self, method: str = "result") -> str:
        header = f"{'Method':<16}{'MOTA':>8}{'IDF1':>8}{'HOTA':>8}{'IDs':>8}"
        row = (f"{method:<16}{self.mota:>8.3f}{self.idf1:>8.3f}"
               f"{self.hota:>8.3f}{self.id_switches:>8d}")
        return header + "\n" + row


def evaluate(gt: TrackSequence, pred: TrackSequence,
             alpha: float = DEFAULT_ALPHA) -> MetricReport:
    """Evaluate a tracker output against ground truth."""
    mota_value, tallies = mota(gt, pred, alpha)
    per_alpha = hota_alphas(gt, pred)
    return MetricReport(
        mota=mota_value,
        idf1=idf1(gt, pred, alpha),
        hota=sum(per_alpha.values()) / len(per_alpha),
        hota_alpha=per_alpha,
        id_switches=sum(t.ids for t in tallies),
        detection=detection_ap_ar(gt, pred),
        frame_tallies=tallies,
        alpha=alpha,
    )
