"""
Detection scoring: greedy matching, precision/recall/F1, per-class AP and
mAP at one IoU threshold and averaged over 0.50:0.05:0.95.

Precision is TP / (TP + FP) and recall TP / (TP + FN). Some write-ups print
the two with FN and FP swapped; the standard orientation is used here.

The IoU kernel is a parameter, so the same code scores axis-aligned,
rotated and 3D boxes.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .geometry import IouFn, iou_matrix
from .logger import log_info, log_warning
from .models import Annotation, Dataset


INTERP_MODES = ('coco101', 'allpoints', 'voc11')
DEFAULT_THRESHOLDS = tuple(float(t) for t in np.linspace(.5, 0.95, int(np.round((0.95 - .5) / .05)) + 1))
RECALL_POINTS = np.linspace(.0, 1.00, int(np.round((1.00 - .0) / .01)) + 1)


@dataclass(frozen=True)
class MatchResult:
    """
    Matching outcome for one frame and class.

    Attributes:
        flags: True for TP, False for FP, in descending-confidence order
        scores: Detection scores in the same order
        fn: Ground truths left unmatched
        iou_threshold: Threshold the match used
    """

    flags: np.ndarray
    scores: np.ndarray
    fn: int
    iou_threshold: float

    @property
    def tp(self) -> int:
        return int(np.sum(self.flags))

    @property
    def fp(self) -> int:
        return int(len(self.flags) - np.sum(self.flags))


def _rank(detections: Sequence[Annotation]) -> np.ndarray:
    for index, det in enumerate(detections):
        if det.score is None:
            raise ValidationError(f"Detection {index} has no confidence score")
    scores = np.array([det.score for det in detections], dtype=float)
    return np.argsort(-scores, kind='stable')


def _greedy(ious: np.ndarray, iou_threshold: float) -> Tuple[np.ndarray, int]:
    """ious rows are detections already in rank order, columns ground truths."""
    n_dets, n_gts = ious.shape
    flags = np.zeros(n_dets, dtype=bool)
    if n_gts == 0:
        return flags, 0
    taken = np.zeros(n_gts, dtype=bool)
    for row in range(n_dets):
        candidates = np.where(taken, -1.0, ious[row])
        best = int(np.argmax(candidates))
        if candidates[best] >= iou_threshold:
            taken[best] = True
            flags[row] = True
    return flags, int(n_gts - taken.sum())


def match(gts: Sequence[Annotation], dets: Sequence[Annotation], iou_fn: IouFn,
          iou_threshold: float = 0.5) -> MatchResult:
    """
    Greedy matching of one frame's detections of one class.

    Detections are visited by descending score (stable for ties); each takes
    the unmatched ground truth with the highest IoU if that IoU reaches the
    threshold. Equal IoUs resolve to the earlier ground truth.

    Raises:
        ValidationError: A detection has no score
    """
    order = _rank(dets)
    ranked = [dets[i] for i in order]
    ious = iou_matrix([d.geometry for d in ranked], [g.geometry for g in gts], iou_fn)
    flags, fn = _greedy(ious.reshape(len(ranked), len(gts)), iou_threshold)
    scores = np.array([d.score for d in ranked], dtype=float)
    return MatchResult(flags, scores, fn, iou_threshold)


def prf1(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    """
    Precision, recall and F1 from raw counts; any 0/0 ratio is 0.

    Raises:
        ValidationError: A count is negative
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise ValidationError(f"Counts must be non-negative, got tp={tp} fp={fp} fn={fn}")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray

    @classmethod
    def from_flags(cls, flags: Sequence[bool], n_gts: int) -> PRCurve:
        """Cumulative curve from TP/FP flags already sorted by descending confidence."""
        if n_gts <= 0:
            raise ValidationError("A precision/recall curve needs at least one ground truth")
        flags = np.asarray(flags, dtype=bool)
        tp = np.cumsum(flags)
        fp = np.cumsum(~flags)
        recall = tp / float(n_gts)
        precision = tp / np.maximum(tp + fp, np.finfo(np.float64).eps)
        return cls(recall, precision)

    def __len__(self) -> int:
        return len(self.recall)


def average_precision(curve: PRCurve, method: str = 'coco101') -> float:
    """
    Area under the interpolated precision/recall curve.

    Args:
        curve: Curve from confidence-ranked flags
        method: 'coco101' samples the precision envelope at recall 0.00..1.00
            step 0.01; 'allpoints' integrates the envelope at every recall
            change; 'voc11' averages the best precision at recall 0.0..1.0 step 0.1

    Returns:
        float: AP in [0, 1]
    """
    if method not in INTERP_MODES:
        raise ValidationError(f"Unknown interpolation {method!r}; expected one of {', '.join(INTERP_MODES)}")
    rec, prec = curve.recall, curve.precision
    if len(rec) == 0:
        return 0.0

    if method == 'voc11':
        ap = 0.
        for t in np.arange(0., 1.1, 0.1):
            if np.sum(rec >= t) == 0:
                p = 0
            else:
                p = np.max(prec[rec >= t])
            ap += p / 11.
        return float(ap)

    if method == 'allpoints':
        mrec = np.concatenate(([0.], rec, [1.]))
        mpre = np.concatenate(([0.], prec, [0.]))
        mpre = np.maximum.accumulate(mpre[::-1])[::-1]
        i = np.where(mrec[1:] != mrec[:-1])[0]
        return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))

    envelope = np.maximum.accumulate(prec[::-1])[::-1]
    inds = np.searchsorted(rec, RECALL_POINTS, side='left')
    q = np.zeros(len(RECALL_POINTS))
    valid = inds < len(rec)
    q[valid] = envelope[inds[valid]]
    return float(np.mean(q))


def mean_average_precision(aps: Sequence[float]) -> float:
    """Mean of per-class APs."""
    if len(aps) == 0:
        raise ValidationError("mAP needs at least one class AP")
    values = np.asarray(aps, dtype=float)
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise ValidationError("Average precision values must lie in [0, 1]")
    return float(np.mean(values))


@dataclass(frozen=True)
class ClassRow:
    class_id: int
    name: str
    gts: int
    dets: int
    recall: float
    precision: float
    ap: float
    ap_50_95: float
    has_gt: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "class_id": self.class_id, "name": self.name, "gts": self.gts, "dets": self.dets,
            "recall": self.recall, "precision": self.precision, "ap": self.ap,
            "ap_50_95": self.ap_50_95, "has_gt": self.has_gt,
        }


def _fmt(value: float) -> str:
    return f"{value:.3f}"


@dataclass(frozen=True)
class EvalReport:
    """
    Per-class rows plus the aggregates.

    map_50 is always the mean AP at IoU 0.5 and map_at_iou the mean AP at
    iou_threshold, which also scores the rows; the two agree at the default
    threshold. Classes without ground truth are left out of the means unless
    strict.
    """

    rows: Tuple[ClassRow, ...]
    map_50: float
    map_50_95: float
    f1: float
    iou_threshold: float = 0.5
    interp: str = 'coco101'
    strict: bool = False
    f1_score_cut: Optional[float] = None
    map_at_iou: Optional[float] = None

    def __post_init__(self):
        if self.map_at_iou is None:
            object.__setattr__(self, 'map_at_iou', self.map_50)

    def row(self, name: str) -> ClassRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_table(self, per_class: bool = True) -> str:
        """Aligned text table: Classes | Gts | Dets | Recall | Average Precision, then mAP rows."""
        header = ("Classes", "Gts", "Dets", "Recall", "Average Precision")
        body = []
        if per_class:
            for row in self.rows:
                ap = _fmt(row.ap) if row.has_gt or self.strict else "no gt"
                body.append((row.name, str(row.gts), str(row.dets), _fmt(row.recall), ap))
        body.append(("mAP", "", "", "", _fmt(self.map_at_iou)))
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = []
        for index, record in enumerate([header] + body):
            cells = [record[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(record[1:], widths[1:])]
            lines.append(" | ".join(cells).rstrip())
            if index == 0:
                lines.append("-+-".join("-" * w for w in widths))
        lines.append("")
        if self.iou_threshold != 0.5:
            lines.append(f"mAP@0.5: {_fmt(self.map_50)}")
        lines.append(f"mAP@{self.iou_threshold:g}: {_fmt(self.map_at_iou)}")
        lines.append(f"mAP@0.5:0.95: {_fmt(self.map_50_95)}")
        lines.append(f"F1: {_fmt(self.f1)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [row.to_dict() for row in self.rows],
            "map_50": self.map_50,
            "map_at_iou": self.map_at_iou,
            "map_50_95": self.map_50_95,
            "f1": self.f1,
            "f1_score_cut": self.f1_score_cut,
            "iou_threshold": self.iou_threshold,
            "interp": self.interp,
            "strict": self.strict,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvalReport:
        try:
            rows = tuple(ClassRow(**row) for row in data["rows"])
            return cls(rows, float(data["map_50"]), float(data["map_50_95"]), float(data["f1"]),
                       float(data.get("iou_threshold", 0.5)), data.get("interp", 'coco101'),
                       bool(data.get("strict", False)), data.get("f1_score_cut"), data.get("map_at_iou"))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed evaluation report: {e}")


@dataclass
class _ClassPool:
    """Per-class matching material collected over frames."""
    n_gts: int = 0
    scores: List[np.ndarray] = field(default_factory=list)
    ious: List[np.ndarray] = field(default_factory=list)


def _group_by_class(annotations: Sequence[Annotation]) -> Dict[int, List[Annotation]]:
    groups: Dict[int, List[Annotation]] = defaultdict(list)
    for ann in annotations:
        groups[ann.class_id].append(ann)
    return groups


def _best_f1(scores: np.ndarray, flags: np.ndarray, n_gts: int) -> Tuple[float, Optional[float]]:
    """Best F1 over score cuts (keep detections with score >= cut)."""
    if len(scores) == 0 or n_gts == 0:
        return 0.0, None
    order = np.argsort(-scores, kind='stable')
    scores, flags = scores[order], flags[order]
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    # a cut can only fall after the last detection of a run of equal scores
    ends = np.append(scores[1:] != scores[:-1], True)
    tp, fp = tp[ends], fp[ends]
    fn = n_gts - tp
    f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    best = int(np.argmax(f1))
    return float(f1[best]), float(scores[ends][best])


def evaluate(dataset_gt: Dataset, detections: Dataset, iou_fn: IouFn,
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS, iou_threshold: float = 0.5,
             interp: str = 'coco101', strict: bool = False) -> EvalReport:
    """
    Score detections against ground truth.

    Args:
        dataset_gt: Ground-truth frames
        detections: Detection frames (scored annotations) over the same catalog
        iou_fn: IoU kernel matching the geometry of both datasets
        thresholds: IoU thresholds averaged into map_50_95
        iou_threshold: Primary threshold for rows, map_at_iou and F1
        interp: AP interpolation mode
        strict: Count classes without ground truth as AP 0 in the means

    Returns:
        EvalReport: Rows in catalog order

    Raises:
        ValidationError: Catalogs differ, or a detection frame is absent from the ground truth
    """
    if interp not in INTERP_MODES:
        raise ValidationError(f"Unknown interpolation {interp!r}; expected one of {', '.join(INTERP_MODES)}")
    if not 0.0 < iou_threshold <= 1.0 or any(not 0.0 < t <= 1.0 for t in thresholds):
        raise ValidationError("IoU thresholds must lie in (0, 1]")
    if detections.catalog.names != dataset_gt.catalog.names:
        raise ValidationError("Ground truth and detections use different class catalogs")
    unknown = sorted(fid for fid in detections.frame_ids if not dataset_gt.has_frame(fid))
    if unknown:
        raise ValidationError(f"Detections reference frames absent from the ground truth: {', '.join(unknown[:5])}")

    catalog = dataset_gt.catalog
    pools = {entry.class_id: _ClassPool() for entry in catalog}
    for frame_id in sorted(dataset_gt.frame_ids):
        gts_by_class = _group_by_class(dataset_gt.frame(frame_id).annotations)
        dets_by_class = _group_by_class(detections.frame(frame_id).annotations) if detections.has_frame(frame_id) else {}
        for class_id in sorted(set(gts_by_class) | set(dets_by_class)):
            gts = gts_by_class.get(class_id, [])
            dets = dets_by_class.get(class_id, [])
            pool = pools[class_id]
            pool.n_gts += len(gts)
            if not dets:
                continue
            order = _rank(dets)
            ranked = [dets[i] for i in order]
            pool.scores.append(np.array([d.score for d in ranked], dtype=float))
            ious = iou_matrix([d.geometry for d in ranked], [g.geometry for g in gts], iou_fn)
            pool.ious.append(ious.reshape(len(ranked), len(gts)))

    all_thresholds = list(thresholds)
    rows, aps_50 = [], []
    pooled_scores, pooled_flags, pooled_gts = [], [], 0
    for entry in catalog:
        pool = pools[entry.class_id]
        scores = np.concatenate(pool.scores) if pool.scores else np.zeros(0)
        order = np.argsort(-scores, kind='stable')

        def ap_at(threshold: float) -> Tuple[float, np.ndarray]:
            flags = np.concatenate([_greedy(ious, threshold)[0] for ious in pool.ious]) if pool.ious \
                else np.zeros(0, dtype=bool)
            if pool.n_gts == 0:
                return 0.0, flags
            return average_precision(PRCurve.from_flags(flags[order], pool.n_gts), interp), flags

        ap, flags = ap_at(iou_threshold)
        aps_50.append(ap if iou_threshold == 0.5 else ap_at(0.5)[0])
        ap_50_95 = float(np.mean([ap_at(t)[0] for t in all_thresholds])) if all_thresholds else ap
        tp = int(flags.sum())
        _, recall, _ = prf1(tp, len(flags) - tp, pool.n_gts - tp)
        precision = tp / len(flags) if len(flags) else 0.0
        rows.append(ClassRow(entry.class_id, entry.name, pool.n_gts, len(flags), recall, precision,
                             ap, ap_50_95, pool.n_gts > 0))
        if pool.n_gts > 0 or strict:
            pooled_scores.append(scores)
            pooled_flags.append(flags)
            pooled_gts += pool.n_gts

    counted = [i for i, row in enumerate(rows) if row.has_gt or strict]
    if not counted:
        log_warning("No class has ground truth; mAP reported as 0")
        map_50 = map_at_iou = map_50_95 = 0.0
    else:
        map_50 = mean_average_precision([aps_50[i] for i in counted])
        map_at_iou = mean_average_precision([rows[i].ap for i in counted])
        map_50_95 = mean_average_precision([rows[i].ap_50_95 for i in counted])
    f1, cut = _best_f1(np.concatenate(pooled_scores) if pooled_scores else np.zeros(0),
                       np.concatenate(pooled_flags) if pooled_flags else np.zeros(0, dtype=bool), pooled_gts)
    log_info(f"Evaluated {len(dataset_gt)} frames: mAP@0.5={map_50:.4f}, mAP@{iou_threshold:g}={map_at_iou:.4f}, "
             f"mAP@0.5:0.95={map_50_95:.4f}")
    return EvalReport(tuple(rows), map_50, map_50_95, f1, iou_threshold, interp, strict, cut, map_at_iou)


@dataclass(frozen=True)
class ComparisonTable:
    """Per-model x per-class AP matrix; NaN where a model has no row for a class."""

    models: Tuple[str, ...]
    classes: Tuple[str, ...]
    ap: np.ndarray
    map_50: Tuple[float, ...]

    def to_table(self) -> str:
        header = ["Model"] + list(self.classes) + ["mAP"]
        body = []
        for m, model in enumerate(self.models):
            cells = ["-" if math.isnan(v) else _fmt(v) for v in self.ap[m]]
            body.append([model] + cells + [_fmt(self.map_50[m])])
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = [" | ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                            for i, (cell, w) in enumerate(zip(record, widths))) for record in [header] + body]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "models": list(self.models),
            "classes": list(self.classes),
            "ap": [[None if math.isnan(v) else float(v) for v in row] for row in self.ap],
            "map_50": list(self.map_50),
        }


def compare_reports(reports: Mapping[str, EvalReport]) -> ComparisonTable:
    """Line several models' reports up by class name, models in the given order."""
    if not reports:
        raise ValidationError("Nothing to compare")
    classes: List[str] = []
    for report in reports.values():
        for row in report.rows:
            if row.name not in classes:
                classes.append(row.name)
    matrix = np.full((len(reports), len(classes)), np.nan)
    for m, report in enumerate(reports.values()):
        for row in report.rows:
            if row.has_gt or report.strict:
                matrix[m, classes.index(row.name)] = row.ap
    return ComparisonTable(tuple(reports), tuple(classes), matrix, tuple(r.map_50 for r in reports.values()))
