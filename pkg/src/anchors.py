"""
Auto-anchor generation: k-means over box width/height at the training
resolution, with the wh-ratio fitness as similarity.

Distance between a box and an anchor is 1 - ratio_metric, where
ratio_metric = min over w and h of min(b/a, a/b).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .geometry import letterbox
from .logger import log_debug, log_info, log_warning
from .models import BoxAA, Dataset


MIN_SIDE = 2.0
DEFAULT_RATIO_THRESHOLD = 4.0


@dataclass(frozen=True)
class AnchorSet:
    """
    Anchors grouped per detection level, fine to coarse.

    Attributes:
        levels: Per level, (w, h) pairs in pixels at img_size, sorted by area
        n_per_level: Anchors per level
        bpr: Best possible recall on the data the anchors were fitted to
        img_size: Training resolution the anchors are expressed at
        excluded: Degenerate boxes left out of clustering
        objective_history: Mean distance per k-means iteration of the kept run
    """

    levels: Tuple[Tuple[Tuple[float, float], ...], ...]
    n_per_level: int
    bpr: float
    img_size: int = 640
    excluded: int = 0
    objective_history: Tuple[float, ...] = ()

    def as_array(self) -> np.ndarray:
        """All anchors as a (k, 2) array, level-major."""
        return np.array([wh for level in self.levels for wh in level], dtype=float).reshape(-1, 2)

    def to_config_block(self) -> str:
        """Detector-config anchor block, one line per level with integer-rounded pairs."""
        lines = ["anchors:"]
        for index, level in enumerate(self.levels):
            pairs = ", ".join(f"{int(round(w))},{int(round(h))}" for w, h in level)
            lines.append(f"  - [{pairs}]  # P{3 + index}/{8 * 2 ** index}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "levels": [[[round(w, 4), round(h, 4)] for w, h in level] for level in self.levels],
            "n_per_level": self.n_per_level,
            "bpr": self.bpr,
            "img_size": self.img_size,
            "excluded": self.excluded,
            "iterations": max(0, len(self.objective_history) - 1),
        }


def collect_wh(dataset: Dataset, img_size: int = 640) -> Tuple[np.ndarray, int]:
    """
    Box widths and heights after letterbox scaling to img_size.

    Returns:
        tuple: ((N, 2) array of kept boxes, count of degenerate boxes excluded)
    """
    sizes: List[Tuple[float, float]] = []
    for frame in dataset.frames:
        if not frame.annotations:
            continue
        if not frame.has_dimensions:
            raise ValidationError(f"Frame {frame.id} has no image dimensions; cannot scale its boxes")
        scale = letterbox(frame.image_width, frame.image_height, (img_size, img_size)).scale
        for ann in frame.annotations:
            box = ann.geometry
            if not isinstance(box, BoxAA):
                raise ValidationError(f"Frame {frame.id}: anchors are fitted to axis-aligned boxes only")
            w, h = box.width, box.height
            if box.normalized:
                w, h = w * frame.image_width, h * frame.image_height
            sizes.append((w * scale, h * scale))
    wh = np.array(sizes, dtype=float).reshape(-1, 2)
    keep = (wh[:, 0] >= MIN_SIDE) & (wh[:, 1] >= MIN_SIDE)
    excluded = int(np.sum(~keep))
    if excluded:
        log_warning(f"Excluded {excluded} boxes smaller than {MIN_SIDE:g} px from anchor fitting")
    return wh[keep], excluded


def ratio_metric(wh: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """(N, K) matrix of min over dims of min(b/a, a/b)."""
    r = wh[:, None, :] / anchors[None, :, :]
    return np.minimum(r, 1.0 / r).min(axis=2)


def _objective(wh: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.mean(1.0 - ratio_metric(wh, centroids).max(axis=1)))


def _seed_plus_plus(wh: np.ndarray, k: int, rng: np.random.Generator,
                    initial: Optional[np.ndarray] = None) -> np.ndarray:
    """k-means++ seeding; rows of initial are kept and the rest are drawn."""
    n = len(wh)
    centroids = [] if initial is None else [row for row in np.asarray(initial, dtype=float)]
    if not centroids:
        centroids.append(wh[int(rng.integers(n))])
    while len(centroids) < k:
        distance = 1.0 - ratio_metric(wh, np.array(centroids)).max(axis=1)
        weights = distance ** 2
        total = weights.sum()
        if total <= 0.0:
            centroids.append(wh[int(rng.integers(n))])
        else:
            centroids.append(wh[int(rng.choice(n, p=weights / total))])
    return np.array(centroids, dtype=float)


def _lloyd(wh: np.ndarray, centroids: np.ndarray, max_iter: int = 300,
           tol: float = 1e-6) -> Tuple[np.ndarray, List[float]]:
    k = len(centroids)
    objective = _objective(wh, centroids)
    history = [objective]
    for _ in range(max_iter):
        assign = ratio_metric(wh, centroids).argmax(axis=1)
        updated = centroids.copy()
        for j in range(k):
            members = wh[assign == j]
            if len(members):
                updated[j] = members.mean(axis=0)
        new_objective = _objective(wh, updated)
        if new_objective > objective:
            break
        change = (objective - new_objective) / objective if objective > 0 else 0.0
        centroids, objective = updated, new_objective
        history.append(objective)
        if change < tol:
            break
    return centroids, history


def kmeans_wh(wh: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300,
              tol: float = 1e-6, initial: Optional[np.ndarray] = None) -> Tuple[np.ndarray, List[float]]:
    """
    k-means with k-means++ seeding and mean updates under the ratio distance.

    An update that would raise the objective is rejected and ends the run.

    Args:
        initial: Centroids to keep as the first seeds (warm start)

    Returns:
        tuple: ((k, 2) centroids, objective per iteration)
    """
    return _lloyd(wh, _seed_plus_plus(wh, k, rng, initial), max_iter, tol)


def _bpr(wh: np.ndarray, anchors: np.ndarray, ratio_threshold: float) -> float:
    r = wh[:, None, :] / anchors[None, :, :]
    worst = np.maximum(r, 1.0 / r).max(axis=2)
    return float(np.mean(worst.min(axis=1) < ratio_threshold))


def _fit_step(wh: np.ndarray, k: int, previous: np.ndarray, previous_bpr: float, rng: np.random.Generator,
              ratio_threshold: float, n_init: int, max_iter: int) -> Tuple[np.ndarray, List[float], float]:
    best = None
    for _ in range(max(1, n_init)):
        seeds = _seed_plus_plus(wh, k, rng, previous)
        centroids, history = _lloyd(wh, seeds, max_iter)
        if best is None or history[-1] < best[1][-1]:
            best = (centroids, history, seeds)
    centroids, history, seeds = best
    bpr = _bpr(wh, centroids, ratio_threshold)
    if bpr < previous_bpr:
        # seeds extend the previous anchors, so their coverage cannot be lower
        log_debug(f"k={k}: refined anchors lower BPR to {bpr:.4f}, keeping warm-start seeds")
        return seeds, [_objective(wh, seeds)], _bpr(wh, seeds, ratio_threshold)
    return centroids, history, bpr


def generate_anchors(dataset: Dataset, n_per_level: int = 3, levels: int = 3, img_size: int = 640,
                     seed: int = 0, ratio_threshold: float = DEFAULT_RATIO_THRESHOLD, n_init: int = 3,
                     max_iter: int = 300) -> AnchorSet:
    """
    Fit n_per_level * levels anchors to a dataset.

    Anchors are grown one per level at a time: each step warm-starts k-means
    from the previous step's anchors. A step whose refined anchors cover
    fewer boxes than the previous step keeps its seeds instead, so for a
    fixed seed BPR never drops as n_per_level grows.

    Args:
        dataset: Frames with image dimensions and BoxAA annotations
        n_per_level: Anchors per level (3 and 5 in the anchor ablation)
        levels: Detection levels
        img_size: Square training resolution boxes are letterboxed to
        seed: Seed of the numpy PCG64 generator driving k-means++ seeding
        ratio_threshold: Coverage threshold used for the stored BPR
        n_init: k-means++ restarts per step; the lowest final objective wins
        max_iter: Iteration cap per run

    Returns:
        AnchorSet: Centroids sorted by area and chunked into levels
    """
    if n_per_level < 1 or levels < 1:
        raise ValidationError("n_per_level and levels must be >= 1")
    k = n_per_level * levels
    wh, excluded = collect_wh(dataset, img_size)
    if len(wh) < k:
        raise ValidationError(f"Need at least {k} usable boxes to fit {k} anchors, got {len(wh)}")

    rng = np.random.default_rng(seed)
    centroids, history, bpr = np.empty((0, 2)), [], 0.0
    for step in range(1, n_per_level + 1):
        centroids, history, bpr = _fit_step(wh, step * levels, centroids, bpr, rng, ratio_threshold,
                                            n_init, max_iter)

    order = np.argsort(centroids[:, 0] * centroids[:, 1], kind='stable')
    ordered = centroids[order]
    grouped = tuple(
        tuple((float(w), float(h)) for w, h in ordered[i * n_per_level:(i + 1) * n_per_level])
        for i in range(levels)
    )
    log_info(f"Fitted {k} anchors on {len(wh)} boxes in {len(history) - 1} iterations, BPR {bpr:.4f}")
    return AnchorSet(grouped, n_per_level, bpr, img_size, excluded, tuple(history))


def best_possible_recall(anchors: AnchorSet, dataset: Dataset,
                         ratio_threshold: float = DEFAULT_RATIO_THRESHOLD) -> float:
    """
    Fraction of boxes whose best anchor keeps every side ratio below ratio_threshold.

    Boxes are scaled to the anchors' img_size; degenerate boxes are left out.
    """
    wh, _ = collect_wh(dataset, anchors.img_size)
    if len(wh) == 0:
        raise ValidationError("Cannot compute best possible recall on a dataset without boxes")
    return _bpr(wh, anchors.as_array(), ratio_threshold)
