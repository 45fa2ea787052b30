"""
Train/test splitting and dataset statistics.

Splits use numpy's default generator (PCG64) seeded with the split seed:
the frame positions are drawn with rng.permutation and the first
floor(ratio * n) become the training side. With stratification each source
(in sorted order) draws its own permutation from the same generator.
Both sides keep the dataset's frame order.
"""

import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from .errors import ValidationError
from .logger import log_info
from .models import Dataset
from .report_io import write_json_document, write_text


TRAIN_MANIFEST = "train.txt"
TEST_MANIFEST = "test.txt"
SUMMARY_NAME = "split_summary.json"
TOTAL = "total"


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float = 0.7
    seed: int = 0
    stratify_by_source: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_ratio < 1.0:
            raise ValidationError(f"train_ratio must lie in (0, 1), got {self.train_ratio}")


def _train_count(n: int, ratio: float) -> int:
    # guard against 0.7 * 10 evaluating to 6.999...
    return int(math.floor(ratio * n + 1e-9))


def split(dataset: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    """
    Random train/test partition.

    Returns:
        tuple: (train, test), disjoint and together covering the dataset

    Raises:
        ValidationError: Fewer than two frames, or a side would be empty
    """
    n = len(dataset)
    if n < 2:
        raise ValidationError(f"Need at least 2 frames to split, got {n}")
    rng = np.random.default_rng(spec.seed)

    train_positions: List[int] = []
    if spec.stratify_by_source:
        groups: Dict[str, List[int]] = defaultdict(list)
        for position, frame in enumerate(dataset.frames):
            groups[frame.source].append(position)
        for source in sorted(groups):
            members = np.array(groups[source])
            chosen = members[rng.permutation(len(members))[:_train_count(len(members), spec.train_ratio)]]
            train_positions.extend(int(p) for p in chosen)
    else:
        train_positions = [int(p) for p in rng.permutation(n)[:_train_count(n, spec.train_ratio)]]

    if not 0 < len(train_positions) < n:
        raise ValidationError(f"Ratio {spec.train_ratio} leaves one side of a {n}-frame split empty")
    selected = np.zeros(n, dtype=bool)
    selected[train_positions] = True
    frames = dataset.frames
    train = Dataset(dataset.catalog, tuple(f for f, s in zip(frames, selected) if s))
    test = Dataset(dataset.catalog, tuple(f for f, s in zip(frames, selected) if not s))
    log_info(f"Split {n} frames into {len(train)} train / {len(test)} test (seed {spec.seed})")
    return train, test


def _per_source(dataset: Dataset) -> Dict[str, int]:
    return dict(sorted(Counter(frame.source for frame in dataset.frames).items()))


def write_split_manifests(train: Dataset, test: Dataset, spec: SplitSpec, output_dir: str) -> List[str]:
    """Write train.txt, test.txt (one frame id per line) and the JSON summary."""
    written = [
        write_text(os.path.join(output_dir, TRAIN_MANIFEST), "".join(fid + "\n" for fid in train.frame_ids)),
        write_text(os.path.join(output_dir, TEST_MANIFEST), "".join(fid + "\n" for fid in test.frame_ids)),
    ]
    written.append(write_json_document(os.path.join(output_dir, SUMMARY_NAME), "split", {
        "train_ratio": spec.train_ratio,
        "seed": spec.seed,
        "stratify_by_source": spec.stratify_by_source,
        "generator": "numpy.random.default_rng(seed).permutation",
        "train": {"frames": len(train), "per_source": _per_source(train)},
        "test": {"frames": len(test), "per_source": _per_source(test)},
    }))
    return written


@dataclass(frozen=True)
class DatasetStats:
    """
    Frame and instance counts grouped by source.

    Attributes:
        class_names: Catalog names, in id order
        frames: source -> frame count
        instances: source -> per-class instance counts (catalog order)
    """

    class_names: Tuple[str, ...]
    frames: Dict[str, int]
    instances: Dict[str, Tuple[int, ...]]

    @property
    def total_frames(self) -> int:
        return sum(self.frames.values())

    @property
    def total_instances(self) -> Tuple[int, ...]:
        totals = [0] * len(self.class_names)
        for counts in self.instances.values():
            totals = [a + b for a, b in zip(totals, counts)]
        return tuple(totals)

    def to_table(self) -> str:
        """Aligned text table: one row per source plus a total row."""
        header = ["Source", "Frames"] + list(self.class_names) + ["Instances"]
        body = []
        for source in self.frames:
            counts = self.instances[source]
            body.append([source or "-", str(self.frames[source])] + [str(c) for c in counts] + [str(sum(counts))])
        totals = self.total_instances
        body.append([TOTAL, str(self.total_frames)] + [str(c) for c in totals] + [str(sum(totals))])
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = [" | ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                            for i, (cell, w) in enumerate(zip(record, widths))) for record in [header] + body]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classes": list(self.class_names),
            "sources": {
                source: {"frames": self.frames[source],
                         "instances": dict(zip(self.class_names, self.instances[source]))}
                for source in self.frames
            },
            "total": {"frames": self.total_frames,
                      "instances": dict(zip(self.class_names, self.total_instances))},
        }


def stats(dataset: Dataset) -> DatasetStats:
    """Per-source frame counts and per-source, per-class instance counts."""
    names = tuple(dataset.catalog.names)
    frames: Dict[str, int] = Counter()
    instances: Dict[str, List[int]] = defaultdict(lambda: [0] * len(names))
    for frame in dataset.frames:
        frames[frame.source] += 1
        counts = instances[frame.source]
        for ann in frame.annotations:
            counts[ann.class_id] += 1
    sources = sorted(frames)
    return DatasetStats(names, {s: frames[s] for s in sources}, {s: tuple(instances[s]) for s in sources})
