"""
Action tubes and the local graphs built over them.

A tube links one object's detections through a video. Local graphs take
the tubes visible in a window of frames and connect them with one of three
topologies:

    fully_connected   every tube pair
    scene             every tube to an abstract scene node
    scene_same_label  the scene star plus every pair of tubes of one class
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .file_processor import frame_number
from .geometry import iou_aa_matrix
from .logger import log_info, log_warning
from .models import BoxAA, Frame


TOPOLOGIES = ('fully_connected', 'scene', 'scene_same_label')
LINK_METHODS = ('greedy', 'hungarian')
WINDOW_LENGTHS = (12, 18, 24, 30)
SCENE = "scene"
_DIGITS = re.compile(r'\d+')


@dataclass(frozen=True)
class TubeEntry:
    frame_index: int
    box: BoxAA
    score: float


@dataclass(frozen=True)
class Tube:
    tube_id: int
    class_id: int
    entries: Tuple[TubeEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def start(self) -> int:
        return self.entries[0].frame_index

    @property
    def end(self) -> int:
        return self.entries[-1].frame_index

    def frame_indices(self) -> List[int]:
        return [entry.frame_index for entry in self.entries]

    def intersects(self, start: int, length: int) -> bool:
        return any(start <= entry.frame_index < start + length for entry in self.entries)


class _OpenTube:
    def __init__(self, tube_id: int, class_id: int):
        self.tube_id = tube_id
        self.class_id = class_id
        self.entries: List[TubeEntry] = []

    @property
    def last(self) -> TubeEntry:
        return self.entries[-1]

    def freeze(self) -> Tube:
        return Tube(self.tube_id, self.class_id, tuple(self.entries))


def _assign_greedy(ious: np.ndarray, iou_threshold: float) -> List[Tuple[int, int]]:
    """Rows (tubes by id) claim in turn the best unclaimed column."""
    pairs = []
    claimed = np.zeros(ious.shape[1], dtype=bool)
    for row in range(ious.shape[0]):
        candidates = np.where(claimed, -1.0, ious[row])
        if len(candidates) == 0:
            break
        col = int(np.argmax(candidates))
        if candidates[col] >= iou_threshold:
            claimed[col] = True
            pairs.append((row, col))
    return pairs


def _assign_hungarian(ious: np.ndarray, iou_threshold: float) -> List[Tuple[int, int]]:
    if ious.size == 0:
        return []
    row_ind, col_ind = linear_sum_assignment(1.0 - ious)
    return sorted((int(r), int(c)) for r, c in zip(row_ind, col_ind) if ious[r, c] >= iou_threshold)


def link_tubes(frames: Sequence[Frame], iou_threshold: float = 0.3, max_gap: int = 2,
               method: str = 'greedy') -> List[Tube]:
    """
    Link per-frame detections into tubes, class by class.

    Frame i of the sequence has frame index i (see frame_timeline for label
    directories with skipped frames). At each frame the tubes still
    open for a class (no more than max_gap frames missed) are matched to that
    class's detections by IoU against their last box. Unmatched detections
    open new tubes; a tube that misses more than max_gap frames is closed.

    Args:
        frames: Frames in temporal order carrying BoxAA detections
        iou_threshold: Minimum IoU for a detection to extend a tube
        max_gap: Frames a tube may miss and still be extended
        method: 'greedy' (tubes in id order take their best detection) or
            'hungarian' (optimal assignment on 1 - IoU)

    Returns:
        List[Tube]: Tubes sorted by tube_id (ids in order of creation)
    """
    if method not in LINK_METHODS:
        raise ValidationError(f"Unknown linking method {method!r}; expected one of {', '.join(LINK_METHODS)}")
    if max_gap < 0:
        raise ValidationError(f"max_gap must be >= 0, got {max_gap}")
    assign = _assign_greedy if method == 'greedy' else _assign_hungarian

    open_tubes: Dict[int, List[_OpenTube]] = defaultdict(list)
    closed: List[_OpenTube] = []
    next_id = 0
    for index, frame in enumerate(frames):
        by_class: Dict[int, List[Tuple[BoxAA, float]]] = defaultdict(list)
        for ann in frame.annotations:
            if not isinstance(ann.geometry, BoxAA):
                raise ValidationError(f"Frame {frame.id}: tubes link axis-aligned boxes only")
            by_class[ann.class_id].append((ann.geometry, 1.0 if ann.score is None else ann.score))

        for class_id in sorted(set(open_tubes) | set(by_class)):
            alive = []
            for tube in open_tubes[class_id]:
                (alive if index - tube.last.frame_index - 1 <= max_gap else closed).append(tube)
            dets = sorted(by_class.get(class_id, []), key=lambda d: -d[1])
            ious = iou_aa_matrix([t.last.box for t in alive], [box for box, _ in dets]).reshape(len(alive), len(dets))
            taken = set()
            for row, col in assign(ious, iou_threshold):
                box, score = dets[col]
                alive[row].entries.append(TubeEntry(index, box, score))
                taken.add(col)
            for col, (box, score) in enumerate(dets):
                if col in taken:
                    continue
                tube = _OpenTube(next_id, class_id)
                tube.entries.append(TubeEntry(index, box, score))
                alive.append(tube)
                next_id += 1
            open_tubes[class_id] = alive

    everything = closed + [tube for tubes in open_tubes.values() for tube in tubes]
    tubes = sorted((tube.freeze() for tube in everything), key=lambda t: t.tube_id)
    log_info(f"Linked {sum(len(t) for t in tubes)} detections over {len(frames)} frames into {len(tubes)} tubes")
    return tubes


def frame_timeline(frames: Sequence[Frame]) -> List[Frame]:
    """
    Place frames at the index given by the number in their ids.

    Frame ids are read as <prefix><number>; the lowest number becomes index 0
    and numbers with no frame become empty frames, so a detector that skips
    empty frames keeps its gaps. When some id carries no number the frames
    are kept in the given order.

    Raises:
        ValidationError: Two frame ids carry the same number
    """
    numbers = [frame_number(frame.id) for frame in frames]
    if not frames or any(n is None for n in numbers):
        if frames:
            log_warning("Frame ids without a frame number; using file order as the timeline")
        return list(frames)
    by_number: Dict[int, Frame] = {}
    for number, frame in zip(numbers, frames):
        if number in by_number:
            raise ValidationError(f"Frames {by_number[number].id} and {frame.id} share frame number {number}")
        by_number[number] = frame
    first, last = min(by_number), max(by_number)
    template = frames[numbers.index(first)]
    digits = _DIGITS.findall(template.id)[-1]
    prefix, _, suffix = template.id.rpartition(digits)

    timeline = []
    for number in range(first, last + 1):
        frame = by_number.get(number)
        if frame is None:
            frame = Frame(f"{prefix}{number:0{len(digits)}d}{suffix}", template.image_width,
                          template.image_height, template.source)
        timeline.append(frame)
    if len(timeline) > len(frames):
        log_info(f"Filled {len(timeline) - len(frames)} frames without detections between {first} and {last}")
    return timeline


@dataclass(frozen=True)
class LocalGraph:
    """
    Graph over the tubes visible in one window.

    Node i < len(tube_ids) is tube tube_ids[i]; the scene node, when present,
    comes last. Edges are undirected index pairs (i < j), sorted.
    """

    window: Tuple[int, int]
    topology: str
    tube_ids: Tuple[int, ...]
    class_ids: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]

    @property
    def has_scene(self) -> bool:
        return self.topology != 'fully_connected'

    @property
    def node_count(self) -> int:
        return len(self.tube_ids) + (1 if self.has_scene else 0)

    def node_labels(self) -> List[str]:
        labels = [f"tube:{tube_id}" for tube_id in self.tube_ids]
        return labels + [SCENE] if self.has_scene else labels

    def adjacency(self) -> np.ndarray:
        matrix = np.zeros((self.node_count, self.node_count), dtype=np.int8)
        for i, j in self.edges:
            matrix[i, j] = matrix[j, i] = 1
        return matrix

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window": {"start": self.window[0], "length": self.window[1]},
            "topology": self.topology,
            "nodes": self.node_labels(),
            "class_ids": list(self.class_ids),
            "edges": [list(edge) for edge in self.edges],
            "adjacency": self.adjacency().tolist(),
        }


def build_local_graph(tubes: Sequence[Tube], window: Tuple[int, int], topology: str) -> LocalGraph:
    """
    Build one local graph.

    Args:
        tubes: Candidate tubes
        window: (start frame, length)
        topology: One of fully_connected, scene, scene_same_label

    Raises:
        ValidationError: Unknown topology or non-positive window length
    """
    if topology not in TOPOLOGIES:
        raise ValidationError(f"Unknown topology {topology!r}; expected one of {', '.join(TOPOLOGIES)}")
    start, length = window
    if length <= 0:
        raise ValidationError(f"Window length must be positive, got {length}")

    members = sorted((t for t in tubes if t.intersects(start, length)), key=lambda t: t.tube_id)
    n = len(members)
    edges = set()
    if topology == 'fully_connected':
        edges.update(combinations(range(n), 2))
    else:
        edges.update((i, n) for i in range(n))
        if topology == 'scene_same_label':
            edges.update((i, j) for i, j in combinations(range(n), 2)
                         if members[i].class_id == members[j].class_id)
    return LocalGraph((start, length), topology, tuple(t.tube_id for t in members),
                      tuple(t.class_id for t in members), tuple(sorted(edges)))


def build_local_graphs(tubes: Sequence[Tube], length: int, topology: str, stride: Optional[int] = None,
                       n_frames: Optional[int] = None) -> List[LocalGraph]:
    """
    Slide a window over the video and build a graph per position.

    Args:
        stride: Window step (default: length, non-overlapping windows)
        n_frames: Video length (default: one past the last tube frame)
    """
    stride = length if stride is None else stride
    if length <= 0 or stride <= 0:
        raise ValidationError("Window length and stride must be positive")
    if n_frames is None:
        n_frames = max((t.end for t in tubes), default=-1) + 1
    return [build_local_graph(tubes, (start, length), topology) for start in range(0, n_frames, stride)]


def tubes_to_dict(tubes: Sequence[Tube], video_id: str) -> Dict[str, Any]:
    """Tubes document for one video."""
    return {
        "video_id": video_id,
        "tubes": [
            {
                "tube_id": tube.tube_id,
                "class_id": tube.class_id,
                "entries": [
                    {"frame_index": e.frame_index,
                     "box": [e.box.x_min, e.box.y_min, e.box.x_max, e.box.y_max],
                     "score": e.score}
                    for e in tube.entries
                ],
            }
            for tube in tubes
        ],
    }


def tubes_from_dict(data: Mapping[str, Any]) -> List[Tube]:
    """Tubes back from a tubes document."""
    try:
        tubes = []
        for item in data["tubes"]:
            entries = tuple(TubeEntry(int(e["frame_index"]), BoxAA(*(float(v) for v in e["box"])), float(e["score"]))
                            for e in item["entries"])
            tubes.append(Tube(int(item["tube_id"]), int(item["class_id"]), entries))
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"Malformed tubes document: {e}")
    return sorted(tubes, key=lambda t: t.tube_id)


def graphs_to_dict(graphs_by_length: Mapping[int, Sequence[LocalGraph]], video_id: str, topology: str,
                   stride: Optional[int] = None) -> Dict[str, Any]:
    return {
        "video_id": video_id,
        "topology": topology,
        "stride": stride,
        "windows": {str(length): [graph.to_dict() for graph in graphs]
                    for length, graphs in sorted(graphs_by_length.items())},
    }
