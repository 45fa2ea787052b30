"""
Rotated-box label files: one "class_id cx cy w h theta [score]" line per box,
center and sides in pixels, theta in radians. One <frame id>.txt per frame.
"""

import math
import os
from typing import Dict, List, Optional, Sequence

from .errors import FormatError, StorageError, ValidationError
from .file_processor import frame_id_of, list_files
from .kitti_io import format_number
from .models import Annotation, BoxRot, ClassCatalog, Dataset, Frame
from .report_io import write_text
from .yolo_io import read_label_file


LABEL_EXT = ".txt"


def parse_rotated_labels(text: str, catalog: ClassCatalog, path: Optional[str] = None) -> List[Annotation]:
    """Parse rotated-box label lines of one frame."""
    annotations = []
    for record, line in enumerate(text.splitlines()):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (6, 7):
            raise FormatError(f"expected 6 or 7 fields, got {len(parts)}", path, record)
        try:
            class_id = int(parts[0])
            values = [float(v) for v in parts[1:]]
        except ValueError:
            raise FormatError(f"non-numeric field in {line!r}", path, record)
        if class_id not in catalog:
            raise FormatError(f"class id {class_id} not in catalog", path, record)
        if not all(math.isfinite(v) for v in values):
            raise FormatError(f"non-finite field in {line!r}", path, record)
        try:
            box = BoxRot(*values[:5])
            annotations.append(Annotation(class_id, box, values[5] if len(values) == 6 else None))
        except ValidationError as e:
            raise FormatError(str(e), path, record)
    return annotations


def write_rotated_labels(dataset: Dataset, directory: str) -> List[str]:
    """Write one rotated label file per frame; returns the paths."""
    written = []
    for frame in dataset.frames:
        lines = []
        for record, ann in enumerate(frame.annotations):
            box = ann.geometry
            if not isinstance(box, BoxRot):
                raise FormatError(f"rotated labels hold BoxRot only, got {type(box).__name__}", frame.id, record)
            fields = [str(ann.class_id)] + [format_number(v) for v in (box.cx, box.cy, box.w, box.h, box.theta)]
            if ann.score is not None:
                fields.append(format_number(ann.score))
            lines.append(" ".join(fields) + "\n")
        written.append(write_text(os.path.join(directory, frame.id + LABEL_EXT), "".join(lines)))
    return written


def read_rotated_labels(directory: str, catalog: ClassCatalog, frame_ids: Optional[Sequence[str]] = None,
                        source: str = "", allow_missing: bool = False) -> Dataset:
    if frame_ids is None:
        paths: Dict[str, str] = {frame_id_of(p): p for p in list_files(directory, [LABEL_EXT])}
        frame_ids = list(paths)
    else:
        paths = {fid: os.path.join(directory, fid + LABEL_EXT) for fid in frame_ids}
    frames = []
    for frame_id in frame_ids:
        path = paths[frame_id]
        if not os.path.isfile(path):
            if not allow_missing:
                raise StorageError(f"Missing label file for frame {frame_id}: {path}")
            annotations = []
        else:
            annotations = parse_rotated_labels(read_label_file(path), catalog, path)
        frames.append(Frame(frame_id, source=source, annotations=tuple(annotations)))
    return Dataset(catalog, tuple(frames))
