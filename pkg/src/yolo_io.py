"""
YOLO label files: one "class cx cy w h [score]" line per box, coordinates
normalized by the image size. One file per frame, named <frame id>.txt.
"""

import os
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import FormatError, StorageError, ValidationError
from .file_processor import frame_id_of, list_files
from .models import Annotation, BoxAA, ClassCatalog, Dataset, Frame
from .report_io import write_text


LABEL_EXT = ".txt"
RANGE_EPS = 1e-9


def format_float(value: float) -> str:
    """Six decimals, trailing zeros trimmed down to one decimal digit."""
    text = f"{value:.6f}".rstrip('0')
    if text.endswith('.'):
        text += '0'
    return "0.0" if text == "-0.0" else text


def format_yolo_line(class_id: int, box: BoxAA, image_width: Optional[float], image_height: Optional[float],
                     score: Optional[float] = None) -> str:
    """
    Render one label line.

    Args:
        class_id: Contiguous class id
        box: Pixel box, or an already normalized box
        image_width: Image width in pixels (ignored for normalized boxes)
        image_height: Image height in pixels (ignored for normalized boxes)
        score: Appended as a sixth column for detections
    """
    if box.normalized:
        width, height = 1.0, 1.0
    else:
        if not image_width or not image_height:
            raise ValidationError("Image dimensions are required to normalize a pixel box")
        width, height = float(image_width), float(image_height)
    cx = (box.x_min + box.x_max) / 2.0 / width
    cy = (box.y_min + box.y_max) / 2.0 / height
    w = (box.x_max - box.x_min) / width
    h = (box.y_max - box.y_min) / height
    fields = [str(class_id)] + [format_float(v) for v in (cx, cy, w, h)]
    if score is not None:
        fields.append(format_float(score))
    return " ".join(fields)


def write_yolo_labels(dataset: Dataset, directory: str) -> List[str]:
    """
    Write one label file per frame (empty files for frames without boxes).

    Returns:
        List[str]: Written file paths in frame order
    """
    written = []
    for frame in dataset.frames:
        lines = []
        for record, ann in enumerate(frame.annotations):
            if not isinstance(ann.geometry, BoxAA):
                raise FormatError(f"YOLO labels hold axis-aligned boxes only, got {type(ann.geometry).__name__}",
                                  frame.id, record)
            if not ann.geometry.normalized and not frame.has_dimensions:
                raise ValidationError(f"Frame {frame.id} has no image dimensions; cannot normalize its boxes")
            lines.append(format_yolo_line(ann.class_id, ann.geometry, frame.image_width, frame.image_height, ann.score))
        path = os.path.join(directory, frame.id + LABEL_EXT)
        written.append(write_text(path, "".join(line + "\n" for line in lines)))
    return written


def parse_yolo_text(text: str, catalog: ClassCatalog, image_size: Optional[Tuple[float, float]] = None,
                    path: Optional[str] = None) -> List[Annotation]:
    """
    Parse the lines of one label file.

    Args:
        text: File content
        catalog: Catalog the class ids must resolve against
        image_size: (width, height) to return pixel boxes; None returns normalized boxes
        path: File name used in error messages

    Returns:
        List[Annotation]: Ground truths, or detections when a sixth column is present
    """
    annotations = []
    for record, line in enumerate(text.splitlines()):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (5, 6):
            raise FormatError(f"expected 5 or 6 fields, got {len(parts)}", path, record)
        try:
            class_id = int(parts[0])
            values = [float(v) for v in parts[1:]]
        except ValueError:
            raise FormatError(f"non-numeric field in {line!r}", path, record)
        if class_id not in catalog:
            raise FormatError(f"class id {class_id} not in catalog", path, record)
        cx, cy, w, h = values[:4]
        if not all(-RANGE_EPS <= v <= 1.0 + RANGE_EPS for v in values):
            raise FormatError(f"normalized value out of [0, 1] in {line!r}", path, record)
        score = values[4] if len(values) == 5 else None

        x_min, x_max = max(0.0, cx - w / 2.0), min(1.0, cx + w / 2.0)
        y_min, y_max = max(0.0, cy - h / 2.0), min(1.0, cy + h / 2.0)
        if x_max < x_min or y_max < y_min:
            raise FormatError(f"box lies outside the image in {line!r}", path, record)
        if image_size is None:
            box = BoxAA(x_min, y_min, x_max, y_max, normalized=True)
        else:
            width, height = image_size
            box = BoxAA(x_min * width, y_min * height, x_max * width, y_max * height)
        annotations.append(Annotation(class_id, box, None if score is None else min(1.0, max(0.0, score))))
    return annotations


def read_label_file(path: str) -> str:
    """Read a label file as text."""
    try:
        with open(path, 'r', encoding='utf-8') as file:
            return file.read()
    except UnicodeDecodeError as e:
        raise FormatError(f"label file is not UTF-8: {e}", path)
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}")


def read_yolo_labels(directory: str, catalog: ClassCatalog,
                     dimensions: Optional[Mapping[str, Tuple[int, int]]] = None,
                     frame_ids: Optional[Sequence[str]] = None, source: str = "",
                     allow_missing: bool = False) -> Dataset:
    """
    Read a directory of label files.

    Args:
        directory: Directory of <frame id>.txt files
        catalog: Catalog for class ids
        dimensions: frame id -> (width, height); frames without an entry keep normalized boxes
        frame_ids: Frames to read (default: every label file, sorted by name)
        source: Source tag stored on every frame
        allow_missing: Treat a missing label file as a frame without boxes

    Returns:
        Dataset: Frames in frame_ids order
    """
    dimensions = dimensions or {}
    if frame_ids is None:
        paths: Dict[str, str] = {frame_id_of(p): p for p in list_files(directory, [LABEL_EXT])}
        frame_ids = list(paths)
    else:
        paths = {fid: os.path.join(directory, fid + LABEL_EXT) for fid in frame_ids}

    frames = []
    for frame_id in frame_ids:
        path = paths[frame_id]
        size = dimensions.get(frame_id)
        if not os.path.isfile(path):
            if not allow_missing:
                raise StorageError(f"Missing label file for frame {frame_id}: {path}")
            annotations = []
        else:
            annotations = parse_yolo_text(read_label_file(path), catalog, size, path)
        width, height = size if size else (None, None)
        frames.append(Frame(frame_id, width, height, source, tuple(annotations)))
    return Dataset(catalog, tuple(frames))
