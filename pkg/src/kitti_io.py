"""
KITTI-style 3D label text and Supervisely point-cloud annotation JSON.

Label lines use a minimal layout: class name, then x y z dx dy dz yaw
(box center and extents in meters, yaw in radians), then an optional score.
"""

import json
import math
import os
from typing import Dict, List, Optional, Sequence, Union

from .errors import DanglingReferenceError, FormatError, NotFoundError, StorageError, ValidationError
from .file_processor import frame_id_of, list_files
from .models import Annotation, Box3D, ClassCatalog, Dataset, Frame
from .report_io import write_text
from .yolo_io import read_label_file


LABEL_EXT = ".txt"


def format_number(value: float) -> str:
    """Up to six decimals, trailing zeros and point dropped (1.8, 0, -0.25)."""
    text = f"{value:.6f}".rstrip('0').rstrip('.')
    return "0" if text in ("-0", "") else text


def format_kitti_line(name: str, box: Box3D, score: Optional[float] = None) -> str:
    """One KITTI label line for a 3D box."""
    fields = [name.replace(' ', '_')] + [format_number(v) for v in
                                         (box.x, box.y, box.z, box.dx, box.dy, box.dz, box.yaw)]
    if score is not None:
        fields.append(format_number(score))
    return " ".join(fields)


def format_kitti_labels(annotations: Sequence[Annotation], catalog: ClassCatalog,
                        frame_id: Optional[str] = None) -> str:
    """
    Render the label file of one point cloud.

    Raises:
        FormatError: An annotation is not a Box3D
    """
    lines = []
    for record, ann in enumerate(annotations):
        if not isinstance(ann.geometry, Box3D):
            raise FormatError(f"KITTI labels hold 3D boxes only, got {type(ann.geometry).__name__}", frame_id, record)
        lines.append(format_kitti_line(catalog.name_of(ann.class_id), ann.geometry, ann.score))
    return "".join(line + "\n" for line in lines)


def write_kitti_labels(dataset: Dataset, directory: str) -> List[str]:
    """Write one <frame id>.txt label file per frame (empty when it has no boxes)."""
    written = []
    for frame in dataset.frames:
        text = format_kitti_labels(frame.annotations, dataset.catalog, frame.id)
        written.append(write_text(os.path.join(directory, frame.id + LABEL_EXT), text))
    return written


def _lookup_name(catalog: ClassCatalog, token: str) -> int:
    # Names with spaces are written with underscores.
    try:
        return catalog.lookup(token)
    except NotFoundError:
        return catalog.lookup(token.replace("_", " "))


def parse_kitti_labels(text: str, catalog: ClassCatalog, path: Optional[str] = None) -> List[Annotation]:
    """Parse label lines; an optional ninth column is a detection score."""
    annotations = []
    for record, line in enumerate(text.splitlines()):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (8, 9):
            raise FormatError(f"expected 8 or 9 fields, got {len(parts)}", path, record)
        try:
            class_id = _lookup_name(catalog, parts[0])
        except NotFoundError:
            raise FormatError(f"class {parts[0]!r} not in catalog", path, record)
        try:
            values = [float(v) for v in parts[1:]]
        except ValueError:
            raise FormatError(f"non-numeric field in {line!r}", path, record)
        if not all(math.isfinite(v) for v in values):
            raise FormatError(f"non-finite field in {line!r}", path, record)
        try:
            box = Box3D(*values[:7])
            annotations.append(Annotation(class_id, box, values[7] if len(values) == 8 else None))
        except ValidationError as e:
            raise FormatError(str(e), path, record)
    return annotations


def read_kitti_labels(directory: str, catalog: ClassCatalog, frame_ids: Optional[Sequence[str]] = None,
                      source: str = "", allow_missing: bool = False) -> Dataset:
    """Read a directory of label files into a Dataset (frames sorted by name by default)."""
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
            annotations = parse_kitti_labels(read_label_file(path), catalog, path)
        frames.append(Frame(frame_id, source=source, annotations=tuple(annotations)))
    return Dataset(catalog, tuple(frames))


def _vector(geometry: dict, key: str, record: int, path: Optional[str]) -> List[float]:
    value = geometry.get(key)
    if not isinstance(value, dict):
        raise FormatError(f"cuboid geometry lacks '{key}'", path, record)
    try:
        return [float(value[axis]) for axis in ('x', 'y', 'z')]
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"cuboid '{key}' needs numeric x, y, z", path, record)


def parse_supervisely_pointcloud(data: Union[bytes, str], catalog: ClassCatalog,
                                 path: Optional[str] = None) -> List[Annotation]:
    """
    Convert a Supervisely point-cloud annotation into Box3D annotations.

    Objects give each figure its class; cuboid_3d figures give position,
    dimensions and rotation (rotation.z is the yaw). Other figure types are skipped.
    """
    try:
        raw = json.loads(data.decode('utf-8') if isinstance(data, bytes) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Malformed JSON document: {e}", path)
    if not isinstance(raw, dict):
        raise FormatError("annotation must be a JSON object", path)

    classes = {}
    for record, obj in enumerate(raw.get("objects", [])):
        if not isinstance(obj, dict) or "key" not in obj or "classTitle" not in obj:
            raise FormatError("object needs 'key' and 'classTitle'", path, record)
        try:
            classes[obj["key"]] = catalog.lookup(obj["classTitle"])
        except NotFoundError:
            raise FormatError(f"class {obj['classTitle']!r} not in catalog", path, record)

    annotations = []
    for record, figure in enumerate(raw.get("figures", [])):
        if not isinstance(figure, dict):
            raise FormatError("figure must be an object", path, record)
        if figure.get("geometryType") != "cuboid_3d":
            continue
        key = figure.get("objectKey")
        if key not in classes:
            raise DanglingReferenceError(f"figure references absent object {key!r}", path, record)
        geometry = figure.get("geometry")
        if not isinstance(geometry, dict):
            raise FormatError("figure lacks 'geometry'", path, record)
        x, y, z = _vector(geometry, "position", record, path)
        dx, dy, dz = _vector(geometry, "dimensions", record, path)
        _, _, yaw = _vector(geometry, "rotation", record, path)
        try:
            annotations.append(Annotation(classes[key], Box3D(x, y, z, dx, dy, dz, yaw)))
        except ValidationError as e:
            raise FormatError(str(e), path, record)
    return annotations


def read_supervisely_pointcloud(path: str, catalog: ClassCatalog) -> List[Annotation]:
    """Cuboid annotations of one Supervisely point-cloud annotation file."""
    try:
        with open(path, 'rb') as file:
            data = file.read()
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}")
    return parse_supervisely_pointcloud(data, catalog, path)


def supervisely_frame_id(path: str) -> str:
    """Frame id of a Supervisely annotation file: 'cloud_001.pcd.json' -> 'cloud_001'."""
    name = os.path.basename(path)
    if name.endswith(".json"):
        name = name[:-len(".json")]
    for suffix in ('.pcd', '.ply', '.bin'):
        if name.endswith(suffix):
            name = name[:-len(suffix)]
    return name
