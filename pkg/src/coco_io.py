"""
COCO-style annotation documents (as exported by VoTT) and COCO result lists.

Category ids need not be contiguous: categories are sorted by their original
id and remapped to a contiguous catalog. Segmentation fields are ignored.
"""

import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

from .errors import DanglingReferenceError, FormatError, StorageError, ValidationError
from .models import Annotation, BoxAA, ClassCatalog, Dataset, Frame


@dataclass(frozen=True)
class CocoImage:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class CocoAnnotation:
    image_id: int
    category_id: int
    bbox: Tuple[float, float, float, float]
    score: Optional[float] = None


@dataclass(frozen=True)
class CocoCategory:
    id: int
    name: str


@dataclass(frozen=True)
class CocoDocument:
    """Validated contents of a COCO annotation document."""

    images: Tuple[CocoImage, ...]
    annotations: Tuple[CocoAnnotation, ...]
    categories: Tuple[CocoCategory, ...]

    def category_mapping(self) -> Dict[int, int]:
        """Original category id -> contiguous class id, in original id order."""
        return {cat.id: index for index, cat in enumerate(sorted(self.categories, key=lambda c: c.id))}

    def catalog(self) -> ClassCatalog:
        """Catalog of the categories in id order."""
        return ClassCatalog.from_names([cat.name for cat in sorted(self.categories, key=lambda c: c.id)])


def _decode(data: Union[bytes, str], path: Optional[str]) -> Any:
    try:
        if isinstance(data, bytes):
            data = data.decode('utf-8')
        return json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Malformed JSON document: {e}", path)


def _int_field(record: Dict[str, Any], key: str, section: str, index: int, path: Optional[str]) -> int:
    value = record.get(key) if isinstance(record, dict) else None
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"{section} entry needs an integer '{key}'", path, index)
    return value


def _bbox(record: Dict[str, Any], index: int, path: Optional[str]) -> Tuple[float, float, float, float]:
    bbox = record.get("bbox")
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise FormatError("annotation needs a 4-element 'bbox'", path, index)
    try:
        x, y, w, h = (float(v) for v in bbox)
    except (TypeError, ValueError):
        raise FormatError(f"annotation bbox is not numeric: {bbox}", path, index)
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise FormatError(f"annotation bbox is not finite: {bbox}", path, index)
    if w < 0 or h < 0:
        raise FormatError(f"annotation bbox has negative size: {bbox}", path, index)
    return x, y, w, h


def _score(record: Dict[str, Any], index: int, path: Optional[str], required: bool) -> Optional[float]:
    score = record.get("score")
    if score is None:
        if required:
            raise FormatError("detection needs a 'score'", path, index)
        return None
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
        raise FormatError(f"score must be a number in [0, 1], got {score!r}", path, index)
    return float(score)


def load_coco_document(data: Union[bytes, str], path: Optional[str] = None) -> CocoDocument:
    """
    Decode and validate a COCO annotation document.

    Raises:
        FormatError: Malformed structure or negative bbox size
        DanglingReferenceError: Annotation image_id or category_id does not resolve
    """
    raw = _decode(data, path)
    if not isinstance(raw, dict):
        raise FormatError("COCO document must be a JSON object", path)
    for key in ("images", "annotations", "categories"):
        if not isinstance(raw.get(key, []), list):
            raise FormatError(f"'{key}' must be a list", path)

    images = []
    for index, record in enumerate(raw.get("images", [])):
        image_id = _int_field(record, "id", "image", index, path)
        width = _int_field(record, "width", "image", index, path)
        height = _int_field(record, "height", "image", index, path)
        file_name = record.get("file_name")
        if not isinstance(file_name, str) or not file_name:
            raise FormatError("image needs a 'file_name'", path, index)
        if width <= 0 or height <= 0:
            raise FormatError(f"image {image_id} has non-positive size {width}x{height}", path, index)
        images.append(CocoImage(image_id, file_name, width, height))

    categories = []
    for index, record in enumerate(raw.get("categories", [])):
        category_id = _int_field(record, "id", "category", index, path)
        name = record.get("name")
        if not isinstance(name, str) or not name.strip():
            raise FormatError("category needs a nonempty 'name'", path, index)
        categories.append(CocoCategory(category_id, name.strip()))

    image_ids = {image.id for image in images}
    category_ids = {cat.id for cat in categories}
    if len(image_ids) != len(images):
        raise FormatError("duplicate image ids", path)
    if len(category_ids) != len(categories):
        raise FormatError("duplicate category ids", path)

    annotations = []
    for index, record in enumerate(raw.get("annotations", [])):
        image_id = _int_field(record, "image_id", "annotation", index, path)
        category_id = _int_field(record, "category_id", "annotation", index, path)
        bbox = _bbox(record, index, path)
        if image_id not in image_ids:
            raise DanglingReferenceError(f"annotation references absent image id {image_id}", path, index)
        if category_id not in category_ids:
            raise DanglingReferenceError(f"annotation references absent category id {category_id}", path, index)
        annotations.append(CocoAnnotation(image_id, category_id, bbox))

    return CocoDocument(tuple(images), tuple(annotations), tuple(categories))


def _frame_id(file_name: str) -> str:
    return os.path.splitext(os.path.basename(file_name.replace('\\', '/')))[0]


def _build_frames(document: CocoDocument, annotations, source: str, path: Optional[str]) -> List[Frame]:
    mapping = document.category_mapping()
    per_image: Dict[int, List[Annotation]] = {image.id: [] for image in document.images}
    for ann in annotations:
        per_image[ann.image_id].append(
            Annotation(mapping[ann.category_id], BoxAA.from_xywh(*ann.bbox), ann.score))
    frames = []
    seen = set()
    for index, image in enumerate(document.images):
        frame_id = _frame_id(image.file_name)
        if frame_id in seen:
            raise FormatError(f"two images share the frame id {frame_id!r}", path, index)
        seen.add(frame_id)
        frame = Frame(frame_id, image.width, image.height, source, tuple(per_image[image.id]))
        frames.append(frame.clamped())
    return frames


def parse_coco_with_mapping(data: Union[bytes, str], source: str = "",
                            path: Optional[str] = None) -> Tuple[Dataset, Dict[int, int]]:
    """
    Parse a COCO document into a Dataset and the category id remapping.

    Returns:
        tuple: (dataset, {original category id: contiguous class id})
    """
    document = load_coco_document(data, path)
    try:
        catalog = document.catalog()
    except ValidationError as e:
        raise FormatError(str(e), path)
    dataset = Dataset(catalog, tuple(_build_frames(document, document.annotations, source, path)))
    return dataset, document.category_mapping()


def parse_coco(data: Union[bytes, str], source: str = "", path: Optional[str] = None) -> Dataset:
    """
    Parse a COCO document: one Frame per image, bbox [x, y, w, h] -> BoxAA.

    Args:
        data: Document bytes or text
        source: Source tag stored on every frame
        path: File name used in error messages

    Returns:
        Dataset: Frames in document image order
    """
    return parse_coco_with_mapping(data, source, path)[0]


def parse_coco_results(data: Union[bytes, str], document: CocoDocument, source: str = "",
                       path: Optional[str] = None) -> Dataset:
    """
    Parse a COCO results list (image_id, category_id, bbox, score) against a parsed document.

    Returns:
        Dataset: Same frames and catalog as the document, holding detections only
    """
    raw = _decode(data, path)
    if not isinstance(raw, list):
        raise FormatError("COCO results must be a JSON list", path)
    image_ids = {image.id for image in document.images}
    category_ids = {cat.id for cat in document.categories}
    detections = []
    for index, record in enumerate(raw):
        image_id = _int_field(record, "image_id", "result", index, path)
        category_id = _int_field(record, "category_id", "result", index, path)
        bbox = _bbox(record, index, path)
        score = _score(record, index, path, required=True)
        if image_id not in image_ids:
            raise DanglingReferenceError(f"result references absent image id {image_id}", path, index)
        if category_id not in category_ids:
            raise DanglingReferenceError(f"result references absent category id {category_id}", path, index)
        detections.append(CocoAnnotation(image_id, category_id, bbox, score))
    return Dataset(document.catalog(), tuple(_build_frames(document, detections, source, path)))


def read_coco_file(path: str, source: Optional[str] = None) -> Tuple[Dataset, Dict[int, int]]:
    """
    Read a COCO file; the source tag defaults to the file stem.

    Returns:
        tuple: (dataset, category id remapping)
    """
    try:
        with open(path, 'rb') as file:
            data = file.read()
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}")
    tag = source if source is not None else os.path.splitext(os.path.basename(path))[0]
    return parse_coco_with_mapping(data, tag, path)
