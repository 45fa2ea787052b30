"""
Canonical domain types shared by every toolkit module.

Geometry is stored in pixel (2D) or meter (3D) units. Normalized coordinates
only appear at format boundaries, flagged on BoxAA. A ground truth and a
detection are the same Annotation type; a detection carries a score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NotFoundError, ValidationError


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def normalize_class_name(name: str) -> str:
    """Lower-case a class name and collapse runs of whitespace."""
    return " ".join(str(name).split()).lower()


@dataclass(frozen=True)
class ClassEntry:
    """One class of a catalog."""

    class_id: int
    name: str


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class list with ids contiguous from 0."""

    entries: Tuple[ClassEntry, ...]

    def __post_init__(self):
        seen = set()
        for index, entry in enumerate(self.entries):
            if entry.class_id != index:
                raise ValidationError(f"Class ids must be contiguous from 0, got {entry.class_id} at position {index}")
            key = normalize_class_name(entry.name)
            if not key:
                raise ValidationError(f"Class {index} has an empty name")
            if key in seen:
                raise ValidationError(f"Duplicate class name: {entry.name!r}")
            seen.add(key)

    @classmethod
    def from_names(cls, names: Sequence[str]) -> ClassCatalog:
        """Build a catalog whose ids follow the order of names."""
        return cls(tuple(ClassEntry(i, str(name).strip()) for i, name in enumerate(names)))

    @property
    def names(self) -> List[str]:
        return [entry.name for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ClassEntry]:
        return iter(self.entries)

    def __contains__(self, class_id: object) -> bool:
        return isinstance(class_id, int) and not isinstance(class_id, bool) and 0 <= class_id < len(self.entries)

    def lookup(self, name: str) -> int:
        """Return the id of a class name (case and whitespace insensitive)."""
        key = normalize_class_name(name)
        for entry in self.entries:
            if normalize_class_name(entry.name) == key:
                return entry.class_id
        raise NotFoundError(f"Unknown class name: {name!r}")

    def name_of(self, class_id: int) -> str:
        if class_id not in self:
            raise NotFoundError(f"Unknown class id: {class_id!r}")
        return self.entries[class_id].name


@dataclass(frozen=True)
class BoxAA:
    """Axis-aligned box; corners in pixels, or in [0, 1] when normalized."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    normalized: bool = False

    def __post_init__(self):
        if not _finite(self.x_min, self.y_min, self.x_max, self.y_max):
            raise ValidationError(f"Box coordinates must be finite: {self}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"Box corners out of order: {self}")
        if self.normalized and not (0.0 <= self.x_min and self.x_max <= 1.0 and 0.0 <= self.y_min and self.y_max <= 1.0):
            raise ValidationError(f"Normalized box outside [0, 1]: {self}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> BoxAA:
        """Build from a top-left corner and a size."""
        return cls(x, y, x + w, y + h)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float, normalized: bool = False) -> BoxAA:
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0, normalized)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def clamp(self, width: float, height: float) -> BoxAA:
        """Clamp the box to [0, width] x [0, height]."""
        x_min = min(max(self.x_min, 0.0), width)
        y_min = min(max(self.y_min, 0.0), height)
        x_max = min(max(self.x_max, 0.0), width)
        y_max = min(max(self.y_max, 0.0), height)
        return BoxAA(x_min, y_min, x_max, y_max, self.normalized)


@dataclass(frozen=True)
class BoxRot:
    """
    Oriented box: center, side lengths and rotation.

    w runs along the theta direction. theta is folded into [-pi/2, pi/2) on
    construction; a rectangle rotated by pi is the same rectangle.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        if not _finite(self.cx, self.cy, self.w, self.h, self.theta):
            raise ValidationError(f"Rotated box values must be finite: {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"Rotated box sides must be positive: {self}")
        folded = (self.theta + math.pi / 2.0) % math.pi - math.pi / 2.0
        object.__setattr__(self, 'theta', folded)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Box3D:
    """3D box: center and extents in meters, yaw in radians about +z."""

    x: float
    y: float
    z: float
    dx: float
    dy: float
    dz: float
    yaw: float = 0.0

    def __post_init__(self):
        if not _finite(self.x, self.y, self.z, self.dx, self.dy, self.dz, self.yaw):
            raise ValidationError(f"3D box values must be finite: {self}")
        if self.dx <= 0 or self.dy <= 0 or self.dz <= 0:
            raise ValidationError(f"3D box extents must be positive: {self}")

    @property
    def volume(self) -> float:
        return self.dx * self.dy * self.dz

    @property
    def extents(self) -> Tuple[float, float, float]:
        return self.dx, self.dy, self.dz


Geometry = Union[BoxAA, BoxRot, Box3D]


@dataclass(frozen=True)
class Annotation:
    """A labelled box. With a score it is a detection, without one a ground truth."""

    class_id: int
    geometry: Geometry
    score: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.class_id, bool) or not isinstance(self.class_id, int) or self.class_id < 0:
            raise ValidationError(f"Class id must be a non-negative integer, got {self.class_id!r}")
        if not isinstance(self.geometry, (BoxAA, BoxRot, Box3D)):
            raise ValidationError(f"Unsupported geometry type: {type(self.geometry).__name__}")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"Score must lie in [0, 1], got {self.score}")

    @property
    def is_detection(self) -> bool:
        return self.score is not None


@dataclass(frozen=True)
class Frame:
    """One image (or point cloud) with its annotations."""

    id: str
    image_width: Optional[int] = None
    image_height: Optional[int] = None
    source: str = ""
    annotations: Tuple[Annotation, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValidationError("Frame id must be nonempty")
        for dim in (self.image_width, self.image_height):
            if dim is not None and dim <= 0:
                raise ValidationError(f"Frame {self.id}: image dimensions must be positive")
        object.__setattr__(self, 'annotations', tuple(self.annotations))

    @property
    def has_dimensions(self) -> bool:
        return self.image_width is not None and self.image_height is not None

    def with_annotations(self, annotations: Sequence[Annotation]) -> Frame:
        return Frame(self.id, self.image_width, self.image_height, self.source, tuple(annotations))

    def clamped(self) -> Frame:
        """Clamp pixel BoxAA geometry to the image bounds."""
        if not self.has_dimensions:
            return self
        clamped = []
        for ann in self.annotations:
            geometry = ann.geometry
            if isinstance(geometry, BoxAA) and not geometry.normalized:
                geometry = geometry.clamp(self.image_width, self.image_height)
            clamped.append(Annotation(ann.class_id, geometry, ann.score))
        return self.with_annotations(clamped)


@dataclass(frozen=True)
class Dataset:
    """Ordered frames plus the catalog their class ids resolve against."""

    catalog: ClassCatalog
    frames: Tuple[Frame, ...] = ()
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'frames', tuple(self.frames))
        for position, frame in enumerate(self.frames):
            if frame.id in self._index:
                raise ValidationError(f"Duplicate frame id: {frame.id}")
            self._index[frame.id] = position
            for record, ann in enumerate(frame.annotations):
                if ann.class_id not in self.catalog:
                    raise NotFoundError(f"Frame {frame.id} annotation {record}: class id {ann.class_id} not in catalog")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    @property
    def frame_ids(self) -> List[str]:
        return [frame.id for frame in self.frames]

    def has_frame(self, frame_id: str) -> bool:
        return frame_id in self._index

    def frame(self, frame_id: str) -> Frame:
        if frame_id not in self._index:
            raise NotFoundError(f"Unknown frame id: {frame_id}")
        return self.frames[self._index[frame_id]]

    def sources(self) -> List[str]:
        """Distinct source tags, sorted."""
        return sorted({frame.source for frame in self.frames})

    def annotation_count(self) -> int:
        return sum(len(frame.annotations) for frame in self.frames)

    def subset(self, frame_ids: Sequence[str]) -> Dataset:
        """Frames with the given ids, in dataset order."""
        wanted = set(frame_ids)
        return Dataset(self.catalog, tuple(f for f in self.frames if f.id in wanted))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Points as an (N, 4) float32 array of x, y, z (meters) and intensity.

    An (N, 3) input gets intensity 0. The stored array is read-only.
    """

    points: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float32)
        if points.ndim == 1 and points.size == 0:
            points = points.reshape(0, 4)
        if points.ndim != 2 or points.shape[1] not in (3, 4):
            raise ValidationError(f"Point array must have shape (N, 3) or (N, 4), got {points.shape}")
        if points.shape[1] == 3:
            points = np.hstack([points, np.zeros((len(points), 1), dtype=np.float32)])
        else:
            points = points.copy()
        if not np.all(np.isfinite(points[:, :3])):
            bad = int(np.argmin(np.all(np.isfinite(points[:, :3]), axis=1)))
            raise ValidationError(f"Point {bad} has non-finite coordinates")
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def with_points(self, points: np.ndarray) -> PointCloud:
        return PointCloud(points, self.source_id)
