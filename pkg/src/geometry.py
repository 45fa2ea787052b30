"""
IoU kernels for axis-aligned, rotated and 3D boxes, plus the letterbox transform.

Rotated boxes follow the long-edge-90 convention: theta in [-pi/2, pi/2),
w measured along the theta direction. Polygons are counter-clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .models import Box3D, BoxAA, BoxRot, Geometry


CLIP_EPS = 1e-9
AREA_EPS = 1e-12
DEFAULT_TARGET = (640, 640)


def normalize_angle(theta: float) -> float:
    """Fold an angle into [-pi/2, pi/2)."""
    return (theta + math.pi / 2.0) % math.pi - math.pi / 2.0


def _rect_corners(cx: float, cy: float, w: float, h: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    half = np.array([[-w / 2.0, -h / 2.0], [w / 2.0, -h / 2.0], [w / 2.0, h / 2.0], [-w / 2.0, h / 2.0]])
    rotation = np.array([[c, -s], [s, c]])
    return half @ rotation.T + np.array([cx, cy])


def box_rot_corners(box: BoxRot) -> np.ndarray:
    """Corners of a rotated box as a (4, 2) counter-clockwise array."""
    return _rect_corners(box.cx, box.cy, box.w, box.h, box.theta)


def box3d_bev_corners(box: Box3D) -> np.ndarray:
    """Bird's-eye-view footprint of a 3D box as a (4, 2) counter-clockwise array."""
    return _rect_corners(box.x, box.y, box.dx, box.dy, box.yaw)


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon; 0 for fewer than 3 vertices."""
    if len(vertices) < 3:
        return 0.0
    # relative to the first vertex to keep the products small
    x, y = vertices[:, 0] - vertices[0, 0], vertices[:, 1] - vertices[0, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex_polygon(subject: np.ndarray, clip: np.ndarray, eps: float = CLIP_EPS) -> np.ndarray:
    """
    Sutherland-Hodgman clipping of a polygon by a convex counter-clockwise polygon.

    Vertices within eps of a clip edge count as inside.

    Returns:
        np.ndarray: (n, 2) intersection vertices, empty (0, 2) when disjoint
    """
    output = [tuple(p) for p in subject]
    n_clip = len(clip)
    for i in range(n_clip):
        if not output:
            break
        p1x, p1y = clip[i - 1]
        p2x, p2y = clip[i]
        ex, ey = p2x - p1x, p2y - p1y

        def side(p):
            return ex * (p[1] - p1y) - ey * (p[0] - p1x)

        polygon = output
        output = []
        s = polygon[-1]
        side_s = side(s)
        for e in polygon:
            side_e = side(e)
            if side_e >= -eps:
                if side_s < -eps:
                    t = side_s / (side_s - side_e)
                    output.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
                output.append(e)
            elif side_s >= -eps:
                t = side_s / (side_s - side_e)
                output.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
            s, side_s = e, side_e
    if len(output) < 3:
        return np.zeros((0, 2))
    return np.asarray(output, dtype=float)


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon with counter-clockwise vertices (or none)."""

    vertices: Tuple[Tuple[float, float], ...]

    @classmethod
    def from_array(cls, array: np.ndarray) -> ConvexPolygon:
        return cls(tuple((float(x), float(y)) for x, y in array))

    @classmethod
    def from_box(cls, box: BoxRot) -> ConvexPolygon:
        return cls.from_array(box_rot_corners(box))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3

    def area(self) -> float:
        return polygon_area(self.as_array())

    def intersection(self, other: ConvexPolygon) -> ConvexPolygon:
        """Intersection with another convex polygon; empty when below the area epsilon."""
        if self.is_empty or other.is_empty:
            return ConvexPolygon(())
        clipped = clip_convex_polygon(self.as_array(), other.as_array())
        if polygon_area(clipped) < AREA_EPS:
            return ConvexPolygon(())
        return ConvexPolygon.from_array(clipped)


def _intersection_area(poly_a: np.ndarray, poly_b: np.ndarray) -> float:
    area = polygon_area(clip_convex_polygon(poly_a, poly_b))
    return 0.0 if area < AREA_EPS else area


def iou_aa(a: BoxAA, b: BoxAA) -> float:
    """IoU of two axis-aligned boxes; zero-area boxes give 0."""
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    inter_w = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    inter_h = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = inter_w * inter_h
    return inter / (area_a + area_b - inter)


def iou_rot(a: BoxRot, b: BoxRot) -> float:
    """IoU of two rotated boxes via convex polygon clipping."""
    poly_a = box_rot_corners(a)
    poly_b = box_rot_corners(b)
    area_a = polygon_area(poly_a)
    area_b = polygon_area(poly_b)
    inter = _intersection_area(poly_a, poly_b)
    if inter <= 0.0:
        return 0.0
    return min(1.0, inter / (area_a + area_b - inter))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """IoU of two yawed 3D boxes: rotated footprint overlap times vertical overlap."""
    za_min, za_max = a.z - a.dz / 2.0, a.z + a.dz / 2.0
    zb_min, zb_max = b.z - b.dz / 2.0, b.z + b.dz / 2.0
    overlap_z = min(za_max, zb_max) - max(za_min, zb_min)
    if overlap_z <= 0.0:
        return 0.0
    bev_a = box3d_bev_corners(a)
    bev_b = box3d_bev_corners(b)
    inter = _intersection_area(bev_a, bev_b) * overlap_z
    if inter <= 0.0:
        return 0.0
    vol_a = polygon_area(bev_a) * (za_max - za_min)
    vol_b = polygon_area(bev_b) * (zb_max - zb_min)
    return min(1.0, inter / (vol_a + vol_b - inter))


def iou_aa_matrix(a: Sequence[BoxAA], b: Sequence[BoxAA]) -> np.ndarray:
    """Pairwise axis-aligned IoU, same arithmetic as iou_aa."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    ba = np.array([[box.x_min, box.y_min, box.x_max, box.y_max] for box in a], dtype=float)
    bb = np.array([[box.x_min, box.y_min, box.x_max, box.y_max] for box in b], dtype=float)
    area_a = (ba[:, 2] - ba[:, 0]) * (ba[:, 3] - ba[:, 1])
    area_b = (bb[:, 2] - bb[:, 0]) * (bb[:, 3] - bb[:, 1])
    inter_w = np.maximum(0.0, np.minimum(ba[:, None, 2], bb[None, :, 2]) - np.maximum(ba[:, None, 0], bb[None, :, 0]))
    inter_h = np.maximum(0.0, np.minimum(ba[:, None, 3], bb[None, :, 3]) - np.maximum(ba[:, None, 1], bb[None, :, 1]))
    inter = inter_w * inter_h
    union = area_a[:, None] + area_b[None, :] - inter
    valid = (area_a[:, None] > 0.0) & (area_b[None, :] > 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        iou = np.where(valid, inter / np.where(valid, union, 1.0), 0.0)
    return iou


IouFn = Callable[[Geometry, Geometry], float]

IOU_KERNELS: Dict[str, IouFn] = {
    'aa': iou_aa,
    'rot': iou_rot,
    '3d': iou_3d,
}

KERNEL_GEOMETRY = {
    'aa': BoxAA,
    'rot': BoxRot,
    '3d': Box3D,
}


def get_iou_kernel(name: str) -> IouFn:
    """IoU kernel for a geometry name: aa, rot or 3d."""
    if name not in IOU_KERNELS:
        raise ValidationError(f"Unknown geometry {name!r}; expected one of {', '.join(IOU_KERNELS)}")
    return IOU_KERNELS[name]


def iou_matrix(a: Sequence[Geometry], b: Sequence[Geometry], iou_fn: IouFn) -> np.ndarray:
    """Pairwise IoU matrix of shape (len(a), len(b))."""
    if iou_fn is iou_aa:
        return iou_aa_matrix(a, b)
    matrix = np.zeros((len(a), len(b)))
    for i, box_a in enumerate(a):
        for j, box_b in enumerate(b):
            matrix[i, j] = iou_fn(box_a, box_b)
    return matrix


@dataclass(frozen=True)
class LetterboxTransform:
    """Aspect-preserving resize plus symmetric padding to a fixed target."""

    scale: float
    pad_x: float
    pad_y: float
    target: Tuple[int, int]

    def forward(self, box: BoxAA) -> BoxAA:
        """Map a source-image box into the target image."""
        return BoxAA(box.x_min * self.scale + self.pad_x, box.y_min * self.scale + self.pad_y,
                     box.x_max * self.scale + self.pad_x, box.y_max * self.scale + self.pad_y)

    def inverse(self, box: BoxAA) -> BoxAA:
        """Map a target-image box back into the source image."""
        return BoxAA((box.x_min - self.pad_x) / self.scale, (box.y_min - self.pad_y) / self.scale,
                     (box.x_max - self.pad_x) / self.scale, (box.y_max - self.pad_y) / self.scale)


def letterbox(src_w: float, src_h: float, target: Tuple[int, int] = DEFAULT_TARGET) -> LetterboxTransform:
    """
    Compute the letterbox transform from a source size to the target size.

    Args:
        src_w: Source width in pixels
        src_h: Source height in pixels
        target: (width, height) of the padded output

    Returns:
        LetterboxTransform: scale = min(tw/sw, th/sh), padding centers the scaled image
    """
    if src_w <= 0 or src_h <= 0:
        raise ValidationError(f"Source dimensions must be positive, got {src_w}x{src_h}")
    target_w, target_h = target
    scale = min(target_w / src_w, target_h / src_h)
    pad_x = (target_w - src_w * scale) / 2.0
    pad_y = (target_h - src_h * scale) / 2.0
    return LetterboxTransform(scale, max(0.0, pad_x), max(0.0, pad_y), (target_w, target_h))


def letterbox_box(box: BoxAA, transform: LetterboxTransform) -> BoxAA:
    """Map a pixel box from source to letterboxed coordinates."""
    return transform.forward(box)


def unletterbox_box(box: BoxAA, transform: LetterboxTransform) -> BoxAA:
    """Map a letterboxed box back to source pixel coordinates."""
    return transform.inverse(box)
