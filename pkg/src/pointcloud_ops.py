"""
Point-cloud preprocessing: voxel-grid downsampling, range cropping and
voxelization into a sparse grid.

Cells and the range are half-open: a point exactly on a max face is
outside. Cell indices are floor((p - min) / size), snapped up when the
quotient sits within float32 resolution below an integer so that points
stored one cell apart (0.6 and 0.7 at 0.1 m) land in distinct cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .logger import log_info
from .models import Box3D, PointCloud


@dataclass(frozen=True)
class RangeSpec:
    """Axis-aligned region of interest in meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        values = (self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max)
        if not all(np.isfinite(values)):
            raise ValidationError("Range bounds must be finite")
        for axis, (low, high) in zip('xyz', (values[0:2], values[2:4], values[4:6])):
            if not low < high:
                raise ValidationError(f"Range {axis}: min {low} must be below max {high}")

    @classmethod
    def parse(cls, text: str) -> RangeSpec:
        """Parse 'x_min,x_max,y_min,y_max,z_min,z_max'."""
        try:
            values = [float(v) for v in text.split(',')]
        except ValueError:
            raise ValidationError(f"Range must be six comma-separated numbers, got {text!r}")
        if len(values) != 6:
            raise ValidationError(f"Range must have six values, got {len(values)}")
        return cls(*values)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min], dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max], dtype=np.float64)

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max)


FLOAT32_EPS = float(np.finfo(np.float32).eps)


def cell_indices(xyz: np.ndarray, origin, size) -> np.ndarray:
    """
    Integer (N, 3) cell index of every point for cells of the given size anchored at origin.

    The quotient is computed in float64 with a tolerance proportional to the
    float32 spacing of the coordinates.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    tolerance = 4.0 * FLOAT32_EPS * (np.abs(xyz) + np.abs(origin)) / size + 1e-9
    return np.floor((xyz - origin) / size + tolerance).astype(np.int64)


def _inside(xyz: np.ndarray, spec: RangeSpec) -> np.ndarray:
    xyz = xyz.astype(np.float64)
    return np.all((xyz >= spec.lower) & (xyz < spec.upper), axis=1)


def crop_range(pc: PointCloud, spec: RangeSpec) -> PointCloud:
    """Keep points with min <= coordinate < max on every axis, in input order."""
    return pc.with_points(pc.points[_inside(pc.xyz, spec)])


def voxel_downsample(pc: PointCloud, leaf: float) -> PointCloud:
    """
    Replace the points of every occupied leaf cell by their centroid.

    The grid is anchored at the cloud's minimum corner; intensity is averaged
    with the coordinates. Output points are ordered by cell index.

    Raises:
        ValidationError: leaf is not positive
    """
    if not leaf > 0:
        raise ValidationError(f"Leaf size must be positive, got {leaf}")
    if len(pc) == 0:
        return pc.with_points(np.zeros((0, 4), dtype=np.float32))

    points = pc.points.astype(np.float64)
    origin = points[:, :3].min(axis=0)
    cells = cell_indices(points[:, :3], origin, leaf)
    _, inverse, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 4))
    for column in range(4):
        sums[:, column] = np.bincount(inverse, weights=points[:, column], minlength=len(counts))
    centroids = sums / counts[:, None]
    log_info(f"Downsampled {len(pc)} points to {len(centroids)} with leaf {leaf:g} m")
    return pc.with_points(centroids.astype(np.float32))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """
    Sparse voxelization of a cloud.

    Attributes:
        voxel_size: (vx, vy, vz) meters
        range: Region the grid covers
        dims: Cells per axis, ceil(extent / voxel_size)
        coords: (V, 3) integer (i, j, k) of occupied voxels, sorted lexicographically
        counts: (V,) true number of points that fell in each voxel
        points: (S, 4) stored points grouped by voxel, at most max_points each
        offsets: (V + 1,) voxel v owns rows offsets[v]:offsets[v + 1] of points
        max_points: Storage cap per voxel
    """

    voxel_size: Tuple[float, float, float]
    range: RangeSpec
    dims: Tuple[int, int, int]
    coords: np.ndarray
    counts: np.ndarray
    points: np.ndarray
    offsets: np.ndarray
    max_points: int

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def stored_counts(self) -> np.ndarray:
        return np.minimum(self.counts, self.max_points)

    def voxel(self, i: int, j: int, k: int) -> Tuple[np.ndarray, int]:
        """
        Stored points and true count of one voxel.

        Raises:
            KeyError: The voxel is empty
        """
        hits = np.nonzero(np.all(self.coords == (i, j, k), axis=1))[0]
        if len(hits) == 0:
            raise KeyError((i, j, k))
        v = int(hits[0])
        return self.points[self.offsets[v]:self.offsets[v + 1]], int(self.counts[v])

    def summary(self) -> Dict[str, Any]:
        """Grid shape and point counts for the voxel-grid document."""
        return {
            "voxel_size": list(self.voxel_size),
            "range": list(self.range.as_tuple()),
            "dims": list(self.dims),
            "occupied_voxels": len(self),
            "total_points": int(self.counts.sum()),
            "stored_points": int(self.stored_counts.sum()),
            "truncated_voxels": int(np.sum(self.counts > self.max_points)),
            "max_points_per_voxel": self.max_points,
        }


def _voxel_size(voxel_size) -> Tuple[float, float, float]:
    if np.isscalar(voxel_size):
        voxel_size = (voxel_size,) * 3
    size = tuple(float(v) for v in voxel_size)
    if len(size) != 3 or not all(v > 0 for v in size):
        raise ValidationError(f"Voxel size must be three positive numbers, got {voxel_size}")
    return size


def voxelize(pc: PointCloud, voxel_size, spec: RangeSpec, max_points_per_voxel: int = 32) -> VoxelGrid:
    """
    Bucket the points inside spec into voxels.

    Each voxel keeps its first max_points_per_voxel points in input order and
    the true count of all its points.

    Args:
        pc: Input cloud
        voxel_size: One number or (vx, vy, vz), meters
        spec: Region to voxelize; points outside are dropped
        max_points_per_voxel: Storage cap per voxel (>= 1)

    Raises:
        ValidationError: Non-positive voxel size or cap
    """
    size = _voxel_size(voxel_size)
    if max_points_per_voxel < 1:
        raise ValidationError(f"max_points_per_voxel must be >= 1, got {max_points_per_voxel}")
    extent = spec.upper - spec.lower
    dims = tuple(int(d) for d in np.ceil(extent / np.array(size) - 1e-9))

    points = pc.points[_inside(pc.xyz, spec)]
    idx = cell_indices(points[:, :3], spec.lower, size)
    # snapping can push a point just inside the max face one cell too far
    idx = np.minimum(idx, np.array(dims) - 1)
    linear = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]

    order = np.argsort(linear, kind='stable')
    linear_sorted = linear[order]
    keys, starts, counts = np.unique(linear_sorted, return_index=True, return_counts=True)
    rank = np.arange(len(order)) - np.repeat(starts, counts)
    keep = rank < max_points_per_voxel

    stored = points[order][keep]
    offsets = np.concatenate(([0], np.cumsum(np.minimum(counts, max_points_per_voxel)))).astype(np.int64)
    coords = np.stack(np.unravel_index(keys, dims), axis=1).astype(np.int64) if len(keys) \
        else np.zeros((0, 3), dtype=np.int64)

    grid = VoxelGrid(size, spec, dims, coords, counts.astype(np.int64), stored, offsets,
                     max_points_per_voxel)
    log_info(f"Voxelized {len(points)} of {len(pc)} points into {len(grid)} voxels, grid {dims}")
    return grid


def anchor_size_estimate(boxes: Sequence[Box3D]) -> Tuple[float, float, float]:
    """
    Mean box extents, used as the detector's anchor size.

    Raises:
        ValidationError: No boxes
    """
    if len(boxes) == 0:
        raise ValidationError("Cannot estimate an anchor size from zero boxes")
    extents = np.array([box.extents for box in boxes], dtype=np.float64)
    dx, dy, dz = np.mean(extents, axis=0)
    return float(dx), float(dy), float(dz)
