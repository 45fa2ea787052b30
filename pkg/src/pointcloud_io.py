"""
Point-cloud files: PLY (ascii, binary_little_endian), PCD v0.7 (ascii,
binary) and headerless KITTI-style bin (4 little-endian float32 per point).

Every reader returns a PointCloud of (x, y, z, intensity) float32 rows;
intensity is 0 when the file has none.
"""

import os
from typing import List, Optional, Tuple

import numpy as np

from .errors import (CountMismatchError, FormatError, StorageError, TruncatedPayloadError,
                     UnsupportedLayoutError, ValidationError)
from .models import PointCloud


BIN_DTYPE = np.dtype('<f4')
BIN_RECORD_BYTES = 16
FORMATS = ('ply', 'pcd', 'bin')

PLY_TYPES = {
    'char': 'i1', 'int8': 'i1', 'uchar': 'u1', 'uint8': 'u1',
    'short': 'i2', 'int16': 'i2', 'ushort': 'u2', 'uint16': 'u2',
    'int': 'i4', 'int32': 'i4', 'uint': 'u4', 'uint32': 'u4',
    'float': 'f4', 'float32': 'f4', 'double': 'f8', 'float64': 'f8',
}

PCD_FIELDS = ('x', 'y', 'z', 'intensity')


def _split_header(data: bytes, terminator: bytes, path: Optional[str]) -> Tuple[List[str], bytes]:
    """Split raw bytes into decoded header lines (up to terminator line) and the body."""
    lines = []
    offset = 0
    while True:
        end = data.find(b'\n', offset)
        if end < 0:
            raise FormatError(f"header is not terminated by {terminator.decode()!r}", path)
        line = data[offset:end].rstrip(b'\r')
        offset = end + 1
        try:
            text = line.decode('ascii').strip()
        except UnicodeDecodeError:
            raise FormatError("header contains non-ASCII bytes", path, len(lines))
        lines.append(text)
        if terminator == b'end_header' and text == 'end_header':
            return lines, data[offset:]
        if terminator == b'DATA' and text.split()[:1] == ['DATA']:
            return lines, data[offset:]


def _cloud_from_columns(columns: dict, count: int, path: Optional[str]) -> PointCloud:
    xyz = np.stack([np.asarray(columns[k], dtype=np.float64) for k in ('x', 'y', 'z')], axis=1).astype(np.float32)
    intensity = np.asarray(columns['intensity'], dtype=np.float32) if 'intensity' in columns \
        else np.zeros(count, dtype=np.float32)
    finite = np.all(np.isfinite(xyz), axis=1)
    if not np.all(finite):
        raise FormatError("point has non-finite coordinates", path, int(np.argmin(finite)))
    points = np.hstack([xyz, intensity.reshape(-1, 1)])
    return PointCloud(points, os.path.splitext(os.path.basename(path))[0] if path else "")


def _ascii_rows(body: bytes, path: Optional[str]) -> List[List[str]]:
    try:
        text = body.decode('ascii')
    except UnicodeDecodeError:
        raise FormatError("ascii body contains non-ASCII bytes", path)
    return [line.split() for line in text.splitlines() if line.strip()]


def _ascii_matrix(rows: List[List[str]], n_fields: int, first_record: int, path: Optional[str]) -> np.ndarray:
    matrix = np.empty((len(rows), n_fields), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != n_fields:
            raise FormatError(f"expected {n_fields} values, got {len(row)}", path, first_record + i)
        try:
            matrix[i] = [float(v) for v in row]
        except ValueError:
            raise FormatError(f"non-numeric value in {' '.join(row)!r}", path, first_record + i)
    return matrix


# ---------------------------------------------------------------- PLY

def parse_ply(data: bytes, path: Optional[str] = None) -> PointCloud:
    """Parse PLY bytes; reads the vertex element's x, y, z and optional intensity."""
    if not data.startswith(b'ply'):
        raise FormatError("missing 'ply' magic", path)
    header, body = _split_header(data, b'end_header', path)

    encoding = None
    elements = []  # [name, count, [(prop name, dtype or None for lists)]]
    for index, line in enumerate(header[1:-1], start=1):
        parts = line.split()
        if not parts or parts[0] in ('comment', 'obj_info'):
            continue
        try:
            if parts[0] == 'format':
                encoding = parts[1]
            elif parts[0] == 'element':
                elements.append([parts[1], int(parts[2]), []])
            elif parts[0] == 'property':
                if not elements:
                    raise FormatError("property before any element", path, index)
                if parts[1] == 'list':
                    elements[-1][2].append((parts[4], None))
                else:
                    if parts[1] not in PLY_TYPES:
                        raise UnsupportedLayoutError(f"unknown property type {parts[1]!r}", path, index)
                    elements[-1][2].append((parts[2], PLY_TYPES[parts[1]]))
            else:
                raise FormatError(f"unexpected header line {line!r}", path, index)
        except (IndexError, ValueError):
            raise FormatError(f"malformed header line {line!r}", path, index)

    if encoding not in ('ascii', 'binary_little_endian'):
        raise UnsupportedLayoutError(f"unsupported PLY format {encoding!r}", path)
    names = [e[0] for e in elements]
    if 'vertex' not in names:
        raise UnsupportedLayoutError("no vertex element", path)
    vertex_pos = names.index('vertex')
    _, count, props = elements[vertex_pos]
    prop_names = [p[0] for p in props]
    if any(dtype is None for _, dtype in props):
        raise UnsupportedLayoutError("list properties on vertices are not supported", path)
    if not {'x', 'y', 'z'} <= set(prop_names):
        raise UnsupportedLayoutError(f"vertex element lacks x/y/z (has {', '.join(prop_names)})", path)
    is_last = vertex_pos == len(elements) - 1

    if encoding == 'ascii':
        rows = _ascii_rows(body, path)
        skip = sum(e[1] for e in elements[:vertex_pos])
        vertex_rows = rows[skip:skip + count]
        if len(vertex_rows) != count or (is_last and len(rows) > skip + count):
            found = len(rows) - skip if is_last else len(vertex_rows)
            raise CountMismatchError(f"header declares {count} vertices, body holds {found}", path)
        matrix = _ascii_matrix(vertex_rows, len(props), 0, path)
        columns = {name: matrix[:, i] for i, name in enumerate(prop_names)}
        return _cloud_from_columns(columns, count, path)

    offset = 0
    for name, n, element_props in elements[:vertex_pos]:
        if any(dtype is None for _, dtype in element_props):
            raise UnsupportedLayoutError(f"list properties on element {name!r} before vertices", path)
        offset += n * np.dtype([(p, '<' + d) for p, d in element_props]).itemsize
    dtype = np.dtype([(p, '<' + d) for p, d in props])
    needed = offset + count * dtype.itemsize
    if len(body) < needed:
        available = max(0, (len(body) - offset) // dtype.itemsize)
        raise TruncatedPayloadError(f"payload holds {available} of {count} vertices", path, available)
    if is_last and len(body) > needed:
        raise CountMismatchError(f"payload has {len(body) - needed} bytes beyond {count} declared vertices", path)
    records = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
    return _cloud_from_columns({name: records[name] for name in prop_names}, count, path)


def write_ply(cloud: PointCloud, path: str, encoding: str = 'binary') -> str:
    """Write x, y, z, intensity as float properties; encoding 'ascii' or 'binary'."""
    if encoding not in ('ascii', 'binary'):
        raise ValidationError(f"PLY encoding must be 'ascii' or 'binary', got {encoding!r}")
    fmt = 'ascii' if encoding == 'ascii' else 'binary_little_endian'
    header = (f"ply\nformat {fmt} 1.0\nelement vertex {len(cloud)}\n"
              "property float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n")
    if encoding == 'ascii':
        body = _format_ascii_points(cloud.points).encode('ascii')
    else:
        body = cloud.points.astype(BIN_DTYPE).tobytes()
    return _write_bytes(path, header.encode('ascii') + body)


# ---------------------------------------------------------------- PCD

def parse_pcd(data: bytes, path: Optional[str] = None) -> PointCloud:
    """Parse PCD v0.7 bytes with FLOAT x, y, z and optional intensity fields."""
    header, body = _split_header(data, b'DATA', path)
    entries = {}
    for index, line in enumerate(header):
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        entries[parts[0].upper()] = (parts[1:], index)

    def values(key: str) -> List[str]:
        if key not in entries:
            raise FormatError(f"header lacks {key}", path)
        return entries[key][0]

    fields = values('FIELDS')
    if not {'x', 'y', 'z'} <= set(fields) or not set(fields) <= set(PCD_FIELDS) or len(set(fields)) != len(fields):
        raise UnsupportedLayoutError(f"unsupported field layout {' '.join(fields)}", path)
    sizes, types = values('SIZE'), values('TYPE')
    counts = entries.get('COUNT', (['1'] * len(fields), 0))[0]
    if not (len(sizes) == len(types) == len(counts) == len(fields)):
        raise FormatError("FIELDS, SIZE, TYPE and COUNT lengths differ", path)
    if any(t != 'F' for t in types) or any(s not in ('4', '8') for s in sizes) or any(c != '1' for c in counts):
        raise UnsupportedLayoutError("only single FLOAT fields of size 4 or 8 are supported", path)
    try:
        width, height = int(values('WIDTH')[0]), int(values('HEIGHT')[0])
        points = int(values('POINTS')[0]) if 'POINTS' in entries else width * height
    except (IndexError, ValueError):
        raise FormatError("WIDTH, HEIGHT and POINTS must be integers", path)
    if width * height != points:
        raise CountMismatchError(f"WIDTH*HEIGHT = {width * height} but POINTS = {points}", path)
    encoding = values('DATA')[0].lower() if values('DATA') else ''

    if encoding == 'ascii':
        rows = _ascii_rows(body, path)
        if len(rows) != points:
            raise CountMismatchError(f"header declares POINTS {points}, body holds {len(rows)}", path)
        matrix = _ascii_matrix(rows, len(fields), 0, path)
        return _cloud_from_columns({name: matrix[:, i] for i, name in enumerate(fields)}, points, path)

    if encoding == 'binary':
        dtype = np.dtype([(name, '<f' + size) for name, size in zip(fields, sizes)])
        needed = points * dtype.itemsize
        if len(body) < needed:
            available = len(body) // dtype.itemsize
            raise TruncatedPayloadError(f"payload holds {available} of {points} points", path, available)
        if len(body) > needed:
            raise CountMismatchError(f"payload has {len(body) - needed} bytes beyond {points} declared points", path)
        records = np.frombuffer(body, dtype=dtype, count=points)
        return _cloud_from_columns({name: records[name] for name in fields}, points, path)

    raise UnsupportedLayoutError(f"unsupported PCD DATA encoding {encoding!r}", path)


def write_pcd(cloud: PointCloud, path: str, encoding: str = 'binary') -> str:
    """Write a PCD v0.7 file with FLOAT x, y, z, intensity; encoding 'ascii' or 'binary'."""
    if encoding not in ('ascii', 'binary'):
        raise ValidationError(f"PCD encoding must be 'ascii' or 'binary', got {encoding!r}")
    n = len(cloud)
    header = ("# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z intensity\n"
              "SIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n"
              f"WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA {encoding}\n")
    if encoding == 'ascii':
        body = _format_ascii_points(cloud.points).encode('ascii')
    else:
        body = cloud.points.astype(BIN_DTYPE).tobytes()
    return _write_bytes(path, header.encode('ascii') + body)


# ---------------------------------------------------------------- BIN

def parse_bin(data: bytes, path: Optional[str] = None) -> PointCloud:
    """Parse a headerless stream of 16-byte (x, y, z, intensity) float32 records."""
    if len(data) % BIN_RECORD_BYTES:
        raise TruncatedPayloadError(f"{len(data)} bytes is not a multiple of {BIN_RECORD_BYTES}",
                                    path, len(data) // BIN_RECORD_BYTES)
    points = np.frombuffer(data, dtype=BIN_DTYPE).reshape(-1, 4)
    finite = np.all(np.isfinite(points[:, :3]), axis=1)
    if not np.all(finite):
        raise FormatError("point has non-finite coordinates", path, int(np.argmin(finite)))
    return PointCloud(points, os.path.splitext(os.path.basename(path))[0] if path else "")


def write_bin(cloud: PointCloud, path: str) -> str:
    """Write raw little-endian float32 x, y, z, intensity records."""
    return _write_bytes(path, cloud.points.astype(BIN_DTYPE).tobytes())


# ---------------------------------------------------------------- dispatch

def _format_ascii_points(points: np.ndarray) -> str:
    # 9 significant digits round-trip any float32 exactly.
    return "".join(" ".join(f"{float(v):.9g}" for v in row) + "\n" for row in points)


def _write_bytes(path: str, payload: bytes) -> str:
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wb') as file:
            file.write(payload)
    except OSError as e:
        raise StorageError(f"Failed to write {path}: {e}")
    return path


def detect_format(path: str, fmt: Optional[str] = None) -> str:
    """Format name from fmt or the file extension."""
    fmt = (fmt or os.path.splitext(path)[1].lstrip('.')).lower()
    if fmt not in FORMATS:
        raise ValidationError(f"Unsupported point-cloud format {fmt!r}; expected one of {', '.join(FORMATS)}")
    return fmt


def read_pointcloud(path: str, fmt: Optional[str] = None) -> PointCloud:
    """Read a point cloud; the format defaults to the file extension."""
    fmt = detect_format(path, fmt)
    try:
        with open(path, 'rb') as file:
            data = file.read()
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}")
    parser = {'ply': parse_ply, 'pcd': parse_pcd, 'bin': parse_bin}[fmt]
    return parser(data, path)


def write_pointcloud(cloud: PointCloud, path: str, fmt: Optional[str] = None, encoding: str = 'binary') -> str:
    """Write a point cloud; the format defaults to the file extension. bin ignores encoding."""
    fmt = detect_format(path, fmt)
    if fmt == 'ply':
        return write_ply(cloud, path, encoding)
    if fmt == 'pcd':
        return write_pcd(cloud, path, encoding)
    return write_bin(cloud, path)
