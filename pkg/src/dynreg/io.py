"""Point cloud and pose files.

Formats:

* ``xyz``: one ``x y z`` row per point.
* ``xyzn``: one ``x y z nx ny nz`` row per point.
* ``ply-ascii``: ASCII PLY with a ``vertex`` element; ``nx ny nz`` become normals.

Parse errors carry the 1-based line number and the byte offset of the line
start.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

from .errors import InputError, ParseError
from .geometry import PointCloud, RigidTransform

FORMATS = ("ply-ascii", "xyz", "xyzn")
_EXTENSIONS = {".ply": "ply-ascii", ".xyz": "xyz", ".xyzn": "xyzn", ".txt": "xyz"}


def infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _EXTENSIONS:
        raise InputError(f"cannot infer cloud format from extension {ext!r}; pass one of {FORMATS}")
    return _EXTENSIONS[ext]


def _lines(data: bytes):
    """Yield (line number, byte offset, text) for every line."""
    offset = 0
    for number, raw in enumerate(data.split(b"\n"), start=1):
        yield number, offset, raw.decode("ascii", errors="replace").strip()
        offset += len(raw) + 1


def _parse_row(text, width, number, offset):
    parts = text.split()
    if len(parts) != width:
        raise ParseError(f"expected {width} values, found {len(parts)}", line=number, offset=offset)
    try:
        row = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"non-numeric value in {text!r}", line=number, offset=offset) from None
    if not all(np.isfinite(row)):
        raise ParseError("non-finite coordinate", line=number, offset=offset)
    return row


def _parse_table(data: bytes, width: Optional[int]):
    rows = []
    for number, offset, text in _lines(data):
        if not text or text.startswith("#"):
            continue
        if width is None:
            width = len(text.split())
        rows.append(_parse_row(text, width, number, offset))
    return np.asarray(rows, dtype=np.float64).reshape(-1, width or 3)


def _parse_ply(data: bytes):
    lines = list(_lines(data))
    if not lines or lines[0][2] != "ply":
        raise ParseError("missing 'ply' magic", line=1, offset=0)
    count, props, in_vertex, fmt = None, [], False, None
    body = None
    for k, (number, offset, text) in enumerate(lines[1:], start=1):
        words = text.split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "format":
            fmt = words[1] if len(words) > 1 else None
            if fmt != "ascii":
                raise ParseError(f"only ascii PLY is supported, got {fmt!r}", line=number, offset=offset)
        elif words[0] == "element":
            if len(words) != 3:
                raise ParseError("malformed element line", line=number, offset=offset)
            in_vertex = words[1] == "vertex"
            if in_vertex:
                try:
                    count = int(words[2])
                except ValueError:
                    raise ParseError("vertex count is not an integer", line=number, offset=offset) from None
        elif words[0] == "property":
            if in_vertex:
                if len(words) < 3 or words[1] == "list":
                    raise ParseError("unsupported vertex property", line=number, offset=offset)
                props.append(words[-1])
        elif words[0] == "end_header":
            body = k + 1
            break
        else:
            raise ParseError(f"unexpected header keyword {words[0]!r}", line=number, offset=offset)
    if body is None:
        number, offset, _ = lines[-1]
        raise ParseError("header has no end_header", line=number, offset=offset)
    if fmt is None or count is None:
        number, offset, _ = lines[body - 1]
        raise ParseError("header lacks a format or vertex element", line=number, offset=offset)
    for axis in "xyz":
        if axis not in props:
            raise ParseError(f"vertex property {axis!r} missing", line=1, offset=0)
    rows = []
    for number, offset, text in lines[body:]:
        if len(rows) == count:
            break
        if not text:
            continue
        rows.append(_parse_row(text, len(props), number, offset))
    if len(rows) < count:
        end = len(data)
        raise ParseError(f"file ends after {len(rows)} of {count} vertices", line=len(lines), offset=end)
    table = np.asarray(rows, dtype=np.float64).reshape(-1, len(props))
    col = {name: table[:, i] for i, name in enumerate(props)}
    points = np.stack([col["x"], col["y"], col["z"]], axis=1)
    normals = None
    if all(n in col for n in ("nx", "ny", "nz")):
        normals = np.stack([col["nx"], col["ny"], col["nz"]], axis=1)
    return points, normals


def _unit(normals, what):
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ParseError(f"zero-length normal in {what}")
    return normals / norms


def load_cloud(path, format: Optional[str] = None) -> PointCloud:
    """Read a cloud; normals are renormalized to unit length when present."""
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise InputError(f"unknown cloud format {fmt!r}")
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt == "ply-ascii":
        points, normals = _parse_ply(data)
    else:
        table = _parse_table(data, 3 if fmt == "xyz" else 6)
        points = table[:, :3]
        normals = table[:, 3:6] if fmt == "xyzn" else None
    if normals is not None:
        normals = _unit(normals, path)
    return PointCloud(points, normals)


def save_cloud(path, cloud: PointCloud, format: Optional[str] = None) -> None:
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise InputError(f"unknown cloud format {fmt!r}")
    cols = [cloud.points]
    if fmt == "xyzn" or (fmt == "ply-ascii" and cloud.normals is not None):
        if cloud.normals is None:
            raise InputError("xyzn output needs normals")
        cols.append(cloud.normals)
    table = np.hstack(cols)
    with open(path, "w") as fh:
        if fmt == "ply-ascii":
            names = ["x", "y", "z"] + (["nx", "ny", "nz"] if table.shape[1] == 6 else [])
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(table)}\n")
            fh.writelines(f"property double {n}\n" for n in names)
            fh.write("end_header\n")
        for row in table:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_pose(path) -> RigidTransform:
    """A 4x4 row-major homogeneous matrix, one row per line."""
    with open(path, "rb") as fh:
        data = fh.read()
    rows = []
    for number, offset, text in _lines(data):
        if not text or text.startswith("#"):
            continue
        rows.append(_parse_row(text, 4, number, offset))
    if len(rows) != 4:
        raise ParseError(f"pose needs 4 rows, found {len(rows)}")
    T = np.asarray(rows)
    if not np.allclose(T[3], [0, 0, 0, 1]):
        raise ParseError("last pose row must be 0 0 0 1", line=4)
    pose = RigidTransform.from_matrix(T)
    if not pose.is_valid(1e-6):
        raise ParseError("pose rotation is not orthonormal with det +1")
    return pose


def write_pose(path, pose: RigidTransform) -> None:
    with open(path, "w") as fh:
        for row in pose.matrix():
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
