"""Minimal binary-little-endian PLY reader/writer for point data.

Covers what the pipeline needs: float32 vertex positions, optional uint8
colors, and optional extra per-vertex scalar properties (used by the
property-field export). Meshes and ASCII PLY are out of scope.
"""

import numpy as np

from .errors import BundleLoadError, BundleStructureError

_PLY_DTYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "ushort": "<u2",
    "short": "<i2",
    "char": "i1",
}

_PLY_NAMES = {"<f4": "float", "<f8": "double", "u1": "uchar", "<i4": "int", "<u4": "uint"}


def write_ply(path, positions, colors=None, extra=None) -> None:
    """Write vertices as binary_little_endian PLY.

    Args:
        path: Output file.
        positions: (N, 3) array, stored as float32 x/y/z.
        colors: Optional (N, 3) uint8 red/green/blue.
        extra: Optional dict of name -> (N,) array of extra properties
            (float32, int32, or uint8, inferred from the dtype).
    """
    pos = np.ascontiguousarray(positions, dtype="<f4")
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise BundleStructureError(f"positions must be (N, 3), got {pos.shape}")
    n = pos.shape[0]

    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    columns = [pos[:, 0], pos[:, 1], pos[:, 2]]
    if colors is not None:
        col = np.ascontiguousarray(colors, dtype="u1")
        if col.shape != (n, 3):
            raise BundleStructureError(f"colors must be ({n}, 3), got {col.shape}")
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        columns += [col[:, 0], col[:, 1], col[:, 2]]
    for name, values in (extra or {}).items():
        arr = np.asarray(values)
        if arr.shape != (n,):
            raise BundleStructureError(f"extra property {name!r} must be ({n},)")
        if arr.dtype.kind == "f":
            arr = arr.astype("<f4")
        elif arr.dtype == np.uint8:
            arr = arr.astype("u1")
        else:
            arr = arr.astype("<i4")
        fields.append((name, arr.dtype.str.lstrip("|")))
        columns.append(arr)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property {_PLY_NAMES[dt if dt[0] in '<u' else '<' + dt]} {nm}" for nm, dt in fields]
    header += ["end_header", ""]

    record = np.dtype([(nm, dt) for nm, dt in fields])
    body = np.empty(n, dtype=record)
    for (nm, _), colvals in zip(fields, columns):
        body[nm] = colvals

    with open(path, "wb") as fh:
        fh.write("\n".join(header).encode("ascii"))
        fh.write(body.tobytes())


def read_ply(path):
    """Read a binary_little_endian PLY; returns (positions, colors, extra).

    Positions come back float32 (N, 3); colors are uint8 (N, 3) or None;
    extra is a dict of any remaining per-vertex properties.
    """
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise BundleLoadError(f"missing point cloud: {path}") from exc

    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise BundleStructureError(f"not a PLY file: {path}")
    body_start = raw.index(b"\n", end) + 1
    header = raw[:end].decode("ascii", "replace").splitlines()

    n = None
    fields = []
    fmt_ok = False
    for line in header:
        tokens = line.strip().split()
        if not tokens:
            continue
        if tokens[0] == "format":
            fmt_ok = tokens[1] == "binary_little_endian"
        elif tokens[0] == "element":
            if tokens[1] == "vertex":
                n = int(tokens[2])
            elif int(tokens[2]) > 0:
                raise BundleStructureError(f"unsupported PLY element {tokens[1]!r}: {path}")
        elif tokens[0] == "property":
            if tokens[1] == "list":
                raise BundleStructureError(f"list properties unsupported: {path}")
            if tokens[1] not in _PLY_DTYPES:
                raise BundleStructureError(f"unsupported PLY type {tokens[1]!r}: {path}")
            fields.append((tokens[2], _PLY_DTYPES[tokens[1]]))
    if not fmt_ok:
        raise BundleStructureError(f"only binary_little_endian PLY supported: {path}")
    if n is None:
        raise BundleStructureError(f"PLY has no vertex element: {path}")

    record = np.dtype(fields)
    if len(raw) - body_start != n * record.itemsize:
        raise BundleStructureError(
            f"PLY body is {len(raw) - body_start} bytes, expected {n * record.itemsize}: {path}"
        )
    body = np.frombuffer(raw, dtype=record, offset=body_start, count=n)

    names = [nm for nm, _ in fields]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise BundleStructureError(f"PLY missing vertex property {axis!r}: {path}")
    positions = np.stack([body["x"], body["y"], body["z"]], axis=1).astype(np.float32)
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.stack([body["red"], body["green"], body["blue"]], axis=1).astype(np.uint8)
    consumed = {"x", "y", "z", "red", "green", "blue"}
    extra = {nm: np.array(body[nm]) for nm in names if nm not in consumed}
    return positions, colors, extra
