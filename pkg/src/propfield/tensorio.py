"""Raw float32 tensor blobs with a fixed 16-byte header.

Layout (all little-endian):
    bytes 0-3    magic ``b"TB32"``
    bytes 4-7    rank as uint32 (1..4)
    bytes 8-15   four uint16 dims; dims beyond the rank are zero
    bytes 16-    payload, rank-major float32

The format is deliberately minimal so any language can read it with a
dozen lines; each dimension is capped at 65535, which covers depth maps,
feature maps, and embedding tables at capture resolution.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import BundleLoadError, BundleStructureError

MAGIC = b"TB32"
MAX_DIM = 0xFFFF
HEADER = struct.Struct("<4sI4H")


def write_tensor(path, array) -> None:
    """Write `array` as a float32 blob; raises on unsupported shapes."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if not 1 <= arr.ndim <= 4:
        raise BundleStructureError(f"tensor rank {arr.ndim} outside 1..4: {path}")
    for d in arr.shape:
        if d < 1 or d > MAX_DIM:
            raise BundleStructureError(f"tensor dim {d} outside 1..{MAX_DIM}: {path}")
    dims = list(arr.shape) + [0] * (4 - arr.ndim)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, arr.ndim, *dims))
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a float32 blob written by :func:`write_tensor`."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise BundleLoadError(f"missing tensor blob: {path}") from exc
    if len(raw) < HEADER.size:
        raise BundleStructureError(f"tensor blob truncated before header: {path}")
    magic, rank, *dims = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BundleStructureError(f"bad tensor magic {magic!r}: {path}")
    if not 1 <= rank <= 4:
        raise BundleStructureError(f"bad tensor rank {rank}: {path}")
    shape = tuple(dims[:rank])
    if any(d == 0 for d in shape) or any(d != 0 for d in dims[rank:]):
        raise BundleStructureError(f"inconsistent dims {dims} for rank {rank}: {path}")
    count = int(np.prod(shape))
    expected = HEADER.size + 4 * count
    if len(raw) != expected:
        raise BundleStructureError(
            f"tensor payload is {len(raw) - HEADER.size} bytes, expected {4 * count}: {path}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size, count=count)
    return data.reshape(shape).copy()
