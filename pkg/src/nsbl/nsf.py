"""NSF1 binary field files.

Layout (all little-endian)::

    b"NSF1" | uint32 n | float64 L | [float64 R] | 3*n^3 float64

Values are component-major; inside a component the first spatial index
varies fastest.  Periodic fields omit R.  Compact lattice fields carry R,
the half-width of the sampled cube [-R, R]^3; for them L = n*h where h is
the lattice spacing.  Scalar compact fields occupy component 0 and the
other two components are written as zeros.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .fields import GridSpec, VectorField

MAGIC = b"NSF1"


def _pack(n: int, length: float, values: np.ndarray, radius: float | None) -> bytes:
    head = MAGIC + struct.pack("<Id", n, length)
    if radius is not None:
        head += struct.pack("<d", radius)
    body = np.asarray(values, dtype="<f8").transpose(0, 3, 2, 1).tobytes(order="C")
    return head + body


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _unpack(data: bytes, with_radius: bool):
    if data[:4] != MAGIC:
        raise ValueError("not an NSF1 file (bad magic)")
    n, length = struct.unpack_from("<Id", data, 4)
    off = 16
    radius = None
    if with_radius:
        (radius,) = struct.unpack_from("<d", data, off)
        off += 8
    count = 3 * n ** 3
    if len(data) != off + 8 * count:
        raise ValueError(f"NSF1 size mismatch: expected {off + 8 * count} bytes, got {len(data)}")
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    vals = vals.reshape(3, n, n, n).transpose(0, 3, 2, 1).astype(np.float64)
    return n, length, radius, vals


def write_field(path, u: VectorField) -> None:
    _atomic_write(path, _pack(u.grid.n, u.grid.length, u.physical, None))


def read_field(path) -> VectorField:
    n, length, _, vals = _unpack(Path(path).read_bytes(), False)
    return VectorField(GridSpec(n, length), physical=vals)


def write_compact(path, n: int, spacing: float, radius: float, values: np.ndarray) -> None:
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 3:
        vals = np.concatenate([vals[None], np.zeros((2, *vals.shape))])
    if vals.shape != (3, n, n, n):
        raise ValueError(f"compact values must have shape (3, {n}, {n}, {n}) or ({n}, {n}, {n})")
    _atomic_write(path, _pack(n, n * spacing, vals, radius))


def read_compact(path):
    """Return (n, spacing, R, values with shape (3, n, n, n))."""
    n, length, radius, vals = _unpack(Path(path).read_bytes(), True)
    return n, length / n, radius, vals
