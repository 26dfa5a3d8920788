"""
3D volume container and the SVOL1 file format.

Axis order is always (z, y, x) with x fastest in memory. An SVOL1 file is::

    b"SVOL1\\n" + <one-line JSON header> + b"\\n" + <little-endian C-order payload>

where the header is ``{"shape":[z,y,x],"spacing":[sz,sy,sx],"dtype":"f32"|"u16"|"u8"}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import FormatError, IoError

MAGIC = b"SVOL1\n"

DTYPES = {
    "f32": np.dtype("<f4"),
    "u16": np.dtype("<u2"),
    "u8": np.dtype("u1"),
}
_NAME_OF = {v.str: k for k, v in DTYPES.items()}


def dtype_name(dtype) -> str:
    """Return the SVOL1 name ("f32", "u16", "u8") of a numpy dtype."""
    dt = np.dtype(dtype).newbyteorder("<") if np.dtype(dtype).itemsize > 1 else np.dtype(dtype)
    try:
        return _NAME_OF[dt.str]
    except KeyError:
        raise FormatError(f"unsupported dtype {np.dtype(dtype)}") from None


@dataclass(frozen=True, eq=False)
class Volume3:
    """An immutable 3D scalar grid with voxel spacing in mm.

    Parameters
    ----------
    data : np.ndarray
        3D array in (z, y, x) order. Stored as a read-only C-contiguous
        copy in one of the supported dtypes.
    spacing : sequence of 3 floats
        mm per voxel along (z, y, x).
    """

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"Volume3 needs a 3D array, got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"all shape components must be >= 1, got {arr.shape}")
        name = dtype_name(arr.dtype)
        arr = np.ascontiguousarray(arr, dtype=DTYPES[name])
        if arr is self.data:
            arr = arr.copy()
        arr.setflags(write=False)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(int(s) for s in self.data.shape)

    @property
    def dtype(self) -> str:
        return dtype_name(self.data.dtype)

    def __eq__(self, other):
        if not isinstance(other, Volume3):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.spacing == other.spacing
            and self.dtype == other.dtype
            and self.data.tobytes() == other.data.tobytes()
        )

    def __hash__(self):
        return hash((self.shape, self.spacing, self.dtype, self.data.tobytes()))

    def __repr__(self):
        return f"Volume3(shape={self.shape}, spacing={self.spacing}, dtype={self.dtype!r})"


def _header(vol: Volume3) -> bytes:
    head = {"shape": list(vol.shape), "spacing": list(vol.spacing), "dtype": vol.dtype}
    return json.dumps(head, separators=(",", ":")).encode("utf-8")


def to_bytes(vol: Volume3) -> bytes:
    """Serialize a volume to SVOL1 bytes."""
    return MAGIC + _header(vol) + b"\n" + vol.data.tobytes(order="C")


def from_bytes(buf: bytes) -> Volume3:
    """Parse SVOL1 bytes into a volume."""
    if not buf.startswith(MAGIC):
        raise FormatError("bad magic, expected SVOL1")
    end = buf.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError("unterminated header line")
    try:
        head = json.loads(buf[len(MAGIC):end].decode("utf-8"))
        shape = tuple(int(s) for s in head["shape"])
        spacing = tuple(float(s) for s in head["spacing"])
        name = head["dtype"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    if name not in DTYPES:
        raise FormatError(f"unknown dtype {name!r}")
    if len(shape) != 3 or min(shape) < 1:
        raise FormatError(f"invalid shape {shape}")
    dt = DTYPES[name]
    payload = buf[end + 1:]
    expected = shape[0] * shape[1] * shape[2] * dt.itemsize
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype=dt).reshape(shape)
    try:
        return Volume3(data, spacing)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_svol(path) -> Volume3:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return from_bytes(buf)


def write_svol(vol: Volume3, path) -> None:
    buf = to_bytes(vol)
    try:
        with open(os.fspath(path), "wb") as fh:
            fh.write(buf)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def volume_mm3(voxel_count: int, spacing: Sequence[float]) -> float:
    """Physical volume of ``voxel_count`` voxels of the given spacing."""
    sz, sy, sx = spacing
    return float(voxel_count) * float(sz) * float(sy) * float(sx)
