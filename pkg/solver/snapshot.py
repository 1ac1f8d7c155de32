import struct
from typing import Tuple

import numpy as np

from util.errors import PreconditionError

MAGIC = b"WECH"
VERSION = 1
FLOAT64 = 1

# magic, version, ndim, dtype code, 3 pad, 6 extents, time, level, 16 reserved: 64 bytes little-endian
HEADER = struct.Struct("<4sHHBxxx6IdI16x")
MAX_DIMENSIONS = 6


def write_snapshot(filename: str, values: np.ndarray, time: float = 0.0, level: int = 0):
    """
    Writes a field as a WECH snapshot: the 64-byte header followed by the values as C-ordered
    little-endian float64.
    """
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim > MAX_DIMENSIONS:
        raise PreconditionError(f"snapshots hold at most {MAX_DIMENSIONS} dimensions, got {values.ndim}")
    extents = list(values.shape) + [0] * (MAX_DIMENSIONS - values.ndim)
    with open(filename, "wb") as file:
        file.write(HEADER.pack(MAGIC, VERSION, values.ndim, FLOAT64, *extents, float(time), int(level)))
        file.write(values.tobytes(order="C"))


def read_snapshot(filename: str) -> Tuple[np.ndarray, dict]:
    with open(filename, "rb") as file:
        header = file.read(HEADER.size)
        if len(header) != HEADER.size:
            raise PreconditionError(f"{filename} is too short for a snapshot header")
        magic, version, ndim, dtype, *rest = HEADER.unpack(header)
        extents, time, level = rest[:MAX_DIMENSIONS], rest[MAX_DIMENSIONS], rest[MAX_DIMENSIONS + 1]
        if magic != MAGIC or version != VERSION or dtype != FLOAT64:
            raise PreconditionError(f"{filename} is not a version {VERSION} float64 snapshot")
        shape = tuple(extents[:ndim])
        values = np.frombuffer(file.read(), dtype="<f8")
    if values.size != int(np.prod(shape)):
        raise PreconditionError(f"{filename} holds {values.size} values, header announces {shape}")
    return values.reshape(shape).copy(), {"version": version, "shape": shape, "time": time, "level": level}
