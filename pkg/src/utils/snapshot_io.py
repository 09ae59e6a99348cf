# src/utils/snapshot_io.py
"""
Binary field snapshots:

    b"FDT1" | dim <u4 | points_per_axis <u4 | box_length <f8 | samples <f8 (row-major)
"""
import numpy as np

from src.errors import ConfigurationError, SnapshotFormatError
from src.spectral_core import Field, Grid

MAGIC = b"FDT1"
HEADER_BYTES = 20


def write_snapshot(field: Field, path: str) -> str:
    grid = field.grid
    header = MAGIC + np.array([grid.dim, grid.points_per_axis], dtype="<u4").tobytes()
    header += np.array([grid.box_length], dtype="<f8").tobytes()
    samples = np.ascontiguousarray(field.physical().values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(samples.tobytes(order="C"))
    return path


def decode_snapshot(data: bytes) -> Field:
    if len(data) < HEADER_BYTES:
        raise SnapshotFormatError(f"snapshot truncated: {len(data)} bytes, header needs {HEADER_BYTES}")
    if data[:4] != MAGIC:
        raise SnapshotFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    dim, n = (int(v) for v in np.frombuffer(data, dtype="<u4", count=2, offset=4))
    box_length = float(np.frombuffer(data, dtype="<f8", count=1, offset=12)[0])
    if n < 8 or n & (n - 1):
        raise SnapshotFormatError(f"header claims points_per_axis = {n}, not a power of two >= 8")
    try:
        grid = Grid.create(dim=dim, points_per_axis=n, box_length=box_length)
    except ConfigurationError as e:
        raise SnapshotFormatError(f"invalid snapshot header: {e}") from e

    expected = HEADER_BYTES + 8 * n ** dim
    if len(data) != expected:
        raise SnapshotFormatError(f"snapshot has {len(data)} bytes, header implies {expected}")
    samples = np.frombuffer(data, dtype="<f8", offset=HEADER_BYTES).reshape(grid.shape)
    return Field(grid, samples.astype(np.float64))


def read_snapshot(path: str) -> Field:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())
