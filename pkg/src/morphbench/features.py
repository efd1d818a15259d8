"""Dense float32 feature storage and its binary file format.

File layout (little-endian): magic ``MADF``, version u32, dim u32, count u32,
then ``count`` null-terminated UTF-8 sample ids, then ``count x dim`` IEEE-754
float32 values, row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .ioutil import atomic_write_bytes

MAGIC = b"MADF"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """One float32 feature row per sample id, all rows of width ``dim``."""

    dim: int
    sample_ids: tuple[str, ...]
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DataError(f"feature dim must be positive, got {self.dim}")
        ids = tuple(self.sample_ids)
        object.__setattr__(self, "sample_ids", ids)
        for sid in ids:
            if not sid or "\x00" in sid:
                raise DataError(f"invalid sample_id {sid!r}")
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sample_id in feature matrix")
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if rows.ndim != 2 or rows.shape != (len(ids), self.dim):
            raise DataError(
                f"feature rows shape {rows.shape} does not match "
                f"({len(ids)}, {self.dim})"
            )
        if rows.size and not np.isfinite(rows).all():
            raise DataError("feature rows contain non-finite values")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.sample_ids)


def features_to_bytes(matrix: FeatureMatrix) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, matrix.dim, len(matrix))]
    for sid in matrix.sample_ids:
        parts.append(sid.encode("utf-8"))
        parts.append(b"\x00")
    parts.append(np.ascontiguousarray(matrix.rows, dtype="<f4").tobytes())
    return b"".join(parts)


def features_from_bytes(data: bytes) -> FeatureMatrix:
    if len(data) < _HEADER.size:
        raise DataError("feature file truncated before header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(f"unsupported feature file version {version}")
    offset = _HEADER.size
    ids = []
    for _ in range(count):
        end = data.find(b"\x00", offset)
        if end < 0:
            raise DataError("truncated sample-id table")
        ids.append(data[offset:end].decode("utf-8"))
        offset = end + 1
    payload = data[offset:]
    expected = 4 * dim * count
    if len(payload) != expected:
        raise DataError(
            f"payload length mismatch: expected {expected} bytes for "
            f"{count}x{dim} float32, got {len(payload)}"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return FeatureMatrix(dim=dim, sample_ids=tuple(ids), rows=rows)


def write_features(matrix: FeatureMatrix, path) -> None:
    atomic_write_bytes(path, features_to_bytes(matrix))


def read_features(path) -> FeatureMatrix:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    try:
        return features_from_bytes(data)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc
