"""Two-table embedding bridge: split one matrix at the vocabulary boundary,
look up from both tables exactly like a single-table gather, and merge back.

The on-disk format is a small header (magic, version, rows, width) followed
by IEEE-754 little-endian float32 values in row-major order, so exactness
claims are byte-testable.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmbeddingFormatError

MAGIC = b"VGEM"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class InitScheme(enum.Enum):
    NORMAL_FROM_OLD_STATS = "normal"
    ZERO = "zero"


@dataclass(frozen=True)
class SplitEmbeddings:
    """Embedding matrix split at `boundary_id` into existing/added tables."""

    old_table: np.ndarray
    new_table: np.ndarray
    boundary_id: int

    def __post_init__(self):
        if self.old_table.ndim != 2 or self.new_table.ndim != 2:
            raise ValueError("embedding tables must be 2-D")
        if self.old_table.shape[1] != self.new_table.shape[1]:
            raise ValueError(
                f"width mismatch: old {self.old_table.shape[1]} vs new {self.new_table.shape[1]}"
            )
        if self.boundary_id != self.old_table.shape[0]:
            raise ValueError("boundary_id must equal the old table's row count")
        if self.boundary_id < 1:
            raise ValueError("boundary_id must be >= 1 (recipient vocabulary is never empty)")

    @property
    def width(self) -> int:
        return self.old_table.shape[1]

    @property
    def total_rows(self) -> int:
        return self.old_table.shape[0] + self.new_table.shape[0]


def split(single: np.ndarray, boundary_id: int) -> SplitEmbeddings:
    """Split rows [0, boundary_id) / [boundary_id, V) of a single matrix, bit-identically."""
    single = np.asarray(single)
    if single.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    if not 1 <= boundary_id <= single.shape[0]:
        raise ValueError(f"boundary_id {boundary_id} out of range for {single.shape[0]} rows")
    return SplitEmbeddings(
        old_table=single[:boundary_id].copy(),
        new_table=single[boundary_id:].copy(),
        boundary_id=boundary_id,
    )


def lookup(split_emb: SplitEmbeddings, ids) -> np.ndarray:
    """Gather rows for `ids` from the two tables, identical to a single-table gather."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("ids must be 1-D")
    total = split_emb.total_rows
    if len(ids) and (ids.min() < 0 or ids.max() >= total):
        bad = ids[(ids < 0) | (ids >= total)][0]
        raise ValueError(f"token id {bad} out of range for {total} rows")
    out = np.empty((len(ids), split_emb.width), dtype=split_emb.old_table.dtype)
    in_old = ids < split_emb.boundary_id
    out[in_old] = split_emb.old_table[ids[in_old]]
    out[~in_old] = split_emb.new_table[ids[~in_old] - split_emb.boundary_id]
    return out


def merge(split_emb: SplitEmbeddings) -> np.ndarray:
    """Concatenate the two tables back into one matrix, bit-identically."""
    return np.concatenate([split_emb.old_table, split_emb.new_table], axis=0)


def init_new_rows(split_emb: SplitEmbeddings, seed: int, scheme: InitScheme) -> SplitEmbeddings:
    """Return a copy whose new table is re-drawn deterministically from `seed`.

    NORMAL_FROM_OLD_STATS draws each element from a normal distribution
    moment-matched to the mean/std over all elements of the old table; ZERO
    fills with zeros. The old table is never touched.
    """
    shape = split_emb.new_table.shape
    dtype = split_emb.new_table.dtype
    if scheme is InitScheme.ZERO:
        new = np.zeros(shape, dtype=dtype)
    elif scheme is InitScheme.NORMAL_FROM_OLD_STATS:
        mean = float(split_emb.old_table.mean())
        std = float(split_emb.old_table.std())
        rng = np.random.default_rng(seed)
        new = rng.normal(loc=mean, scale=std, size=shape).astype(dtype)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return SplitEmbeddings(
        old_table=split_emb.old_table,
        new_table=new,
        boundary_id=split_emb.boundary_id,
    )


def save_embeddings(matrix: np.ndarray, path: str | Path) -> None:
    """Write a float32 embedding matrix in the binary table format."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4", copy=False).tobytes())


def load_embeddings(path: str | Path) -> np.ndarray:
    """Read a matrix written by `save_embeddings`, validating the header and size."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError("file too short for header", location=str(path))
    magic, version, rows, width = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}", location=str(path))
    if version != VERSION:
        raise EmbeddingFormatError(f"unsupported version {version}", location=str(path))
    expected = _HEADER.size + rows * width * 4
    if len(data) != expected:
        raise EmbeddingFormatError(
            f"size mismatch: expected {expected} bytes, found {len(data)}", location=str(path)
        )
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return values.reshape(rows, width).copy()
