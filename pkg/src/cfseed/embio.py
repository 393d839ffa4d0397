"""Binary embedding-matrix format: loader, writer, and index-map checksums.

Layout (all integers little-endian):

    bytes  0..3   magic "LMI1"
    bytes  4..7   format version, u32 (currently 1)
    bytes  8..11  rows, u32
    bytes 12..15  cols, u32
    byte  16      key space: 0 = item rows, 1 = user rows
    bytes 17..19  reserved, zero
    bytes 20..27  index-map checksum (first 8 bytes of SHA-256 over the
                  canonical JSON of the id -> dense-index map; all zeros
                  when no checksum is embedded)
    bytes 28..    payload: rows * cols float32, row-major

Row r of the payload corresponds to dense index r of the dataset's index
map; the embedded checksum exists to catch silent row misalignment between
a matrix and the dataset it claims to describe.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DataError, DimensionError, FormatError

MAGIC = b"LMI1"
FORMAT_VERSION = 1
HEADER_STRUCT = struct.Struct("<4sIIIB3s8s")
HEADER_SIZE = HEADER_STRUCT.size  # 28
_KEY_SPACE_CODES = {"item": 0, "user": 1}
_KEY_SPACE_NAMES = {v: k for k, v in _KEY_SPACE_CODES.items()}
_NO_CHECKSUM = b"\x00" * 8


@dataclass
class EmbeddingMatrix:
    """Dense row-major float32 matrix keyed to dataset indices."""

    values: np.ndarray
    key_space: str = "item"
    index_checksum: bytes | None = None

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def validate(self) -> None:
        v = self.values
        if v.ndim != 2:
            raise DimensionError(f"expected a 2-D matrix, got ndim={v.ndim}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"matrix must be at least 1x1, got {v.shape}")
        if v.dtype != np.float32:
            raise DataError(f"expected float32 values, got {v.dtype}")
        if self.key_space not in _KEY_SPACE_CODES:
            raise DataError(f"unknown key space {self.key_space!r}")
        if not np.isfinite(v).all():
            r, c = np.argwhere(~np.isfinite(v))[0]
            raise DataError(f"non-finite value at row {r}, col {c}")
        if self.index_checksum is not None and len(self.index_checksum) != 8:
            raise DataError("index checksum must be exactly 8 bytes")


def index_map_checksum(mapping: dict[str, int]) -> bytes:
    """8-byte checksum of an id -> dense-index map.

    Canonical form: JSON with sorted keys, compact separators, UTF-8,
    non-ASCII preserved. Both sides of the file contract must use this
    exact serialization.
    """
    canonical = json.dumps(mapping, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).digest()[:8]


def write_matrix(matrix: EmbeddingMatrix, path: str) -> None:
    """Write a matrix in the canonical encoding; identical input gives identical bytes."""
    matrix.validate()
    header = HEADER_STRUCT.pack(
        MAGIC,
        FORMAT_VERSION,
        matrix.rows,
        matrix.cols,
        _KEY_SPACE_CODES[matrix.key_space],
        b"\x00\x00\x00",
        matrix.index_checksum if matrix.index_checksum is not None else _NO_CHECKSUM,
    )
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_matrix(path: str, index_map: dict[str, int] | None = None) -> EmbeddingMatrix:
    """Read a matrix, validating header, payload length, and finiteness.

    Args:
        path: file to read.
        index_map: when given, the id -> dense-index map the rows are
            expected to follow; its checksum is compared against the header.

    Raises:
        FormatError: bad magic, unsupported version, or payload length
            not matching rows * cols * 4.
        DataError: non-finite entry (reported with row and col).
        AlignmentError: checksum mismatch, or no embedded checksum when
            ``index_map`` was supplied.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, version, rows, cols, space_code, _reserved, checksum = HEADER_STRUCT.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if space_code not in _KEY_SPACE_NAMES:
        raise FormatError(f"{path}: unknown key-space code {space_code}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: header declares empty matrix {rows}x{cols}")

    expected = rows * cols * 4
    payload = blob[HEADER_SIZE:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload length {len(payload)} does not match "
            f"{rows}x{cols} float32 ({expected} bytes)"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    if not np.isfinite(values).all():
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"{path}: non-finite value at row {r}, col {c}")

    embedded = None if checksum == _NO_CHECKSUM else checksum
    if index_map is not None:
        if embedded is None:
            raise AlignmentError(f"{path}: no index-map checksum embedded, cannot verify alignment")
        if embedded != index_map_checksum(index_map):
            raise AlignmentError(f"{path}: index-map checksum mismatch; rows may be misaligned")

    matrix = EmbeddingMatrix(values, _KEY_SPACE_NAMES[space_code], embedded)
    matrix.values.flags.writeable = False
    return matrix


def align_item_matrix(
    matrix: EmbeddingMatrix, matrix_index: dict[str, int], item_index: dict[str, int]
) -> EmbeddingMatrix:
    """Reorder matrix rows from its own index map onto a dataset's dense ids.

    Row d of the result is the matrix row for the item whose dense id is d.
    Extra matrix rows (items absent from the dataset) are dropped.

    Raises:
        AlignmentError: a dataset item has no row in the matrix, or the
            matrix index map points outside the matrix.
    """
    picked = np.empty(len(item_index), dtype=np.int64)
    for item_id, dense in item_index.items():
        row = matrix_index.get(item_id)
        if row is None:
            raise AlignmentError(f"item {item_id!r} has no row in the embedding matrix")
        if not 0 <= row < matrix.rows:
            raise AlignmentError(
                f"item {item_id!r} maps to row {row}, outside the {matrix.rows}-row matrix"
            )
        picked[dense] = row
    return EmbeddingMatrix(np.ascontiguousarray(matrix.values[picked]), matrix.key_space)
