"""Binary embedding-matrix writer.

Implements the exchange format the downstream trainer reads, from its
published layout alone:

    bytes 0-3    magic "LMI1"
    bytes 4-7    format version (little-endian uint32) = 1
    bytes 8-11   rows
    bytes 12-15  cols
    byte  16     key space (0 = item rows)
    bytes 17-19  reserved, zero
    bytes 20-27  8-byte index-map checksum (zeros = absent)
    bytes 28-    float32 little-endian values, row-major

The checksum is the first 8 bytes of SHA-256 over the index map serialized
as JSON with sorted keys, compact separators, and non-ASCII preserved;
identical input must give identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import ExportError

MAGIC = b"LMI1"
FORMAT_VERSION = 1
ITEM_KEY_SPACE = 0
HEADER = struct.Struct("<4sIIIB3s8s")


def index_map_checksum(index_map: dict[str, int]) -> bytes:
    canonical = json.dumps(index_map, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).digest()[:8]


def check_values(values: np.ndarray) -> np.ndarray:
    """Validate an output block: 2-D float32 with only finite entries."""
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise ExportError(f"expected a nonempty 2-D matrix, got shape {values.shape}")
    if values.dtype != np.float32:
        raise ExportError(f"expected float32 values, got {values.dtype}")
    if not np.all(np.isfinite(values)):
        raise ExportError("matrix holds non-finite values")
    return values


def pack_header(rows: int, cols: int, index_checksum: bytes) -> bytes:
    if len(index_checksum) != 8:
        raise ExportError("index checksum must be exactly 8 bytes")
    return HEADER.pack(
        MAGIC, FORMAT_VERSION, rows, cols, ITEM_KEY_SPACE, b"\x00" * 3, index_checksum
    )


def write_embedding_file(path: str, values: np.ndarray, index_checksum: bytes) -> None:
    values = check_values(values)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(pack_header(values.shape[0], values.shape[1], index_checksum))
        fh.write(payload)
