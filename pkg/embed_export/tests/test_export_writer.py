"""Writer tests: header bytes, checksum canonicalization, and byte-level
compatibility with the downstream loader's own writer."""

import struct

import numpy as np
import pytest

from embed_export.errors import ExportError
from embed_export.writer import (
    check_values,
    index_map_checksum,
    pack_header,
    write_embedding_file,
)


class TestHeader:
    def test_golden_layout(self, tmp_path):
        values = np.arange(6, dtype=np.float32).reshape(2, 3)
        checksum = index_map_checksum({"a": 0, "b": 1})
        path = str(tmp_path / "m.lmi")
        write_embedding_file(path, values, checksum)
        blob = open(path, "rb").read()
        assert blob[0:4] == b"LMI1"
        assert struct.unpack_from("<I", blob, 4)[0] == 1
        assert struct.unpack_from("<I", blob, 8)[0] == 2
        assert struct.unpack_from("<I", blob, 12)[0] == 3
        assert blob[16] == 0  # item key space
        assert blob[17:20] == b"\x00\x00\x00"
        assert blob[20:28] == checksum
        assert blob[28:] == values.tobytes()
        assert len(blob) == 28 + 2 * 3 * 4

    def test_byte_identical_to_downstream_writer(self, tmp_path):
        # the trainer package writes the same format; files must match bit
        # for bit so either side can produce them
        cfseed_embio = pytest.importorskip("cfseed.embio")
        rng = np.random.default_rng(0)
        values = rng.normal(size=(7, 5)).astype(np.float32)
        index_map = {f"i{j}": j for j in range(7)}
        ours = str(tmp_path / "ours.lmi")
        write_embedding_file(ours, values, index_map_checksum(index_map))
        theirs = str(tmp_path / "theirs.lmi")
        cfseed_embio.write_matrix(
            cfseed_embio.EmbeddingMatrix(
                values, "item", cfseed_embio.index_map_checksum(index_map)
            ),
            theirs,
        )
        assert open(ours, "rb").read() == open(theirs, "rb").read()


class TestChecksum:
    def test_key_order_independent(self):
        assert index_map_checksum({"a": 0, "b": 1}) == index_map_checksum({"b": 1, "a": 0})

    def test_value_sensitive(self):
        assert index_map_checksum({"a": 0, "b": 1}) != index_map_checksum({"a": 1, "b": 0})

    def test_non_ascii_ids(self):
        checksum = index_map_checksum({"crème": 0, "日本語": 1})
        assert len(checksum) == 8


class TestValidation:
    def test_float64_rejected(self):
        with pytest.raises(ExportError, match="float32"):
            check_values(np.zeros((2, 2)))

    def test_non_finite_rejected(self):
        bad = np.zeros((2, 2), dtype=np.float32)
        bad[1, 0] = np.nan
        with pytest.raises(ExportError, match="non-finite"):
            check_values(bad)

    def test_empty_rejected(self):
        with pytest.raises(ExportError, match="nonempty"):
            check_values(np.zeros((0, 4), dtype=np.float32))

    def test_bad_checksum_length(self):
        with pytest.raises(ExportError, match="8 bytes"):
            pack_header(1, 1, b"\x00" * 7)
