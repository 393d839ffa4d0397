"""Pipeline tests: batching, ordered writes, retry, resume, concurrency."""

import json
import struct
import time
from datetime import datetime

import numpy as np
import pytest

from embed_export.backends import HashedProjectionBackend
from embed_export.corpus import ItemMetadata
from embed_export.errors import BackendError, ExportError
from embed_export.pipeline import embed_corpus


class FakeBackend(HashedProjectionBackend):
    """Hashed embedder that counts calls and fails on chosen call numbers."""

    def __init__(self, dim, fail_calls=()):
        super().__init__(dim)
        self.calls = 0
        self._fail_calls = set(fail_calls)

    def embed_batch(self, texts):
        self.calls += 1
        if self.calls in self._fail_calls:
            raise RuntimeError("transient failure")
        return super().embed_batch(texts)


class WrongWidthBackend(HashedProjectionBackend):
    def embed_batch(self, texts):
        return super().embed_batch(texts)[:, :-1]


class NaNBackend(HashedProjectionBackend):
    def embed_batch(self, texts):
        out = super().embed_batch(texts)
        out[0, 0] = np.nan
        return out


class SlowBackend(HashedProjectionBackend):
    """Jittered latency; exercises out-of-order completion under concurrency."""

    def embed_batch(self, texts):
        time.sleep(float(np.random.default_rng(len(texts)).uniform(0, 0.005)))
        return super().embed_batch(texts)


def _corpus(n=10):
    corpus = [ItemMetadata(j, f"Item {j}", "category", f"description {j}") for j in range(n)]
    index_map = {f"i{j:02d}": j for j in range(n)}
    return corpus, index_map


def _read_payload(path):
    blob = open(path, "rb").read()
    _, _, rows, cols, _, _, _ = struct.unpack_from("<4sIIIB3s8s", blob)
    return np.frombuffer(blob[28:], dtype="<f4").reshape(rows, cols)


class TestBasicExport:
    def test_rows_match_backend_output(self, tmp_path):
        corpus, index_map = _corpus()
        out = str(tmp_path / "items.lmi")
        result = embed_corpus(corpus, "hashed-8", out, index_map, batch_size=3)
        assert (result.rows, result.dim, result.resumed_rows) == (10, 8, 0)
        values = _read_payload(out)
        expected = HashedProjectionBackend(8).embed_batch([m.text for m in corpus])
        assert np.array_equal(values, expected)

    @pytest.mark.parametrize("batch_size", [1, 3, 10, 64])
    def test_batch_size_does_not_change_bytes(self, tmp_path, batch_size):
        corpus, index_map = _corpus()
        ref = str(tmp_path / "ref.lmi")
        embed_corpus(corpus, "hashed-8", ref, index_map, batch_size=4)
        out = str(tmp_path / "out.lmi")
        embed_corpus(corpus, "hashed-8", out, index_map, batch_size=batch_size)
        assert open(out, "rb").read() == open(ref, "rb").read()

    def test_sidecar_contents(self, tmp_path):
        corpus, index_map = _corpus()
        out = str(tmp_path / "items.lmi")
        result = embed_corpus(corpus, "hashed-8", out, index_map)
        sidecar = json.loads(open(result.sidecar_path).read())
        assert set(sidecar) == {"model", "dim", "rows", "created_at"}
        assert sidecar["model"] == "hashed-8"
        assert sidecar["dim"] == 8
        assert sidecar["rows"] == 10
        datetime.fromisoformat(sidecar["created_at"])  # parses

    def test_checkpoint_files_removed_on_success(self, tmp_path):
        corpus, index_map = _corpus()
        out = tmp_path / "items.lmi"
        embed_corpus(corpus, "hashed-8", str(out), index_map)
        assert not (tmp_path / "items.lmi.part").exists()
        assert not (tmp_path / "items.lmi.state.json").exists()


class TestValidation:
    def test_empty_corpus(self, tmp_path):
        with pytest.raises(ExportError, match="empty"):
            embed_corpus([], "hashed-8", str(tmp_path / "x.lmi"), {"a": 0})

    def test_size_mismatch(self, tmp_path):
        corpus, _ = _corpus(3)
        with pytest.raises(ExportError, match="index map"):
            embed_corpus(corpus, "hashed-8", str(tmp_path / "x.lmi"), {"a": 0})

    def test_out_of_order_corpus(self, tmp_path):
        corpus, index_map = _corpus(3)
        with pytest.raises(ExportError, match="dense_index"):
            embed_corpus(corpus[::-1], "hashed-8", str(tmp_path / "x.lmi"), index_map)

    @pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"concurrency": 0}, {"max_retries": -1}])
    def test_bad_knobs(self, tmp_path, kwargs):
        corpus, index_map = _corpus(3)
        with pytest.raises(ExportError):
            embed_corpus(corpus, "hashed-8", str(tmp_path / "x.lmi"), index_map, **kwargs)

    def test_wrong_width_rejected(self, tmp_path):
        corpus, index_map = _corpus(4)
        with pytest.raises(BackendError, match="expected"):
            embed_corpus(corpus, WrongWidthBackend(8), str(tmp_path / "x.lmi"), index_map)

    def test_non_finite_rejected(self, tmp_path):
        corpus, index_map = _corpus(4)
        with pytest.raises(BackendError, match="non-finite"):
            embed_corpus(corpus, NaNBackend(8), str(tmp_path / "x.lmi"), index_map)


class TestRetry:
    def test_backoff_then_success(self, tmp_path):
        corpus, index_map = _corpus(4)
        backend = FakeBackend(8, fail_calls={1, 2})
        sleeps = []
        result = embed_corpus(
            corpus, backend, str(tmp_path / "x.lmi"), index_map,
            batch_size=4, max_retries=3, sleep=sleeps.append,
        )
        assert result.rows == 4
        assert backend.calls == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff

    def test_retries_exhausted(self, tmp_path):
        corpus, index_map = _corpus(4)
        backend = FakeBackend(8, fail_calls={1, 2, 3})
        with pytest.raises(BackendError, match="after 2 retries"):
            embed_corpus(
                corpus, backend, str(tmp_path / "x.lmi"), index_map,
                batch_size=4, max_retries=2, sleep=lambda _: None,
            )


class TestResume:
    def _fail_mid_run(self, tmp_path):
        """Third batch of four fails with retries off: 6 rows checkpointed."""
        corpus, index_map = _corpus(10)
        out = str(tmp_path / "items.lmi")
        backend = FakeBackend(8, fail_calls={3})
        with pytest.raises(BackendError, match="6 rows are checkpointed"):
            embed_corpus(
                corpus, backend, out, index_map,
                batch_size=3, max_retries=0, sleep=lambda _: None,
            )
        return corpus, index_map, out

    def test_resume_completes_identically(self, tmp_path):
        corpus, index_map, out = self._fail_mid_run(tmp_path)
        assert (tmp_path / "items.lmi.part").exists()
        backend = FakeBackend(8)
        result = embed_corpus(corpus, backend, out, index_map, batch_size=3)
        assert result.resumed_rows == 6
        assert backend.calls == 2  # only the two remaining batches
        ref = str(tmp_path / "ref.lmi")
        embed_corpus(corpus, "hashed-8", ref, index_map, batch_size=3)
        assert open(out, "rb").read() == open(ref, "rb").read()

    def test_torn_trailing_rows_truncated(self, tmp_path):
        corpus, index_map, out = self._fail_mid_run(tmp_path)
        with open(out + ".part", "ab") as fh:
            fh.write(b"\x01" * 7)  # partial row from a torn write
        result = embed_corpus(corpus, FakeBackend(8), out, index_map, batch_size=3)
        assert result.resumed_rows == 6
        ref = str(tmp_path / "ref.lmi")
        embed_corpus(corpus, "hashed-8", ref, index_map, batch_size=3)
        assert open(out, "rb").read() == open(ref, "rb").read()

    def test_no_resume_discards_checkpoint(self, tmp_path):
        corpus, index_map, out = self._fail_mid_run(tmp_path)
        backend = FakeBackend(8)
        result = embed_corpus(corpus, backend, out, index_map, batch_size=3, resume=False)
        assert result.resumed_rows == 0
        assert backend.calls == 4

    def test_mismatched_checkpoint_discarded(self, tmp_path):
        corpus, index_map, out = self._fail_mid_run(tmp_path)
        # a different model invalidates the cached rows
        result = embed_corpus(corpus, FakeBackend(16), out, index_map, batch_size=3)
        assert result.resumed_rows == 0
        assert _read_payload(out).shape == (10, 16)


class TestConcurrency:
    def test_ordered_writes_match_serial(self, tmp_path):
        corpus, index_map = _corpus(20)
        serial = str(tmp_path / "serial.lmi")
        embed_corpus(corpus, SlowBackend(8), serial, index_map, batch_size=2)
        threaded = str(tmp_path / "threaded.lmi")
        embed_corpus(
            corpus, SlowBackend(8), threaded, index_map, batch_size=2, concurrency=3
        )
        assert open(threaded, "rb").read() == open(serial, "rb").read()

    def test_failure_under_concurrency_then_resume(self, tmp_path):
        corpus, index_map = _corpus(12)
        out = str(tmp_path / "items.lmi")
        backend = FakeBackend(8, fail_calls={2})
        with pytest.raises(BackendError):
            embed_corpus(
                corpus, backend, out, index_map,
                batch_size=3, concurrency=3, max_retries=0, sleep=lambda _: None,
            )
        result = embed_corpus(corpus, FakeBackend(8), out, index_map, batch_size=3)
        assert result.rows == 12
        ref = str(tmp_path / "ref.lmi")
        embed_corpus(corpus, "hashed-8", ref, index_map, batch_size=3)
        assert open(out, "rb").read() == open(ref, "rb").read()
