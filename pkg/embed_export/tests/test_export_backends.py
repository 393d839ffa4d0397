"""Backend adapter tests: determinism, shapes, and name resolution."""

import numpy as np
import pytest

from embed_export.backends import (
    HashedProjectionBackend,
    SentenceTransformerBackend,
    get_backend,
)
from embed_export.errors import BackendError


class TestHashedBackend:
    def test_shape_dtype_finite(self):
        out = HashedProjectionBackend(32).embed_batch(["a b", "c", "d e f"])
        assert out.shape == (3, 32)
        assert out.dtype == np.float32
        assert np.all(np.isfinite(out))

    def test_deterministic_across_instances(self):
        a = HashedProjectionBackend(16).embed_batch(["red lipstick", "face cream"])
        b = HashedProjectionBackend(16).embed_batch(["red lipstick", "face cream"])
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        out = HashedProjectionBackend(64).embed_batch(["some item text"])
        assert np.linalg.norm(out[0]) == pytest.approx(1.0, abs=1e-5)

    def test_different_texts_differ(self):
        out = HashedProjectionBackend(16).embed_batch(["red lipstick", "face cream"])
        assert not np.array_equal(out[0], out[1])

    def test_bag_of_tokens_order_invariant(self):
        # documented behavior: token order does not change the embedding
        out = HashedProjectionBackend(16).embed_batch(["red lipstick", "lipstick red"])
        assert np.array_equal(out[0], out[1])

    def test_empty_text_embeds(self):
        out = HashedProjectionBackend(8).embed_batch([""])
        assert np.all(np.isfinite(out))


class TestGetBackend:
    def test_hashed_name(self):
        backend = get_backend("hashed-48")
        assert isinstance(backend, HashedProjectionBackend)
        assert backend.dim == 48
        assert backend.name == "hashed-48"

    def test_sentence_transformer_name_is_lazy(self):
        backend = get_backend("st:some/model")
        assert isinstance(backend, SentenceTransformerBackend)
        assert backend.name == "st:some/model"  # nothing loaded yet

    def test_unknown_rejected(self):
        with pytest.raises(BackendError, match="hashed-<dim>"):
            get_backend("mpnet")

    def test_zero_dim_rejected(self):
        with pytest.raises(BackendError):
            get_backend("hashed-0")
