"""Embedding backends behind one adapter interface.

A backend maps a batch of texts to a float32 (batch, dim) array. Two are
built in: a deterministic local hashing embedder (no model download, stable
across runs and machines; meant for tests and plumbing checks) and a
sentence-transformers adapter that loads lazily on first use. Remote APIs
plug in by subclassing EmbeddingBackend.
"""

from __future__ import annotations

import hashlib
import re
from abc import ABC, abstractmethod

import numpy as np

from .errors import BackendError

_HASHED_RE = re.compile(r"^hashed-(\d+)$")


class EmbeddingBackend(ABC):
    """Adapter interface: name + dimensionality + batch embedding."""

    name: str

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def embed_batch(self, texts: list[str]) -> np.ndarray:
        """Return a float32 array of shape (len(texts), dim)."""


class HashedProjectionBackend(EmbeddingBackend):
    """Deterministic bag-of-tokens embedder.

    Each token gets a fixed Gaussian vector seeded from its SHA-256 digest;
    a text embeds as the L2-normalized token sum. No trained weights, so
    identical inputs give byte-identical outputs everywhere.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise BackendError(f"hashed backend needs dim >= 1, got {dim}")
        self._dim = int(dim)
        self.name = f"hashed-{dim}"
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            rng = np.random.default_rng(np.frombuffer(digest, dtype=np.uint64))
            vec = rng.standard_normal(self._dim, dtype=np.float32)
            self._cache[token] = vec
        return vec

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self._dim), dtype=np.float32)
        for r, text in enumerate(texts):
            tokens = text.split() or [""]
            acc = np.zeros(self._dim, dtype=np.float64)
            for token in tokens:
                acc += self._token_vector(token)
            norm = np.linalg.norm(acc)
            if norm > 0:
                acc /= norm
            out[r] = acc.astype(np.float32)
        return out


class SentenceTransformerBackend(EmbeddingBackend):
    """Adapter over a local sentence-transformers model, loaded on first use."""

    def __init__(self, model_name: str):
        self.name = f"st:{model_name}"
        self._model_name = model_name
        self._model = None

    def _load(self):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
            except ImportError as exc:
                raise BackendError(
                    "sentence-transformers is not installed; "
                    "pip install sentence-transformers"
                ) from exc
            try:
                self._model = SentenceTransformer(self._model_name)
            except Exception as exc:
                raise BackendError(
                    f"could not load model {self._model_name!r}: {exc}"
                ) from exc
        return self._model

    @property
    def dim(self) -> int:
        return int(self._load().get_sentence_embedding_dimension())

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        model = self._load()
        vectors = model.encode(
            texts, convert_to_numpy=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float32)


def get_backend(model_name: str) -> EmbeddingBackend:
    """Resolve a model name to a backend.

    "hashed-<dim>" gives the deterministic local embedder; "st:<model>"
    wraps a sentence-transformers model.
    """
    match = _HASHED_RE.match(model_name)
    if match:
        return HashedProjectionBackend(int(match.group(1)))
    if model_name.startswith("st:"):
        return SentenceTransformerBackend(model_name[3:])
    raise BackendError(
        f"unknown model {model_name!r}; expected 'hashed-<dim>' or 'st:<model>'"
    )
