"""embed-export: batch item-text embedding into index-aligned matrix files.

Joins item metadata onto a dataset's dense item index, embeds the texts
through a pluggable backend, and writes the binary matrix format the
downstream trainer consumes, with a row-alignment checksum in the header.
"""

from .backends import (
    EmbeddingBackend,
    HashedProjectionBackend,
    SentenceTransformerBackend,
    get_backend,
)
from .corpus import PLACEHOLDER_TOKEN, ItemMetadata, build_corpus, load_index_map
from .errors import BackendError, ExportError, MetadataError
from .pipeline import ExportResult, embed_corpus
from .writer import index_map_checksum, write_embedding_file

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "EmbeddingBackend",
    "ExportError",
    "ExportResult",
    "HashedProjectionBackend",
    "ItemMetadata",
    "MetadataError",
    "PLACEHOLDER_TOKEN",
    "SentenceTransformerBackend",
    "build_corpus",
    "embed_corpus",
    "get_backend",
    "index_map_checksum",
    "load_index_map",
    "write_embedding_file",
    "__version__",
]
