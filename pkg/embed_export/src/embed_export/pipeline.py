"""Batched embedding pipeline with retries, resume, and ordered writes.

Rows stream into a ``<out>.part`` file as batches finish; a ``<out>.state.json``
sidecar records how many rows are complete, so a crashed or failed run
resumes instead of re-embedding. Batches may be dispatched concurrently,
but results are written strictly in index order: row r of the final file is
always the embedding of corpus entry r.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .backends import EmbeddingBackend, get_backend
from .corpus import ItemMetadata
from .errors import BackendError, ExportError
from .writer import index_map_checksum, write_embedding_file


@dataclass
class ExportResult:
    """What one export run produced."""

    out_path: str
    sidecar_path: str
    rows: int
    dim: int
    resumed_rows: int


def _clear(*paths: str) -> None:
    for path in paths:
        if os.path.exists(path):
            os.remove(path)


def _write_state(state_path: str, state: dict) -> None:
    tmp = state_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state, fh)
    os.replace(tmp, state_path)


def _load_checkpoint(
    part_path: str, state_path: str, expect: dict, n_rows: int, dim: int
) -> int:
    """Rows already embedded by a previous run, or 0 if none are usable.

    The state file is authoritative but never trusted past the part file's
    actual size; a torn trailing batch is truncated away.
    """
    if not (os.path.exists(part_path) and os.path.exists(state_path)):
        _clear(part_path, state_path)
        return 0
    try:
        with open(state_path, encoding="utf-8") as fh:
            state = json.load(fh)
    except (OSError, json.JSONDecodeError):
        _clear(part_path, state_path)
        return 0
    if any(state.get(k) != v for k, v in expect.items()):
        _clear(part_path, state_path)
        return 0
    row_bytes = dim * 4
    on_disk = os.path.getsize(part_path) // row_bytes
    rows_done = min(int(state.get("rows_done", 0)), on_disk, n_rows)
    if rows_done <= 0:
        _clear(part_path, state_path)
        return 0
    with open(part_path, "r+b") as fh:
        fh.truncate(rows_done * row_bytes)
    return rows_done


def _embed_with_retry(backend, texts, max_retries, backoff, sleep):
    attempt = 0
    while True:
        try:
            return backend.embed_batch(texts)
        except Exception:
            attempt += 1
            if attempt > max_retries:
                raise
            sleep(backoff * 2 ** (attempt - 1))


def embed_corpus(
    corpus: list[ItemMetadata],
    model: str | EmbeddingBackend,
    out_path: str,
    index_map: dict[str, int],
    *,
    batch_size: int = 64,
    concurrency: int = 1,
    max_retries: int = 3,
    backoff: float = 0.5,
    resume: bool = True,
    sidecar_path: str | None = None,
    sleep=time.sleep,
) -> ExportResult:
    """Embed every corpus text and write the index-aligned matrix file.

    Failed batches are retried ``max_retries`` times with exponential
    backoff; a batch that still fails aborts the run with the checkpointed
    row count in the error, and a later call with ``resume=True`` (default)
    picks up from there. The sidecar JSON records model, dim, rows, and
    creation time next to the output file.
    """
    if not corpus:
        raise ExportError("corpus is empty")
    if len(corpus) != len(index_map):
        raise ExportError(
            f"corpus has {len(corpus)} entries but the index map has {len(index_map)}"
        )
    for r, meta in enumerate(corpus):
        if meta.dense_index != r:
            raise ExportError(f"corpus entry {r} carries dense_index {meta.dense_index}")
    if batch_size < 1:
        raise ExportError(f"batch_size must be >= 1, got {batch_size}")
    if concurrency < 1:
        raise ExportError(f"concurrency must be >= 1, got {concurrency}")
    if max_retries < 0:
        raise ExportError(f"max_retries must be >= 0, got {max_retries}")

    backend = get_backend(model) if isinstance(model, str) else model
    dim = backend.dim
    n_rows = len(corpus)
    checksum = index_map_checksum(index_map)
    part_path = out_path + ".part"
    state_path = out_path + ".state.json"
    if sidecar_path is None:
        sidecar_path = out_path + ".json"

    expect = {
        "model": backend.name,
        "dim": dim,
        "n_rows": n_rows,
        "index_checksum": checksum.hex(),
    }
    if resume:
        rows_done = _load_checkpoint(part_path, state_path, expect, n_rows, dim)
    else:
        _clear(part_path, state_path)
        rows_done = 0
    resumed_rows = rows_done

    texts = [meta.text for meta in corpus]
    starts = list(range(rows_done, n_rows, batch_size))
    with ThreadPoolExecutor(max_workers=concurrency) as pool, open(part_path, "ab") as part:
        futures: dict[int, object] = {}
        next_submit = 0
        next_write = 0
        while next_write < len(starts):
            while next_submit < len(starts) and len(futures) < concurrency:
                s = starts[next_submit]
                futures[next_submit] = pool.submit(
                    _embed_with_retry,
                    backend,
                    texts[s : s + batch_size],
                    max_retries,
                    backoff,
                    sleep,
                )
                next_submit += 1
            try:
                block = futures.pop(next_write).result()
            except Exception as exc:
                for fut in futures.values():
                    fut.cancel()
                s = starts[next_write]
                raise BackendError(
                    f"batch at rows {s}..{min(s + batch_size, n_rows) - 1} failed "
                    f"after {max_retries} retries: {exc}; "
                    f"{s} rows are checkpointed in {part_path}"
                ) from exc
            s = starts[next_write]
            expected_rows = min(s + batch_size, n_rows) - s
            block = np.asarray(block)
            if block.shape != (expected_rows, dim):
                raise BackendError(
                    f"backend returned shape {block.shape} for rows {s}..{s + expected_rows - 1}, "
                    f"expected ({expected_rows}, {dim})"
                )
            if not np.all(np.isfinite(block)):
                raise BackendError(f"backend returned non-finite values for rows starting at {s}")
            part.write(np.ascontiguousarray(block, dtype="<f4").tobytes())
            part.flush()
            _write_state(state_path, {**expect, "rows_done": s + expected_rows})
            next_write += 1

    size = os.path.getsize(part_path)
    if size != n_rows * dim * 4:
        raise ExportError(
            f"checkpoint {part_path} holds {size} bytes, expected {n_rows * dim * 4}"
        )
    values = np.fromfile(part_path, dtype="<f4").reshape(n_rows, dim)
    write_embedding_file(out_path, values, checksum)
    _clear(part_path, state_path)

    sidecar = {
        "model": backend.name,
        "dim": dim,
        "rows": n_rows,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExportResult(
        out_path=out_path,
        sidecar_path=sidecar_path,
        rows=n_rows,
        dim=dim,
        resumed_rows=resumed_rows,
    )
