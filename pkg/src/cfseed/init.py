"""Selective embedding-table initialization.

Item tables are carved out of a pretrained text-embedding matrix by choosing
K of its N dimensions (even spacing, seeded random sampling, or top-K
per-dimension variance), or by keeping all N. User tables are aggregated
from the user's train-graph neighbors. Everything here is a pure function
of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BipartiteGraph
from .embio import EmbeddingMatrix
from .errors import DimensionError, StatisticsError

STRATEGIES = ("rand", "uni", "var", "full", "baseline")
POOLINGS = ("mean", "max", "prop")


@dataclass(frozen=True)
class IndexSet:
    """K distinct source dimensions chosen out of N.

    Stored ascending, except variance selection which stores them in
    descending-variance order (ties broken by lower index first).
    """

    indices: np.ndarray
    source_dim: int
    target_dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if len(idx) != self.target_dim:
            raise DimensionError(f"index set has {len(idx)} entries, expected {self.target_dim}")
        if len(np.unique(idx)) != len(idx):
            raise DimensionError("index set contains duplicates")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.source_dim):
            raise DimensionError(f"index out of range [0, {self.source_dim})")


@dataclass
class InitializedTables:
    """Trainable starting tables plus the provenance tags that produced them."""

    item_table: EmbeddingMatrix
    user_table: EmbeddingMatrix
    strategy_tag: str
    pooling_tag: str


def _check_dims(n_dims: int, k_dims: int) -> None:
    if not 1 <= k_dims <= n_dims:
        raise DimensionError(f"need 1 <= K <= N, got K={k_dims}, N={n_dims}")


def select_uniform(n_dims: int, k_dims: int) -> IndexSet:
    """Evenly spaced indices: {k * floor(N/K) : k in 0..K-1}. Deterministic."""
    _check_dims(n_dims, k_dims)
    stride = n_dims // k_dims
    return IndexSet(np.arange(k_dims, dtype=np.int64) * stride, n_dims, k_dims)


def select_random(n_dims: int, k_dims: int, seed: int) -> IndexSet:
    """K distinct indices sampled uniformly without replacement, returned ascending."""
    _check_dims(n_dims, k_dims)
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(n_dims, size=k_dims, replace=False))
    return IndexSet(picked.astype(np.int64), n_dims, k_dims)


def select_variance(item_matrix: EmbeddingMatrix, k_dims: int) -> IndexSet:
    """Top-K dimensions by population variance across all item rows.

    Ties break toward the lower index; the returned order is
    descending-variance.
    """
    if item_matrix.rows < 2:
        raise StatisticsError(f"variance needs >= 2 rows, got {item_matrix.rows}")
    n_dims = item_matrix.cols
    _check_dims(n_dims, k_dims)
    variances = item_matrix.values.astype(np.float64).var(axis=0)
    # primary key: variance descending; secondary: index ascending
    order = np.lexsort((np.arange(n_dims), -variances))
    return IndexSet(order[:k_dims].astype(np.int64), n_dims, k_dims)


def full_index_set(n_dims: int) -> IndexSet:
    """The identity selection, K = N."""
    return IndexSet(np.arange(n_dims, dtype=np.int64), n_dims, n_dims)


def apply_selection(
    item_matrix: EmbeddingMatrix, index_set: IndexSet, rescale: str = "none"
) -> EmbeddingMatrix:
    """Keep the chosen columns; column j of the output is source column indices[j].

    With ``rescale="none"`` the copy is bit-exact (no arithmetic touches the
    values). With ``rescale="zscore"`` each kept column is standardized to
    mean 0 and unit population variance afterward; constant columns become
    all zeros.
    """
    if index_set.source_dim != item_matrix.cols:
        raise DimensionError(
            f"index set built for N={index_set.source_dim}, matrix has {item_matrix.cols} cols"
        )
    if rescale not in ("none", "zscore"):
        raise ValueError(f"unknown rescale mode {rescale!r}")
    out = np.ascontiguousarray(item_matrix.values[:, index_set.indices])
    if rescale == "zscore":
        wide = out.astype(np.float64)
        mean = wide.mean(axis=0)
        std = wide.std(axis=0)
        nonconst = std > 0.0
        wide -= mean
        wide[:, nonconst] /= std[nonconst]
        wide[:, ~nonconst] = 0.0
        out = wide.astype(np.float32)
    return EmbeddingMatrix(out, item_matrix.key_space, item_matrix.index_checksum)


def select_full(item_matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Full-dimension initialization: keep all N columns, model runs at width N."""
    return apply_selection(item_matrix, full_index_set(item_matrix.cols), rescale="none")


def select_indices(
    strategy: str,
    n_dims: int,
    k_dims: int,
    item_matrix: EmbeddingMatrix | None = None,
    seed: int = 0,
) -> IndexSet:
    """Dispatch on the CLI-facing strategy name (rand / uni / var / full)."""
    if strategy == "uni":
        return select_uniform(n_dims, k_dims)
    if strategy == "rand":
        return select_random(n_dims, k_dims, seed)
    if strategy == "var":
        if item_matrix is None:
            raise ValueError("variance selection needs the item matrix")
        return select_variance(item_matrix, k_dims)
    if strategy == "full":
        return full_index_set(n_dims)
    raise ValueError(f"unknown selection strategy {strategy!r}")


def aggregate_users(
    item_table: EmbeddingMatrix, graph: BipartiteGraph, pooling: str = "mean"
) -> EmbeddingMatrix:
    """Initialize each user from its train-split neighbor items.

    mean: degree-normalized sum, u = sum_j v_j / |N_u|.
    max:  coordinate-wise maximum over neighbors.
    prop: one symmetric-normalized propagation step,
          u = sum_j v_j / sqrt(|N_u| * |N_j|).

    Raises:
        ValueError: some user has no train neighbors.
        DimensionError: item table rows do not match the graph's item count.
    """
    if item_table.rows != graph.n_items:
        raise DimensionError(
            f"item table has {item_table.rows} rows, graph has {graph.n_items} items"
        )
    if pooling not in POOLINGS:
        raise ValueError(f"unknown pooling {pooling!r}, expected one of {POOLINGS}")
    zero = np.flatnonzero(graph.user_degree == 0)
    if len(zero):
        raise ValueError(f"user {zero[0]} has no train neighbors; cannot aggregate")

    items = item_table.values.astype(np.float64)
    out = np.empty((graph.n_users, item_table.cols), dtype=np.float64)
    for u, neighbors in enumerate(graph.user_adjacency):
        rows = items[neighbors]
        if pooling == "mean":
            out[u] = rows.mean(axis=0)
        elif pooling == "max":
            out[u] = rows.max(axis=0)
        else:  # prop
            w = 1.0 / np.sqrt(float(len(neighbors)) * graph.item_degree[neighbors])
            out[u] = w @ rows
    return EmbeddingMatrix(out.astype(np.float32), key_space="user")


# config-facing short names -> provenance tags stored on the tables
_POOLING_TAGS = {"mean": "mean", "max": "max", "prop": "propagation"}


def init_baseline_random(
    n_users: int, n_items: int, k_dims: int, seed: int, pooling: str = "mean"
) -> InitializedTables:
    """Seeded normal(0, 0.1) tables, the conventional from-scratch starting point.

    ``pooling`` is recorded for provenance only; no aggregation happens here.
    """
    rng = np.random.default_rng(seed)
    user = rng.normal(0.0, 0.1, size=(n_users, k_dims)).astype(np.float32)
    item = rng.normal(0.0, 0.1, size=(n_items, k_dims)).astype(np.float32)
    return InitializedTables(
        item_table=EmbeddingMatrix(item, key_space="item"),
        user_table=EmbeddingMatrix(user, key_space="user"),
        strategy_tag="baseline-random",
        pooling_tag=_POOLING_TAGS[pooling],
    )


def build_tables(
    strategy: str,
    graph: BipartiteGraph,
    k_dims: int,
    item_matrix: EmbeddingMatrix | None = None,
    pooling: str = "mean",
    rescale: str = "none",
    seed: int = 0,
) -> InitializedTables:
    """Produce the full (item, user) starting tables for one strategy.

    ``baseline`` ignores the pretrained matrix; every other strategy selects
    item columns from it and aggregates users over the train graph. ``full``
    ignores ``k_dims`` and keeps the source width.
    """
    if pooling not in POOLINGS:
        raise ValueError(f"unknown pooling {pooling!r}, expected one of {POOLINGS}")
    if strategy == "baseline":
        return init_baseline_random(graph.n_users, graph.n_items, k_dims, seed, pooling)
    if item_matrix is None:
        raise ValueError(f"strategy {strategy!r} needs a pretrained item matrix")
    if item_matrix.rows != graph.n_items:
        raise DimensionError(
            f"item matrix has {item_matrix.rows} rows, graph has {graph.n_items} items"
        )
    index_set = select_indices(strategy, item_matrix.cols, k_dims, item_matrix, seed)
    item_table = apply_selection(item_matrix, index_set, rescale)
    user_table = aggregate_users(item_table, graph, pooling)
    return InitializedTables(item_table, user_table, strategy, _POOLING_TAGS[pooling])
