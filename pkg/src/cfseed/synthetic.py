"""Synthetic clustered interaction data with matching item embeddings.

Items live in latent clusters; users draw cluster preferences from a
Dirichlet and interact mostly within their preferred clusters. The item
embedding matrix encodes cluster identity on a subset of dimensions, so
variance-based dimension selection has real structure to find. Used by
tests and as a self-contained demo dataset.
"""

from __future__ import annotations

import numpy as np

from .data import Interaction, InteractionDataset, _index_interactions
from .embio import EmbeddingMatrix


def make_clustered_dataset(
    n_users: int = 1200,
    n_items: int = 1000,
    n_clusters: int = 10,
    dim: int = 256,
    signal_dims: int = 64,
    interactions_per_user: tuple[int, int] = (15, 25),
    noise: float = 0.25,
    concentration: float = 0.3,
    popularity: float = 1.0,
    seed: int = 0,
) -> tuple[InteractionDataset, EmbeddingMatrix, dict[str, int]]:
    """Generate (dataset, item embedding matrix, matrix index map).

    Cluster centers are standard normal on ``signal_dims`` randomly chosen
    coordinates and zero elsewhere; every item adds isotropic noise. Each
    user samples a Dirichlet(concentration) preference over clusters and
    then distinct items, cluster-first. Within a cluster, item weights decay
    geometrically by ``popularity`` (1.0 = uniform); skewed draws make the
    top of the ranking learnable instead of a coin flip over the cluster.
    Timestamps count up within a user, so the leave-one-out split holds out
    each user's last two draws.

    The matrix rows are keyed by item id through the returned index map,
    mimicking an externally produced embedding file.
    """
    if n_items % n_clusters != 0:
        raise ValueError("n_items must be a multiple of n_clusters")
    lo, hi = interactions_per_user
    if lo < 3:
        raise ValueError("need at least 3 interactions per user to split")
    if not 0.0 < popularity <= 1.0:
        raise ValueError("popularity must be in (0, 1]")
    rng = np.random.default_rng(seed)

    cluster_of = np.arange(n_items) % n_clusters
    members = [np.flatnonzero(cluster_of == c) for c in range(n_clusters)]
    signal = np.sort(rng.choice(dim, size=signal_dims, replace=False))
    centers = np.zeros((n_clusters, dim))
    centers[:, signal] = rng.normal(0.0, 1.0, size=(n_clusters, signal_dims))
    values = (centers[cluster_of] + rng.normal(0.0, noise, size=(n_items, dim))).astype(
        np.float32
    )

    per_cluster = n_items // n_clusters
    weights = popularity ** np.arange(per_cluster)
    weights /= weights.sum()

    item_ids = [f"i{j:05d}" for j in range(n_items)]
    interactions: list[Interaction] = []
    for u in range(n_users):
        pref = rng.dirichlet(np.full(n_clusters, concentration))
        count = int(rng.integers(lo, hi + 1))
        chosen: list[int] = []
        seen: set[int] = set()
        while len(chosen) < count:
            c = int(rng.choice(n_clusters, p=pref))
            j = int(rng.choice(members[c], p=weights))
            if j not in seen:
                seen.add(j)
                chosen.append(j)
        uid = f"u{u:05d}"
        for t, j in enumerate(chosen):
            interactions.append(Interaction(uid, item_ids[j], t))

    dataset = _index_interactions(interactions)
    matrix = EmbeddingMatrix(values, key_space="item")
    matrix_index = {item_ids[j]: j for j in range(n_items)}
    return dataset, matrix, matrix_index
