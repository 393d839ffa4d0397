"""LightGCN-style propagation with BPR and optional InfoNCE objectives.

Everything runs on float64 numpy arrays with scipy sparse adjacencies, and
all gradients are computed analytically. Propagation is linear, and the
normalized adjacency is symmetric, so backpropagating through it is the
same propagation applied to the output gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import BipartiteGraph
from .errors import ConfigError, DataError
from .init import InitializedTables


@dataclass
class LossConfig:
    """Weights and knobs for the combined training objective."""

    l2_weight: float = 1e-4
    ssl_weight: float = 0.1
    ssl_temperature: float = 0.2
    edge_dropout: float = 0.1

    def __post_init__(self):
        if self.l2_weight < 0:
            raise ConfigError(f"l2_weight must be >= 0, got {self.l2_weight}")
        if self.ssl_weight < 0:
            raise ConfigError(f"ssl_weight must be >= 0, got {self.ssl_weight}")
        if self.ssl_temperature <= 0:
            raise ConfigError(f"ssl_temperature must be > 0, got {self.ssl_temperature}")
        if not 0.0 <= self.edge_dropout < 1.0:
            raise ConfigError(f"edge_dropout must be in [0, 1), got {self.edge_dropout}")


@dataclass
class ModelState:
    """Trainable tables plus the precomputed normalized train adjacency."""

    user_table: np.ndarray
    item_table: np.ndarray
    layers: int
    norm_adjacency: sp.csr_array

    @property
    def n_users(self) -> int:
        return self.user_table.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_table.shape[0]

    @property
    def dim(self) -> int:
        return self.user_table.shape[1]


def build_norm_adjacency_from_edges(
    n_users: int, n_items: int, users: np.ndarray, items: np.ndarray
) -> sp.csr_array:
    """Symmetric-normalized bipartite adjacency over (users + items) nodes.

    Entry for edge (u, i) is 1 / sqrt(deg(u) * deg(i)), degrees taken from
    the given edge set itself.
    """
    n = n_users + n_items
    if len(users) == 0:
        return sp.csr_array((n, n), dtype=np.float64)
    u_deg = np.bincount(users, minlength=n_users).astype(np.float64)
    i_deg = np.bincount(items, minlength=n_items).astype(np.float64)
    vals = 1.0 / np.sqrt(u_deg[users] * i_deg[items])
    rows = np.concatenate([users, items + n_users])
    cols = np.concatenate([items + n_users, users])
    data = np.concatenate([vals, vals])
    return sp.csr_array(sp.coo_array((data, (rows, cols)), shape=(n, n)))


def build_norm_adjacency(graph: BipartiteGraph) -> sp.csr_array:
    users, items = graph.edge_arrays()
    return build_norm_adjacency_from_edges(graph.n_users, graph.n_items, users, items)


def dropout_views(
    graph: BipartiteGraph, rho: float, seed
) -> tuple[sp.csr_array, sp.csr_array]:
    """Two independently edge-dropped, renormalized adjacency views.

    Each edge survives with probability 1 - rho; degrees are recomputed on
    the surviving subgraph. Deterministic for a fixed seed.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"edge dropout must be in (0, 1) to build views, got {rho}")
    rng = np.random.default_rng(seed)
    users, items = graph.edge_arrays()
    views = []
    for _ in range(2):
        keep = rng.random(len(users)) >= rho
        views.append(
            build_norm_adjacency_from_edges(graph.n_users, graph.n_items, users[keep], items[keep])
        )
    return views[0], views[1]


def init_model_state(tables: InitializedTables, graph: BipartiteGraph, layers: int) -> ModelState:
    if layers < 0:
        raise ConfigError(f"layers must be >= 0, got {layers}")
    return ModelState(
        user_table=tables.user_table.values.astype(np.float64),
        item_table=tables.item_table.values.astype(np.float64),
        layers=layers,
        norm_adjacency=build_norm_adjacency(graph),
    )


def _propagate_stack(adjacency: sp.csr_array, stacked: np.ndarray, layers: int) -> np.ndarray:
    """Mean of layers 0..L of repeated adjacency multiplication."""
    acc = stacked.copy()
    cur = stacked
    for _ in range(layers):
        cur = adjacency @ cur
        acc += cur
    return acc / (layers + 1)


def propagate(
    state: ModelState, adjacency: sp.csr_array | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Propagated (user, item) embeddings; layer 0 is the raw tables.

    ``adjacency`` overrides the state's train adjacency (used for dropped
    views); rows of isolated nodes simply shrink toward raw/(L+1).
    """
    adj = state.norm_adjacency if adjacency is None else adjacency
    stacked = np.vstack([state.user_table, state.item_table])
    out = _propagate_stack(adj, stacked, state.layers)
    return out[: state.n_users], out[state.n_users :]


def score(user_out: np.ndarray, item_out: np.ndarray, user: int) -> np.ndarray:
    """Inner-product scores of one user against every item."""
    return user_out[user] @ item_out.T


def _backprop_stack(
    adjacency: sp.csr_array, g_user: np.ndarray, g_item: np.ndarray, layers: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pull an output-embedding gradient back to the raw tables.

    The adjacency is symmetric, so the adjoint of propagation is
    propagation itself.
    """
    g = _propagate_stack(adjacency, np.vstack([g_user, g_item]), layers)
    return g[: g_user.shape[0]], g[g_user.shape[0] :]


def bpr_loss(
    state: ModelState,
    users: np.ndarray,
    pos_items: np.ndarray,
    neg_items: np.ndarray,
    cfg: LossConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Pairwise ranking loss with L2 on the layer-0 parameters.

    loss = mean_b[ -log sigmoid(s(u,pos) - s(u,neg)) ]
         + l2_weight * mean_b[ ||e_u||^2 + ||e_pos||^2 + ||e_neg||^2 ]

    Returns the scalar loss and gradients w.r.t. the raw tables.
    """
    batch = len(users)
    user_out, item_out = propagate(state)
    u_e = user_out[users]
    p_e = item_out[pos_items]
    n_e = item_out[neg_items]
    diff = np.einsum("bk,bk->b", u_e, p_e - n_e)
    rank_loss = float(np.mean(np.logaddexp(0.0, -diff)))

    # d/d diff of -log sigmoid(diff) is -sigmoid(-diff)
    coeff = (-expit(-diff) / batch)[:, None]
    g_user_out = np.zeros_like(user_out)
    g_item_out = np.zeros_like(item_out)
    np.add.at(g_user_out, users, coeff * (p_e - n_e))
    np.add.at(g_item_out, pos_items, coeff * u_e)
    np.add.at(g_item_out, neg_items, -coeff * u_e)
    g_user, g_item = _backprop_stack(state.norm_adjacency, g_user_out, g_item_out, state.layers)

    eu = state.user_table[users]
    ep = state.item_table[pos_items]
    en = state.item_table[neg_items]
    l2_loss = cfg.l2_weight / batch * float(
        np.sum(eu * eu) + np.sum(ep * ep) + np.sum(en * en)
    )
    scale = 2.0 * cfg.l2_weight / batch
    np.add.at(g_user, users, scale * eu)
    np.add.at(g_item, pos_items, scale * ep)
    np.add.at(g_item, neg_items, scale * en)

    return rank_loss + l2_loss, {"user": g_user, "item": g_item}


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise DataError("cannot cosine-normalize a zero embedding row")
    return x / norms[:, None], norms


def _infonce_block(
    za: np.ndarray, zb: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sum of per-anchor InfoNCE over one node block.

    Anchor i's positive is its own row in the second view; the denominator
    runs over every second-view row in the block, the anchor included.
    Returns (loss, grad wrt za, grad wrt zb).
    """
    a_hat, a_norm = _normalize_rows(za)
    b_hat, b_norm = _normalize_rows(zb)
    sims = a_hat @ b_hat.T / tau
    # rowwise logsumexp, stabilized
    m = sims.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(sims - m).sum(axis=1))
    loss = float(np.sum(lse - np.diag(sims)))

    softmax = np.exp(sims - lse[:, None])
    g_sims = (softmax - np.eye(len(za))) / tau
    g_a_hat = g_sims @ b_hat
    g_b_hat = g_sims.T @ a_hat
    # through row normalization: (g - (g.x_hat) x_hat) / ||x||
    g_a = (g_a_hat - np.einsum("bk,bk->b", g_a_hat, a_hat)[:, None] * a_hat) / a_norm[:, None]
    g_b = (g_b_hat - np.einsum("bk,bk->b", g_b_hat, b_hat)[:, None] * b_hat) / b_norm[:, None]
    return loss, g_a, g_b


def ssl_loss(
    state: ModelState,
    users: np.ndarray,
    items: np.ndarray,
    cfg: LossConfig,
    view_a: sp.csr_array,
    view_b: sp.csr_array,
) -> tuple[float, dict[str, np.ndarray]]:
    """InfoNCE between two edge-dropped propagation views, scaled by ssl_weight.

    ``users`` / ``items`` are deduplicated before use; user and item blocks
    contribute independent softmax denominators. Returns the scaled loss and
    gradients w.r.t. the raw tables.
    """
    if cfg.ssl_temperature <= 0:
        raise ConfigError("ssl_temperature must be positive")
    lam, tau = cfg.ssl_weight, cfg.ssl_temperature
    users = np.unique(users)
    items = np.unique(items)

    ua, ia = propagate(state, view_a)
    ub, ib = propagate(state, view_b)

    loss_u, g_ua, g_ub = _infonce_block(ua[users], ub[users], tau)
    loss_i, g_ia, g_ib = _infonce_block(ia[items], ib[items], tau)

    ga_user = np.zeros_like(ua)
    ga_item = np.zeros_like(ia)
    gb_user = np.zeros_like(ub)
    gb_item = np.zeros_like(ib)
    ga_user[users] = g_ua
    ga_item[items] = g_ia
    gb_user[users] = g_ub
    gb_item[items] = g_ib

    a_user, a_item = _backprop_stack(view_a, ga_user, ga_item, state.layers)
    b_user, b_item = _backprop_stack(view_b, gb_user, gb_item, state.layers)
    grads = {"user": lam * (a_user + b_user), "item": lam * (a_item + b_item)}
    return lam * (loss_u + loss_i), grads


class Adam(object):
    """Adam with bias correction; first/second moments persist across steps."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update; raises on non-finite gradients."""
        for name, g in grads.items():
            if not np.isfinite(g).all():
                bad = int((~np.isfinite(g)).sum())
                raise DataError(
                    f"non-finite gradient for {name!r} at step {self.t + 1} ({bad} entries)"
                )
            if g.shape != params[name].shape:
                raise DataError(
                    f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}"
                )
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self._m.setdefault(name, np.zeros_like(params[name]))
            v = self._v.setdefault(name, np.zeros_like(params[name]))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def sgd_step(state: ModelState, grads: dict[str, np.ndarray], optimizer: Adam) -> ModelState:
    """Apply one optimizer step to the state's tables (in place)."""
    optimizer.step({"user": state.user_table, "item": state.item_table}, grads)
    return state


def sample_triples(
    graph: BipartiteGraph, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One (user, positive, negative) triple per train edge.

    Negatives are drawn uniformly over items outside the user's train set,
    by rejection.
    """
    if int(graph.user_degree.max()) >= graph.n_items:
        raise ValueError("some user interacted with every item; cannot sample negatives")
    users, pos = graph.edge_arrays()
    keys = np.sort(users * graph.n_items + pos)

    def is_member(u, cand):
        q = u * graph.n_items + cand
        idx = np.searchsorted(keys, q)
        idx = np.minimum(idx, len(keys) - 1)
        return keys[idx] == q

    neg = rng.integers(0, graph.n_items, size=len(users), dtype=np.int64)
    bad = is_member(users, neg)
    while bad.any():
        neg[bad] = rng.integers(0, graph.n_items, size=int(bad.sum()), dtype=np.int64)
        bad[bad] = is_member(users[bad], neg[bad])
    return users, pos, neg
