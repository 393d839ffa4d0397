"""Interaction ingestion, k-core filtering, splitting, and graph construction.

All types here are plain records, immutable by convention once built; they can
be shared freely across workers. Construction is single-threaded.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError, ParseError


@dataclass(frozen=True)
class Interaction:
    """One deduplicated (user, item) event with its timestamp in seconds."""

    user_id: str
    item_id: str
    timestamp: int


@dataclass
class InteractionDataset:
    """Deduplicated interactions plus dense integer re-indexing.

    ``user_index`` / ``item_index`` map original opaque ids to dense indices
    in [0, n_users) / [0, n_items), assigned in first-appearance order.
    """

    interactions: list[Interaction]
    user_index: dict[str, int]
    item_index: dict[str, int]

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_items(self) -> int:
        return len(self.item_index)


@dataclass
class Split:
    """Leave-one-out split. Index maps are carried over from the dataset."""

    train: list[Interaction]
    validation: list[Interaction]
    test: list[Interaction]
    user_index: dict[str, int]
    item_index: dict[str, int]

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_items(self) -> int:
        return len(self.item_index)


@dataclass
class BipartiteGraph:
    """Sparse bipartite adjacency over train edges, both orientations.

    Adjacency lists are ascending int64 arrays; degree arrays always equal
    the list lengths. Items may have degree zero (after cold-start
    perturbation); users never do.
    """

    user_adjacency: list[np.ndarray]
    item_adjacency: list[np.ndarray]
    user_degree: np.ndarray
    item_degree: np.ndarray
    n_edges: int

    @property
    def n_users(self) -> int:
        return len(self.user_adjacency)

    @property
    def n_items(self) -> int:
        return len(self.item_adjacency)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """All train edges as parallel (user, item) index arrays."""
        if self.n_edges == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        users = np.repeat(np.arange(self.n_users, dtype=np.int64), self.user_degree)
        items = np.concatenate([a for a in self.user_adjacency if len(a)])
        return users, items


def _index_interactions(interactions: list[Interaction]) -> InteractionDataset:
    """Assign dense indices in first-appearance order."""
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    for it in interactions:
        if it.user_id not in user_index:
            user_index[it.user_id] = len(user_index)
        if it.item_id not in item_index:
            item_index[it.item_id] = len(item_index)
    return InteractionDataset(interactions, user_index, item_index)


def load_interactions(path: str, fmt: str = "tsv") -> InteractionDataset:
    """Read a user/item/timestamp file into a deduplicated, indexed dataset.

    A header row is auto-detected: if the third field of the first row does
    not parse as an integer, the row is treated as a header and skipped.
    Duplicate (user, item) pairs collapse to a single interaction keeping the
    earliest timestamp; index assignment follows first appearance in the file.

    Args:
        path: input file; rows need at least user, item, timestamp columns.
        fmt: "tsv" or "csv".

    Raises:
        ParseError: malformed row (too few columns, bad timestamp).
        EmptyDatasetError: file contains no data rows.
    """
    if fmt not in ("tsv", "csv"):
        raise ValueError(f"unknown format {fmt!r}, expected 'tsv' or 'csv'")
    delimiter = "\t" if fmt == "tsv" else ","

    earliest: dict[tuple[str, str], int] = {}
    order: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        first_data_row = True
        for line_no, row in enumerate(reader, start=1):
            if not row or all(f.strip() == "" for f in row):
                continue
            if len(row) < 3:
                raise ParseError(line_no, f"expected >=3 columns, got {len(row)}")
            user, item, ts_raw = row[0].strip(), row[1].strip(), row[2].strip()
            if first_data_row:
                first_data_row = False
                try:
                    int(ts_raw)
                except ValueError:
                    continue  # header row
            try:
                ts = int(ts_raw)
            except ValueError:
                raise ParseError(line_no, f"timestamp {ts_raw!r} is not an integer") from None
            if ts < 0:
                raise ParseError(line_no, f"negative timestamp {ts}")
            key = (user, item)
            if key in earliest:
                if ts < earliest[key]:
                    earliest[key] = ts
            else:
                earliest[key] = ts
                order.append(key)

    if not order:
        raise EmptyDatasetError(f"no interactions found in {path}")
    interactions = [Interaction(u, i, earliest[(u, i)]) for u, i in order]
    return _index_interactions(interactions)


def k_core_filter(ds: InteractionDataset, k: int) -> InteractionDataset:
    """Iteratively drop users and items with degree < k until a fixed point.

    The result is the unique maximal k-core of the interaction graph, with
    indices re-densified in first-appearance order of the survivors.

    Raises:
        EmptyDatasetError: nothing survives the filter.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    uids = np.array([ds.user_index[it.user_id] for it in ds.interactions], dtype=np.int64)
    iids = np.array([ds.item_index[it.item_id] for it in ds.interactions], dtype=np.int64)
    alive = np.ones(len(ds.interactions), dtype=bool)
    while True:
        u_deg = np.bincount(uids[alive], minlength=ds.n_users)
        i_deg = np.bincount(iids[alive], minlength=ds.n_items)
        keep = alive & (u_deg[uids] >= k) & (i_deg[iids] >= k)
        if np.array_equal(keep, alive):
            break
        alive = keep
    if not alive.any():
        raise EmptyDatasetError(f"no interactions left after {k}-core filtering")
    survivors = [it for it, a in zip(ds.interactions, alive) if a]
    return _index_interactions(survivors)


def leave_one_out_split(ds: InteractionDataset) -> Split:
    """Hold out the latest interaction per user as test, second-latest as validation.

    Timestamp ties break by input order (a later row counts as later). Every
    user must have at least three interactions.

    Raises:
        ValueError: some user has fewer than three interactions.
    """
    per_user: dict[str, list[int]] = {}
    for pos, it in enumerate(ds.interactions):
        per_user.setdefault(it.user_id, []).append(pos)

    held_out: dict[int, str] = {}  # interaction position -> "validation" | "test"
    for user, positions in per_user.items():
        if len(positions) < 3:
            raise ValueError(
                f"user {user!r} has {len(positions)} interactions; leave-one-out needs >= 3"
            )
        # stable sort: ties keep file order, so the last row wins
        ranked = sorted(positions, key=lambda p: ds.interactions[p].timestamp)
        held_out[ranked[-1]] = "test"
        held_out[ranked[-2]] = "validation"

    train, validation, test = [], [], []
    for pos, it in enumerate(ds.interactions):
        role = held_out.get(pos)
        if role == "test":
            test.append(it)
        elif role == "validation":
            validation.append(it)
        else:
            train.append(it)
    return Split(train, validation, test, ds.user_index, ds.item_index)


def coldstart_perturb(split: Split, fraction: float, seed: int) -> Split:
    """Remove floor(fraction * degree) train edges per user by seeded sampling.

    Validation and test are untouched, every user keeps at least one train
    edge, and items left without train edges stay in the index space.

    Args:
        fraction: fraction of each user's train edges to drop, in (0, 1).
        seed: RNG seed; identical (split, fraction, seed) gives identical output.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    by_user: dict[int, list[int]] = {}
    for pos, it in enumerate(split.train):
        by_user.setdefault(split.user_index[it.user_id], []).append(pos)

    rng = np.random.default_rng(seed)
    dropped: set[int] = set()
    for uid in sorted(by_user):
        positions = by_user[uid]
        n_remove = int(fraction * len(positions))
        if n_remove == 0:
            continue
        chosen = rng.choice(len(positions), size=n_remove, replace=False)
        dropped.update(positions[c] for c in chosen)

    train = [it for pos, it in enumerate(split.train) if pos not in dropped]
    return Split(train, split.validation, split.test, split.user_index, split.item_index)


def build_graph(split: Split) -> BipartiteGraph:
    """Build the bipartite adjacency (both orientations) from train edges only."""
    if not split.train:
        raise EmptyDatasetError("cannot build a graph from an empty train set")
    n_users, n_items = split.n_users, split.n_items
    user_lists: list[list[int]] = [[] for _ in range(n_users)]
    item_lists: list[list[int]] = [[] for _ in range(n_items)]
    for it in split.train:
        u = split.user_index[it.user_id]
        i = split.item_index[it.item_id]
        user_lists[u].append(i)
        item_lists[i].append(u)
    user_adjacency = [np.sort(np.asarray(lst, dtype=np.int64)) for lst in user_lists]
    item_adjacency = [np.sort(np.asarray(lst, dtype=np.int64)) for lst in item_lists]
    user_degree = np.array([len(a) for a in user_adjacency], dtype=np.int64)
    item_degree = np.array([len(a) for a in item_adjacency], dtype=np.int64)
    return BipartiteGraph(user_adjacency, item_adjacency, user_degree, item_degree, len(split.train))


def write_split_manifest(split: Split, out_dir: str) -> None:
    """Write train/validation/test edge lists plus the id -> dense index map.

    Edge lists are TSV rows of (dense user index, dense item index, timestamp);
    the JSON map recovers original ids. This is the hand-off surface for
    external tooling that must align row order with dense indices.
    """
    os.makedirs(out_dir, exist_ok=True)
    for name, edges in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        with open(os.path.join(out_dir, f"{name}.tsv"), "w", encoding="utf-8") as fh:
            for it in edges:
                fh.write(f"{split.user_index[it.user_id]}\t{split.item_index[it.item_id]}\t{it.timestamp}\n")
    with open(os.path.join(out_dir, "index_map.json"), "w", encoding="utf-8") as fh:
        json.dump({"users": split.user_index, "items": split.item_index}, fh, ensure_ascii=False, indent=1)
        fh.write("\n")
