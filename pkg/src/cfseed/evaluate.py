"""Full-ranking evaluation over the entire item catalog.

Each held-out item is ranked against every item the user has not already
seen; no candidate sampling anywhere. Ties are broken by item index so
reports are exactly reproducible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import Split
from .errors import ConfigError
from .model import ModelState, propagate

_CHUNK = 256


@dataclass(frozen=True)
class EvalReport:
    """Ranking metrics plus the per-user rank detail behind them."""

    cutoffs: tuple[int, ...]
    recall: dict[int, float]
    ndcg: dict[int, float]
    per_user: list[tuple[int, int]]  # (dense user id, 1-based rank of held-out item)
    n_users: int
    n_skipped: int
    target: str


def _dense_pairs(split: Split, interactions) -> dict[int, int]:
    return {
        split.user_index[r.user_id]: split.item_index[r.item_id] for r in interactions
    }


def full_rank_eval(
    state: ModelState,
    split: Split,
    cutoffs: tuple[int, ...] = (10, 20),
    target: str = "test",
    outputs: tuple[np.ndarray, np.ndarray] | None = None,
) -> EvalReport:
    """Recall@k and NDCG@k under the full-ranking protocol.

    Scores every item for every user holding a ``target`` interaction, masks
    that user's train items (train and validation items when targeting test)
    to -inf, and ranks descending with ties going to the lower item index.
    With one held-out item per user, recall@k is the hit rate and ndcg@k is
    1/log2(rank+1) for hits. Users without a target interaction are skipped
    and counted in ``n_skipped``. Pass ``outputs`` to reuse an existing
    propagation instead of recomputing one.
    """
    if target not in ("test", "validation"):
        raise ConfigError(f"target must be 'test' or 'validation', got {target!r}")
    if len(cutoffs) == 0:
        raise ConfigError("need at least one cutoff")
    for k in cutoffs:
        if k < 1:
            raise ConfigError(f"cutoffs must be >= 1, got {k}")

    user_out, item_out = propagate(state) if outputs is None else outputs
    masked: list[list[int]] = [[] for _ in range(state.n_users)]
    for r in split.train:
        masked[split.user_index[r.user_id]].append(split.item_index[r.item_id])
    if target == "test":
        for r in split.validation:
            masked[split.user_index[r.user_id]].append(split.item_index[r.item_id])
    targets = _dense_pairs(split, split.test if target == "test" else split.validation)

    eval_users = sorted(targets)
    n_skipped = state.n_users - len(eval_users)
    per_user: list[tuple[int, int]] = []
    for start in range(0, len(eval_users), _CHUNK):
        chunk = eval_users[start : start + _CHUNK]
        scores = user_out[np.array(chunk, dtype=np.int64)] @ item_out.T
        for b, u in enumerate(chunk):
            t = targets[u]
            s = scores[b]
            s_t = s[t]
            s[masked[u]] = -np.inf
            rank = 1 + int(np.count_nonzero(s > s_t)) + int(np.count_nonzero(s[:t] == s_t))
            per_user.append((u, rank))

    n = len(per_user)
    ranks = np.array([r for _, r in per_user], dtype=np.int64)
    recall: dict[int, float] = {}
    ndcg: dict[int, float] = {}
    for k in cutoffs:
        if n == 0:
            recall[k] = 0.0
            ndcg[k] = 0.0
            continue
        hit = ranks <= k
        recall[k] = float(np.mean(hit))
        ndcg[k] = float(np.mean(np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0)))
    return EvalReport(
        cutoffs=tuple(cutoffs),
        recall=recall,
        ndcg=ndcg,
        per_user=per_user,
        n_users=n,
        n_skipped=n_skipped,
        target=target,
    )


def _sig6(value: float) -> float:
    return float(f"{value:.6g}")


def emit_report(report: EvalReport, path: str, fmt: str = "json") -> None:
    """Serialize a report with stable field order and 6-significant-digit floats.

    JSON carries the full report including per-user ranks; CSV is one row
    per cutoff (plus header) for plotting.
    """
    if fmt == "json":
        payload = {
            "target": report.target,
            "cutoffs": list(report.cutoffs),
            "n_users": report.n_users,
            "n_skipped": report.n_skipped,
            "recall": {str(k): _sig6(v) for k, v in report.recall.items()},
            "ndcg": {str(k): _sig6(v) for k, v in report.ndcg.items()},
            "per_user": [[u, r] for u, r in report.per_user],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cutoff", "recall", "ndcg", "n_users", "n_skipped"])
            for k in report.cutoffs:
                writer.writerow(
                    [k, f"{report.recall[k]:.6g}", f"{report.ndcg[k]:.6g}",
                     report.n_users, report.n_skipped]
                )
    else:
        raise ConfigError(f"unknown report format {fmt!r}")


def load_report(path: str) -> EvalReport:
    """Parse a JSON report back into an EvalReport."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return EvalReport(
        cutoffs=tuple(payload["cutoffs"]),
        recall={int(k): v for k, v in payload["recall"].items()},
        ndcg={int(k): v for k, v in payload["ndcg"].items()},
        per_user=[(u, r) for u, r in payload["per_user"]],
        n_users=payload["n_users"],
        n_skipped=payload["n_skipped"],
        target=payload["target"],
    )
