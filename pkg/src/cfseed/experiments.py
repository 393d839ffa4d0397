"""Config-driven experiment runners: main comparison, size sweep, cold-start.

Every run is fully determined by a RunConfig; seeds are explicit and split
into data / init / train roles so studies can vary one stage at a time.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import (
    BipartiteGraph,
    InteractionDataset,
    Split,
    build_graph,
    coldstart_perturb,
    k_core_filter,
    leave_one_out_split,
    load_interactions,
)
from .embio import EmbeddingMatrix, align_item_matrix, read_matrix, write_matrix
from .errors import ConfigError
from .evaluate import EvalReport, emit_report, full_rank_eval
from .init import POOLINGS, STRATEGIES, build_tables
from .model import (
    Adam,
    LossConfig,
    ModelState,
    bpr_loss,
    dropout_views,
    init_model_state,
    sample_triples,
    sgd_step,
    ssl_loss,
)


@dataclass
class RunConfig:
    """Everything one experiment needs; unknown keys are rejected on load."""

    # data sources (optional when the caller injects objects directly)
    interactions_path: str | None = None
    embeddings_path: str | None = None
    index_map_path: str | None = None
    k_core: int = 5
    # initialization
    strategy: str = "var"
    pooling: str = "mean"
    rescale: str = "none"
    embedding_dim: int = 128
    # model and loss
    layers: int = 3
    learning_rate: float = 1e-3
    batch_size: int = 2048
    max_epochs: int = 500
    patience: int = 10
    l2_weight: float = 1e-4
    ssl_weight: float = 0.1
    ssl_temperature: float = 0.2
    edge_dropout: float = 0.1
    cutoffs: tuple[int, ...] = (10, 20)
    # ablation: keep the initialized item table fixed, train users only
    freeze_item_table: bool = False
    # seeds, one per pipeline stage
    data_seed: int = 0
    init_seed: int = 0
    train_seed: int = 0
    # study knobs
    sweep_dims: tuple[int, ...] = (16, 32, 64, 128, 256, 512, 1024, 2048, 4096)
    coldstart_fraction: float = 0.5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.rescale not in ("none", "zscore"):
            raise ConfigError(f"rescale must be 'none' or 'zscore', got {self.rescale!r}")
        for name in ("k_core", "embedding_dim", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.coldstart_fraction < 1.0:
            raise ConfigError(
                f"coldstart_fraction must be in [0, 1), got {self.coldstart_fraction}"
            )
        self.cutoffs = tuple(int(k) for k in self.cutoffs)
        if (
            not self.cutoffs
            or any(k < 1 for k in self.cutoffs)
            or list(self.cutoffs) != sorted(set(self.cutoffs))
        ):
            raise ConfigError(f"cutoffs must be ascending positive integers, got {self.cutoffs}")
        self.sweep_dims = tuple(int(k) for k in self.sweep_dims)
        if (
            not self.sweep_dims
            or any(k < 1 for k in self.sweep_dims)
            or list(self.sweep_dims) != sorted(set(self.sweep_dims))
        ):
            raise ConfigError(f"sweep_dims must be ascending positive integers, got {self.sweep_dims}")
        # LossConfig re-validates, but fail at config load, not mid-run
        self.loss_config()

    def loss_config(self) -> LossConfig:
        return LossConfig(
            l2_weight=self.l2_weight,
            ssl_weight=self.ssl_weight,
            ssl_temperature=self.ssl_temperature,
            edge_dropout=self.edge_dropout,
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


def load_config(path: str) -> RunConfig:
    """Load a RunConfig from a JSON key-value file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(raw)


@dataclass
class RunResult:
    """Outcome of one end-to-end training run."""

    report: EvalReport
    parameter_count: int
    best_epoch: int
    history: list[dict] = field(repr=False)
    n_users: int = 0
    n_items: int = 0


def prepare_split(dataset: InteractionDataset, cfg: RunConfig) -> tuple[Split, BipartiteGraph]:
    """Filter to the k-core, split leave-one-out, and build the train graph."""
    filtered = k_core_filter(dataset, cfg.k_core)
    split = leave_one_out_split(filtered)
    return split, build_graph(split)


def train_model(
    split: Split, graph: BipartiteGraph, tables, cfg: RunConfig
) -> tuple[ModelState, list[dict], int]:
    """BPR (+ optional InfoNCE) training with early stopping.

    Stops when validation NDCG@10 has not improved for ``patience``
    consecutive epochs, then restores the best-epoch parameters. Epoch e
    draws its negatives, batch order, and dropout views from rngs seeded
    with (train_seed, e), so runs are exactly repeatable.
    """
    state = init_model_state(tables, graph, cfg.layers)
    loss_cfg = cfg.loss_config()
    opt = Adam(lr=cfg.learning_rate)
    use_ssl = loss_cfg.ssl_weight > 0 and loss_cfg.edge_dropout > 0

    history: list[dict] = []
    best_val = -np.inf
    best_epoch = -1
    best_tables: tuple[np.ndarray, np.ndarray] | None = None
    bad_epochs = 0
    for epoch in range(cfg.max_epochs):
        rng = np.random.default_rng([cfg.train_seed, epoch])
        users, pos, neg = sample_triples(graph, rng)
        perm = rng.permutation(len(users))
        users, pos, neg = users[perm], pos[perm], neg[perm]
        if use_ssl:
            view_a, view_b = dropout_views(
                graph, loss_cfg.edge_dropout, [cfg.train_seed, epoch, 1]
            )
        batch_losses = []
        for s in range(0, len(users), cfg.batch_size):
            bu = users[s : s + cfg.batch_size]
            bp = pos[s : s + cfg.batch_size]
            bn = neg[s : s + cfg.batch_size]
            loss, grads = bpr_loss(state, bu, bp, bn, loss_cfg)
            if use_ssl:
                extra, g2 = ssl_loss(state, bu, bp, loss_cfg, view_a, view_b)
                loss += extra
                grads = {name: grads[name] + g2[name] for name in grads}
            if cfg.freeze_item_table:
                del grads["item"]
            sgd_step(state, grads, opt)
            batch_losses.append(loss)

        val = full_rank_eval(state, split, cutoffs=(10,), target="validation").ndcg[10]
        history.append(
            {"epoch": epoch, "loss": float(np.mean(batch_losses)), "val_ndcg10": val}
        )
        if val > best_val:
            best_val = val
            best_epoch = epoch
            best_tables = (state.user_table.copy(), state.item_table.copy())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    if best_tables is not None:
        state.user_table, state.item_table = best_tables
    return state, history, best_epoch


def _load_matrix_index(cfg: RunConfig) -> dict[str, int] | None:
    if cfg.index_map_path is None:
        return None
    with open(cfg.index_map_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    # accept both a bare id -> row map and a split manifest's {"items": ...}
    mapping = raw.get("items", raw) if isinstance(raw, dict) else raw
    if not isinstance(mapping, dict):
        raise ConfigError(f"{cfg.index_map_path}: expected an object mapping ids to rows")
    return {str(k): int(v) for k, v in mapping.items()}


def _resolve_inputs(
    cfg: RunConfig,
    dataset: InteractionDataset | None,
    item_matrix: EmbeddingMatrix | None,
    matrix_index: dict[str, int] | None,
) -> tuple[InteractionDataset, EmbeddingMatrix | None, dict[str, int] | None]:
    if dataset is None:
        if cfg.interactions_path is None:
            raise ConfigError("no dataset given and no interactions_path configured")
        dataset = load_interactions(cfg.interactions_path)
    if cfg.strategy != "baseline" and item_matrix is None:
        if cfg.embeddings_path is None:
            raise ConfigError(f"strategy {cfg.strategy!r} needs embeddings_path")
        matrix_index = _load_matrix_index(cfg)
        item_matrix = read_matrix(cfg.embeddings_path, index_map=matrix_index)
    return dataset, item_matrix, matrix_index


def _write_checkpoint(out_dir: str, state: ModelState, tables, cfg: RunConfig) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_matrix(
        EmbeddingMatrix(state.user_table.astype(np.float32), key_space="user"),
        os.path.join(out_dir, "user_table.lmi"),
    )
    write_matrix(
        EmbeddingMatrix(state.item_table.astype(np.float32), key_space="item"),
        os.path.join(out_dir, "item_table.lmi"),
    )
    meta = {
        "layers": cfg.layers,
        "loss": {
            "l2_weight": cfg.l2_weight,
            "ssl_weight": cfg.ssl_weight,
            "ssl_temperature": cfg.ssl_temperature,
            "edge_dropout": cfg.edge_dropout,
        },
        "seeds": {"data": cfg.data_seed, "init": cfg.init_seed, "train": cfg.train_seed},
        "strategy_tag": tables.strategy_tag,
        "pooling_tag": tables.pooling_tag,
        "embedding_dim": state.dim,
    }
    with open(os.path.join(out_dir, "checkpoint.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_on_split(
    split: Split,
    graph: BipartiteGraph,
    cfg: RunConfig,
    item_matrix: EmbeddingMatrix | None,
    matrix_index: dict[str, int] | None,
    out_dir: str | None = None,
) -> RunResult:
    aligned = None
    if cfg.strategy != "baseline":
        assert item_matrix is not None
        aligned = align_item_matrix(
            item_matrix, matrix_index if matrix_index is not None else split.item_index,
            split.item_index,
        )
    k_dims = item_matrix.cols if cfg.strategy == "full" else cfg.embedding_dim
    tables = build_tables(
        cfg.strategy, graph, k_dims, aligned, cfg.pooling, cfg.rescale, cfg.init_seed
    )
    state, history, best_epoch = train_model(split, graph, tables, cfg)
    report = full_rank_eval(state, split, cutoffs=cfg.cutoffs, target="test")
    if out_dir is not None:
        _write_checkpoint(out_dir, state, tables, cfg)
        emit_report(report, os.path.join(out_dir, "report.json"), fmt="json")
        with open(os.path.join(out_dir, "history.json"), "w", encoding="utf-8") as fh:
            json.dump(history, fh, indent=2)
            fh.write("\n")
    return RunResult(
        report=report,
        parameter_count=(graph.n_users + graph.n_items) * state.dim,
        best_epoch=best_epoch,
        history=history,
        n_users=graph.n_users,
        n_items=graph.n_items,
    )


def run_main(
    cfg: RunConfig,
    dataset: InteractionDataset | None = None,
    item_matrix: EmbeddingMatrix | None = None,
    matrix_index: dict[str, int] | None = None,
    out_dir: str | None = None,
) -> RunResult:
    """Full pipeline: filter, split, init, train, test eval.

    The parameter count is (M + I) * K, embedding tables only. Pass
    ``dataset`` / ``item_matrix`` / ``matrix_index`` to bypass file loading
    (tests and synthetic studies); otherwise paths come from the config.
    Without an index map, matrix rows are assumed to already be in the
    split's dense item order.
    """
    dataset, item_matrix, matrix_index = _resolve_inputs(cfg, dataset, item_matrix, matrix_index)
    split, graph = prepare_split(dataset, cfg)
    return _run_on_split(split, graph, cfg, item_matrix, matrix_index, out_dir)


def run_size_sweep(
    cfg: RunConfig,
    dataset: InteractionDataset | None = None,
    out_csv: str | None = None,
) -> list[dict]:
    """One baseline-random training run per configured embedding size.

    Emits the collapse-curve data: rows are exactly ``sweep_dims`` in order,
    with columns (K, params, recall@10, ndcg@10).
    """
    dataset, _, _ = _resolve_inputs(replace(cfg, strategy="baseline"), dataset, None, None)
    split, graph = prepare_split(dataset, cfg)
    cuts = tuple(sorted(set(cfg.cutoffs) | {10}))
    rows = []
    for k_dims in cfg.sweep_dims:
        sub = replace(cfg, strategy="baseline", embedding_dim=k_dims, cutoffs=cuts)
        result = _run_on_split(split, graph, sub, None, None)
        rows.append(
            {
                "K": k_dims,
                "params": result.parameter_count,
                "recall@10": result.report.recall[10],
                "ndcg@10": result.report.ndcg[10],
            }
        )
    if out_csv is not None:
        with open(out_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["K", "params", "recall@10", "ndcg@10"])
            for row in rows:
                writer.writerow(
                    [row["K"], row["params"], f"{row['recall@10']:.6g}", f"{row['ndcg@10']:.6g}"]
                )
    return rows


@dataclass
class ColdstartResult:
    """Reports and relative gains for the cold-start study."""

    reports: dict[str, EvalReport]
    gains: dict[str, dict[str, float]]
    fraction: float


def _relative_gain(init_value: float, base_value: float) -> float:
    if base_value == 0.0:
        return float("inf") if init_value > 0 else 0.0
    return (init_value - base_value) / base_value


def run_coldstart(
    cfg: RunConfig,
    dataset: InteractionDataset | None = None,
    item_matrix: EmbeddingMatrix | None = None,
    matrix_index: dict[str, int] | None = None,
) -> ColdstartResult:
    """Initialized-vs-baseline gains on the full and the perturbed split.

    The perturbation drops a fraction of each user's train interactions
    (seeded by data_seed); the test set never changes. Gains are relative:
    (initialized - baseline) / baseline, computed per metric on both splits.
    """
    if cfg.strategy == "baseline":
        raise ConfigError("coldstart study needs a non-baseline strategy to compare")
    dataset, item_matrix, matrix_index = _resolve_inputs(cfg, dataset, item_matrix, matrix_index)
    full_split, full_graph = prepare_split(dataset, cfg)
    if cfg.coldstart_fraction == 0.0:
        cold_split, cold_graph = full_split, full_graph
    else:
        cold_split = coldstart_perturb(full_split, cfg.coldstart_fraction, cfg.data_seed)
        cold_graph = build_graph(cold_split)

    reports: dict[str, EvalReport] = {}
    for split_name, split, graph in (
        ("full", full_split, full_graph),
        ("cold", cold_split, cold_graph),
    ):
        for strategy in (cfg.strategy, "baseline"):
            sub = replace(cfg, strategy=strategy)
            result = _run_on_split(split, graph, sub, item_matrix, matrix_index)
            reports[f"{split_name}/{strategy}"] = result.report

    gains: dict[str, dict[str, float]] = {}
    for split_name in ("full", "cold"):
        init_rep = reports[f"{split_name}/{cfg.strategy}"]
        base_rep = reports[f"{split_name}/baseline"]
        gains[split_name] = {}
        for k in cfg.cutoffs:
            gains[split_name][f"recall@{k}"] = _relative_gain(
                init_rep.recall[k], base_rep.recall[k]
            )
            gains[split_name][f"ndcg@{k}"] = _relative_gain(init_rep.ndcg[k], base_rep.ndcg[k])
    return ColdstartResult(reports=reports, gains=gains, fraction=cfg.coldstart_fraction)


def config_provenance(cfg: RunConfig, out_dir: str) -> None:
    """Copy the effective config into the run directory."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
