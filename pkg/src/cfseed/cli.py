"""Command-line entry points.

Every subcommand reads one JSON config and writes all outputs under a run
directory with the config copied in, so a run can be reproduced from its
directory alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import build_graph, load_interactions, write_split_manifest
from .embio import EmbeddingMatrix, index_map_checksum, read_matrix, write_matrix
from .errors import CFSeedError
from .evaluate import emit_report, full_rank_eval
from .experiments import (
    config_provenance,
    load_config,
    prepare_split,
    run_coldstart,
    run_main,
    run_size_sweep,
)
from .init import build_tables
from .model import ModelState, build_norm_adjacency


def _default_run_dir(config_path: str, command: str) -> str:
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return os.path.join("runs", f"{stem}-{command}")


def _load_split(cfg):
    dataset = load_interactions(cfg.interactions_path)
    return prepare_split(dataset, cfg)


def _cmd_prepare(cfg, run_dir: str) -> int:
    split, graph = _load_split(cfg)
    write_split_manifest(split, run_dir)
    stats = {
        "n_users": graph.n_users,
        "n_items": graph.n_items,
        "n_train": len(split.train),
        "n_validation": len(split.validation),
        "n_test": len(split.test),
    }
    with open(os.path.join(run_dir, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"prepared {graph.n_users} users x {graph.n_items} items, "
        f"{len(split.train)} train interactions -> {run_dir}"
    )
    return 0


def _cmd_init(cfg, run_dir: str) -> int:
    from .experiments import _resolve_inputs  # shared path/injection logic

    dataset, item_matrix, matrix_index = _resolve_inputs(cfg, None, None, None)
    split, graph = prepare_split(dataset, cfg)
    aligned = None
    if cfg.strategy != "baseline":
        from .embio import align_item_matrix

        aligned = align_item_matrix(
            item_matrix,
            matrix_index if matrix_index is not None else split.item_index,
            split.item_index,
        )
    k_dims = item_matrix.cols if cfg.strategy == "full" else cfg.embedding_dim
    tables = build_tables(
        cfg.strategy, graph, k_dims, aligned, cfg.pooling, cfg.rescale, cfg.init_seed
    )
    item = EmbeddingMatrix(
        tables.item_table.values, "item", index_map_checksum(split.item_index)
    )
    user = EmbeddingMatrix(
        tables.user_table.values, "user", index_map_checksum(split.user_index)
    )
    write_matrix(item, os.path.join(run_dir, "item_init.lmi"))
    write_matrix(user, os.path.join(run_dir, "user_init.lmi"))
    with open(os.path.join(run_dir, "index_map.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"users": split.user_index, "items": split.item_index},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    print(
        f"initialized tables ({tables.strategy_tag}/{tables.pooling_tag}, "
        f"K={tables.item_table.cols}) -> {run_dir}"
    )
    return 0


def _cmd_train(cfg, run_dir: str) -> int:
    result = run_main(cfg, out_dir=run_dir)
    r10 = result.report.recall.get(10)
    n10 = result.report.ndcg.get(10)
    print(
        f"trained (best epoch {result.best_epoch}, {result.parameter_count} params); "
        f"test recall@10={r10:.4f} ndcg@10={n10:.4f} -> {run_dir}"
    )
    return 0


def _cmd_eval(cfg, run_dir: str, checkpoint: str) -> int:
    split, graph = _load_split(cfg)
    with open(os.path.join(checkpoint, "checkpoint.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    user = read_matrix(os.path.join(checkpoint, "user_table.lmi"))
    item = read_matrix(os.path.join(checkpoint, "item_table.lmi"))
    state = ModelState(
        user_table=user.values.astype(np.float64),
        item_table=item.values.astype(np.float64),
        layers=int(meta["layers"]),
        norm_adjacency=build_norm_adjacency(graph),
    )
    report = full_rank_eval(state, split, cutoffs=cfg.cutoffs, target="test")
    emit_report(report, os.path.join(run_dir, "report.json"), fmt="json")
    emit_report(report, os.path.join(run_dir, "report.csv"), fmt="csv")
    parts = [f"recall@{k}={report.recall[k]:.4f}" for k in report.cutoffs]
    print(f"evaluated {report.n_users} users: {' '.join(parts)} -> {run_dir}")
    return 0


def _cmd_sweep(cfg, run_dir: str) -> int:
    rows = run_size_sweep(cfg, out_csv=os.path.join(run_dir, "sweep.csv"))
    print(f"swept K in {list(cfg.sweep_dims)} ({len(rows)} runs) -> {run_dir}")
    return 0


def _cmd_coldstart(cfg, run_dir: str) -> int:
    result = run_coldstart(cfg)
    for name, report in result.reports.items():
        fname = name.replace("/", "_") + ".json"
        emit_report(report, os.path.join(run_dir, fname), fmt="json")
    with open(os.path.join(run_dir, "gains.json"), "w", encoding="utf-8") as fh:
        json.dump(result.gains, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"coldstart fraction={result.fraction}: "
        f"gain(full)={result.gains['full']} gain(cold)={result.gains['cold']} -> {run_dir}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cfseed",
        description="Selective embedding initialization for graph collaborative filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "init", "train", "eval", "sweep", "coldstart"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--run-dir", default=None, help="output directory")
        if name == "eval":
            p.add_argument("--checkpoint", required=True, help="directory with a saved checkpoint")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        run_dir = args.run_dir or _default_run_dir(args.config, args.command)
        os.makedirs(run_dir, exist_ok=True)
        config_provenance(cfg, run_dir)
        if args.command == "prepare":
            return _cmd_prepare(cfg, run_dir)
        if args.command == "init":
            return _cmd_init(cfg, run_dir)
        if args.command == "train":
            return _cmd_train(cfg, run_dir)
        if args.command == "eval":
            return _cmd_eval(cfg, run_dir, args.checkpoint)
        if args.command == "sweep":
            return _cmd_sweep(cfg, run_dir)
        return _cmd_coldstart(cfg, run_dir)
    except (CFSeedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
