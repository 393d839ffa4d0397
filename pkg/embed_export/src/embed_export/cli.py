"""Command-line entry point for the exporter."""

from __future__ import annotations

import argparse
import sys

from .corpus import build_corpus, load_index_map
from .errors import ExportError
from .pipeline import embed_corpus


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed item metadata text into an index-aligned binary matrix.",
    )
    parser.add_argument("--metadata", required=True, help="item metadata JSONL")
    parser.add_argument("--index-map", required=True, help="dataset item index map JSON")
    parser.add_argument("--model", required=True, help="'hashed-<dim>' or 'st:<model>'")
    parser.add_argument("--out", required=True, help="output .lmi path")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--concurrency", type=int, default=1)
    parser.add_argument("--retries", type=int, default=3)
    parser.add_argument("--no-resume", action="store_true", help="discard any checkpoint")
    parser.add_argument("--sidecar", default=None, help="sidecar JSON path (default <out>.json)")
    args = parser.parse_args(argv)

    try:
        corpus = build_corpus(args.metadata, args.index_map)
        index_map = load_index_map(args.index_map)
        result = embed_corpus(
            corpus,
            args.model,
            args.out,
            index_map,
            batch_size=args.batch_size,
            concurrency=args.concurrency,
            max_retries=args.retries,
            resume=not args.no_resume,
            sidecar_path=args.sidecar,
        )
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"embedded {result.rows} items x {result.dim} dims "
        f"({result.resumed_rows} resumed) -> {result.out_path}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
