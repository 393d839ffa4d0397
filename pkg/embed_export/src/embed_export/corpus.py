"""Item text corpus assembly.

Joins an item metadata JSONL file against a dataset index map and yields
one text per dense item index, in index order. The downstream matrix rows
inherit this order, so coverage must be exact: every dense index present
exactly once, no silent holes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import MetadataError

# stands in for items whose concatenated metadata is empty
PLACEHOLDER_TOKEN = "[empty]"


@dataclass(frozen=True)
class ItemMetadata:
    """One item's raw text fields plus its dense row index."""

    dense_index: int
    title: str
    category: str
    description: str

    @property
    def text(self) -> str:
        """title + category + description, whitespace-normalized.

        Empty segments are skipped; an all-empty item falls back to the
        placeholder token so every row embeds nonempty text.
        """
        segments = (
            " ".join(part.split())
            for part in (self.title, self.category, self.description)
        )
        joined = " ".join(s for s in segments if s)
        return joined or PLACEHOLDER_TOKEN


def load_index_map(path: str) -> dict[str, int]:
    """Read an item index map: either a bare {id: index} object or a
    manifest with an "items" key (the dataset tool emits both forms)."""
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MetadataError(f"{path} is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and isinstance(payload.get("items"), dict):
        payload = payload["items"]
    if not isinstance(payload, dict) or not payload:
        raise MetadataError(f"{path} holds no item index map")
    index_map = {str(k): int(v) for k, v in payload.items()}
    indices = sorted(index_map.values())
    if indices != list(range(len(index_map))):
        raise MetadataError(
            f"{path} indices are not a dense 0..{len(index_map) - 1} range"
        )
    return index_map


def _iter_metadata(path: str):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetadataError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(row, dict) or "item_id" not in row:
                raise MetadataError(f"{path}:{line_no}: row lacks an item_id")
            yield line_no, row


def build_corpus(metadata_path: str, index_map_path: str) -> list[ItemMetadata]:
    """Join metadata rows onto the index map, ordered by dense index.

    Rows for ids outside the map are ignored (catalog dumps usually cover
    more items than a filtered dataset keeps). Duplicate ids and missing
    coverage are hard errors; the latter lists the gaps.
    """
    index_map = load_index_map(index_map_path)
    by_index: dict[int, ItemMetadata] = {}
    for line_no, row in _iter_metadata(metadata_path):
        item_id = str(row["item_id"])
        if item_id not in index_map:
            continue
        idx = index_map[item_id]
        if idx in by_index:
            raise MetadataError(
                f"{metadata_path}:{line_no}: duplicate metadata for item {item_id!r}"
            )
        by_index[idx] = ItemMetadata(
            dense_index=idx,
            title=str(row.get("title", "")),
            category=str(row.get("category", "")),
            description=str(row.get("description", "")),
        )

    if len(by_index) != len(index_map):
        reverse = {v: k for k, v in index_map.items()}
        gaps = [i for i in range(len(index_map)) if i not in by_index]
        shown = ", ".join(f"{reverse[i]} (row {i})" for i in gaps[:10])
        more = f" and {len(gaps) - 10} more" if len(gaps) > 10 else ""
        raise MetadataError(
            f"metadata misses {len(gaps)} of {len(index_map)} items: {shown}{more}"
        )
    return [by_index[i] for i in range(len(index_map))]
