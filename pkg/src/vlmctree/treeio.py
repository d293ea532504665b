"""JSON-lines tree records.

One record per line::

    {"id": "p1", "alphabet": "ACDE...", "max_depth": 4,
     "nodes": ["", "A", "AC", ...], "probs": {"AC": [0.1, ...], ...}}

Nodes are written most recent symbol first, the root as ``""``. ``probs`` is
optional. Floats are written with ``repr`` precision so a round trip is exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

from .tree import ContextTree, format_node, parse_node
from .vlmc import ProbabilisticContextTree, _default_symbols

__all__ = ["TreeRecord", "dump_records", "load_records", "read_trees", "record_to_tree", "tree_to_record",
           "write_trees"]


@dataclass
class TreeRecord:
    id: str
    tree: ContextTree
    symbols: str
    pct: ProbabilisticContextTree | None = None


def tree_to_record(tree, symbols: str | None = None, id: str | None = None) -> dict:
    """Record for a :class:`ContextTree` or :class:`ProbabilisticContextTree`."""
    pct = tree if isinstance(tree, ProbabilisticContextTree) else None
    if pct is not None:
        symbols = symbols or pct.symbols
        tree = pct.tree
    symbols = symbols or _default_symbols(tree.alphabet_size)
    rec = {}
    if id is not None:
        rec["id"] = id
    rec["alphabet"] = symbols
    rec["max_depth"] = tree.max_depth
    rec["nodes"] = [format_node(v, symbols) for v in tree]
    if pct is not None:
        rec["probs"] = {format_node(v, symbols): [float(p) for p in pct.probs[v]]
                        for v in tree if v in pct.probs}
    return rec


def record_to_tree(rec: dict) -> TreeRecord:
    try:
        symbols = rec["alphabet"]
        depth = int(rec["max_depth"])
        nodes = [parse_node(s, symbols) for s in rec["nodes"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed tree record: {exc}") from None
    tree = ContextTree(len(symbols), depth, nodes)
    pct = None
    if "probs" in rec:
        probs = {parse_node(k, symbols): v for k, v in rec["probs"].items()}
        pct = ProbabilisticContextTree(tree, probs, symbols)
    return TreeRecord(str(rec.get("id", "")), tree, symbols, pct)


def dump_records(records: Iterable[dict], handle: IO[str]) -> None:
    for rec in records:
        handle.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_records(handle: IO[str]) -> list[TreeRecord]:
    out = []
    for lineno, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        out.append(record_to_tree(rec))
    return out


def write_trees(path: str | os.PathLike, trees: Iterable, ids: Iterable[str] | None = None) -> None:
    trees = list(trees)
    ids = [str(i) for i in range(len(trees))] if ids is None else list(ids)
    with open(path, "w", encoding="utf-8") as fh:
        dump_records((tree_to_record(t, id=i) for i, t in zip(ids, trees)), fh)


def read_trees(path: str | os.PathLike) -> list[TreeRecord]:
    """Load every record from a file, or from each ``*.json``/``*.jsonl`` file of a directory.

    Directory files are read in sorted name order. Ids must be unique.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix in (".json", ".jsonl"))
    else:
        files = [path]
    records = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            recs = load_records(fh)
        for k, rec in enumerate(recs):
            if not rec.id:
                rec.id = f.stem if len(recs) == 1 else f"{f.stem}:{k}"
        records.extend(recs)
    seen = set()
    for rec in records:
        if rec.id in seen:
            raise ValueError(f"duplicate tree id {rec.id!r}")
        seen.add(rec.id)
    return records
