"""Variable-length Markov chains: context counting, PST-style fitting and sampling."""

from __future__ import annotations

import string
from bisect import bisect_right
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .sequence_io import Alphabet, SymbolSequence
from .tree import ROOT, ContextTree, format_node

__all__ = [
    "CountTrie",
    "EmptyEvidenceError",
    "ProbabilisticContextTree",
    "PstParams",
    "count_contexts",
    "example_model",
    "fit_pst",
    "generate",
    "lookup_context",
]


class EmptyEvidenceError(ValueError):
    """The sequence has no position with a full context window."""


def _default_symbols(size: int) -> str:
    pool = string.digits[1:] + string.ascii_uppercase
    if size > len(pool):
        raise ValueError("no default symbols for alphabets this large")
    return pool[:size]


class ProbabilisticContextTree:
    """A context tree with a next-symbol distribution at each context.

    Internal nodes may carry a distribution too (fitted trees store one at
    every node); only leaves are required to.
    """

    def __init__(self, tree: ContextTree, probs: Mapping[Sequence[int], Sequence[float]],
                 symbols: str | None = None):
        self.tree = tree
        self.symbols = symbols or _default_symbols(tree.alphabet_size)
        if len(self.symbols) != tree.alphabet_size:
            raise ValueError("symbols do not match the tree's alphabet size")
        table = {}
        for node, vec in probs.items():
            node = tuple(node)
            if node not in tree:
                raise ValueError(f"probability vector for absent node {node!r}")
            arr = np.array(vec, dtype=float)
            if arr.shape != (tree.alphabet_size,):
                raise ValueError(f"probability vector at {node!r} has wrong length")
            if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
                raise ValueError(f"probability vector at {node!r} is not a distribution")
            arr.flags.writeable = False
            table[node] = arr
        missing = [v for v in tree.contexts() if v not in table]
        if missing:
            raise ValueError(f"context {missing[0]!r} has no probability vector")
        self.probs = table

    @property
    def max_depth(self) -> int:
        return self.tree.max_depth

    @property
    def alphabet_size(self) -> int:
        return self.tree.alphabet_size

    def contexts(self) -> list[tuple]:
        return self.tree.contexts()

    def __eq__(self, other):
        if not isinstance(other, ProbabilisticContextTree):
            return NotImplemented
        return (
            self.tree == other.tree
            and self.symbols == other.symbols
            and self.probs.keys() == other.probs.keys()
            and all(np.array_equal(self.probs[k], other.probs[k]) for k in self.probs)
        )

    __hash__ = None

    def __repr__(self):
        ctx = ", ".join(
            f"{format_node(v, self.symbols, oldest_first=True) or 'λ'}: {np.round(self.probs[v], 3).tolist()}"
            for v in self.contexts()
        )
        return f"ProbabilisticContextTree({{{ctx}}})"


@dataclass(frozen=True)
class PstParams:
    max_depth: int = 4
    p_min: float = 0.001
    ratio: float = 1.05
    gamma_min: float = 0.001
    alpha: float = 0.0

    def __post_init__(self):
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ValueError("max_depth must be a positive integer")
        if not 0.0 <= self.p_min <= 1.0:
            raise ValueError("p_min must lie in [0, 1]")
        if not self.ratio > 1.0:
            raise ValueError("ratio must be > 1")
        if self.gamma_min < 0.0:
            raise ValueError("gamma_min must be >= 0")
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if (1.0 + self.alpha) * self.gamma_min >= 1.0:
            raise ValueError("(1 + alpha) * gamma_min must be < 1")

    def check_alphabet(self, alphabet_size: int):
        if self.gamma_min * alphabet_size >= 1.0:
            raise ValueError(f"gamma_min must be < 1/{alphabet_size}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "PstParams":
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(kinds)
        if unknown:
            raise ValueError(f"unknown PST parameter(s): {', '.join(sorted(unknown))}")
        return cls(**{k: (int(v) if k == "max_depth" else float(v)) for k, v in values.items()})


@dataclass
class CountTrie:
    """Occurrence and next-symbol counts of every observed past up to ``max_depth``.

    Only positions with a full window of ``max_depth`` predecessors inside
    their segment are counted, so a parent's counts dominate its children's.
    """

    alphabet_size: int
    max_depth: int
    next_counts: dict  # node -> int array of length alphabet_size

    def count(self, node) -> int:
        vec = self.next_counts.get(tuple(node))
        return 0 if vec is None else int(vec.sum())

    @property
    def total(self) -> int:
        return self.count(ROOT)

    def __contains__(self, node):
        return tuple(node) in self.next_counts

    def __iter__(self):
        return iter(self.next_counts)


def _windows(seq: SymbolSequence, depth: int) -> np.ndarray:
    """Rows ``[x_i, x_{i-1}, ..., x_{i-depth}]`` for every countable position."""
    rows = []
    for seg in seq.segments():
        if seg.size > depth:
            win = np.lib.stride_tricks.sliding_window_view(seg, depth + 1)
            rows.append(win[:, ::-1])
    if not rows:
        return np.empty((0, depth + 1), dtype=np.int64)
    return np.concatenate(rows).astype(np.int64)


def count_contexts(seq: SymbolSequence, max_depth: int) -> CountTrie:
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    size = seq.alphabet.size
    win = _windows(seq, max_depth)
    table: dict = {}
    if win.shape[0] == 0:
        return CountTrie(size, max_depth, table)
    table[ROOT] = np.bincount(win[:, 0], minlength=size)
    fits_int = size ** (max_depth + 1) < 2 ** 62
    for depth in range(1, max_depth + 1):
        block = win[:, : depth + 1]
        if fits_int:
            key = np.zeros(block.shape[0], dtype=np.int64)
            for col in range(depth, -1, -1):
                key = key * size + block[:, col]
            uniq, counts = np.unique(key, return_counts=True)
            ctx_codes, nxt = np.divmod(uniq, size)
            rows = np.empty((uniq.size, depth), dtype=np.int64)
            rest = ctx_codes
            for col in range(depth):
                rest, rows[:, col] = np.divmod(rest, size)
        else:
            uniq_rows, counts = np.unique(block, axis=0, return_counts=True)
            nxt, rows = uniq_rows[:, 0], uniq_rows[:, 1:]
        for row, sym, cnt in zip(map(tuple, rows.tolist()), nxt.tolist(), counts.tolist()):
            vec = table.get(row)
            if vec is None:
                vec = table[row] = np.zeros(size, dtype=np.int64)
            vec[sym] += cnt
    return CountTrie(size, max_depth, table)


def _smooth(counts: np.ndarray, gamma_min: float) -> np.ndarray:
    size = counts.size
    cond = counts / counts.sum()
    return (1.0 - size * gamma_min) * cond + gamma_min


def _retained(trie: CountTrie, params: PstParams) -> list[tuple]:
    total = trie.total
    floor = (1.0 + params.alpha) * params.gamma_min
    keep = []
    for node, vec in trie.next_counts.items():
        if not node:
            continue
        count = vec.sum()
        if count / total < params.p_min:
            continue
        parent = trie.next_counts[node[:-1]]
        cond = vec / count
        cond_parent = parent / parent.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = cond / cond_parent
        differs = (cond_parent > 0) & ((ratio >= params.ratio) | (ratio <= 1.0 / params.ratio))
        if np.any((cond >= floor) & differs):
            keep.append(node)
    return keep


def fit_pst(seq: SymbolSequence, params: PstParams = PstParams()) -> ProbabilisticContextTree:
    """Fit a probabilistic context tree to one sequence.

    A candidate past ``s`` is kept when its empirical frequency reaches
    ``p_min`` and, for some symbol, the conditional at ``s`` is at least
    ``(1 + alpha) * gamma_min`` while differing from the conditional at its
    parent by a factor of ``ratio`` either way. Kept nodes and their ancestors
    form the tree; every node gets a smoothed next-symbol distribution.
    """
    params.check_alphabet(seq.alphabet.size)
    trie = count_contexts(seq, params.max_depth)
    if trie.total == 0:
        raise EmptyEvidenceError(f"sequence {seq.id!r} has no window of length {params.max_depth + 1}")
    nodes = {ROOT}
    for node in _retained(trie, params):
        nodes.update(node[:g] for g in range(len(node) + 1))
    tree = ContextTree(seq.alphabet.size, params.max_depth, nodes)
    probs = {v: _smooth(trie.next_counts[v], params.gamma_min) for v in nodes}
    return ProbabilisticContextTree(tree, probs, seq.alphabet.symbols)


def lookup_context(pct: ProbabilisticContextTree, history: Sequence[int]) -> tuple:
    """Context used to predict the next symbol; ``history`` is most recent first.

    Descends while the matching child exists. If the walk stops at an internal
    node (incomplete fitted trees), the deepest node on the path that carries
    a distribution is returned instead.
    """
    tree = pct.tree
    node = ROOT
    path = [ROOT]
    while True:
        if len(node) == len(history):
            if tree.is_leaf(node):
                return node
            break
        child = node + (int(history[len(node)]),)
        if child not in tree:
            break
        node = child
        path.append(node)
    if tree.is_leaf(node):
        return node
    for v in reversed(path):
        if v in pct.probs:
            return v
    raise ValueError(f"history {tuple(history)!r} ends at internal node {node!r} with no fallback distribution")


def generate(pct: ProbabilisticContextTree, n: int, seed: int, burn_in: int = 1000,
             id: str = "") -> SymbolSequence:
    """Sample ``n`` symbols from the chain.

    Randomness comes from numpy's PCG64 generator seeded with ``seed``: the
    first ``max_depth`` symbols are uniform, then each symbol is drawn by
    inverse-CDF lookup on one uniform variate. The first ``burn_in`` generated
    symbols are discarded.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    size, depth = pct.alphabet_size, pct.max_depth
    rng = np.random.default_rng(seed)
    init = rng.integers(0, size, size=depth)
    modulus = size ** depth
    state = 0
    for x in init.tolist():
        state = (state * size + x) % modulus
    uniforms = rng.random(burn_in + n).tolist()
    cdfs: dict[int, list] = {}
    out = np.empty(burn_in + n, dtype=np.int32)
    last = size - 1
    for i, u in enumerate(uniforms):
        cdf = cdfs.get(state)
        if cdf is None:
            history = [(state // size ** j) % size for j in range(depth)]
            cdf = np.cumsum(pct.probs[lookup_context(pct, history)]).tolist()
            cdfs[state] = cdf
        x = bisect_right(cdf, u)
        if x > last:
            x = last
        out[i] = x
        state = (state * size + x) % modulus
    return SymbolSequence(id, out[burn_in:], Alphabet(pct.symbols))


def example_model(name: str) -> ProbabilisticContextTree:
    """Two binary order-2 chains over symbols ``"12"``.

    ``"a"`` has contexts 11, 21, 2 (oldest symbol first) with P(next=1) of
    0.7, 0.4, 0.2; ``"b"`` has contexts 1, 12, 22 with 0.6, 0.2, 0.4.
    """
    specs = {
        "a": {"11": 0.7, "21": 0.4, "2": 0.2},
        "b": {"1": 0.6, "12": 0.2, "22": 0.4},
    }
    try:
        spec = specs[name]
    except KeyError:
        raise ValueError(f"unknown example model {name!r}; choose from {sorted(specs)}") from None
    probs = {}
    for label, p1 in spec.items():
        node = tuple(int(c) - 1 for c in reversed(label))
        probs[node] = (p1, 1.0 - p1)
    tree = ContextTree.from_contexts(2, 2, probs)
    return ProbabilisticContextTree(tree, probs, "12")
