"""Depth-bounded context trees, the weighted node-indicator metric, and centroids.

A node is addressed by its past, most recent symbol first: ``(x_-1, x_-2, ...)``.
The parent of a node drops the oldest symbol (the last element). The root is
the empty tuple.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ContextTree",
    "DepthError",
    "IncompatibleTreesError",
    "TreeValidationError",
    "Violation",
    "WeightSpec",
    "bffs_distance",
    "centroid",
    "format_node",
    "insert_context",
    "level_differences",
    "parse_node",
    "random_tree",
    "validate",
]

ROOT: tuple = ()


class DepthError(ValueError):
    pass


class IncompatibleTreesError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str  # "missing_root" | "depth" | "symbol" | "prefix_closure"
    node: tuple

    def __str__(self):
        return f"{self.kind} violation at node {self.node!r}"


class TreeValidationError(ValueError):
    def __init__(self, violation: Violation):
        self.violation = violation
        super().__init__(str(violation))


class ContextTree:
    """Prefix-closed set of nodes over ``range(alphabet_size)``, depth at most ``max_depth``.

    Instances are immutable and hashable. Nodes are kept grouped by generation,
    which is all the metric needs.
    """

    __slots__ = ("alphabet_size", "max_depth", "_levels", "_hash")

    def __init__(self, alphabet_size: int, max_depth: int, nodes: Iterable[Sequence[int]] = (ROOT,),
                 check: bool = True):
        if alphabet_size < 1 or max_depth < 1:
            raise ValueError("alphabet_size and max_depth must be positive")
        self.alphabet_size = int(alphabet_size)
        self.max_depth = int(max_depth)
        buckets: dict[int, set] = {}
        for node in nodes:
            node = tuple(int(s) for s in node)
            buckets.setdefault(len(node), set()).add(node)
        top = max(buckets, default=0)
        self._levels = tuple(frozenset(buckets.get(g, ())) for g in range(max(top, self.max_depth) + 1))
        self._hash = None
        if check:
            violation = validate(self)
            if violation is not None:
                raise TreeValidationError(violation)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_contexts(cls, alphabet_size: int, max_depth: int, contexts: Iterable[Sequence[int]]):
        tree = cls(alphabet_size, max_depth)
        for ctx in contexts:
            tree = insert_context(tree, ctx)
        return tree

    @classmethod
    def full(cls, alphabet_size: int, max_depth: int):
        nodes = [ROOT]
        frontier = [ROOT]
        for _ in range(max_depth):
            frontier = [v + (a,) for v in frontier for a in range(alphabet_size)]
            nodes.extend(frontier)
        return cls(alphabet_size, max_depth, nodes, check=False)

    # set-like protocol ----------------------------------------------------

    @property
    def levels(self) -> tuple:
        """Node sets per generation, index 0 = root level."""
        return self._levels

    @property
    def nodes(self) -> frozenset:
        return frozenset().union(*self._levels)

    def __len__(self):
        return sum(len(level) for level in self._levels)

    def __contains__(self, node):
        node = tuple(node)
        return len(node) < len(self._levels) and node in self._levels[len(node)]

    def __iter__(self):
        for level in self._levels:
            yield from sorted(level)

    @property
    def depth(self) -> int:
        return max((g for g, level in enumerate(self._levels) if level), default=0)

    def children(self, node) -> list[tuple]:
        node = tuple(node)
        g = len(node) + 1
        if g >= len(self._levels):
            return []
        level = self._levels[g]
        return [node + (a,) for a in range(self.alphabet_size) if node + (a,) in level]

    def is_leaf(self, node) -> bool:
        return not self.children(node)

    def contexts(self) -> list[tuple]:
        """Leaves of the tree, i.e. the context set."""
        return [v for v in self if self.is_leaf(v)]

    def _key(self):
        return (self.alphabet_size, self.max_depth, self._levels)

    def __eq__(self, other):
        if not isinstance(other, ContextTree):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._key())
        return self._hash

    def __repr__(self):
        ctx = ",".join("".join(str(s) for s in v) or "λ" for v in self.contexts())
        return f"ContextTree(A={self.alphabet_size}, D={self.max_depth}, contexts={{{ctx}}})"

    def compatible_with(self, other: "ContextTree") -> bool:
        return self.alphabet_size == other.alphabet_size and self.max_depth == other.max_depth


def validate(tree: ContextTree) -> Violation | None:
    """Return the first structural violation, or ``None`` when the tree is valid.

    Nodes are checked shallowest first, in sorted order within a generation.
    """
    levels = tree.levels
    if ROOT not in levels[0]:
        return Violation("missing_root", ROOT)
    for g in range(1, len(levels)):
        for node in sorted(levels[g]):
            if g > tree.max_depth:
                return Violation("depth", node)
            if any(s < 0 or s >= tree.alphabet_size for s in node):
                return Violation("symbol", node)
            if node[:-1] not in levels[g - 1]:
                return Violation("prefix_closure", node)
    return None


def insert_context(tree: ContextTree, context: Sequence[int]) -> ContextTree:
    """Return a tree that also holds ``context`` and all of its ancestors."""
    context = tuple(int(s) for s in context)
    if len(context) > tree.max_depth:
        raise DepthError(f"context of length {len(context)} exceeds max_depth={tree.max_depth}")
    bad = [s for s in context if s < 0 or s >= tree.alphabet_size]
    if bad:
        raise ValueError(f"symbol index {bad[0]} outside alphabet of size {tree.alphabet_size}")
    if context in tree:
        return tree
    nodes = set(tree.nodes)
    nodes.update(context[:g] for g in range(len(context) + 1))
    return ContextTree(tree.alphabet_size, tree.max_depth, nodes, check=False)


@dataclass(frozen=True)
class WeightSpec:
    """Node weight ``z ** (generation + gen_offset)``."""

    z: float = 0.1
    gen_offset: int = 0

    def __post_init__(self):
        if not 0.0 < self.z < 1.0:
            raise ValueError(f"z must lie in (0, 1), got {self.z}")
        if self.gen_offset not in (0, 1):
            raise ValueError(f"gen_offset must be 0 or 1, got {self.gen_offset}")

    def weights(self, max_depth: int) -> tuple:
        return _weights(self.z, self.gen_offset, max_depth)

    def exact_total(self, counts, max_depth: int) -> float:
        """``sum(counts[g] * weight[g])`` evaluated exactly, rounded once."""
        zq = Fraction(repr(float(self.z)))
        return float(sum(Fraction(int(c)) * zq ** (g + self.gen_offset)
                         for g, c in enumerate(counts[: max_depth + 1])))

    def bound(self, alphabet_size: int, max_depth: int) -> float:
        """Largest possible distance: full tree against the root-only tree."""
        w = self.weights(max_depth)
        return _combine([alphabet_size ** g if g else 0 for g in range(max_depth + 1)], w)


@lru_cache(maxsize=None)
def _weights(z: float, gen_offset: int, max_depth: int) -> tuple:
    # Correctly rounded powers of the decimal value of z, so 0.1 ** 3 is 0.001.
    zq = Fraction(repr(float(z)))
    return tuple(float(zq ** (g + gen_offset)) for g in range(max_depth + 1))


def _combine(counts, weights):
    # Fixed summation order (root to leaves); shared by every distance path.
    total = 0.0
    for c, w in zip(counts, weights):
        total = total + c * w
    return total


def _check_compatible(t: ContextTree, y: ContextTree):
    if not t.compatible_with(y):
        raise IncompatibleTreesError(
            f"trees differ in alphabet size or depth: "
            f"({t.alphabet_size}, {t.max_depth}) vs ({y.alphabet_size}, {y.max_depth})"
        )


def level_differences(t: ContextTree, y: ContextTree) -> list[int]:
    """Size of the symmetric difference of the node sets, generation by generation."""
    _check_compatible(t, y)
    return [len(a ^ b) for a, b in zip(t.levels, y.levels)]


def bffs_distance(t: ContextTree, y: ContextTree, w: WeightSpec = WeightSpec()) -> float:
    """Weighted count of nodes present in exactly one of the two trees."""
    return _combine(level_differences(t, y), w.weights(t.max_depth))


def centroid(trees: Sequence[ContextTree], w: WeightSpec | None = None) -> ContextTree:
    """Majority-vote tree: keep every node present in at least half of ``trees``.

    ``w`` is accepted for signature symmetry; the minimiser does not depend on
    the (strictly positive) weights.
    """
    trees = list(trees)
    if not trees:
        raise ValueError("centroid of an empty collection")
    first = trees[0]
    for other in trees[1:]:
        _check_compatible(first, other)
    n = len(trees)
    counts = Counter()
    for tree in trees:
        for level in tree.levels:
            counts.update(level)
    keep = [v for v, c in counts.items() if 2 * c >= n]
    return ContextTree(first.alphabet_size, first.max_depth, keep, check=False)


def format_node(node: Sequence[int], symbols: str, oldest_first: bool = False) -> str:
    """Render a node with alphabet characters; ``oldest_first`` writes the oldest symbol first."""
    text = "".join(symbols[s] for s in node)
    return text[::-1] if oldest_first else text


def parse_node(text: str, symbols: str, oldest_first: bool = False) -> tuple:
    index = {c: i for i, c in enumerate(symbols)}
    if oldest_first:
        text = text[::-1]
    try:
        return tuple(index[c] for c in text)
    except KeyError as exc:
        raise ValueError(f"node {text!r} uses a symbol outside {symbols!r}") from exc


def random_tree(alphabet_size: int, max_depth: int, rng: np.random.Generator,
                p_child: float = 0.5) -> ContextTree:
    """Grow a random prefix-closed tree: each child of a present node appears with ``p_child``."""
    nodes = [ROOT]
    frontier = [ROOT]
    for _ in range(max_depth):
        if not frontier:
            break
        keep = rng.random(len(frontier) * alphabet_size) < p_child
        frontier = [v + (a,) for k, (v, a) in enumerate((v, a) for v in frontier for a in range(alphabet_size))
                    if keep[k]]
        nodes.extend(frontier)
    return ContextTree(alphabet_size, max_depth, nodes, check=False)
