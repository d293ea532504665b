"""Input checks shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np

from .sequence_io import Alphabet, SymbolSequence, encode
from .tree import ContextTree, IncompatibleTreesError
from .vlmc import ProbabilisticContextTree


def check_trees(X, *, allow_empty: bool = False) -> list[ContextTree]:
    """Coerce ``X`` to a list of mutually compatible :class:`ContextTree`.

    Probabilistic trees are reduced to their structure.
    """
    if isinstance(X, (ContextTree, ProbabilisticContextTree)):
        raise TypeError("expected a sequence of trees, got a single tree")
    trees = []
    for i, item in enumerate(X):
        if isinstance(item, ProbabilisticContextTree):
            item = item.tree
        elif not isinstance(item, ContextTree):
            raise TypeError(f"item {i} is {type(item).__name__}, not a context tree")
        trees.append(item)
    if not trees and not allow_empty:
        raise ValueError("expected at least one tree")
    for i, tree in enumerate(trees[1:], start=1):
        if not trees[0].compatible_with(tree):
            raise IncompatibleTreesError(f"tree {i} does not share alphabet size and depth with tree 0")
    return trees


def check_sequences(X, alphabet: Alphabet) -> list[SymbolSequence]:
    """Accept encoded sequences or raw strings (encoded with ``alphabet``)."""
    if isinstance(X, (str, SymbolSequence)):
        raise TypeError("expected a sequence of sequences, got a single sequence")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, SymbolSequence):
            if item.alphabet.symbols != alphabet.symbols:
                raise ValueError(f"sequence {item.id!r} uses a different alphabet")
            out.append(item)
        elif isinstance(item, str):
            out.append(encode(alphabet, item, id=str(i)))
        else:
            raise TypeError(f"item {i} is {type(item).__name__}, not a sequence")
    return out


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=object)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"y must be one-dimensional with {n} entries")
    if any(lab is None for lab in y):
        raise ValueError("y contains missing labels")
    return y


def check_seed(random_state) -> int:
    """Integer seed; ``None`` draws fresh entropy."""
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**32))
    raise ValueError(f"random_state must be an int, a Generator or None, got {random_state!r}")
