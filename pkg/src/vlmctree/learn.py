"""Distance matrices, K-means on trees, nearest-neighbour and prototype rules, evaluation."""

from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from .sequence_io import LabeledDataset
from .tree import ContextTree, IncompatibleTreesError, WeightSpec, _combine, centroid, level_differences

__all__ = [
    "DistanceMatrix",
    "EvaluationReport",
    "KMeansResult",
    "cluster_report",
    "distance_matrix",
    "evaluate",
    "fit_prototypes",
    "kmeans",
    "knn_classify",
    "knn_predict",
    "pairwise_distances",
    "prototype_classify",
    "split_train_test",
]

PROTOCOLS = ("all_items", "held_out_only")


# ---------------------------------------------------------------------------
# distances


def _check_same_space(trees: Sequence[ContextTree], names=None):
    if not trees:
        return
    first = trees[0]
    for i, other in enumerate(trees[1:], start=1):
        if not first.compatible_with(other):
            a = names[0] if names else 0
            b = names[i] if names else i
            raise IncompatibleTreesError(f"trees {a!r} and {b!r} differ in alphabet size or depth")


def _indicators(trees: Sequence[ContextTree], universe: list[dict], depth: int):
    mats = []
    for g in range(depth + 1):
        index = universe[g]
        rows, cols = [], []
        for r, tree in enumerate(trees):
            level = tree.levels[g] if g < len(tree.levels) else ()
            for node in level:
                rows.append(r)
                cols.append(index[node])
        data = np.ones(len(rows), dtype=np.int64)
        mats.append(sparse.csr_matrix((data, (rows, cols)), shape=(len(trees), len(index))))
    return mats


def pairwise_distances(X: Sequence[ContextTree], Y: Sequence[ContextTree] | None = None,
                       w: WeightSpec = WeightSpec(), n_jobs: int = 1) -> np.ndarray:
    """All distances between ``X`` and ``Y`` (``X`` itself by default).

    Per-generation symmetric-difference sizes are exact integers from sparse
    indicator products; they are weighted and summed exactly as in
    :func:`bffs_distance`, so entries match it bit for bit.
    """
    X = list(X)
    Y = X if Y is None else list(Y)
    if not X or not Y:
        return np.zeros((len(X), len(Y)))
    _check_same_space(X + Y if Y is not X else X)
    depth = X[0].max_depth
    universe = [dict() for _ in range(depth + 1)]
    for tree in (X if Y is X else X + Y):
        for g, level in enumerate(tree.levels[: depth + 1]):
            for node in level:
                universe[g].setdefault(node, len(universe[g]))
    AX = _indicators(X, universe, depth)
    AY = AX if Y is X else _indicators(Y, universe, depth)
    weights = w.weights(depth)

    def block(rows: slice) -> np.ndarray:
        counts = []
        for ax, ay in zip(AX, AY):
            sub = ax[rows]
            inter = (sub @ ay.T).toarray()
            size_x = np.asarray(sub.sum(axis=1)).reshape(-1, 1)
            size_y = np.asarray(ay.sum(axis=1)).reshape(1, -1)
            counts.append(size_x + size_y - 2 * inter)
        return _combine(counts, weights)

    n = len(X)
    n_jobs = max(1, int(n_jobs or 1))
    if n_jobs == 1 or n < 2 * n_jobs:
        out = block(slice(0, n))
    else:
        edges = np.linspace(0, n, n_jobs + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(block, [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]))
        out = np.vstack(parts)
    return np.asarray(out, dtype=float) + 0.0


@dataclass(frozen=True)
class DistanceMatrix:
    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        n = len(self.ids)
        if values.shape != (n, n):
            raise ValueError("values must be a square matrix matching ids")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("distances must be finite and nonnegative")
        if not np.array_equal(values, values.T) or np.any(np.diag(values) != 0):
            raise ValueError("distance matrix must be symmetric with zero diagonal")
        values.flags.writeable = False
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.ids)

    def to_csv(self, handle: IO[str]) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([""] + list(self.ids))
        for name, row in zip(self.ids, self.values):
            writer.writerow([name] + [repr(float(v)) for v in row])

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, handle: IO[str]) -> "DistanceMatrix":
        rows = list(csv.reader(handle))
        if not rows:
            raise ValueError("empty distance matrix file")
        ids = rows[0][1:]
        if [r[0] for r in rows[1:]] != ids:
            raise ValueError("row ids do not match column ids")
        return cls(ids, [[float(v) for v in r[1:]] for r in rows[1:]])


def distance_matrix(trees: Sequence[tuple[str, ContextTree]], w: WeightSpec = WeightSpec(),
                    n_jobs: int = 1) -> DistanceMatrix:
    ids = [name for name, _ in trees]
    items = [tree for _, tree in trees]
    _check_same_space(items, ids)
    values = pairwise_distances(items, w=w, n_jobs=n_jobs)
    # exact symmetry: mirror the upper triangle
    upper = np.triu(values, 1)
    return DistanceMatrix(ids, upper + upper.T)


# ---------------------------------------------------------------------------
# K-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: list
    objective: float
    n_iter: int
    seed: int
    converged: bool
    history: list = field(default_factory=list)
    restart: int = 0

    def to_dict(self, ids: Sequence[str] | None = None, symbols: str | None = None) -> dict:
        from .treeio import tree_to_record

        ids = list(ids) if ids is not None else [str(i) for i in range(len(self.labels))]
        return {
            "assignments": {name: int(c) for name, c in zip(ids, self.labels)},
            "objective": self.objective,
            "objective_history": list(self.history),
            "iterations": self.n_iter,
            "converged": self.converged,
            "seed": self.seed,
            "best_restart": self.restart,
            "centroids": [
                tree_to_record(c, symbols, id=f"centroid{k}") for k, c in enumerate(self.centroids)
            ],
        }


def _objective(trees, centroids, labels, w: WeightSpec) -> float:
    """Within-cluster scatter, from exact per-generation counts (ties compare equal)."""
    depth = trees[0].max_depth
    totals = [0] * (depth + 1)
    for tree, k in zip(trees, labels.tolist()):
        for g, c in enumerate(level_differences(tree, centroids[k])):
            totals[g] += c
    return w.exact_total(totals, depth)


def _repair_empty(labels: np.ndarray, dists: np.ndarray, K: int) -> np.ndarray:
    labels = labels.copy()
    for k in range(K):
        if np.any(labels == k):
            continue
        sizes = np.bincount(labels, minlength=K)
        movable = sizes[labels] > 1
        own = dists[np.arange(labels.size), labels]
        own = np.where(movable, own, -np.inf)
        labels[int(np.argmax(own))] = k
    return labels


def _farthest_first(D: np.ndarray, K: int, rng: np.random.Generator) -> list[int]:
    n = D.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = D[chosen[0]].copy()
    for _ in range(1, K):
        cand = np.where(np.isin(np.arange(n), chosen), -np.inf, nearest)
        nxt = int(np.argmax(cand))
        chosen.append(nxt)
        nearest = np.minimum(nearest, D[nxt])
    return chosen


def _kmeans_single(trees, K, w, rng, max_iter, D, n_jobs):
    start = _farthest_first(D, K, rng)
    centroids = [trees[i] for i in start]
    labels = None
    history = []
    converged = False
    for _ in range(max_iter):
        new = _assign(trees, centroids, K, w, n_jobs)
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = new
        centroids = [centroid([trees[i] for i in np.flatnonzero(labels == k)]) for k in range(K)]
        history.append(_objective(trees, centroids, labels, w))
    return labels, centroids, history, converged


def _assign(trees, centroids, K, w, n_jobs=1) -> np.ndarray:
    """Nearest centroid (lowest index on ties), then fill any empty cluster."""
    dists = pairwise_distances(trees, centroids, w, n_jobs=n_jobs)
    labels = np.argmin(dists, axis=1)
    if np.bincount(labels, minlength=K).min() == 0:
        labels = _repair_empty(labels, dists, K)
    return labels


def kmeans(trees: Sequence[ContextTree], K: int, w: WeightSpec = WeightSpec(), seed: int = 0,
           max_iter: int = 100, n_restarts: int = 10, n_jobs: int = 1) -> KMeansResult:
    """Alternate nearest-centroid assignment and majority-vote centroids.

    Each restart seeds centroids farthest-first from a random first item; the
    run with the smallest within-cluster scatter wins (earliest on ties).
    Assignment ties go to the lowest cluster index; a cluster left empty
    takes the item farthest from its own centroid.
    """
    trees = list(trees)
    if not trees:
        raise ValueError("kmeans needs at least one tree")
    if K < 1 or K > len(trees):
        raise ValueError(f"K must lie in [1, {len(trees)}], got {K}")
    if max_iter < 1 or n_restarts < 1:
        raise ValueError("max_iter and n_restarts must be >= 1")
    _check_same_space(trees)
    D = pairwise_distances(trees, w=w, n_jobs=n_jobs)
    children = np.random.SeedSequence(seed).spawn(n_restarts)
    best = None
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        labels, cents, history, converged = _kmeans_single(trees, K, w, rng, max_iter, D, n_jobs)
        if best is None or history[-1] < best.objective:
            best = KMeansResult(labels, cents, history[-1], len(history), seed, converged, history, r)
    return best


# ---------------------------------------------------------------------------
# classification


def _vote(labels: Sequence, rng_seed) -> object:
    counts = Counter(labels)
    top = max(counts.values())
    tied = sorted((lab for lab, c in counts.items() if c == top), key=str)
    if len(tied) == 1:
        return tied[0]
    rng = np.random.default_rng(rng_seed)
    return tied[int(rng.integers(len(tied)))]


def knn_predict(train_trees: Sequence[ContextTree], train_labels: Sequence, queries: Sequence[ContextTree],
                k: int = 1, w: WeightSpec = WeightSpec(), seed: int = 0, n_jobs: int = 1,
                distances: np.ndarray | None = None) -> list:
    """k-NN labels for a batch of queries.

    Neighbours at equal distance are taken in training order; a tied vote for
    query ``i`` is settled by a generator seeded with ``(seed, i)``.
    """
    train_trees = list(train_trees)
    if not train_trees:
        raise ValueError("empty training set")
    if len(train_labels) != len(train_trees):
        raise ValueError("train_labels and train_trees differ in length")
    if not 1 <= k <= len(train_trees):
        raise ValueError(f"k must lie in [1, {len(train_trees)}], got {k}")
    if distances is None:
        distances = pairwise_distances(list(queries), train_trees, w, n_jobs=n_jobs)
    order = np.argsort(distances, axis=1, kind="stable")[:, :k]
    return [_vote([train_labels[j] for j in row], (seed, i)) for i, row in enumerate(order.tolist())]


def knn_classify(train: Sequence[tuple[ContextTree, object]], query: ContextTree, k: int = 1,
                 w: WeightSpec = WeightSpec(), seed: int = 0):
    if not train:
        raise ValueError("empty training set")
    trees, labels = zip(*train)
    return knn_predict(trees, labels, [query], k, w, seed)[0]


def fit_prototypes(train_trees: Sequence[ContextTree], train_labels: Sequence, R: int,
                   w: WeightSpec = WeightSpec(), seed: int = 0, **kmeans_kw) -> tuple[list, list]:
    """Run K-means with ``K=R`` inside each class; return prototypes and their labels."""
    if R < 1:
        raise ValueError("R must be >= 1")
    by_class: dict = {}
    for tree, lab in zip(train_trees, train_labels):
        by_class.setdefault(lab, []).append(tree)
    protos, proto_labels = [], []
    for c, lab in enumerate(sorted(by_class, key=str)):
        members = by_class[lab]
        if len(members) < R:
            raise ValueError(f"class {lab!r} has {len(members)} member(s), fewer than R={R}")
        res = kmeans(members, R, w, seed=int(np.random.SeedSequence((seed, c)).generate_state(1)[0]),
                     **kmeans_kw)
        protos.extend(res.centroids)
        proto_labels.extend([lab] * R)
    return protos, proto_labels


def prototype_classify(train: Sequence[tuple[ContextTree, object]], R: int, query: ContextTree,
                       w: WeightSpec = WeightSpec(), seed: int = 0):
    trees, labels = zip(*train)
    protos, proto_labels = fit_prototypes(trees, labels, R, w, seed)
    d = pairwise_distances([query], protos, w)[0]
    return proto_labels[int(np.argmin(d))]


# ---------------------------------------------------------------------------
# protocol and reporting


def split_train_test(dataset: LabeledDataset, train_fraction: float = 0.8, seed: int = 0,
                     stratified: bool = False) -> tuple[LabeledDataset, LabeledDataset]:
    """Random split without replacement; per label when ``stratified``.

    Both halves keep the dataset's original item order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    if stratified:
        groups: dict = {}
        for i, lab in enumerate(dataset.labels):
            groups.setdefault(lab, []).append(i)
        chosen = []
        for lab in sorted(groups, key=str):
            idx = groups[lab]
            take = int(round(train_fraction * len(idx)))
            chosen.extend(np.asarray(idx)[rng.permutation(len(idx))[:take]].tolist())
    else:
        take = int(round(train_fraction * n))
        chosen = rng.permutation(n)[:take].tolist()
    chosen_set = set(chosen)
    train_idx = [i for i in range(n) if i in chosen_set]
    test_idx = [i for i in range(n) if i not in chosen_set]
    if not train_idx or not test_idx:
        raise ValueError(f"train_fraction={train_fraction} leaves an empty train or test set for {n} items")
    return dataset.subset(train_idx), dataset.subset(test_idx)


@dataclass
class EvaluationReport:
    """Confusion counts with rows = true label, columns = predicted label."""

    labels: list
    confusion: np.ndarray
    protocol: str
    predicted_labels: list | None = None

    def __post_init__(self):
        if self.predicted_labels is None:
            self.predicted_labels = list(self.labels)

    @classmethod
    def from_predictions(cls, y_true: Sequence, y_pred: Sequence, protocol: str,
                         labels: Sequence | None = None) -> "EvaluationReport":
        if len(y_true) != len(y_pred):
            raise ValueError("y_true and y_pred differ in length")
        labels = sorted(set(y_true) | set(y_pred), key=str) if labels is None else list(labels)
        index = {lab: i for i, lab in enumerate(labels)}
        conf = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(y_true, y_pred):
            conf[index[t], index[p]] += 1
        return cls(labels, conf, protocol)

    @property
    def class_sizes(self) -> dict:
        return {lab: int(n) for lab, n in zip(self.labels, self.confusion.sum(axis=1))}

    def _correct(self) -> np.ndarray:
        col = {lab: j for j, lab in enumerate(self.predicted_labels)}
        return np.array([self.confusion[i, col[lab]] if lab in col else 0 for i, lab in enumerate(self.labels)])

    @property
    def per_class_accuracy(self) -> dict:
        sizes = self.confusion.sum(axis=1)
        correct = self._correct()
        return {lab: (float(c / s) if s else float("nan")) for lab, c, s in zip(self.labels, correct, sizes)}

    @property
    def overall_accuracy(self) -> float:
        total = self.confusion.sum()
        return float(self._correct().sum() / total) if total else float("nan")

    @property
    def percentages(self) -> np.ndarray:
        sizes = self.confusion.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(sizes > 0, 100.0 * self.confusion / np.maximum(sizes, 1), 0.0)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "labels": [str(x) for x in self.labels],
            "predicted_labels": [str(x) for x in self.predicted_labels],
            "confusion": self.confusion.tolist(),
            "confusion_percent": self.percentages.tolist(),
            "per_class_accuracy": {str(k): v for k, v in self.per_class_accuracy.items()},
            "overall_accuracy": self.overall_accuracy,
            "total": int(self.confusion.sum()),
        }


def evaluate(train: LabeledDataset, test: LabeledDataset, k: int = 1, w: WeightSpec = WeightSpec(),
             seed: int = 0, protocols: Sequence[str] = ("held_out_only",), n_jobs: int = 1) -> dict:
    """k-NN reports under the requested protocols.

    ``held_out_only`` classifies ``test`` only; ``all_items`` classifies every
    item of ``train`` followed by the ``test`` items not already in ``train``
    (matched by id), so training items are included.
    """
    for p in protocols:
        if p not in PROTOCOLS:
            raise ValueError(f"unknown protocol {p!r}; expected one of {PROTOCOLS}")
    if any(lab is None for lab in train.labels + test.labels):
        raise ValueError("evaluation needs a label for every item")
    labels = sorted(set(train.labels) | set(test.labels), key=str)
    reports = {}
    for p in protocols:
        if p == "held_out_only":
            items = test
        else:
            known = set(train.ids)
            extra = [i for i, name in enumerate(test.ids) if name not in known]
            rest = test.subset(extra)
            items = LabeledDataset(train.ids + rest.ids, train.items + rest.items, train.labels + rest.labels)
        pred = knn_predict(train.items, train.labels, items.items, k, w, seed, n_jobs=n_jobs)
        reports[p] = EvaluationReport.from_predictions(items.labels, pred, p, labels)
    return reports


def cluster_report(y_true: Sequence, assignments: Sequence[int]) -> tuple[EvaluationReport, dict]:
    """Confusion of true labels against clusters under the maximum-agreement matching.

    Clusters are matched one-to-one to labels so the matched diagonal is as
    large as possible; unmatched clusters keep the name ``cluster<k>``.
    """
    labels = sorted(set(y_true), key=str)
    clusters = sorted(set(int(a) for a in assignments))
    li = {lab: i for i, lab in enumerate(labels)}
    ci = {c: j for j, c in enumerate(clusters)}
    counts = np.zeros((len(labels), len(clusters)), dtype=np.int64)
    for t, a in zip(y_true, assignments):
        counts[li[t], ci[int(a)]] += 1
    rows, cols = linear_sum_assignment(-counts)
    mapping = {clusters[c]: labels[r] for r, c in zip(rows, cols)}
    for c in clusters:
        mapping.setdefault(c, f"cluster{c}")
    predicted = list(labels) + [mapping[c] for c in clusters if mapping[c] not in li]
    pi = {lab: j for j, lab in enumerate(predicted)}
    conf = np.zeros((len(labels), len(predicted)), dtype=np.int64)
    for t, a in zip(y_true, assignments):
        conf[li[t], pi[mapping[int(a)]]] += 1
    return EvaluationReport(labels, conf, "clustering", predicted), mapping
