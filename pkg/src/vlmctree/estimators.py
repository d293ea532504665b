"""scikit-learn style wrappers: a sequence-to-tree transformer, K-means and classifiers on trees."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import check_labels, check_seed, check_sequences, check_trees
from .learn import fit_prototypes, kmeans, knn_predict, pairwise_distances
from .sequence_io import AMINO_ACIDS, Alphabet
from .tree import WeightSpec
from .vlmc import PstParams, fit_pst

__all__ = ["PSTTransformer", "TreeKMeans", "TreeKNeighborsClassifier", "TreePrototypeClassifier"]


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class PSTTransformer(TransformerMixin, BaseEstimator):
    """Fit one probabilistic context tree per input sequence.

    Stateless: ``fit`` only validates parameters. ``transform`` accepts raw
    strings or :class:`SymbolSequence` objects and returns a list of
    :class:`ProbabilisticContextTree`.
    """

    def __init__(self, max_depth=4, p_min=0.001, ratio=1.05, gamma_min=0.001, alpha=0.0,
                 alphabet=AMINO_ACIDS, unknown_policy="break", n_jobs=None):
        self.max_depth = max_depth
        self.p_min = p_min
        self.ratio = ratio
        self.gamma_min = gamma_min
        self.alpha = alpha
        self.alphabet = alphabet
        self.unknown_policy = unknown_policy
        self.n_jobs = n_jobs

    def _params(self) -> PstParams:
        return PstParams(self.max_depth, self.p_min, self.ratio, self.gamma_min, self.alpha)

    def fit(self, X=None, y=None):
        self.params_ = self._params()
        self.alphabet_ = Alphabet(self.alphabet, self.unknown_policy)
        self.params_.check_alphabet(self.alphabet_.size)
        return self

    def transform(self, X):
        _check_fitted(self, "params_")
        seqs = check_sequences(X, self.alphabet_)
        n_jobs = self.n_jobs or 1
        if n_jobs == 1:
            return [fit_pst(s, self.params_) for s in seqs]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(lambda s: fit_pst(s, self.params_), seqs))


class _TreeMetricMixin:
    def _weights(self) -> WeightSpec:
        return WeightSpec(self.z, self.gen_offset)


class TreeKMeans(_TreeMetricMixin, ClusterMixin, BaseEstimator):
    """K-means in tree space with majority-vote centroids.

    Attributes after ``fit``: ``labels_``, ``cluster_centers_`` (trees),
    ``inertia_`` (within-cluster sum of distances), ``n_iter_``,
    ``objective_history_``, ``seed_``.
    """

    def __init__(self, n_clusters=8, z=0.1, gen_offset=0, max_iter=100, n_init=10, random_state=None,
                 n_jobs=None):
        self.n_clusters = n_clusters
        self.z = z
        self.gen_offset = gen_offset
        self.max_iter = max_iter
        self.n_init = n_init
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        trees = check_trees(X)
        self.seed_ = check_seed(self.random_state)
        res = kmeans(trees, self.n_clusters, self._weights(), seed=self.seed_, max_iter=self.max_iter,
                     n_restarts=self.n_init, n_jobs=self.n_jobs or 1)
        self.result_ = res
        self.labels_ = res.labels
        self.cluster_centers_ = res.centroids
        self.inertia_ = res.objective
        self.n_iter_ = res.n_iter
        self.objective_history_ = res.history
        return self

    def transform(self, X):
        """Distances to each cluster centre."""
        _check_fitted(self, "cluster_centers_")
        return pairwise_distances(check_trees(X), self.cluster_centers_, self._weights(), self.n_jobs or 1)

    def predict(self, X):
        return np.argmin(self.transform(X), axis=1)


class TreeKNeighborsClassifier(_TreeMetricMixin, ClassifierMixin, BaseEstimator):
    """k-nearest-neighbour vote; tied votes are settled at random from ``random_state``."""

    def __init__(self, n_neighbors=1, z=0.1, gen_offset=0, random_state=0, n_jobs=None):
        self.n_neighbors = n_neighbors
        self.z = z
        self.gen_offset = gen_offset
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        self.trees_ = check_trees(X)
        self.y_ = check_labels(y, len(self.trees_))
        self.classes_ = np.array(sorted(set(self.y_.tolist()), key=str), dtype=object)
        self.seed_ = check_seed(self.random_state)
        return self

    def predict(self, X):
        _check_fitted(self, "trees_")
        queries = check_trees(X)
        return np.array(knn_predict(self.trees_, self.y_.tolist(), queries, self.n_neighbors, self._weights(),
                                    self.seed_, n_jobs=self.n_jobs or 1), dtype=object)


class TreePrototypeClassifier(_TreeMetricMixin, ClassifierMixin, BaseEstimator):
    """Nearest prototype, with ``n_prototypes`` K-means centroids per class."""

    def __init__(self, n_prototypes=1, z=0.1, gen_offset=0, max_iter=100, n_init=10, random_state=0):
        self.n_prototypes = n_prototypes
        self.z = z
        self.gen_offset = gen_offset
        self.max_iter = max_iter
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y):
        trees = check_trees(X)
        y = check_labels(y, len(trees))
        self.seed_ = check_seed(self.random_state)
        self.prototypes_, labels = fit_prototypes(trees, y.tolist(), self.n_prototypes, self._weights(),
                                                  self.seed_, max_iter=self.max_iter, n_restarts=self.n_init)
        self.prototype_labels_ = np.array(labels, dtype=object)
        self.classes_ = np.array(sorted(set(y.tolist()), key=str), dtype=object)
        return self

    def predict(self, X):
        _check_fitted(self, "prototypes_")
        d = pairwise_distances(check_trees(X), self.prototypes_, self._weights())
        return self.prototype_labels_[np.argmin(d, axis=1)]
