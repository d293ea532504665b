import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthetic import labelled_trees
from vlmctree.learn import (
    DistanceMatrix,
    EvaluationReport,
    _assign,
    cluster_report,
    distance_matrix,
    evaluate,
    fit_prototypes,
    kmeans,
    knn_classify,
    knn_predict,
    pairwise_distances,
    prototype_classify,
    split_train_test,
)
from vlmctree.sequence_io import LabeledDataset
from vlmctree.tree import ContextTree, IncompatibleTreesError, WeightSpec, bffs_distance, centroid, random_tree
from vlmctree.vlmc import PstParams, example_model, fit_pst, generate


def rand_trees(seed, n, A=2, D=3, p=0.6):
    rng = np.random.default_rng(seed)
    return [random_tree(A, D, rng, p) for _ in range(n)]


# distances ---------------------------------------------------------------------

def test_distance_matrix_identical_trees(tree_pair):
    t, _ = tree_pair
    dm = distance_matrix([("a", t), ("b", t)])
    assert dm.values.tolist() == [[0.0, 0.0], [0.0, 0.0]]


def test_distance_matrix_reference_pair(tree_pair):
    t, y = tree_pair
    dm = distance_matrix([("t", t), ("y", y)], WeightSpec(0.1, 1))
    assert dm.values[0, 1] == dm.values[1, 0] == 0.004


def test_distance_matrix_names_incompatible_pair(tree_pair):
    with pytest.raises(IncompatibleTreesError, match="'t'.*'odd'"):
        distance_matrix([("t", tree_pair[0]), ("odd", ContextTree(3, 2))])


@pytest.mark.parametrize("A,D,p", [(2, 4, 0.6), (20, 2, 0.2), (4, 3, 0.5)])
def test_matrix_equals_elementwise_distance_exactly(A, D, p):
    trees = rand_trees(A * 10 + D, 10, A, D, p)
    for off in (0, 1):
        w = WeightSpec(0.1, off)
        dm = distance_matrix([(str(i), t) for i, t in enumerate(trees)], w)
        brute = np.array([[bffs_distance(a, b, w) for b in trees] for a in trees])
        assert np.array_equal(dm.values, brute)


def test_matrix_independent_of_thread_count():
    trees = rand_trees(1, 37)
    ref = pairwise_distances(trees)
    for n_jobs in (2, 3, 8):
        assert np.array_equal(pairwise_distances(trees, n_jobs=n_jobs), ref)


def test_distance_matrix_csv_round_trip():
    trees = rand_trees(2, 6)
    dm = distance_matrix([(f"id{i}", t) for i, t in enumerate(trees)], WeightSpec(0.3))
    back = DistanceMatrix.from_csv(io.StringIO(dm.to_csv_string()))
    assert back.ids == dm.ids and np.array_equal(back.values, dm.values)


def test_distance_matrix_invariants_checked():
    with pytest.raises(ValueError):
        DistanceMatrix(("a", "b"), np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        DistanceMatrix(("a", "b"), np.array([[1.0, 1.0], [1.0, 0.0]]))


# K-means -------------------------------------------------------------------------

def test_kmeans_single_cluster_is_the_centroid():
    trees = rand_trees(3, 9)
    res = kmeans(trees, 1)
    assert res.centroids == [centroid(trees)]
    assert res.objective == pytest.approx(sum(bffs_distance(t, res.centroids[0]) for t in trees), abs=1e-12)


def test_kmeans_argument_errors():
    with pytest.raises(ValueError):
        kmeans([], 1)
    with pytest.raises(ValueError):
        kmeans(rand_trees(0, 3), 4)
    with pytest.raises(ValueError):
        kmeans(rand_trees(0, 3), 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20), st.integers(1, 5), st.sampled_from([0, 1]))
def test_kmeans_invariants(seed, n, K, off):
    K = min(K, n)
    trees = rand_trees(seed, n)
    w = WeightSpec(0.1, off)
    res = kmeans(trees, K, w, seed=seed, n_restarts=2)
    assert np.bincount(res.labels, minlength=K).min() >= 1
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    recomputed = sum(bffs_distance(t, res.centroids[k], w) for t, k in zip(trees, res.labels))
    assert res.objective == pytest.approx(recomputed, abs=1e-12)
    if res.converged:
        assert np.array_equal(_assign(trees, res.centroids, K, w), res.labels)


def test_kmeans_is_deterministic():
    trees = rand_trees(4, 30)
    a, b = kmeans(trees, 3, seed=11), kmeans(trees, 3, seed=11)
    assert np.array_equal(a.labels, b.labels) and a.objective == b.objective
    assert np.array_equal(kmeans(trees, 3, seed=11, n_jobs=3).labels, a.labels)


def test_empty_cluster_repair():
    t = rand_trees(5, 1)[0]
    trees = [t] * 6
    res = kmeans(trees, 3, n_restarts=1)
    assert sorted(np.bincount(res.labels, minlength=3).tolist()) == [1, 1, 4]
    assert res.objective == 0.0


def test_kmeans_separates_the_two_binary_chains():
    params = PstParams(ratio=1.15)
    accs = []
    for seed in range(20):
        trees, truth = [], []
        for g, name in enumerate("ab"):
            for j in range(6):
                seq = generate(example_model(name), 20_000, seed * 1000 + g * 100 + j)
                trees.append(fit_pst(seq, params).tree)
                truth.append(g)
        res = kmeans(trees, 2, seed=seed)
        agree = np.mean(np.asarray(truth) == res.labels)
        accs.append(max(agree, 1 - agree))
    assert np.mean(accs) >= 0.95 and min(accs) >= 0.9


# classification ------------------------------------------------------------------

def test_knn_examples(tree_pair):
    t, y = tree_pair
    train = [(t, "a"), (y, "b"), (y, "b")]
    assert knn_classify(train, t, k=1) == "a"
    assert knn_classify(train, t, k=3) == "b"
    with pytest.raises(ValueError):
        knn_classify([], t)
    with pytest.raises(ValueError):
        knn_classify(train, t, k=4)


def test_knn_self_match_is_perfect():
    trees = rand_trees(6, 40)
    labels = [str(i % 3) for i in range(40)]
    # duplicates with conflicting labels would break self-match; keep first occurrence only
    seen, keep = set(), []
    for i, t in enumerate(trees):
        if t not in seen:
            seen.add(t)
            keep.append(i)
    trees = [trees[i] for i in keep]
    labels = [labels[i] for i in keep]
    assert knn_predict(trees, labels, trees, k=1) == labels


def test_knn_distance_ties_follow_training_order(tree_pair):
    t, y = tree_pair
    assert knn_classify([(y, "first"), (y, "second")], t, k=1) == "first"


def test_knn_vote_ties_are_seeded():
    t = rand_trees(7, 1)[0]
    train = [(t, "x"), (t, "y")]
    picks = {knn_classify(train, t, k=2, seed=s) for s in range(40)}
    assert picks == {"x", "y"}
    assert all(knn_classify(train, t, k=2, seed=s) == knn_classify(train, t, k=2, seed=s) for s in range(10))


def test_knn_independent_of_thread_count():
    trees = rand_trees(8, 50)
    labels = [i % 4 for i in range(50)]
    queries = rand_trees(9, 20)
    ref = knn_predict(trees, labels, queries, k=5, seed=3)
    assert knn_predict(trees, labels, queries, k=5, seed=3, n_jobs=4) == ref


def test_prototype_examples(tree_pair):
    t, y = tree_pair
    train = [(t, "a")] * 3 + [(y, "b")] * 3
    assert prototype_classify(train, 1, t) == "a"
    assert prototype_classify(train, 1, y) == "b"
    with pytest.raises(ValueError, match="'a'"):
        prototype_classify([(t, "a"), (y, "b"), (y, "b")], 2, t)


def test_prototype_single_is_class_centroid():
    trees = rand_trees(10, 12)
    labels = ["p"] * 6 + ["q"] * 6
    protos, plabels = fit_prototypes(trees, labels, 1)
    assert protos == [centroid(trees[:6]), centroid(trees[6:])] and plabels == ["p", "q"]


def test_prototypes_track_nearest_neighbour_on_binary_chains():
    params = PstParams(ratio=1.15)
    diffs = []
    for seed in range(20):
        trees, labels = [], []
        for g, name in enumerate("ab"):
            for j in range(10):
                seq = generate(example_model(name), 5_000, seed * 1000 + g * 100 + j)
                trees.append(fit_pst(seq, params).tree)
                labels.append(name)
        ds = LabeledDataset([str(i) for i in range(len(trees))], trees, labels)
        train, test = split_train_test(ds, 0.8, seed=seed, stratified=True)
        knn = np.mean(np.array(knn_predict(train.items, train.labels, test.items, 1, seed=seed)) == test.labels)
        protos, plabels = fit_prototypes(train.items, train.labels, 2, seed=seed)
        d = pairwise_distances(test.items, protos)
        proto = np.mean(np.array([plabels[j] for j in d.argmin(axis=1)]) == test.labels)
        diffs.append(100 * (proto - knn))
    assert abs(np.mean(diffs)) <= 5


# protocol ------------------------------------------------------------------------

def _dataset(n=100, classes=2):
    return LabeledDataset([f"i{k}" for k in range(n)], list(range(n)), [f"c{k % classes}" for k in range(n)])


def test_split_examples():
    ds = _dataset()
    train, test = split_train_test(ds, 0.8, seed=1)
    assert len(train) == 80 and len(test) == 20
    assert not set(train.ids) & set(test.ids) and set(train.ids) | set(test.ids) == set(ds.ids)
    assert split_train_test(ds, 0.8, seed=1) == (train, test)
    strat, _ = split_train_test(ds, 0.8, seed=1, stratified=True)
    assert sorted(strat.labels).count("c0") == 40 and sorted(strat.labels).count("c1") == 40


def test_split_errors():
    with pytest.raises(ValueError):
        split_train_test(_dataset(), 1.0)
    with pytest.raises(ValueError):
        split_train_test(_dataset(3), 0.1)


def test_evaluate_protocols_on_separated_data(tree_pair):
    t, y = tree_pair
    items = [t] * 5 + [y] * 5
    ds = LabeledDataset([str(i) for i in range(10)], items, ["t"] * 5 + ["y"] * 5)
    train, test = split_train_test(ds, 0.6, seed=0)
    reports = evaluate(train, test, k=1, protocols=("held_out_only", "all_items"))
    assert reports["held_out_only"].overall_accuracy == 1.0
    assert reports["all_items"].confusion.sum() == 10
    same = evaluate(ds, ds, k=1, protocols=("all_items",))["all_items"]
    assert same.overall_accuracy == 1.0
    with pytest.raises(ValueError):
        evaluate(train, test, protocols=("bogus",))


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abcd")), min_size=1, max_size=40))
def test_report_bookkeeping(pairs):
    y_true, y_pred = zip(*pairs)
    rep = EvaluationReport.from_predictions(y_true, y_pred, "held_out_only")
    sizes = rep.class_sizes
    for lab in set(y_true):
        assert sizes[lab] == y_true.count(lab)
    assert rep.overall_accuracy == pytest.approx(sum(a == b for a, b in pairs) / len(pairs))
    assert np.allclose(rep.percentages.sum(axis=1)[rep.confusion.sum(axis=1) > 0], 100.0)


def test_cluster_report_uses_best_matching():
    truth = ["x"] * 4 + ["y"] * 4
    assignments = [1, 1, 1, 0, 0, 0, 0, 1]
    rep, mapping = cluster_report(truth, assignments)
    assert mapping == {1: "x", 0: "y"}
    assert rep.overall_accuracy == 0.75
    rep, mapping = cluster_report(["x", "x", "x"], [0, 1, 2])
    assert list(mapping.values()).count("x") == 1
    assert all(name == "x" or name == f"cluster{c}" for c, name in mapping.items())
    assert rep.confusion.sum() == 3 and rep.overall_accuracy == pytest.approx(1 / 3)


# decisions do not depend on the generation offset ------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_gen_offset_does_not_change_decisions(seed):
    trees = rand_trees(100 + seed, 25)
    labels = [i % 3 for i in range(25)]
    queries = rand_trees(200 + seed, 10)
    w0, w1 = WeightSpec(0.1, 0), WeightSpec(0.1, 1)
    assert knn_predict(trees, labels, queries, 3, w0, seed) == knn_predict(trees, labels, queries, 3, w1, seed)
    assert np.array_equal(kmeans(trees, 3, w0, seed=seed).labels, kmeans(trees, 3, w1, seed=seed).labels)
    p0, l0 = fit_prototypes(trees, labels, 2, w0, seed)
    p1, l1 = fit_prototypes(trees, labels, 2, w1, seed)
    assert p0 == p1 and l0 == l1


def test_synthetic_generator_is_reproducible():
    a = labelled_trees(1, per_model=3, length=500)
    b = labelled_trees(1, per_model=3, length=500)
    assert a == b and len(a[1]) == 9
