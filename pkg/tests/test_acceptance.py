"""Acceptance suite. Each test is one criterion; a PASS/FAIL line per criterion is
printed in the terminal summary."""

import time

import numpy as np
import pytest

from conftest import T_CONTEXTS, Y_CONTEXTS, tree_from
from oracles import all_prefix_closed, naive_distance
from synthetic import labelled_trees
from vlmctree.cli import main
from vlmctree.learn import _assign, cluster_report, evaluate, kmeans, knn_predict, split_train_test
from vlmctree.sequence_io import LabeledDataset
from vlmctree.tree import ContextTree, WeightSpec, bffs_distance, centroid, format_node, random_tree
from vlmctree.vlmc import PstParams, example_model, fit_pst, generate


@pytest.fixture
def criterion(record_property):
    def mark(number, title):
        record_property("criterion", number)
        record_property("title", title)
    return mark


@pytest.fixture(scope="module")
def synthetic_runs():
    return {seed: labelled_trees(seed) for seed in range(20)}


def test_worked_example_distance(criterion):
    criterion(1, "worked-example distance is exactly 0.04 / 0.004")
    t, y = tree_from(T_CONTEXTS), tree_from(Y_CONTEXTS)
    assert bffs_distance(t, y, WeightSpec(0.1, 0)) == 0.04
    assert bffs_distance(t, y, WeightSpec(0.1, 1)) == 0.004
    assert bffs_distance(y, t, WeightSpec(0.1, 1)) == 0.004


def _perturb(tree, rng):
    """Copy of ``tree`` with one leaf removed or one child added, or an exact copy."""
    nodes = set(tree.nodes)
    move = rng.integers(3)
    leaves = [v for v in tree.contexts() if v]
    if move == 0 and leaves:
        nodes.discard(leaves[rng.integers(len(leaves))])
    elif move == 1:
        grow = [v for v in sorted(nodes) if len(v) < tree.max_depth]
        v = grow[rng.integers(len(grow))]
        nodes.add(v + (int(rng.integers(tree.alphabet_size)),))
    return ContextTree(tree.alphabet_size, tree.max_depth, nodes)


@pytest.mark.parametrize("A,p_child", [(2, 0.6), (20, 0.12)], ids=["binary", "twenty"])
def test_metric_properties(criterion, A, p_child):
    criterion(2, "metric axioms on 1000 triples per alphabet (A=2, A=20; D=4)")
    start = time.perf_counter()
    rng = np.random.default_rng(A)
    w = WeightSpec(0.1, 0)
    zero_pairs = 0
    for _ in range(1000):
        t = random_tree(A, 4, rng, p_child)
        y = _perturb(t, rng) if rng.random() < 0.5 else random_tree(A, 4, rng, p_child)
        u = random_tree(A, 4, rng, p_child)
        d_ty, d_yt = bffs_distance(t, y, w), bffs_distance(y, t, w)
        assert d_ty == d_yt
        assert d_ty >= 0
        assert (d_ty == 0) == (t.nodes == y.nodes)
        zero_pairs += d_ty == 0
        assert bffs_distance(t, u, w) - (d_ty + bffs_distance(y, u, w)) <= 1e-12
        assert bffs_distance(t, t, w) == 0
    assert zero_pairs > 0
    assert time.perf_counter() - start < 10


def test_centroid_oracle(criterion):
    criterion(3, "majority-vote centroid attains the exhaustive minimum (200 samples, A=2, D=2)")
    start = time.perf_counter()
    candidates = all_prefix_closed(2, 2)
    rng = np.random.default_rng(2024)
    for _ in range(200):
        p = rng.uniform(0.2, 0.9)
        trees = [random_tree(2, 2, rng, p) for _ in range(rng.integers(1, 6))]
        cost = [sum(naive_distance(t.nodes, c, 2, 2) for t in trees) for c in candidates]
        got = sum(naive_distance(t.nodes, centroid(trees).nodes, 2, 2) for t in trees)
        assert got <= min(cost) + 1e-12
    assert time.perf_counter() - start < 30


def test_estimator_recovery(criterion):
    criterion(4, "context sets of both binary chains recovered on >= 18/20 seeds, probabilities +-0.02")
    start = time.perf_counter()
    # 1.05 admits sampling noise at this length; see README
    params = PstParams(max_depth=4, p_min=0.001, ratio=1.15, gamma_min=0.0, alpha=0.0)
    for name in ("a", "b"):
        truth = example_model(name)
        expected = sorted(truth.contexts())
        hits = 0
        for seed in range(20):
            pct = fit_pst(generate(truth, 100_000, seed), params)
            if sorted(pct.contexts()) == expected:
                hits += all(abs(pct.probs[c][0] - truth.probs[c][0]) <= 0.02 for c in expected)
        print(f"chain {name}: {hits}/20 exact recoveries "
              f"{sorted(format_node(c, '12', True) for c in expected)}")
        assert hits >= 18
    assert time.perf_counter() - start < 60


def test_synthetic_clustering(criterion, synthetic_runs):
    criterion(5, "K-means K=3 on 3 synthetic chains: accuracy >= 0.95 on >= 18/20 seeds")
    start = time.perf_counter()
    accs = []
    for seed, (ids, trees, labels) in synthetic_runs.items():
        res = kmeans(trees, 3, seed=seed)
        report, _ = cluster_report(labels, res.labels)
        accs.append(report.overall_accuracy)
    print("clustering accuracy per seed:", np.round(accs, 3).tolist())
    assert sum(a >= 0.95 for a in accs) >= 18
    assert time.perf_counter() - start < 120


def test_synthetic_knn(criterion, synthetic_runs):
    criterion(6, "k=1 held-out accuracy >= 0.95 (80/20 split); training items self-match at 100%")
    start = time.perf_counter()
    held_out, every = [], []
    for seed, (ids, trees, labels) in synthetic_runs.items():
        ds = LabeledDataset(ids, trees, labels)
        train, test = split_train_test(ds, 0.8, seed=seed)
        reports = evaluate(train, test, k=1, seed=seed, protocols=("held_out_only", "all_items"))
        held_out.append(reports["held_out_only"].overall_accuracy)
        every.append(reports["all_items"].overall_accuracy)
        assert knn_predict(train.items, train.labels, train.items, k=1, seed=seed) == list(train.labels)
        assert every[-1] >= held_out[-1]
    print("held-out accuracy per seed:", np.round(held_out, 3).tolist())
    print("all-items accuracy per seed:", np.round(every, 3).tolist())
    assert sum(a >= 0.95 for a in held_out) >= 18
    assert np.mean(held_out) >= 0.95
    assert time.perf_counter() - start < 60


def test_kmeans_monotone_and_fixed_point(criterion):
    criterion(7, "K-means objective non-increasing and final assignment a fixed point (500 instances)")
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(500):
        n = int(rng.integers(2, 25))
        K = int(rng.integers(1, min(n, 5) + 1))
        A, D = (2, 3) if rng.random() < 0.7 else (4, 2)
        trees = [random_tree(A, D, rng, rng.uniform(0.3, 0.8)) for _ in range(n)]
        w = WeightSpec(float(rng.uniform(0.05, 0.5)), int(rng.integers(2)))
        res = kmeans(trees, K, w, seed=int(rng.integers(2**31)), n_restarts=2)
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))
        assert res.converged
        assert np.array_equal(_assign(trees, res.centroids, K, w), res.labels)
        assert np.bincount(res.labels, minlength=K).min() >= 1
    assert time.perf_counter() - start < 30


def test_gen_offset_invariance(criterion):
    criterion(8, "k-NN labels and K-means assignments identical for gen_offset 0 and 1 (50 instances)")
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    w0, w1 = WeightSpec(0.1, 0), WeightSpec(0.1, 1)
    for i in range(50):
        n = int(rng.integers(6, 30))
        trees = [random_tree(2, 4, rng, 0.6) for _ in range(n)]
        labels = rng.integers(0, 3, n).tolist()
        queries = [random_tree(2, 4, rng, 0.6) for _ in range(10)]
        k = int(rng.integers(1, n + 1))
        assert knn_predict(trees, labels, queries, k, w0, seed=i) == knn_predict(trees, labels, queries, k, w1, seed=i)
        K = int(rng.integers(1, min(n, 5) + 1))
        assert np.array_equal(kmeans(trees, K, w0, seed=i).labels, kmeans(trees, K, w1, seed=i).labels)
    assert time.perf_counter() - start < 30


def _cli_pipeline(workdir, threads, monkeypatch):
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    for k, name in enumerate(("example-a", "example-b")):
        assert main(["simulate", "--model", name, "--n", "5000", "--count", "8", "--seed", str(100 * k),
                     "--id-prefix", name[-1], "--out", f"{name}.fa"]) == 0
    with open("seqs.fa", "w") as fh:
        fh.write(open("example-a.fa").read() + open("example-b.fa").read())
    with open("labels.tsv", "w") as fh:
        fh.writelines(f"{p}{i}\t{p}\n" for p in "ab" for i in range(1, 9))
    t = str(threads)
    steps = [
        ["fit", "--in", "seqs.fa", "--alphabet", "12", "--ratio", "1.15", "--out", "trees", "--threads", t],
        ["distmat", "--trees", "trees", "--out", "d.csv", "--threads", t],
        ["cluster", "--trees", "trees", "--labels", "labels.tsv", "--seed", "5", "--out", "c.json", "--threads", t],
        ["evaluate", "--trees", "trees", "--labels", "labels.tsv", "--k", "1", "3", "--seed", "5",
         "--out", "e.json", "--threads", t],
    ]
    for argv in steps:
        assert main(argv) == 0
    return {str(p.relative_to(workdir)): p.read_bytes() for p in sorted(workdir.rglob("*")) if p.is_file()}


def test_thread_count_determinism(criterion, tmp_path, monkeypatch):
    criterion(9, "fit -> distmat -> cluster -> evaluate byte-identical at 1 and 4 threads")
    start = time.perf_counter()
    single = _cli_pipeline(tmp_path / "t1", 1, monkeypatch)
    multi = _cli_pipeline(tmp_path / "t4", 4, monkeypatch)
    assert {"d.csv", "c.json", "e.json", "trees/a1.json"} <= set(single)
    assert single.keys() == multi.keys()
    for name in single:
        assert single[name] == multi[name], name
    assert time.perf_counter() - start < 60
