"""Command-line front end: ``vlmctree {fit,distmat,cluster,classify,simulate,evaluate}``."""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import re
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .learn import (
    cluster_report,
    distance_matrix,
    evaluate,
    fit_prototypes,
    kmeans,
    knn_predict,
    pairwise_distances,
    split_train_test,
)
from .sequence_io import AMINO_ACIDS, BREAK, Alphabet, LabeledDataset, SymbolSequence, decode, encode, \
    read_fasta, read_labels, write_fasta
from .tree import WeightSpec
from .treeio import dump_records, read_trees, tree_to_record
from .vlmc import EmptyEvidenceError, PstParams, example_model, fit_pst, generate

BUILTIN_MODELS = {"example-a": "a", "example-b": "b"}
# not part of the recorded run config: results do not depend on them
UNRECORDED = {"func", "config", "threads"}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


@contextlib.contextmanager
def atomic_open(path, mode="w"):
    """Write to a temporary sibling and move it into place only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8", newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _run_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in UNRECORDED}


def _write_json(path, obj):
    with atomic_open(path) as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_sidecar(out, args):
    _write_json(str(out).rstrip("/\\") + ".run.json", {"config": _run_config(args)})


def _weights(args) -> WeightSpec:
    return WeightSpec(args.z, args.gen_offset)


def _load_trees(path):
    records = read_trees(path)
    if not records:
        raise CliError(f"no trees found in {path}")
    return records


def _labels_for(ids, labels_path, required=True):
    labels = read_labels(labels_path)
    missing = [i for i in ids if i not in labels]
    if missing and required:
        raise CliError(f"no label for id {missing[0]!r}")
    return [labels.get(i) for i in ids]


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# subcommands


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name) or "_"


def cmd_fit(args):
    params = PstParams(args.depth, args.p_min, args.ratio, args.gamma_min, args.alpha)
    alphabet = Alphabet(args.alphabet, args.unknown_policy)
    params.check_alphabet(alphabet.size)
    records = read_fasta(args.input)
    seqs = [encode(alphabet, raw, rid) for rid, raw in records]
    if args.concatenate:
        parts = []
        for s in seqs:
            parts.extend(s.codes.tolist())
            parts.append(BREAK)
        merged = [c for k, c in enumerate(parts[:-1]) if not (c == BREAK and k and parts[k - 1] == BREAK)]
        seqs = [SymbolSequence(args.concatenate, np.array(merged, dtype=np.int32), alphabet)]

    def fit_one(seq):
        try:
            return fit_pst(seq, params)
        except EmptyEvidenceError:
            if args.skip_empty:
                print(f"vlmctree: warning: skipping {seq.id!r} (too short)", file=sys.stderr)
                return None
            raise

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        fitted = list(pool.map(fit_one, seqs))
    pairs = [(s.id, t) for s, t in zip(seqs, fitted) if t is not None]

    out = Path(args.out)
    if out.suffix in (".jsonl", ".json") and not out.is_dir():
        with atomic_open(out) as fh:
            dump_records((tree_to_record(t, id=i) for i, t in pairs), fh)
    else:
        names = {}
        for rid, _ in pairs:
            name = _safe_name(rid)
            if name in names.values():
                name = f"{name}.{len(names)}"
            names[rid] = name
        out.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".fit.", dir=out))
        try:
            for rid, tree in pairs:
                with open(staging / f"{names[rid]}.json", "w", encoding="utf-8") as fh:
                    dump_records([tree_to_record(tree, id=rid)], fh)
            for rid, _ in pairs:
                os.replace(staging / f"{names[rid]}.json", out / f"{names[rid]}.json")
        finally:
            shutil.rmtree(staging, ignore_errors=True)
    _write_sidecar(out, args)
    print(f"fitted {len(pairs)} tree(s) -> {out}", file=sys.stderr)


def cmd_distmat(args):
    records = _load_trees(args.trees)
    dm = distance_matrix([(r.id, r.tree) for r in records], _weights(args), n_jobs=args.threads)
    with atomic_open(args.out) as fh:
        dm.to_csv(fh)
    _write_sidecar(args.out, args)


def cmd_cluster(args):
    records = _load_trees(args.trees)
    ids = [r.id for r in records]
    labels = _labels_for(ids, args.labels) if args.labels else None
    K = args.k
    if K is None:
        if labels is None:
            raise CliError("--k is required when no labels are given")
        K = len(set(labels))
    res = kmeans([r.tree for r in records], K, _weights(args), seed=args.seed, max_iter=args.max_iter,
                 n_restarts=args.restarts, n_jobs=args.threads)
    out = {"config": _run_config(args) | {"k": K}, "result": res.to_dict(ids, records[0].symbols)}
    if labels is not None:
        report, mapping = cluster_report(labels, res.labels)
        out["report"] = report.to_dict()
        out["cluster_to_label"] = {str(k): v for k, v in sorted(mapping.items())}
    _write_json(args.out, _nan_to_none(out))


def cmd_classify(args):
    train = _load_trees(args.train)
    labels = _labels_for([r.id for r in train], args.labels)
    queries = _load_trees(args.query)
    w = _weights(args)
    if args.method == "knn":
        pred = knn_predict([r.tree for r in train], labels, [q.tree for q in queries], args.k, w, args.seed,
                           n_jobs=args.threads)
    else:
        protos, proto_labels = fit_prototypes([r.tree for r in train], labels, args.prototypes, w, args.seed)
        d = pairwise_distances([q.tree for q in queries], protos, w, n_jobs=args.threads)
        pred = [proto_labels[j] for j in np.argmin(d, axis=1)]
    with atomic_open(args.out) as fh:
        for q, lab in zip(queries, pred):
            fh.write(f"{q.id}\t{lab}\n")
    _write_sidecar(args.out, args)


def _load_model(spec):
    if spec in BUILTIN_MODELS:
        return example_model(BUILTIN_MODELS[spec])
    records = read_trees(spec)
    if len(records) != 1 or records[0].pct is None:
        raise CliError(f"{spec}: expected exactly one tree record with probabilities")
    return records[0].pct


def cmd_simulate(args):
    pct = _load_model(args.model)
    seqs = [generate(pct, args.n, args.seed + i, burn_in=args.burn_in, id=f"{args.id_prefix}{i + 1}")
            for i in range(args.count)]
    with atomic_open(args.out) as fh:
        write_fasta(((s.id, decode(s)) for s in seqs), fh)
    _write_sidecar(args.out, args)


def cmd_evaluate(args):
    records = _load_trees(args.trees)
    ids = [r.id for r in records]
    labels = _labels_for(ids, args.labels)
    dataset = LabeledDataset(ids, [r.tree for r in records], labels)
    train, test = split_train_test(dataset, args.train_fraction, args.seed, args.stratified)
    protocols = ("all_items", "held_out_only") if args.protocol == "both" else (args.protocol,)
    results = []
    for k in args.k:
        reports = evaluate(train, test, k, _weights(args), args.seed, protocols, n_jobs=args.threads)
        results.append({"k": k, "reports": {p: r.to_dict() for p, r in reports.items()}})
    out = {
        "config": _run_config(args),
        "split": {"train": list(train.ids), "test": list(test.ids)},
        "results": results,
    }
    _write_json(args.out, _nan_to_none(out))


# ---------------------------------------------------------------------------
# argument parsing


def _add_metric(p):
    p.add_argument("--z", type=float, default=0.1, help="node weight base, in (0, 1)")
    p.add_argument("--gen-offset", type=int, choices=(0, 1), default=0,
                   help="add this to every node generation (1 counts the root as generation 1)")


def _add_common(p, seed=True):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    if seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlmctree", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one context tree per FASTA record")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="directory (one file per record) or a .jsonl file")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--p-min", type=float, default=0.001)
    p.add_argument("--ratio", type=float, default=1.05)
    p.add_argument("--gamma-min", type=float, default=0.001)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--alphabet", default=AMINO_ACIDS)
    p.add_argument("--unknown-policy", choices=("break", "error"), default="break")
    p.add_argument("--concatenate", metavar="ID", help="pool all records into a single tree with this id")
    p.add_argument("--skip-empty", action="store_true", help="skip records too short to fit instead of failing")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("distmat", help="all-pairs distance matrix as CSV")
    p.add_argument("--trees", required=True)
    p.add_argument("--out", required=True)
    _add_metric(p)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("cluster", help="K-means in tree space")
    p.add_argument("--trees", required=True)
    p.add_argument("--labels")
    p.add_argument("--k", type=int)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out", required=True)
    _add_metric(p)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("classify", help="label query trees from labelled training trees")
    p.add_argument("--train", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--method", choices=("knn", "prototype"), default="knn")
    p.add_argument("--k", type=int, default=1, help="neighbours for knn")
    p.add_argument("--prototypes", type=int, default=1, help="prototypes per class")
    p.add_argument("--out", required=True)
    _add_metric(p)
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="sample sequences from a probabilistic context tree")
    p.add_argument("--model", required=True, help=f"tree file with probabilities, or one of {sorted(BUILTIN_MODELS)}")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--id-prefix", default="sim")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="k-NN accuracy under random train/test split")
    p.add_argument("--trees", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, nargs="+", default=[1])
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--protocol", choices=("both", "all_items", "held_out_only"), default="both")
    p.add_argument("--out", required=True)
    _add_metric(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def _config_tokens(parser, command, path) -> list[str]:
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {}
    for a in sub._actions:
        if a.option_strings:
            actions[a.dest.replace("_", "-")] = a
            for opt in a.option_strings:
                actions[opt.lstrip("-")] = a
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            action = actions.get(key.replace("_", "-"))
            if action is None or action.dest in ("config", "help"):
                raise CliError(f"{path}:{lineno}: unknown key {key!r} for {command}")
            opt = action.option_strings[-1]
            if action.nargs == 0:
                if value.lower() in ("1", "true", "yes", "on"):
                    tokens.append(opt)
                elif value.lower() not in ("0", "false", "no", "off"):
                    raise CliError(f"{path}:{lineno}: {key} expects a boolean")
            elif action.nargs in ("+", "*"):
                tokens.extend([opt, *value.split()])
            else:
                tokens.extend([opt, value])
    return tokens


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = None
        for k, tok in enumerate(argv):
            if tok == "--config" and k + 1 < len(argv):
                config = argv[k + 1]
            elif tok.startswith("--config="):
                config = tok.split("=", 1)[1]
        if config and argv and argv[0] in parser._subparsers._group_actions[0].choices:
            argv = [argv[0], *_config_tokens(parser, argv[0], config), *argv[1:]]
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise CliError("--threads must be >= 1")
        args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"vlmctree: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
