"""``facetrait`` command line: extract | synth | train | eval | bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import bench, extractor, store
from .errors import FacetraitError
from .evaluation import evaluate, measure_latency
from .models import FAMILIES, train_model
from .serialize import dataset_fingerprint, load_model, save_model

log = logging.getLogger("facetrait")


def _default_seed():
    try:
        return int(os.environ.get("FACETRAIT_SEED", "0"))
    except ValueError:
        return 0


def _err(msg):
    print(f"facetrait: error: {msg}", file=sys.stderr)


def _load(path, normalize=False):
    ds = store.load_aef(path)
    return store.l2_normalize(ds) if normalize else ds


def _int_list(text):
    try:
        return [int(v) for v in text.replace("{", "").replace("}", "").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# -- extract / synth ----------------------------------------------------------------

def cmd_extract(args) -> int:
    if args.model is None and not args.stub_adapter:
        args.parser.error("one of --model or --stub-adapter is required")
    manifest = extractor.PreprocessManifest(channel_order=args.channel_order,
                                            layout=args.layout,
                                            resize_filter=args.resize_filter)
    if args.stub_adapter:
        adapter = extractor.StubAdapter(seed=args.seed, cluster_mean=args.stub_cluster_mean)
    else:
        adapter = extractor.OnnxAdapter(args.model, device=args.device)
    ds, summary = extractor.extract_directory(adapter, args.images, manifest,
                                              batch=args.batch, workers=args.workers)
    store.save_aef(ds, args.out)
    with open(f"{args.out}.manifest.json", "w") as fh:
        json.dump({"manifest": manifest.to_dict(),
                   "adapter": "stub" if args.stub_adapter else str(args.model),
                   "counts": summary.counts, "skipped": summary.skipped}, fh, indent=2)
    print(summary, file=sys.stderr)
    for path in summary.skipped_paths:
        print(f"  skipped {path}", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    if args.via_stub:
        if args.dim != extractor.EMBEDDING_DIM:
            args.parser.error(f"--via-stub always produces {extractor.EMBEDDING_DIM}-d vectors")
        ds = extractor.stub_cluster_dataset(args.n, args.mean, args.sigma, args.seed)
    else:
        ds = extractor.synthetic_dataset(args.n, args.dim, args.mean, args.sigma, args.seed)
    store.save_aef(ds, args.out)
    f, m = ds.class_counts()
    print(f"wrote {args.out}: {len(ds)} records (female={f} male={m}) dim={ds.dimension}",
          file=sys.stderr)
    return 0


# -- train / eval -------------------------------------------------------------------

_FLAG_KEYS = {
    "svm": {"kernel": "kernel", "C": "C", "scale": "scale", "tol": "tol",
            "max_passes": "max_passes", "subsample": "subsample", "seed": "seed"},
    "logreg": {"l2_lambda": "l2_lambda", "epochs": "epochs"},
    "knn": {"k": "k", "metric": "metric", "weighting": "weighting"},
    "tree": {"max_splits": "max_splits"},
    "bagging": {"n_learners": "n_learners", "max_splits": "max_splits", "seed": "seed"},
    "adaboost": {"n_learners": "n_learners", "max_splits": "max_splits",
                 "learn_rate": "learn_rate", "seed": "seed"},
    "rusboost": {"n_learners": "n_learners", "max_splits": "max_splits",
                 "learn_rate": "learn_rate", "seed": "seed"},
    "subspace": {"n_learners": "n_learners", "subspace_dim": "subspace_dim", "seed": "seed"},
    "mlp": {"hidden": "hidden", "step": "step", "momentum": "momentum", "epochs": "epochs",
            "batch_size": "batch_size", "seed": "seed"},
}


def _overrides(args):
    out = {}
    for key, attr in _FLAG_KEYS.get(args.algo, {}).items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out


def cmd_train(args) -> int:
    data = _load(args.data, args.normalize)
    with open(args.data, "rb") as fh:
        fingerprint = dataset_fingerprint(fh.read())
    t0 = time.perf_counter()
    model = train_model(args.algo, data, _overrides(args))
    wall = time.perf_counter() - t0
    model.info["l2_normalize"] = bool(args.normalize)
    save_model(model, args.out, fingerprint)
    acc = float(np.mean(model.predict(data.X()) == data.labels))
    print(f"{args.algo}: training accuracy {100 * acc:.2f}% ({len(data)} records), "
          f"wall time {wall:.2f}s -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    data = _load(args.data, model.info.get("l2_normalize", False))
    if data.dimension != model.dimension:
        _err(f"dimension mismatch: model expects {model.dimension}, "
             f"dataset {args.data} has {data.dimension}")
        return 1
    X = data.X()
    scores = model.scores(X)
    predicted = model.predict(X)
    latency = None
    if args.latency:
        sample = X[: min(len(X), 100)]
        latency = measure_latency(lambda x: model.predict(x[None]), sample,
                                  warmup=1, reps=args.latency)
    tag = args.tag or f"{model.family}:{os.path.basename(args.model)}"
    report = evaluate(data.labels, predicted, scores, model_tag=tag, latency=latency)
    if args.out:
        report.write(args.out)
    curves = bench.roc_pair(report)
    if args.roc:
        bench.write_roc_csv(curves, args.roc)
    if args.roc_svg:
        bench.write_roc_svg(curves, args.roc_svg, title=model.family)
    for flag in report.degenerate:
        print(f"warning: zero denominator in {flag}, counted as 0", file=sys.stderr)
    print(report.summary_line())
    return 0


def cmd_bench(args) -> int:
    train = _load(args.train, args.normalize)
    val = _load(args.val, args.normalize)
    if train.dimension != val.dimension:
        _err(f"dimension mismatch: train {train.dimension}, validation {val.dimension}")
        return 1
    entries = bench.SUITES[args.suite]
    if args.only:
        wanted = {s.strip() for s in args.only.split(",")}
        entries = [e for e in entries if e.family in wanted]

    def progress(row):
        status = "ok" if row.error is None else f"ERROR {row.error}"
        print(f"[bench] {row.entry.model} / {row.entry.settings}: {status} "
              f"({row.train_s:.1f}s)", file=sys.stderr)

    rows = bench.run_suite(train, val, args.suite, seed=args.seed,
                           svm_subsample=args.svm_subsample or None,
                           parallel=args.parallel, entries=entries, progress=progress)
    bench.write_bench_csv(rows, args.out)
    if args.reports_dir:
        os.makedirs(args.reports_dir, exist_ok=True)
        for i, row in enumerate(rows):
            if row.report is not None:
                row.report.write(os.path.join(args.reports_dir, f"{i:02d}_{row.entry.family}.json"))
    ok = [r for r in rows if r.error is None]
    print(f"{len(ok)}/{len(rows)} entries succeeded -> {args.out}", file=sys.stderr)
    return 0 if ok else 1


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facetrait",
                                description="Gender classification on frozen face embeddings.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    e = sub.add_parser("extract", help="embed a female/male image tree into an AEF file")
    e.add_argument("--images", required=True)
    e.add_argument("--model", help="ArcFace ONNX file")
    e.add_argument("--stub-adapter", action="store_true",
                   help="deterministic pseudo-embeddings, no model file")
    e.add_argument("--out", required=True)
    e.add_argument("--batch", type=int, default=16)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--device", choices=["cpu", "gpu"], default="cpu")
    e.add_argument("--channel-order", choices=["RGB", "BGR"], default="RGB")
    e.add_argument("--layout", choices=[extractor.CHANNELS_FIRST, extractor.CHANNELS_LAST],
                   default=extractor.CHANNELS_FIRST)
    e.add_argument("--resize-filter", choices=["bilinear", "nearest"], default="bilinear")
    e.add_argument("--stub-cluster-mean", type=float,
                   help="stub only: shift by +/- this value by image brightness")
    e.add_argument("--seed", type=int, default=seed)
    e.set_defaults(func=cmd_extract, parser=e)

    s = sub.add_parser("synth", help="write two Gaussian clusters as an AEF file")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--dim", type=int, default=512)
    s.add_argument("--mean", type=float, default=0.1)
    s.add_argument("--sigma", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--via-stub", action="store_true",
                   help="route every record through the stub adapter's cluster mode")
    s.set_defaults(func=cmd_synth, parser=s)

    t = sub.add_parser("train", help="train one classifier and write an FTM1 model")
    t.add_argument("--data", required=True)
    t.add_argument("--algo", required=True, choices=FAMILIES)
    t.add_argument("--out", required=True)
    t.add_argument("--normalize", action="store_true", help="L2-normalize embeddings first")
    t.add_argument("--seed", type=int, default=seed)
    g = t.add_argument_group("svm")
    g.add_argument("--kernel", choices=["gaussian", "quadratic", "cubic", "linear"])
    g.add_argument("--C", type=float)
    g.add_argument("--scale", type=float, help="kernel sigma (default sqrt(dim))")
    g.add_argument("--tol", type=float)
    g.add_argument("--max-passes", type=int)
    g.add_argument("--subsample", type=int)
    g = t.add_argument_group("logreg")
    g.add_argument("--lambda", dest="l2_lambda", type=float)
    g.add_argument("--epochs", type=int)
    g = t.add_argument_group("knn")
    g.add_argument("--k", type=int)
    g.add_argument("--metric", choices=["euclidean", "cosine"])
    g.add_argument("--weighting", choices=["uniform", "inverse"])
    g = t.add_argument_group("trees / ensembles")
    g.add_argument("--max-splits", type=int)
    g.add_argument("--n-learners", type=int)
    g.add_argument("--learn-rate", type=float)
    g.add_argument("--subspace-dim", type=int)
    g = t.add_argument_group("mlp")
    g.add_argument("--hidden", type=_int_list, help="e.g. 10,10,10")
    g.add_argument("--step", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--batch-size", type=int)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="evaluate a model on an AEF file")
    v.add_argument("--model", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--out", help="EvalReport JSON path")
    v.add_argument("--roc", help="ROC CSV path (positive,fpr,tpr)")
    v.add_argument("--roc-svg", help="two-panel ROC SVG path")
    v.add_argument("--latency", type=int, default=0, metavar="REPS",
                   help="time single predictions over REPS passes")
    v.add_argument("--tag")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--train", required=True)
    b.add_argument("--val", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--suite", choices=sorted(bench.SUITES), default="table1")
    b.add_argument("--svm-subsample", type=int, default=8000)
    b.add_argument("--seed", type=int, default=seed)
    b.add_argument("--parallel", type=int, default=1)
    b.add_argument("--normalize", action="store_true")
    b.add_argument("--only", help="comma-separated families to keep, e.g. svm,lda")
    b.add_argument("--reports-dir")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FacetraitError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 1
    except OSError as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
