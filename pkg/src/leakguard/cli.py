"""Command-line front end.

Machine-readable artifacts are JSON/JSONL written to ``--out``; a
provenance manifest goes to ``<out>.manifest.json``. Human-readable
summaries (with percentages) go to standard output only. Exit codes:
0 success, 1 usage error, 2 data validation failure, 3 internal error.

Dataset arguments take the metadata path; the representation file is
``<stem>.rep.jsonl``, ``<stem>.emb``, or ``<stem>.emb.csv`` next to it
unless overridden with the matching ``*-rep`` flag. ``LEAKGUARD_LOG``
sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .core import (
    DataFormatError,
    Dataset,
    DatasetValidationError,
    LeakguardError,
    SchemaMismatchError,
)
from .dataio import load_dataset, save_dataset, save_predictions
from .harness import (
    AdditionsSchedule,
    LeakAwareConfig,
    Period,
    PredictionSet,
    baseline_predict,
    ingest_predictions,
    leak_aware_evaluate,
    run_continuous_eval,
)
from .leakage import calibrate_threshold, leak_report
from .manifest import RunManifest
from .metrics import (
    ConfusionCounts,
    METRIC_FIELDS,
    MetricsReport,
    average_over_periods,
    evaluate_partitions,
    metrics_from_counts,
)
from .splitter import (
    BatchSpec,
    WindowSpec,
    build_batches,
    build_sliding_windows,
    lint_split,
    window_datasets,
    window_plan_json,
)
from .synth import (
    BinarySpec,
    EmbeddingSpec,
    GENERATOR_NAME,
    GENERATOR_VERSION,
    SynthConfig,
    flip_fixture,
    gen_synthetic,
    split_periods,
)

logger = logging.getLogger("leakguard.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this tool reserves 2 for data."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def dump_json(obj) -> str:
    """Canonical artifact serialization: stable key order, no NaN."""
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write_artifact(out: Path, body: str, manifest: RunManifest) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(body, encoding="utf-8")
    Path(str(out) + ".manifest.json").write_text(
        dump_json(manifest.to_json_dict()), encoding="utf-8")


def _resolve_rep(metadata: Path, override: Optional[str]) -> Path:
    if override:
        return Path(override)
    base = metadata.with_suffix("")
    for candidate in (Path(f"{base}.rep.jsonl"), Path(f"{base}.emb"),
                      Path(f"{base}.emb.csv")):
        if candidate.exists():
            return candidate
    raise DataFormatError(
        f"no representation file next to {metadata} "
        f"(tried {base}.rep.jsonl, {base}.emb, {base}.emb.csv)")


def _load(metadata: str, rep_override: Optional[str]) -> tuple[Dataset, list[Path]]:
    meta = Path(metadata)
    rep = _resolve_rep(meta, rep_override)
    inputs = [meta, rep]
    sidecar = Path(str(rep) + ".ids.jsonl")
    if sidecar.exists():
        inputs.append(sidecar)
    return load_dataset(meta, rep), inputs


def _manifest(args, inputs: Sequence[Path], seed: Optional[int] = None) -> RunManifest:
    config = {k: v for k, v in vars(args).items()
              if k != "func" and not k.startswith("_")}
    return RunManifest.create(sys.argv[1:] if args._argv is None else args._argv,
                              config, inputs, seed)


def _percent(value: Optional[float]) -> str:
    return "--" if value is None else f"{100.0 * value:.2f}"


def _metrics_row(d: dict) -> str:
    return "  ".join(f"{name.upper()}={_percent(d.get(name))}"
                     for name in ("fnr", "fpr", "f1", "ba"))


def _load_id_set(path: Path) -> frozenset[str]:
    """Accept an audit report body, {"ids": [...]}, or a JSON array."""
    obj = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(obj, list):
        return frozenset(str(i) for i in obj)
    if isinstance(obj, dict) and "matches" in obj:
        return frozenset(str(m["test_id"]) for m in obj["matches"])
    if isinstance(obj, dict) and "ids" in obj:
        return frozenset(str(i) for i in obj["ids"])
    raise DataFormatError("expected an audit report, an id array, or {\"ids\": [...]}",
                          path=str(path))


# ---------------------------------------------------------------- subcommands

def _cmd_audit(args) -> int:
    train, train_inputs = _load(args.train, args.train_rep)
    test, test_inputs = _load(args.test, args.test_rep)
    report = leak_report(train, test, args.mode, args.threshold, workers=args.workers)
    body = dump_json(report.to_json_dict())
    _write_artifact(Path(args.out), body, _manifest(args, train_inputs + test_inputs))
    print(f"{args.mode} leakage: {len(report.leak_ids)} of {report.test_size} "
          f"test samples ({_percent(report.ratio)}%)")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    train, train_inputs = _load(args.train, args.train_rep)
    test, test_inputs = _load(args.test, args.test_rep)
    leak_fv = _load_id_set(Path(args.leak_fv))
    lo, hi = args.range
    calibration = calibrate_threshold(leak_fv, train, test, lo, hi, args.step,
                                      workers=args.workers)
    body = dump_json(calibration.to_json_dict())
    inputs = train_inputs + test_inputs + [Path(args.leak_fv)]
    _write_artifact(Path(args.out), body, _manifest(args, inputs))
    print(f"chosen threshold M={calibration.chosen_m:.6g} "
          f"(IoU={calibration.max_iou:.4f}, {len(calibration.grid)} grid points)")
    return EXIT_OK


def _cmd_split(args) -> int:
    ds, inputs = _load(args.dataset, args.dataset_rep)
    batch_spec = BatchSpec(args.malicious_per_batch, args.benign_per_batch, args.seed)
    window_spec = WindowSpec(args.window_len, args.train_len, args.val_len,
                             args.test_len, args.stride)
    batches = build_batches(ds, batch_spec)
    windows = build_sliding_windows(batches, window_spec) if batches else []
    plan = window_plan_json(batches, windows)
    lint = []
    for k, window in enumerate(windows):
        train_ds, _, test_ds = window_datasets(ds, window)
        violations = lint_split(train_ds, test_ds,
                                target_malware_ratio=args.target_ratio,
                                ratio_tolerance=args.ratio_tolerance)
        lint.append({"window": k, "violations": [
            {"invariant": v.invariant, "sample_id": v.sample_id, "message": v.message}
            for v in violations]})
    plan["lint"] = lint
    _write_artifact(Path(args.out), dump_json(plan), _manifest(args, inputs, args.seed))
    total = sum(len(entry["violations"]) for entry in lint)
    print(f"{len(batches)} batches, {len(windows)} windows, "
          f"{total} lint violation(s)")
    return EXIT_OK


def _metrics_from_counts_arg(text: str) -> MetricsReport:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError("--counts expects TP,FN,TN,FP")
    tp, fn, tn, fp = (int(p) for p in parts)
    return metrics_from_counts(ConfusionCounts(tp, fn, tn, fp))


def _predictions_for(args, train: Optional[Dataset], test: Dataset) -> PredictionSet:
    if args.predictions:
        ps = ingest_predictions(args.predictions)
        return ps
    if args.baseline:
        if train is None:
            raise DataFormatError("--baseline needs --train")
        return baseline_predict(train, test, args.baseline, k=args.k)
    raise DataFormatError("provide --predictions or --baseline")


def _cmd_evaluate(args) -> int:
    if args.counts:
        report = _metrics_from_counts_arg(args.counts)
        _write_artifact(Path(args.out), dump_json(report.to_json_dict()),
                        _manifest(args, []))
        print(_metrics_row(report.to_json_dict()))
        return EXIT_OK

    if not args.test:
        raise DataFormatError("evaluate needs --test (or --counts)")
    test, inputs = _load(args.test, args.test_rep)
    train = None
    if args.train:
        train, train_inputs = _load(args.train, args.train_rep)
        inputs = train_inputs + inputs
    predictions = _predictions_for(args, train, test)
    if args.predictions:
        inputs.append(Path(args.predictions))

    if args.leak_report:
        leak_ids = _load_id_set(Path(args.leak_report))
        inputs.append(Path(args.leak_report))
    elif train is not None:
        leak_ids = leak_report(train, test, args.mode, args.threshold,
                               workers=args.workers).leak_ids
    else:
        leak_ids = frozenset()

    report = evaluate_partitions(test.labels(), predictions.predictions,
                                 test.ids, leak_ids)
    _write_artifact(Path(args.out), dump_json(report.to_json_dict()),
                    _manifest(args, inputs))
    print(f"leak ratio {_percent(report.leak_ratio)}%")
    print("complete:", _metrics_row(report.complete.to_json_dict()))
    print("nonleak: ", _metrics_row(report.nonleak_portion.to_json_dict()))
    return EXIT_OK


def _cmd_continuous(args) -> int:
    train, inputs = _load(args.train, args.train_rep)
    spec = json.loads(Path(args.periods).read_text(encoding="utf-8"))
    inputs.append(Path(args.periods))
    periods = []
    predictions = {}
    for entry in spec:
        label = str(entry["label"])
        meta = Path(entry["metadata"])
        data, period_inputs = _load(str(meta), entry.get("representation"))
        inputs.extend(period_inputs)
        periods.append(Period(label, data))
        if "predictions" in entry:
            predictions[label] = ingest_predictions(entry["predictions"])
            inputs.append(Path(entry["predictions"]))
        elif args.baseline:
            predictions[label] = baseline_predict(train, data, args.baseline, k=args.k)
        else:
            raise DataFormatError(
                f"period {label!r} has no predictions and no --baseline given")
    schedule = AdditionsSchedule.load_jsonl(args.schedule) if args.schedule \
        else AdditionsSchedule()
    if args.schedule:
        inputs.append(Path(args.schedule))
    leak_cfg = None
    if args.mode != "exact" or args.threshold is not None:
        leak_cfg = LeakAwareConfig(args.mode, args.threshold)
    results = run_continuous_eval(train, periods, schedule, predictions, leak_cfg,
                                  workers=args.workers)
    lines = "".join(json.dumps(r.to_json_dict(), allow_nan=False) + "\n"
                    for r in results)
    _write_artifact(Path(args.out), lines, _manifest(args, inputs))
    for r in results:
        print(f"{r.period}: pool={r.pool_size} "
              f"leak={_percent(r.report.leak_ratio)}% "
              f"BA(complete)={_percent(r.report.complete.ba)} "
              f"BA(nonleak)={_percent(r.report.nonleak_portion.ba)}")
    return EXIT_OK


def _cmd_leak_aware(args) -> int:
    train, train_inputs = _load(args.train, args.train_rep)
    test, test_inputs = _load(args.test, args.test_rep)
    inputs = train_inputs + test_inputs
    predictions = _predictions_for(args, train, test)
    if args.predictions:
        inputs.append(Path(args.predictions))
    cfg = LeakAwareConfig(args.mode, args.threshold, args.tie_rule)
    evaluation = leak_aware_evaluate(train, test, cfg, predictions,
                                     workers=args.workers)
    _write_artifact(Path(args.out), dump_json(evaluation.to_json_dict()),
                    _manifest(args, inputs))
    print("standalone:", _metrics_row(evaluation.standalone.complete.to_json_dict()))
    print("leak-aware:", _metrics_row(evaluation.leak_aware.complete.to_json_dict()))
    print(f"decisions: {evaluation.provenance_counts['memorized']} memorized, "
          f"{evaluation.provenance_counts['model']} model")
    return EXIT_OK


def _representation_spec(args):
    if args.representation == "binary":
        return BinarySpec(args.dim or 128, args.density)
    return EmbeddingSpec(args.dim or 32)


def _write_ground_truth(path: Path, seed: int, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"generator": GENERATOR_NAME,
                             "version": GENERATOR_VERSION, "seed": seed}) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_json_dict()) + "\n")


def _save_with_convention(ds: Dataset, out_dir: Path, stem: str) -> dict:
    meta = out_dir / f"{stem}.jsonl"
    if ds.schema is not None and ds.schema.kind == "embedding":
        rep = out_dir / f"{stem}.emb"
    else:
        rep = out_dir / f"{stem}.rep.jsonl"
    save_dataset(ds, meta, rep)
    return {"metadata": str(meta), "representation": str(rep)}


def _cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict = {}

    if args.flip_fixture:
        fixture = flip_fixture(args.seed,
                               0.7 if args.leak_rate is None else args.leak_rate)
        files["train"] = _save_with_convention(fixture.train, out_dir, "train")
        files["test"] = _save_with_convention(fixture.test, out_dir, "test")
        memo_path = out_dir / "predictions_memo.jsonl"
        gen_path = out_dir / "predictions_gen.jsonl"
        save_predictions(fixture.memo.predictions, memo_path)
        save_predictions(fixture.gen.predictions, gen_path)
        files["predictions"] = {"memo": str(memo_path), "gen": str(gen_path)}
        truth_path = out_dir / "ground_truth.jsonl"
        _write_ground_truth(truth_path, args.seed, fixture.ground_truth)
        files["ground_truth"] = str(truth_path)
        summary = {"layout": "flip-fixture", "seed": args.seed, "files": files,
                   "generator": {"name": GENERATOR_NAME, "version": GENERATOR_VERSION}}
        _write_artifact(out_dir / "synth.json", dump_json(summary),
                        _manifest(args, [], args.seed))
        print(f"flip fixture written to {out_dir}")
        return EXIT_OK

    cfg = SynthConfig(
        n_periods=args.periods,
        samples_per_period=args.per_period,
        malware_ratio=args.malware_ratio,
        leak_rate=0.0 if args.leak_rate is None else args.leak_rate,
        near_leak_jitter=args.jitter,
        drift_rate=args.drift,
        representation=_representation_spec(args),
        duplicate_label_flip=args.flip_prob,
        duplicate_window=args.dup_window,
        seed=args.seed,
        start=args.start,
    )
    result = gen_synthetic(cfg)
    if args.layout == "split":
        parts = split_periods(result.dataset)
        test_parts = parts[-args.test_periods:]
        train_samples = [s for _, ds in parts[:-args.test_periods] for s in ds.samples]
        files["train"] = _save_with_convention(
            Dataset(train_samples, result.dataset.schema), out_dir, "train")
        test_samples = [s for _, ds in test_parts for s in ds.samples]
        files["test"] = _save_with_convention(
            Dataset(test_samples, result.dataset.schema), out_dir, "test")
    else:
        entries = []
        for label, part in split_periods(result.dataset):
            stem = f"period-{label}"
            entry = {"label": label}
            entry.update(_save_with_convention(part, out_dir, stem))
            entries.append(entry)
        periods_path = out_dir / "periods.json"
        periods_path.write_text(dump_json(entries), encoding="utf-8")
        files["periods"] = str(periods_path)
    truth_path = out_dir / "ground_truth.jsonl"
    _write_ground_truth(truth_path, args.seed, result.ground_truth)
    files["ground_truth"] = str(truth_path)
    summary = {"layout": args.layout, "seed": args.seed, "files": files,
               "generator": {"name": GENERATOR_NAME, "version": GENERATOR_VERSION}}
    _write_artifact(out_dir / "synth.json", dump_json(summary),
                    _manifest(args, [], args.seed))
    print(f"{cfg.n_periods} periods x {cfg.samples_per_period} samples "
          f"written to {out_dir} ({len(result.ground_truth)} planted duplicates)")
    return EXIT_OK


def _report_from_dict(d: dict) -> MetricsReport:
    counts = ConfusionCounts(**d["counts"])
    return MetricsReport(counts, *(d.get(name) for name in METRIC_FIELDS))


def _cmd_report(args) -> int:
    rows = []
    inputs = []
    for path in args.inputs:
        p = Path(path)
        inputs.append(p)
        with p.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
    if not rows:
        raise DataFormatError("no period records in inputs")
    before = [_report_from_dict(r["complete"]) for r in rows]
    after = [_report_from_dict(r["nonleak"]) for r in rows]
    summary = {
        "periods": [
            {"period": r.get("period", str(i)), "leak_ratio": r.get("leak_ratio"),
             "before": r["complete"], "after": r["nonleak"]}
            for i, r in enumerate(rows)
        ],
        "average": {
            "before": average_over_periods(before).to_json_dict(),
            "after": average_over_periods(after).to_json_dict(),
        },
    }
    _write_artifact(Path(args.out), dump_json(summary), _manifest(args, inputs))

    header = (f"{'period':<12} {'leak%':>7} | "
              f"{'FNR%':>7} {'FPR%':>7} {'F1%':>7} {'BA%':>7} | "
              f"{'FNR%':>7} {'FPR%':>7} {'F1%':>7} {'BA%':>7}")
    print(f"{'':<12} {'':>7} | {'before (complete test)':^31} | "
          f"{'after (leak removed)':^31}")
    print(header)
    print("-" * len(header))
    for row in summary["periods"]:
        b, a = row["before"], row["after"]
        print(f"{row['period']:<12} {_percent(row.get('leak_ratio')):>7} | "
              f"{_percent(b['fnr']):>7} {_percent(b['fpr']):>7} "
              f"{_percent(b['f1']):>7} {_percent(b['ba']):>7} | "
              f"{_percent(a['fnr']):>7} {_percent(a['fpr']):>7} "
              f"{_percent(a['f1']):>7} {_percent(a['ba']):>7}")
    avg_b = summary["average"]["before"]["means"]
    avg_a = summary["average"]["after"]["means"]
    print("-" * len(header))
    print(f"{'average':<12} {'':>7} | "
          f"{_percent(avg_b['fnr']):>7} {_percent(avg_b['fpr']):>7} "
          f"{_percent(avg_b['f1']):>7} {_percent(avg_b['ba']):>7} | "
          f"{_percent(avg_a['fnr']):>7} {_percent(avg_a['fpr']):>7} "
          f"{_percent(avg_a['f1']):>7} {_percent(avg_a['ba']):>7}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def _range_arg(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None


def _add_dataset_args(p: argparse.ArgumentParser, *names: str) -> None:
    for name in names:
        p.add_argument(f"--{name}", required=name in ("train", "test", "dataset"),
                       help=f"{name} metadata JSONL")
        p.add_argument(f"--{name}-rep", default=None,
                       help=f"explicit {name} representation file")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=1,
                   help="internal parallelism (outputs are identical for any value)")
    p.add_argument("--out", required=True, help="artifact output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leakguard",
                     description="Train/test leakage auditing toolkit")
    parser.add_argument("--version", action="version", version=f"leakguard {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("audit", help="exact/near/union leakage report")
    _add_dataset_args(p, "train", "test")
    p.add_argument("--mode", choices=("exact", "near", "union"), default="exact")
    p.add_argument("--threshold", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("calibrate", help="similarity-threshold calibration by IoU")
    _add_dataset_args(p, "train", "test")
    p.add_argument("--leak-fv", required=True,
                   help="reference leak set (audit report or id list JSON)")
    p.add_argument("--range", type=_range_arg, default=(0.8, 1.0), metavar="LO:HI")
    p.add_argument("--step", type=float, default=0.01)
    _add_common(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("split", help="build batches and sliding windows, lint them")
    _add_dataset_args(p, "dataset")
    p.add_argument("--malicious-per-batch", type=int, default=240)
    p.add_argument("--benign-per-batch", type=int, default=3760)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-len", type=int, default=10)
    p.add_argument("--train-len", type=int, default=6)
    p.add_argument("--val-len", type=int, default=2)
    p.add_argument("--test-len", type=int, default=2)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--target-ratio", type=float, default=None)
    p.add_argument("--ratio-tolerance", type=float, default=0.02)
    _add_common(p)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("evaluate", help="partitioned metrics from predictions")
    p.add_argument("--test", default=None, help="test metadata JSONL")
    p.add_argument("--test-rep", default=None)
    p.add_argument("--train", default=None, help="train metadata (for leak/baseline)")
    p.add_argument("--train-rep", default=None)
    p.add_argument("--predictions", default=None, help="predictions JSONL")
    p.add_argument("--baseline", choices=("exact_memorizer", "knn", "centroid"),
                   default=None)
    p.add_argument("--k", type=int, default=3, help="neighbors for knn baseline")
    p.add_argument("--leak-report", default=None, help="precomputed audit report")
    p.add_argument("--mode", choices=("exact", "near", "union"), default="exact")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--counts", default=None, metavar="TP,FN,TN,FP",
                   help="derive metrics from explicit confusion counts")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("continuous", help="replay the evolving-pool protocol")
    _add_dataset_args(p, "train")
    p.add_argument("--periods", required=True,
                   help="JSON list of {label, metadata[, representation][, predictions]}")
    p.add_argument("--schedule", default=None, help="additions schedule JSONL")
    p.add_argument("--baseline", choices=("exact_memorizer", "knn", "centroid"),
                   default=None, help="predictions for periods without a file")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--mode", choices=("exact", "near", "union"), default="exact")
    p.add_argument("--threshold", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_continuous)

    p = sub.add_parser("leak-aware", help="leak-aware vs standalone comparison")
    _add_dataset_args(p, "train", "test")
    p.add_argument("--predictions", default=None)
    p.add_argument("--baseline", choices=("exact_memorizer", "knn", "centroid"),
                   default=None)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--mode", choices=("exact", "near", "union"), default="exact")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--tie-rule", choices=("model_fallback", "predict_malicious",
                                          "predict_benign"), default="model_fallback")
    _add_common(p)
    p.set_defaults(func=_cmd_leak_aware)

    p = sub.add_parser("synth", help="generate seeded synthetic fixtures")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--periods", type=int, default=6)
    p.add_argument("--per-period", type=int, default=2000)
    p.add_argument("--malware-ratio", type=float, default=0.06)
    p.add_argument("--leak-rate", type=float, default=None)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--flip-prob", type=float, default=0.0,
                   help="probability a duplicate's label is flipped")
    p.add_argument("--dup-window", type=int, default=None,
                   help="draw duplicate sources from the last N periods only")
    p.add_argument("--representation", choices=("binary", "embedding"),
                   default="binary")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--density", type=float, default=0.25)
    p.add_argument("--start", default="2020-01")
    p.add_argument("--layout", choices=("split", "stream"), default="split")
    p.add_argument("--test-periods", type=int, default=1,
                   help="periods held out as test in split layout")
    p.add_argument("--flip-fixture", action="store_true",
                   help="emit the canned comparison-flip fixture instead")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="merge continuous outputs into a summary table")
    p.add_argument("--inputs", nargs="+", required=True,
                   help="continuous-eval JSONL files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("LEAKGUARD_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args._argv = list(argv) if argv is not None else None
    try:
        return args.func(args)
    except (DataFormatError, DatasetValidationError, SchemaMismatchError,
            LeakguardError, ValueError, KeyError, OSError) as exc:
        print(f"leakguard: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - internal invariant violations
        logger.exception("internal error")
        print(f"leakguard: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
