"""Command-line entry point: fit, generate, analyze, evaluate, report."""
from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import dataset, io
from .beat_model import DEFAULT_N_KERNELS, fit_template
from .errors import GenerationFailed
from .evaluation import (Subject, chi2_independence, confusion_table,
                         evaluate_scores, loot)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
log = logging.getLogger("twasim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed (u64)")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default ${dataset.WORKERS_ENV} or 1)")


def build_parser():
    ap = _Parser(prog="twasim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit Gaussian templates to average-beat files")
    p.add_argument("beats", nargs="*", type=Path)
    p.add_argument("--n-kernels", type=int, default=DEFAULT_N_KERNELS)
    _common(p)

    p = sub.add_parser("generate", help="generate an artificial dataset")
    p.add_argument("--config", type=Path)
    p.add_argument("--stream", action="store_true",
                   help="analyse records in memory and write only the feature table")
    p.add_argument("--all-leads", action="store_true", help="store 12 leads instead of lead I")
    p.add_argument("--count", type=int)
    _common(p)

    p = sub.add_parser("analyze", help="MMA features from a dataset directory or record files")
    p.add_argument("inputs", nargs="+", type=Path)
    _common(p)

    p = sub.add_parser("evaluate", help="LOOT evaluation of a feature table")
    p.add_argument("features", type=Path)
    p.add_argument("--name", default="BL")
    p.add_argument("--score", choices=("fraction", "probability"), default="fraction")
    p.add_argument("--loocv", action="store_true",
                   help="select L2 on the held-out subject (optimistic)")
    p.add_argument("--val-frac", type=float, default=None)
    _common(p)

    p = sub.add_parser("report", help="merge metrics and ROC files")
    p.add_argument("metrics", nargs="+", type=Path)
    _common(p)
    return ap


# -- commands ------------------------------------------------------------------


def cmd_fit(args):
    if not args.beats:
        raise UsageError("no beat files given")
    out = args.out or Path(".")
    failures = 0
    for path in args.beats:
        try:
            source, lead, beat = io.read_beat(path)
            res = fit_template(beat, args.n_kernels, lead=lead)
        except (OSError, ValueError) as exc:
            failures += 1
            print(f"error: {path}: {exc}", file=sys.stderr)
            continue
        out.mkdir(parents=True, exist_ok=True)
        dest = out / f"{source}_{lead}.csv"
        io.write_lead_template(dest, res.template, source)
        note = "" if res.converged else " (not converged)"
        print(f"{dest}  rms {res.rms:.3g} mV{note}")
    if failures == len(args.beats):
        return EXIT_DATA
    if failures:
        print(f"warning: {failures} of {len(args.beats)} files failed", file=sys.stderr)
    return EXIT_OK


def _config(args):
    over = {"seed": args.seed, "count": args.count, "all_leads": args.all_leads or None}
    if args.config:
        return dataset.load_config(args.config, **over)
    return dataset.DatasetConfig(**{k: v for k, v in over.items() if v is not None})


def cmd_generate(args):
    cfg = _config(args)
    out = args.out or Path("dataset")
    if args.stream:
        entries, feats = dataset.generate_stream(cfg, args.workers)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(e["record_id"], e["record_id"], f.bins, e["label"]) for e, f in zip(entries, feats)]
        io.write_features(out / "features.csv", rows)
        io.write_manifest(out, entries, cfg.seed)
        print(out / "features.csv")
        return EXIT_OK
    path = dataset.generate(cfg, out, args.workers)
    print(path)
    return EXIT_OK


def _record_paths(inputs):
    paths = []
    for p in inputs:
        if p.is_dir():
            man = io.read_manifest(p)
            paths.extend(p / e["file"] for e in man["records"])
        else:
            paths.append(p)
    return paths


def cmd_analyze(args):
    paths = _record_paths(args.inputs)
    results = dataset.analyze_files(paths, args.workers)
    rows = []
    for rid, rec, f in results:
        if f.error:
            print(f"warning: {rid}: {f.error}", file=sys.stderr)
        rows.append((rid, rec.metadata.get("subject_id", rid), f.bins, rec.label))
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    io.write_features(out / "features.csv", rows)
    print(out / "features.csv")
    return EXIT_OK


def subjects_from_features(rows):
    groups = defaultdict(list)
    labels = {}
    for _, sid, bins, label in rows:
        groups[sid].append(bins)
        if labels.setdefault(sid, label) != label:
            raise ValueError(f"subject {sid} has conflicting labels")
    return [Subject(sid, np.vstack(w), labels[sid]) for sid, w in groups.items()]


def cmd_evaluate(args):
    subjects = subjects_from_features(io.read_features(args.features))
    mode = "loocv" if args.loocv else "loot"
    scores = loot(subjects, score=args.score, seed=args.seed or 0, mode=mode,
                  val_frac=args.val_frac, workers=args.workers or dataset.default_workers())
    roc, point, m = evaluate_scores(scores)
    s = np.array([x.score for x in scores])
    y = np.array([x.label for x in scores])
    table = confusion_table(s >= point.threshold, y)
    print(f"model {args.name}: {len(scores)} subjects ({int(y.sum())} positive)")
    print(f"AUC {m.auc:.2f}  Acc {m.accuracy:.2f}  F1 {m.f1:.2f}  BAcc {m.balanced_accuracy:.2f}  "
          f"sens {m.sensitivity:.2f}  spec {m.specificity:.2f}  threshold {point.threshold:.4g}")
    try:
        chi = chi2_independence(table)
        print(f"chi2 {chi.statistic:.3f}  p {chi.p_value:.3g}  n {chi.n}  "
              "(with large n even tiny effects are significant)")
    except ValueError as exc:
        print(f"chi2 undefined: {exc}")
    if args.loocv:
        print("note: L2 chosen on the held-out subject; scores are optimistic")
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    io.write_metrics(out / f"metrics_{args.name}.csv", [(args.name, m)])
    io.write_roc(out / f"roc_{args.name}.csv", roc, args.name)
    with open(out / f"scores_{args.name}.csv", "w") as fh:
        fh.write("subject_id,score,label\n")
        for x in scores:
            fh.write(f"{x.subject_id},{x.score:.6f},{int(x.label)}\n")
    return EXIT_OK


def cmd_report(args):
    rows, curves = [], []
    for p in args.metrics:
        rows.extend(io.read_metrics(p))
        roc = p.with_name(p.name.replace("metrics_", "roc_", 1))
        if roc != p and roc.exists():
            curves.extend(io.read_roc(roc))
    if not rows:
        raise ValueError("no metric rows found")
    cols = io.METRIC_COLUMNS
    width = max(len(r["model"]) for r in rows) + 2
    print("model".ljust(width) + "  ".join(c.rjust(11) for c in cols[1:]))
    for r in rows:
        print(r["model"].ljust(width) + "  ".join(r[c].rjust(11) for c in cols[1:]))
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(r[c] for c in cols) + "\n")
    with open(out / "roc_points.csv", "w") as fh:
        fh.write("model,fpr,tpr,threshold\n")
        for c in curves:
            fh.write(f"{c['model']},{c['fpr']},{c['tpr']},{c['threshold']}\n")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "generate": cmd_generate, "analyze": cmd_analyze,
            "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, GenerationFailed, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
