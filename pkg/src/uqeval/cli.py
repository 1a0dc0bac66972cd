"""``uqeval`` command line interface.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibration_report, reliability_bins
from .classification import UndefinedMetricError, roc_curve
from .ensemble import decompose_uncertainty, ensemble_mean, mean_uncertainty_summary
from .losses import gradient_check
from .report import (
    compare_runs,
    evaluate,
    file_sha256,
    read_report,
    round_sig,
    thresholds_from_validation,
)
from .split import SplitSpec, patient_level_split
from .store import (
    NIH_CLASSES,
    ClassCatalog,
    DatasetManifest,
    ManifestEntry,
    PredictionTensor,
    ValidationError,
    align_to_manifest,
    format_manifest,
    format_member_csv,
    load_predictions,
    read_binary,
    read_manifest,
    write_binary,
)
from .synth import SynthSpec, generate

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


# --------------------------------------------------------------------------- helpers


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower() or "class"


def _catalog(args) -> ClassCatalog | None:
    if getattr(args, "classes", None):
        return ClassCatalog(tuple(c.strip() for c in args.classes.split(",")))
    return None


def _member_specs(values: list[str]) -> list[tuple[str, Path]]:
    out = []
    for v in values:
        member_id, sep, path = v.partition("=")
        if not sep:
            path, member_id = v, Path(v).stem
        out.append((member_id, Path(path)))
    return out


def _load_tensor(manifest: DatasetManifest, predictions: str | None, members: list[str] | None):
    """Tensor in manifest order from a UQPM file or member CSVs, plus input hashes."""
    if predictions and members:
        raise ValidationError("use either --predictions or --member, not both")
    if predictions:
        return read_binary(predictions, manifest), {predictions: file_sha256(predictions)}
    if members:
        specs = _member_specs(members)
        return load_predictions(specs, manifest), {str(p): file_sha256(p) for _, p in specs}
    raise ValidationError("no predictions given (use --predictions FILE or --member ID=FILE)")


def _load_inputs(args):
    manifest = read_manifest(args.manifest, _catalog(args))
    tensor, hashes = _load_tensor(manifest, args.predictions, args.member)
    hashes = {args.manifest: file_sha256(args.manifest), **hashes}
    return manifest, tensor, hashes


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- commands


def cmd_split(args) -> int:
    manifest = read_manifest(args.manifest, _catalog(args))
    spec = SplitSpec(args.test_fraction, args.val_fraction, args.seed)
    result = patient_level_split(manifest, spec)
    out = _out_dir(args)
    order = manifest.image_ids
    for name, ids in (("train", result.train_ids), ("val", result.val_ids), ("test", result.test_ids)):
        lines = [i for i in order if i in ids]
        (out / f"{name}_ids.txt").write_text("".join(f"{i}\n" for i in lines), encoding="utf-8")
    summary = result.summary(args.seed)
    summary["fractions"] = {"test": args.test_fraction, "val_of_remainder": args.val_fraction}
    summary["generator"] = "splitmix64"
    _dump_json(summary, out / "split_summary.json")
    print(json.dumps(summary["patients"]))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.nih_classes:
        prevalences = tuple(float(x) for x in args.prevalences.split(",")) if args.prevalences else (
            0.1,
        ) * len(NIH_CLASSES)
        if len(prevalences) == 1:
            prevalences = prevalences * len(NIH_CLASSES)
        names = NIH_CLASSES
    else:
        prevalences = tuple(float(x) for x in (args.prevalences or "0.1,0.3,0.5").split(","))
        names = None
    spec = SynthSpec(
        n_samples=args.n_samples,
        prevalences=prevalences,
        n_members=args.members,
        diversity=args.diversity,
        temperature=args.temperature,
        bias=args.bias,
        seed=args.seed,
        class_names=names,
    )
    data = generate(spec)
    out = _out_dir(args)
    t = data.predictions
    catalog = t.catalog
    y = data.labels.values
    entries = tuple(
        ManifestEntry(iid, f"patient_{i // args.images_per_patient:07d}", tuple(int(v) for v in y[i]))
        for i, iid in enumerate(t.image_ids)
    )
    (out / "manifest.csv").write_text(format_manifest(DatasetManifest(entries, catalog)), encoding="utf-8")
    if args.format == "bin":
        write_binary(t, out / "predictions.uqpm")
    else:
        mdir = out / "members"
        mdir.mkdir(exist_ok=True)
        for m, member_id in enumerate(t.member_ids):
            (mdir / f"{member_id}.csv").write_text(
                format_member_csv(t.image_ids, t.values[:, :, m], catalog), encoding="utf-8"
            )
    (out / "true_probabilities.csv").write_text(
        format_member_csv(t.image_ids, data.true_probabilities, catalog), encoding="utf-8"
    )
    _dump_json(spec.to_dict(), out / "synth_spec.json")
    print(f"wrote {t.n_samples} samples x {t.n_classes} classes x {t.n_members} members to {out}")
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    manifest, t, _ = _load_inputs(args)
    rec = decompose_uncertainty(t)
    out = _out_dir(args)
    names = t.catalog.names
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image_id", "class", "tu", "au", "eu"])
    for i, iid in enumerate(t.image_ids):
        for k, name in enumerate(names):
            w.writerow([iid, name, repr(float(rec.tu[i, k])), repr(float(rec.au[i, k])), repr(float(rec.eu[i, k]))])
    (out / "uncertainty.csv").write_text(buf.getvalue(), encoding="utf-8")
    mask = None
    if args.positives_only:
        mask = manifest.label_matrix().aligned_to(t.image_ids).values == 1
    summary = mean_uncertainty_summary(rec, mask)
    doc = {
        "cells": "positives" if args.positives_only else "all",
        "per_class": {
            name: {key: round_sig(v) for key, v in zip(("tu", "au", "eu"), summary.per_class[k])}
            for k, name in enumerate(names)
        },
        "overall": {key: round_sig(v) for key, v in zip(("tu", "au", "eu"), summary.overall)},
    }
    _dump_json(doc, out / "uncertainty_summary.json")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    manifest, t, _ = _load_inputs(args)
    y = manifest.label_matrix().aligned_to(t.image_ids).values
    p_bar = ensemble_mean(t)
    out = _out_dir(args)
    rdir = out / "reliability"
    rdir.mkdir(exist_ok=True)
    doc = {"bins": args.bins, "classes": {}}
    for k, name in enumerate(t.catalog.names):
        rep = calibration_report(p_bar[:, k], y[:, k], args.bins)
        doc["classes"][name] = {"ece": round_sig(rep.ece), "nll": round_sig(rep.nll), "brier": round_sig(rep.brier)}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "bin_lower", "bin_upper", "count", "confidence", "accuracy"])
        for lo, hi, n, conf, acc in reliability_bins(p_bar[:, k], y[:, k], args.bins).rows():
            w.writerow([name, f"{lo:.6g}", f"{hi:.6g}", n,
                        "" if n == 0 else f"{conf:.6g}", "" if n == 0 else f"{acc:.6g}"])
        (rdir / f"{_slug(name)}.csv").write_text(buf.getvalue(), encoding="utf-8")
    _dump_json(doc, out / "calibration.json")
    return EXIT_OK


def cmd_thresholds(args) -> int:
    manifest, t, _ = _load_inputs(args)
    choices = thresholds_from_validation(t, manifest.label_matrix())
    doc = {
        name: {"threshold": round_sig(c["threshold"]), "f1": round_sig(c["f1"])}
        for name, c in choices.items()
    }
    out = _out_dir(args)
    _dump_json(doc, out / "thresholds.json")
    for name, c in choices.items():
        if c["f1"] is None:
            print(f"warning: no validation positives for {name!r}; threshold 0.5", file=sys.stderr)
    return EXIT_OK


def cmd_roc(args) -> int:
    manifest, t, _ = _load_inputs(args)
    y = manifest.label_matrix().aligned_to(t.image_ids).values
    p_bar = ensemble_mean(t)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "fpr", "tpr", "threshold"])
    for k, name in enumerate(t.catalog.names):
        try:
            curve = roc_curve(p_bar[:, k], y[:, k])
        except UndefinedMetricError:
            print(f"warning: ROC undefined for {name!r}; skipped", file=sys.stderr)
            continue
        for f, tp, th in zip(curve.fpr, curve.tpr, curve.thresholds):
            w.writerow([name, repr(float(f)), repr(float(tp)), "inf" if np.isinf(th) else repr(float(th))])
    (_out_dir(args) / "roc.csv").write_text(buf.getvalue(), encoding="utf-8")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest, t, hashes = _load_inputs(args)
    settings = {}
    if args.thresholds:
        raw = json.loads(Path(args.thresholds).read_text(encoding="utf-8"))
        thresholds = {k: (v["threshold"] if isinstance(v, dict) else v) for k, v in raw.items()}
        hashes[args.thresholds] = file_sha256(args.thresholds)
        settings["threshold_source"] = "file"
    elif args.val_manifest:
        val_manifest = read_manifest(args.val_manifest, manifest.catalog)
        val_t, val_hashes = _load_tensor(val_manifest, args.val_predictions, args.val_member)
        hashes.update({args.val_manifest: file_sha256(args.val_manifest), **val_hashes})
        chosen = thresholds_from_validation(val_t, val_manifest.label_matrix())
        thresholds = {k: v["threshold"] for k, v in chosen.items()}
        settings["threshold_source"] = "validation"
    else:
        thresholds = args.threshold
        settings["threshold_source"] = f"fixed {args.threshold}"
    report = evaluate(
        t,
        manifest.label_matrix(),
        thresholds,
        n_bins=args.bins,
        positives_only_uncertainty=args.positives_only,
        provenance={"inputs": hashes, "settings": settings},
    )
    out = _out_dir(args)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report_table.csv").write_text(report.to_table_csv(), encoding="utf-8")
    if args.full_precision:
        (out / "report_full.json").write_text(report.to_json(digits=None), encoding="utf-8")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    m = report.macro
    print(
        f"macro AUROC {round_sig(m['auroc'], 4)}  F1 {round_sig(m['f1'], 4)}  "
        f"ECE {round_sig(m['ece'], 4)}  NLL {round_sig(m['nll'], 4)}  "
        f"EU {round_sig(m['eu_mean'], 4)}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    comparison = compare_runs(read_report(args.a), read_report(args.b))
    out = _out_dir(args)
    (out / "comparison.json").write_text(comparison.to_json(), encoding="utf-8")
    sys.stdout.write(comparison.format_table())
    return EXIT_OK


def cmd_losscheck(args) -> int:
    from .losses import FocalParams

    fixed = None if args.random_focal_params else FocalParams(args.alpha, args.gamma)
    checks = gradient_check(args.points, args.seed, args.max_logit, args.step, args.tolerance, fixed)
    print(f"{'loss':<8} {'points':>7} {'max rel err':>12}  result")
    for c in checks:
        print(f"{c.name:<8} {c.points:>7} {c.max_rel_error:>12.3e}  {'PASS' if c.passed else 'FAIL'}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VALIDATION


# --------------------------------------------------------------------------- parser


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--bins", type=int, default=d(10), help="reliability bins (default 10)")
    parser.add_argument("--seed", type=int, default=d(0), help="generator seed (default 0)")
    parser.add_argument("--format", choices=("csv", "bin"), default=d("csv"),
                        help="prediction file format for written tensors")
    parser.add_argument("--out", default=d("."), help="output directory")


def _prediction_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="NIH-style label CSV")
    p.add_argument("--predictions", help="UQPM binary prediction file")
    p.add_argument("--member", action="append", metavar="ID=CSV",
                   help="member prediction CSV (repeatable)")
    p.add_argument("--classes", help="comma-separated class catalog (default: 14 NIH classes)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uqeval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _global_options(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("split", cmd_split, "patient-level train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes")
    p.add_argument("--test-fraction", type=float, default=0.02)
    p.add_argument("--val-fraction", type=float, default=0.052)

    p = add("synth", cmd_synth, "generate a synthetic ensemble")
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--prevalences", help="comma-separated class prevalences")
    p.add_argument("--nih-classes", action="store_true", help="use the 14 NIH class names")
    p.add_argument("--members", type=int, default=5)
    p.add_argument("--diversity", type=float, default=0.0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--bias", type=float, default=0.0)
    p.add_argument("--images-per-patient", type=int, default=1)

    p = add("uncertainty", cmd_uncertainty, "per-cell TU/AU/EU and summaries")
    _prediction_inputs(p)
    p.add_argument("--positives-only", action="store_true")

    p = add("calibrate", cmd_calibrate, "ECE/NLL/Brier and reliability bins")
    _prediction_inputs(p)

    p = add("thresholds", cmd_thresholds, "per-class F1-optimal thresholds")
    _prediction_inputs(p)

    p = add("roc", cmd_roc, "per-class ROC points")
    _prediction_inputs(p)

    p = add("eval", cmd_eval, "full ensemble report")
    _prediction_inputs(p)
    p.add_argument("--thresholds", help="thresholds JSON from the thresholds command")
    p.add_argument("--val-manifest", help="validation manifest for threshold selection")
    p.add_argument("--val-predictions")
    p.add_argument("--val-member", action="append", metavar="ID=CSV")
    p.add_argument("--threshold", type=float, default=0.5, help="fixed threshold fallback")
    p.add_argument("--positives-only", action="store_true",
                   help="average uncertainty over positive cells only")
    p.add_argument("--full-precision", action="store_true", help="also write report_full.json")

    p = add("compare", cmd_compare, "deltas between two reports (b - a)")
    p.add_argument("a")
    p.add_argument("b")

    p = add("losscheck", cmd_losscheck, "finite-difference gradient verification")
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--max-logit", type=float, default=30.0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--random-focal-params", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
