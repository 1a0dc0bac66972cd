"""Per-class and macro evaluation reports, comparisons and their serialisation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .calibration import brier, ece, nll, reliability_bins
from .classification import UndefinedMetricError, auroc, confusion_at, f1_score, select_threshold
from .ensemble import decompose_uncertainty, ensemble_mean, mean_uncertainty_summary
from .store import LabelMatrix, PredictionTensor, ValidationError

SCHEMA = "uqeval.ensemble_report/1"
METRICS = ("auroc", "f1", "threshold", "brier", "ece", "nll", "tu_mean", "au_mean", "eu_mean")
TABLE_HEADER = (
    "Disease", "AUROC", "F1 Score", "Threshold", "Brier Score",
    "ECE", "NLL", "TU Mean", "AU Mean", "EU Mean",
)
SIG_DIGITS = 6


@dataclass(frozen=True)
class ClassReport:
    name: str
    auroc: float | None  # None when the class has a single label value
    f1: float
    threshold: float
    brier: float
    ece: float
    nll: float
    tu_mean: float
    au_mean: float
    eu_mean: float
    n_positive: int = 0
    n_samples: int = 0

    def metrics(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


@dataclass(frozen=True)
class EnsembleReport:
    classes: tuple[ClassReport, ...]
    macro: dict
    provenance: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def to_dict(self, digits: int | None = SIG_DIGITS) -> dict:
        fmt = (lambda v: round_sig(v, digits)) if digits else (lambda v: v)
        return {
            "schema": SCHEMA,
            "classes": [
                {
                    "class": c.name,
                    **{m: fmt(v) for m, v in c.metrics().items()},
                    "n_positive": c.n_positive,
                    "n_samples": c.n_samples,
                }
                for c in self.classes
            ],
            "macro": {k: fmt(v) if isinstance(v, float) else v for k, v in self.macro.items()},
            "warnings": list(self.warnings),
            "provenance": _map_floats(self.provenance, fmt),
        }

    def to_json(self, digits: int | None = SIG_DIGITS) -> str:
        return json.dumps(self.to_dict(digits), indent=2, allow_nan=False) + "\n"

    def to_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for c in self.classes:
            w.writerow([c.name, *(_fmt_cell(v) for v in c.metrics().values())])
        return buf.getvalue()


def round_sig(v, digits: int = SIG_DIGITS):
    """Float rounded to ``digits`` significant digits; None/NaN become None."""
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    return float(f"{v:.{digits}g}")


def _fmt_cell(v) -> str:
    return "" if v is None else f"{v:.{SIG_DIGITS}g}"


def _map_floats(obj, fmt):
    if isinstance(obj, float):
        return fmt(obj)
    if isinstance(obj, Mapping):
        return {k: _map_floats(v, fmt) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_map_floats(v, fmt) for v in obj]
    return obj


def macro_average(values: Sequence[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("macro average of an empty list")
    return math.fsum(vals) / len(vals)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_thresholds(
    thresholds, names: Sequence[str]
) -> list[float]:
    """Accept a scalar, a sequence in catalog order or a {class: value} mapping."""
    if thresholds is None:
        return [0.5] * len(names)
    if isinstance(thresholds, (int, float)):
        return [float(thresholds)] * len(names)
    if isinstance(thresholds, Mapping):
        missing = [n for n in names if n not in thresholds]
        if missing:
            raise ValidationError(f"no threshold given for class(es) {missing}")
        out = [float(thresholds[n]) for n in names]
    else:
        out = [float(t) for t in thresholds]
        if len(out) != len(names):
            raise ValidationError(f"{len(out)} thresholds given for {len(names)} classes")
    if not all(0.0 <= t <= 1.0 for t in out):
        raise ValidationError("thresholds must lie in [0, 1]")
    return out


def thresholds_from_validation(
    val_predictions: PredictionTensor, val_labels: LabelMatrix
) -> dict[str, dict]:
    """select_threshold on the validation ensemble mean, per class.

    A class with no validation positives falls back to 0.5 with f1 None.
    """
    labels = val_labels.aligned_to(val_predictions.image_ids).values
    p_bar = ensemble_mean(val_predictions)
    out = {}
    for k, name in enumerate(val_predictions.catalog.names):
        try:
            choice = select_threshold(p_bar[:, k], labels[:, k], k)
            out[name] = {"threshold": choice.threshold, "f1": choice.f1}
        except UndefinedMetricError:
            out[name] = {"threshold": 0.5, "f1": None}
    return out


def evaluate(
    predictions: PredictionTensor,
    labels: LabelMatrix,
    thresholds=None,
    n_bins: int = 10,
    positives_only_uncertainty: bool = False,
    provenance: Mapping | None = None,
) -> EnsembleReport:
    """Run the full metric suite on the ensemble mean of ``predictions``.

    ``thresholds`` may be None (0.5 for every class), a scalar, a per-class
    sequence or a {class: threshold} mapping.
    """
    names = predictions.catalog.names
    y = labels.aligned_to(predictions.image_ids).values
    thr = resolve_thresholds(thresholds, names)
    p_bar = ensemble_mean(predictions)
    records = decompose_uncertainty(predictions)
    mask = (y == 1) if positives_only_uncertainty else None
    summary = mean_uncertainty_summary(records, mask)

    warnings = []
    rows = []
    for k, name in enumerate(names):
        p, yk = p_bar[:, k], y[:, k]
        try:
            a = auroc(p, yk)
        except UndefinedMetricError:
            a = None
            warnings.append(
                f"AUROC undefined for class {name!r} (single label value); excluded from macro AUROC"
            )
        tp, fp, _, fn = confusion_at(p, yk, thr[k])
        tu, au, eu = (None if math.isnan(x) else float(x) for x in summary.per_class[k])
        rows.append(
            ClassReport(
                name=name,
                auroc=a,
                f1=f1_score(tp, fp, fn),
                threshold=thr[k],
                brier=brier(p, yk),
                ece=ece(reliability_bins(p, yk, n_bins)),
                nll=nll(p, yk),
                tu_mean=tu,
                au_mean=au,
                eu_mean=eu,
                n_positive=int(yk.sum()),
                n_samples=int(yk.size),
            )
        )

    macro = macro_block(rows)
    prov = {
        "member_ids": list(predictions.member_ids),
        "n_samples": predictions.n_samples,
        "n_classes": predictions.n_classes,
        "n_members": predictions.n_members,
        "settings": {
            "bins": n_bins,
            "uncertainty_cells": "positives" if positives_only_uncertainty else "all",
        },
    }
    if provenance:
        for key, value in provenance.items():
            if key == "settings":
                prov["settings"].update(value)
            else:
                prov[key] = value
    return EnsembleReport(tuple(rows), macro, prov, tuple(warnings))


def macro_block(rows: Sequence[ClassReport]) -> dict:
    out: dict = {}
    for m in METRICS:
        if m == "threshold":
            continue
        vals = [getattr(r, m) for r in rows if getattr(r, m) is not None]
        out[m] = macro_average(vals) if vals else None
    out["auroc_classes"] = sum(r.auroc is not None for r in rows)
    return out


# --------------------------------------------------------------------------- comparison


@dataclass(frozen=True)
class Comparison:
    class_names: tuple[str, ...]
    per_class: dict  # class -> metric -> delta (b - a)
    macro: dict  # metric -> {"a", "b", "delta"}

    def to_dict(self, digits: int | None = SIG_DIGITS) -> dict:
        fmt = (lambda v: round_sig(v, digits)) if digits else (lambda v: v)
        return {
            "schema": "uqeval.comparison/1",
            "macro": _map_floats(self.macro, fmt),
            "per_class": _map_floats(self.per_class, fmt),
        }

    def to_json(self, digits: int | None = SIG_DIGITS) -> str:
        return json.dumps(self.to_dict(digits), indent=2, allow_nan=False) + "\n"

    def format_table(self) -> str:
        lines = [f"{'metric':<10} {'a':>12} {'b':>12} {'delta':>12}"]
        for m, row in self.macro.items():
            cells = [_fmt_cell(row[c]) for c in ("a", "b", "delta")]
            lines.append(f"{m:<10} {cells[0]:>12} {cells[1]:>12} {cells[2]:>12}")
        return "\n".join(lines) + "\n"


def _delta(a, b):
    return None if a is None or b is None else b - a


def compare_runs(a: EnsembleReport, b: EnsembleReport) -> Comparison:
    """Deltas ``b - a`` per class and for the macro block."""
    if a.class_names != b.class_names:
        raise ValidationError(
            f"reports use different class catalogs ({len(a.classes)} vs {len(b.classes)} classes)"
        )
    per_class = {
        ca.name: {m: _delta(getattr(ca, m), getattr(cb, m)) for m in METRICS}
        for ca, cb in zip(a.classes, b.classes)
    }
    macro = {
        m: {"a": a.macro.get(m), "b": b.macro.get(m), "delta": _delta(a.macro.get(m), b.macro.get(m))}
        for m in METRICS
        if m != "threshold"
    }
    return Comparison(a.class_names, per_class, macro)


def report_from_dict(d: Mapping) -> EnsembleReport:
    """Rebuild a report from its JSON form (values as serialised)."""
    if d.get("schema") != SCHEMA:
        raise ValidationError(f"not an ensemble report (schema {d.get('schema')!r})")
    rows = tuple(
        ClassReport(
            name=c["class"],
            **{m: c[m] for m in METRICS},
            n_positive=c.get("n_positive", 0),
            n_samples=c.get("n_samples", 0),
        )
        for c in d["classes"]
    )
    return EnsembleReport(rows, dict(d["macro"]), dict(d.get("provenance", {})), tuple(d.get("warnings", ())))


def read_report(path: str | Path) -> EnsembleReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def per_class_table(report: EnsembleReport) -> np.ndarray:
    """(K, 9) array in table column order; undefined values are NaN."""
    return np.array(
        [[np.nan if v is None else v for v in c.metrics().values()] for c in report.classes],
        dtype=np.float64,
    )
