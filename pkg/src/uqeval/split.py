"""Leak-free train/validation/test split at the patient level."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .rng import SplitMix64
from .store import DatasetManifest, ValidationError


@dataclass(frozen=True)
class SplitSpec:
    test_patient_fraction: float = 0.02
    val_patient_fraction_of_remainder: float = 0.052
    seed: int = 0

    def __post_init__(self):
        for name in ("test_patient_fraction", "val_patient_fraction_of_remainder"):
            f = getattr(self, name)
            if not 0.0 < f < 1.0:
                raise ValidationError(f"{name} must lie strictly between 0 and 1, got {f}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SplitResult:
    train_ids: frozenset[str]
    val_ids: frozenset[str]
    test_ids: frozenset[str]
    train_patients: int
    val_patients: int
    test_patients: int

    def summary(self, seed: int) -> dict:
        return {
            "seed": seed,
            "images": {
                "train": len(self.train_ids),
                "val": len(self.val_ids),
                "test": len(self.test_ids),
            },
            "patients": {
                "train": self.train_patients,
                "val": self.val_patients,
                "test": self.test_patients,
            },
        }


def ceil_count(fraction: float, total: int) -> int:
    # Round away float noise first: 0.07 * 100 is 7.000000000000001, not 8 patients.
    return math.ceil(round(fraction * total, 9))


def patient_level_split(manifest: DatasetManifest, spec: SplitSpec) -> SplitResult:
    """Shuffle unique patients and carve off test, then validation, then train.

    Patients are sorted by id, shuffled with SplitMix64(seed) Fisher-Yates, and
    the first ceil(test_fraction * P) go to test; ceil(val_fraction * rest) of
    the remainder go to validation. Every image follows its patient.
    """
    if len(manifest) == 0:
        raise ValidationError("manifest is empty")
    by_patient: dict[str, list[str]] = {}
    for e in manifest.entries:
        by_patient.setdefault(e.patient_id, []).append(e.image_id)

    patients = SplitMix64(spec.seed).shuffle(sorted(by_patient))
    total = len(patients)
    n_test = ceil_count(spec.test_patient_fraction, total)
    n_val = ceil_count(spec.val_patient_fraction_of_remainder, total - n_test)
    n_train = total - n_test - n_val
    for name, count in (("test", n_test), ("validation", n_val), ("train", n_train)):
        if count <= 0:
            raise ValidationError(
                f"{name} split would be empty ({total} unique patient(s) available)"
            )

    def images(group: list[str]) -> frozenset[str]:
        return frozenset(i for p in group for i in by_patient[p])

    return SplitResult(
        train_ids=images(patients[n_test + n_val :]),
        val_ids=images(patients[n_test : n_test + n_val]),
        test_ids=images(patients[:n_test]),
        train_patients=n_train,
        val_patients=n_val,
        test_patients=n_test,
    )
