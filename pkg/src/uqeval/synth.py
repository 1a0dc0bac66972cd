"""Synthetic multi-label ensembles with known calibration and member diversity.

For each (sample, class) cell a true probability ``q`` is drawn from a Beta
with mean ``prevalence[k]`` and concentration ``BETA_SCALE / (pi (1 - pi))``,
the label is Bernoulli(q), and member ``m`` predicts

    sigmoid((logit(q) + bias + noise_m) / temperature),  noise_m ~ N(0, diversity^2)

Draws come from one SplitMix64 stream in fixed blocks (row-major over
sample, class, member): N*K uniforms for q (Beta by inverse CDF), N*K uniforms
for labels (y = u < q), then N*K*M Box-Muller normals (two uniforms each).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv, expit, logit

from .calibration import expected_calibration_error
from .ensemble import decompose_uncertainty
from .rng import SplitMix64
from .store import ClassCatalog, LabelMatrix, PredictionTensor, ValidationError, _readonly

BETA_SCALE = 2.0
_Q_TINY = 1e-12


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int = 1000
    prevalences: tuple[float, ...] = (0.1, 0.3, 0.5)
    n_members: int = 5
    diversity: float = 0.0
    temperature: float = 1.0
    bias: float = 0.0
    seed: int = 0
    class_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "prevalences", tuple(float(p) for p in self.prevalences))
        if self.n_samples < 1:
            raise ValidationError("n_samples must be positive")
        if not self.prevalences or not all(0.0 < p < 1.0 for p in self.prevalences):
            raise ValidationError("every prevalence must lie strictly between 0 and 1")
        if self.n_members < 1:
            raise ValidationError("n_members must be positive")
        if not self.diversity >= 0.0:
            raise ValidationError("diversity must be non-negative")
        if not self.temperature > 0.0:
            raise ValidationError("temperature must be positive")
        if not np.isfinite(self.bias):
            raise ValidationError("bias must be finite")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.class_names is not None and len(self.class_names) != len(self.prevalences):
            raise ValidationError("class_names must match prevalences in length")

    @property
    def n_classes(self) -> int:
        return len(self.prevalences)

    def catalog(self) -> ClassCatalog:
        names = self.class_names or tuple(f"class_{i}" for i in range(self.n_classes))
        return ClassCatalog(tuple(names))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["prevalences"] = list(self.prevalences)
        d["class_names"] = list(self.catalog().names)
        d["beta_scale"] = BETA_SCALE
        d["generator"] = "splitmix64"
        return d


@dataclass(frozen=True, eq=False)
class SynthSet:
    predictions: PredictionTensor
    labels: LabelMatrix
    true_probabilities: np.ndarray


def beta_params(prevalence: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pi = np.asarray(prevalence, dtype=np.float64)
    conc = BETA_SCALE / (pi * (1.0 - pi))
    return pi * conc, (1.0 - pi) * conc


def generate(spec: SynthSpec) -> SynthSet:
    n, k, m = spec.n_samples, spec.n_classes, spec.n_members
    rng = SplitMix64(spec.seed)
    a, b = beta_params(np.array(spec.prevalences))
    u = rng.uniform(n * k).reshape(n, k)
    q = np.clip(betaincinv(a, b, u), _Q_TINY, 1.0 - _Q_TINY)
    y = (rng.uniform(n * k).reshape(n, k) < q).astype(np.int8)
    noise = rng.standard_normal(n * k * m).reshape(n, k, m) * spec.diversity

    shift = spec.bias + noise
    members = expit((logit(q)[:, :, None] + shift) / spec.temperature)
    # The undistorted transform is the identity; keep q bit-exact there.
    identity = (shift == 0.0) & (spec.temperature == 1.0)
    members = np.where(identity, q[:, :, None], members)

    catalog = spec.catalog()
    image_ids = tuple(f"synth_{i:07d}" for i in range(n))
    member_ids = tuple(f"member_{j}" for j in range(m))
    preds = PredictionTensor(members, member_ids, image_ids, catalog)
    labels = LabelMatrix(_readonly(y), image_ids)
    return SynthSet(preds, labels, _readonly(q))


@dataclass(frozen=True)
class SweepRow:
    temperature: float
    diversity: float
    mean_ece: float
    mean_eu: float


def distortion_sweep(
    base: SynthSpec, taus, sigmas, n_bins: int = 10
) -> list[SweepRow]:
    """Generate and score one synthetic set per (temperature, diversity) pair."""
    from .ensemble import ensemble_mean

    rows = []
    for tau in taus:
        for sigma in sigmas:
            spec = dataclasses.replace(base, temperature=float(tau), diversity=float(sigma))
            data = generate(spec)
            p_bar = ensemble_mean(data.predictions)
            y = data.labels.values
            eces = [
                expected_calibration_error(p_bar[:, j], y[:, j], n_bins)
                for j in range(spec.n_classes)
            ]
            eu = decompose_uncertainty(data.predictions).eu
            rows.append(SweepRow(float(tau), float(sigma), float(np.mean(eces)), float(eu.mean())))
    return rows
