import numpy as np
import pytest

from uqeval.calibration import expected_calibration_error
from uqeval.ensemble import decompose_uncertainty, ensemble_mean
from uqeval.store import ValidationError
from uqeval.synth import SynthSpec, beta_params, distortion_sweep, generate


def test_identity_regime():
    d = generate(SynthSpec(n_samples=500, n_members=3, seed=1))
    for m in range(3):
        np.testing.assert_array_equal(d.predictions.values[:, :, m], d.true_probabilities)


def test_zero_diversity_zero_eu():
    d = generate(SynthSpec(n_samples=500, n_members=4, temperature=2.0, bias=0.3, seed=2))
    assert (decompose_uncertainty(d.predictions).eu == 0.0).all()


def test_deterministic():
    spec = SynthSpec(n_samples=300, n_members=3, diversity=0.7, temperature=1.5, seed=9)
    a, b = generate(spec), generate(spec)
    assert a.predictions.values.tobytes() == b.predictions.values.tobytes()
    assert a.labels.values.tobytes() == b.labels.values.tobytes()
    c = generate(SynthSpec(n_samples=300, n_members=3, diversity=0.7, temperature=1.5, seed=10))
    assert a.predictions.values.tobytes() != c.predictions.values.tobytes()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"prevalences": (0.0, 0.5)},
        {"prevalences": (1.0,)},
        {"temperature": 0.0},
        {"diversity": -1.0},
        {"n_members": 0},
        {"n_samples": 0},
    ],
)
def test_invalid(kwargs):
    with pytest.raises(ValidationError):
        SynthSpec(**kwargs)


def test_beta_mean():
    a, b = beta_params(np.array([0.1, 0.5]))
    np.testing.assert_allclose(a / (a + b), [0.1, 0.5])
    np.testing.assert_allclose(a + b, [2 / 0.09, 8.0])


def test_prevalence_converges():
    spec = SynthSpec(n_samples=200_000, n_members=1, seed=3)
    d = generate(spec)
    y = d.labels.values
    for k, pi in enumerate(spec.prevalences):
        se = np.sqrt(pi * (1 - pi) / spec.n_samples)
        assert abs(y[:, k].mean() - pi) < 3 * se
        assert abs(d.true_probabilities[:, k].mean() - pi) < 3 * se


def test_calibration_gap_shrinks():
    gaps = []
    for n in (1_000, 10_000, 200_000):
        d = generate(SynthSpec(n_samples=n, n_members=1, seed=4))
        p = ensemble_mean(d.predictions)
        gaps.append(np.mean([expected_calibration_error(p[:, k], d.labels.values[:, k]) for k in range(3)]))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.005


def test_sweep_directions():
    base = SynthSpec(n_samples=20_000, n_members=5, seed=5)
    t = distortion_sweep(base, [1, 3], [0])
    assert t[1].mean_ece > t[0].mean_ece
    s = distortion_sweep(base, [1], [0, 0.5, 1.0])
    eus = [r.mean_eu for r in s]
    assert eus[0] == 0.0 and eus[0] < eus[1] < eus[2]


def test_single_combination_matches_generate():
    base = SynthSpec(n_samples=2_000, n_members=2, seed=6)
    (row,) = distortion_sweep(base, [1], [0])
    d = generate(base)
    p = ensemble_mean(d.predictions)
    expected = np.mean([expected_calibration_error(p[:, k], d.labels.values[:, k]) for k in range(3)])
    assert row.mean_ece == expected and row.mean_eu == 0.0
