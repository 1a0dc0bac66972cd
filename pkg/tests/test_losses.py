import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uqeval.losses import (
    FocalParams,
    finite_diff_gradient,
    focal_loss,
    fd_noise,
    gradient_check,
    relative_error,
    zlpr_loss,
)

FOCAL_HALF = 0.17328679513998632735  # 0.25 ln 2 (mpmath)
ZLPR_PAIR = 2 * math.log1p(math.exp(-5))  # 0.0134306969782361...

logits = st.lists(st.floats(-50, 50), min_size=1, max_size=12)


def labels_for(s, seed):
    return np.random.default_rng(seed).integers(0, 2, len(s))


class TestFocal:
    def test_confident_positive(self):
        assert focal_loss([40.0], [1])[0] < 1e-12

    def test_half(self):
        assert focal_loss([0.0], [1])[0] == pytest.approx(FOCAL_HALF, abs=1e-15)

    def test_gamma_zero_is_bce(self, rng):
        s = rng.normal(0, 3, 20)
        y = rng.integers(0, 2, 20)
        p = 1 / (1 + np.exp(-s))
        bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        loss, grad = focal_loss(s, y, FocalParams(1.0, 0.0))
        assert loss == pytest.approx(bce, abs=1e-12)
        np.testing.assert_allclose(grad, (p - y) / 20, atol=1e-15)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            focal_loss([float("inf")], [1])

    def test_no_overflow(self):
        loss, grad = focal_loss([1000.0, -1000.0, 1000.0], [1, 1, 0])
        assert np.isfinite(loss) and np.isfinite(grad).all()

    def test_params(self):
        with pytest.raises(ValueError):
            FocalParams(alpha=-1)


class TestZlpr:
    def test_single_negative(self):
        assert zlpr_loss([0.0], [0])[0] == pytest.approx(math.log(2), abs=1e-15)

    def test_empty(self):
        loss, grad = zlpr_loss([], [])
        assert loss == 0.0 and grad.size == 0

    def test_pair(self):
        assert zlpr_loss([5.0, -5.0], [1, 0])[0] == pytest.approx(ZLPR_PAIR, abs=1e-15)

    def test_no_overflow(self):
        loss, grad = zlpr_loss([1000.0, -1000.0, 999.0], [0, 1, 1])
        assert loss == pytest.approx(2000.0, rel=1e-12)
        assert np.isfinite(grad).all()

    def test_non_finite(self):
        with pytest.raises(ValueError):
            zlpr_loss([float("nan")], [0])


@settings(max_examples=150, deadline=None)
@given(logits, st.integers(0, 10**6))
def test_properties(s, seed):
    y = labels_for(s, seed)
    f, fg = focal_loss(s, y)
    z, zg = zlpr_loss(s, y)
    assert f >= 0 and z >= 0
    assert (zg[y == 1] <= 0).all() and (zg[y == 0] >= 0).all()
    perm = np.random.default_rng(seed).permutation(len(s))
    z2, zg2 = zlpr_loss(np.array(s)[perm], y[perm])
    assert z2 == pytest.approx(z, rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(zg2, zg[perm], rtol=1e-12, atol=1e-300)


class TestFiniteDifference:
    def test_quadratic(self):
        g = finite_diff_gradient(lambda s, y: (float(np.sum(s**2)), None), [3.0], None)
        assert g[0] == pytest.approx(6.0, abs=1e-8)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_gradient(zlpr_loss, [0.0], [0], h=0)

    def test_relative_error_floor(self):
        assert relative_error([1e-20], [0.0]) < 1e-11
        assert relative_error([1.0], [1.0001]) == pytest.approx(1e-4 / 1.0001)
        assert fd_noise(10.0, 1e-5) == pytest.approx(2.220446e-10, rel=1e-6)

    def test_focal_random_points(self):
        (focal, _) = gradient_check(200, seed=3, focal_params=FocalParams())
        assert focal.passed, focal

    def test_mixed_params(self):
        checks = gradient_check(200, seed=4)
        assert all(c.passed for c in checks), checks
