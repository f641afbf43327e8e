import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazebayes.hazemodel import (
    ScatterParams,
    log_transmission_from_pair,
    reduce_transmission,
    synthesize_hazy,
    transmission_from_depth,
    transmission_from_pair,
    transmission_from_pair_nh,
)
from hazebayes.imagecore import ImageError


def test_scatter_params_validation():
    ScatterParams(1.0, 0.8)
    with pytest.raises(ValueError):
        ScatterParams(0.0, 0.8)
    with pytest.raises(ValueError):
        ScatterParams(1.0, 1.2)


class TestTransmissionFromDepth:
    def test_zero_depth(self):
        assert np.all(transmission_from_depth(np.zeros((3, 3)), 1.3) == 1.0)

    def test_half(self):
        t = transmission_from_depth(np.full((1, 1), math.log(2)), 1.0)
        assert t[0, 0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_exp_minus_one_point_five(self):
        t = transmission_from_depth(np.full((1, 1), 2.0), 0.75)
        assert t[0, 0, 0] == pytest.approx(0.223130160148429828933, rel=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            transmission_from_depth(np.ones((2, 2)), 0.0)
        with pytest.raises(ImageError):
            transmission_from_depth(-np.ones((2, 2)), 1.0)

    def test_strictly_decreasing(self):
        d = np.linspace(0, 5, 50).reshape(1, 50)
        t = transmission_from_depth(d, 0.7).ravel()
        assert np.all(np.diff(t) < 0)
        t2 = transmission_from_depth(d, 0.9).ravel()
        assert np.all(t2[1:] < t[1:])


class TestSynthesize:
    def test_no_haze(self, rng):
        x = rng.uniform(size=(4, 4, 3))
        np.testing.assert_array_equal(synthesize_hazy(x, np.ones((4, 4, 1)), 0.8), x)

    def test_airlight_limit(self, rng):
        x = rng.uniform(size=(4, 4, 3))
        y = synthesize_hazy(x, np.full((4, 4, 1), 1e-12), 0.9)
        np.testing.assert_allclose(y, 0.9, atol=1e-11, rtol=0)

    def test_point(self):
        y = synthesize_hazy(np.full((1, 1, 1), 0.8), np.full((1, 1, 1), 0.5), 1.0)
        assert y[0, 0, 0] == pytest.approx(0.9, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ImageError):
            synthesize_hazy(np.zeros((4, 4, 3)), np.ones((3, 4, 1)), 0.9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 1), st.floats(0.05, 1.0), st.integers(0, 2**31))
    def test_affine_and_bounded(self, alpha, A, seed):
        r = np.random.default_rng(seed)
        x1, x2 = r.uniform(size=(2, 5, 5, 3))
        t = r.uniform(0.01, 1, (5, 5, 1))
        lhs = synthesize_hazy(alpha * x1 + (1 - alpha) * x2, t, A)
        rhs = alpha * synthesize_hazy(x1, t, A) + (1 - alpha) * synthesize_hazy(x2, t, A)
        np.testing.assert_allclose(lhs, rhs, atol=1e-14)
        y = synthesize_hazy(x1, t, A)
        assert y.min() >= 0 and y.max() <= 1
        assert np.all(y >= np.minimum(x1, A) - 1e-15) and np.all(y <= np.maximum(x1, A) + 1e-15)


class TestPairRecovery:
    def test_identity(self, rng):
        x = rng.uniform(0, 0.5, (4, 4, 3))
        np.testing.assert_array_equal(log_transmission_from_pair(x, x, 0.9), 0.0)

    def test_point(self):
        lt = log_transmission_from_pair(np.full((1, 1, 3), 0.9), np.full((1, 1, 3), 0.8), 1.0)
        assert lt[0, 0, 0] == pytest.approx(math.log(0.5), abs=1e-12)

    def test_round_trip(self, rng):
        for _ in range(20):
            A = rng.uniform(0.7, 1.0)
            x = rng.uniform(0, A - 0.05, (6, 6, 3))
            t = rng.uniform(0.05, 1.0, (6, 6, 1))
            y = synthesize_hazy(x, t, A)
            t_hat = np.exp(log_transmission_from_pair(y, x, A))
            assert np.abs(t_hat - t).max() < 1e-9

    def test_reports_pixel(self):
        x = np.full((3, 3, 3), 0.3)
        x[1, 2, 0] = 0.9
        with pytest.raises(ImageError, match=r"\(1, 2\)"):
            log_transmission_from_pair(np.full((3, 3, 3), 0.5), x, 0.9)

    def test_nonpositive_ratio(self):
        with pytest.raises(ImageError, match="ratio"):
            log_transmission_from_pair(np.full((1, 1, 3), 0.95), np.full((1, 1, 3), 0.5), 0.9)

    def test_clamped_exp(self):
        y = np.full((1, 1, 3), 0.9 - 1e-9)
        x = np.full((1, 1, 3), 0.2)
        assert transmission_from_pair(y, x, 0.9)[0, 0, 0] == pytest.approx(1e-4)


class TestNhTransmission:
    def test_equal_pair(self, rng):
        x = rng.uniform(0, 0.9, (4, 4, 3))
        t = transmission_from_pair_nh(x, x)
        assert t.shape == (4, 4, 3)
        np.testing.assert_allclose(t, 1.0, atol=1e-5)

    def test_zero_numerator(self):
        t = transmission_from_pair_nh(np.ones((1, 1, 3)), np.full((1, 1, 3), 0.4))
        np.testing.assert_array_equal(t, 0.05)

    def test_point(self):
        t = transmission_from_pair_nh(np.full((1, 1, 3), 0.9), np.full((1, 1, 3), 0.8), eps=1e-6)
        np.testing.assert_allclose(t, 0.500002500012500062500, rtol=1e-12)

    def test_out_of_range_clamped(self):
        # airlight not near 1: ratio exceeds 1 and is clamped, not rejected
        t = transmission_from_pair_nh(np.full((1, 1, 3), 0.3), np.full((1, 1, 3), 0.5))
        np.testing.assert_array_equal(t, 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ImageError):
            transmission_from_pair_nh(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_reduce_transmission():
    t = np.stack([np.full((2, 2), v) for v in (0.2, 0.4, 0.8)], axis=2)
    assert reduce_transmission(t, "mean")[0, 0, 0] == pytest.approx(1.4 / 3)
    assert reduce_transmission(t, "geometric")[0, 0, 0] == pytest.approx(0.064 ** (1 / 3))
    assert reduce_transmission(t, "min")[0, 0, 0] == 0.2
    one = np.full((2, 2, 1), 0.5)
    np.testing.assert_array_equal(reduce_transmission(one), one)
    with pytest.raises(ValueError):
        reduce_transmission(t, "median")
