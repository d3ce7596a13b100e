import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from dpdd.transport import (
    QuantileCurve,
    default_u_grid,
    mse_w2,
    w2_assignment,
    w2_empirical,
    w2_quantile_grid,
    w2_sorted_samples,
)

MIDPOINTS = (np.arange(1024) + 0.5) / 1024
finite = st.floats(-100, 100, allow_nan=False)


def test_identical_samples():
    a = np.array([3.0, -1.0, 2.0])
    assert w2_sorted_samples(a, a[::-1]) == 0.0


def test_translation():
    assert w2_sorted_samples([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-15)


def test_gaussian_shift(rng):
    a = rng.normal(0.0, 1.0, 10_000)
    b = rng.normal(1.0, 1.0, 10_000)
    assert w2_sorted_samples(a, b) == pytest.approx(1.0, abs=0.03)


def test_unequal_sizes_use_common_grid(rng):
    a = rng.normal(size=300)
    b = rng.normal(size=700) + 2.0
    direct = np.sqrt(np.mean((np.quantile(a, MIDPOINTS) - np.quantile(b, MIDPOINTS)) ** 2))
    assert w2_sorted_samples(a, b) == pytest.approx(direct, rel=1e-12)


def test_empty_input():
    with pytest.raises(ValueError, match="empty"):
        w2_sorted_samples([], [1.0])


def test_quantile_grid_examples():
    qa = QuantileCurve(MIDPOINTS, MIDPOINTS)
    assert w2_quantile_grid(qa, qa) == 0.0
    shifted = QuantileCurve(MIDPOINTS, MIDPOINTS + 0.3)
    assert w2_quantile_grid(qa, shifted) == pytest.approx(0.3, abs=1e-12)
    doubled = QuantileCurve(MIDPOINTS, 2 * MIDPOINTS)
    assert w2_quantile_grid(qa, doubled) == pytest.approx(1 / np.sqrt(3), abs=1e-3)


def test_quantile_grid_mismatch():
    qa = QuantileCurve(MIDPOINTS, MIDPOINTS)
    qb = QuantileCurve(default_u_grid(), default_u_grid())
    with pytest.raises(ValueError, match="grid"):
        w2_quantile_grid(qa, qb)


@pytest.mark.parametrize(
    "grid, values",
    [
        ([0.2, 0.1], [0.0, 1.0]),
        ([0.0, 0.5], [0.0, 1.0]),
        ([0.2, 0.5], [1.0, 0.0]),
        ([0.2, 0.5], [1.0]),
    ],
)
def test_quantile_curve_validation(grid, values):
    with pytest.raises(ValueError):
        QuantileCurve(grid, values)


def test_quantile_curve_tolerates_rounding():
    QuantileCurve([0.2, 0.5], [1.0, 1.0 - 1e-14])


def test_assignment_examples():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert w2_assignment(a, a[::-1]) == 0.0
    b = np.array([[0.0, 0.0], [0.0, 1.0]])
    c = np.array([[1.0, 0.0], [1.0, 1.0]])
    assert w2_assignment(b, c) == pytest.approx(1.0, abs=1e-15)


def test_assignment_errors():
    with pytest.raises(ValueError, match="shape"):
        w2_assignment(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError, match="cap"):
        w2_assignment(np.zeros((2001, 1)), np.zeros((2001, 1)))


def test_assignment_matches_sorted_in_1d():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.normal(size=50)
        b = rng.normal(size=50) * 2 + 1
        assert abs(w2_assignment(a, b) - w2_sorted_samples(a, b)) <= 1e-9


def test_triangle_inequality_random_triples():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        a, b, c = rng.normal(size=(3, 8, 2)) * rng.uniform(0.1, 3, size=(3, 1, 1))
        assert w2_assignment(a, c) <= w2_assignment(a, b) + w2_assignment(b, c) + 1e-9


def test_empirical_replicates_smaller_cloud(rng):
    a = rng.normal(size=(10, 2))
    b = rng.normal(size=(30, 2))
    assert w2_empirical(a, b) == pytest.approx(w2_assignment(np.repeat(a, 3, axis=0), b), rel=1e-12)
    with pytest.raises(ValueError, match="multiple"):
        w2_empirical(a, b[:25])


@settings(max_examples=60, deadline=None)
@given(arrays(float, (12, 2), elements=finite), arrays(float, (12, 2), elements=finite))
def test_assignment_symmetric(a, b):
    assert w2_assignment(a, b) == w2_assignment(b, a)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 20, elements=finite), arrays(float, 20, elements=finite))
def test_sorted_symmetric(a, b):
    assert w2_sorted_samples(a, b) == w2_sorted_samples(b, a)


@settings(max_examples=60, deadline=None)
@given(
    arrays(float, 15, elements=finite),
    arrays(float, 15, elements=finite),
    st.floats(0.01, 100),
)
def test_scaling(a, b, s):
    base = w2_sorted_samples(a, b)
    assert w2_sorted_samples(s * a, s * b) == pytest.approx(s * base, rel=1e-12, abs=1e-300)
    base2 = w2_assignment(a, b)
    assert w2_assignment(s * a, s * b) == pytest.approx(s * base2, rel=1e-12, abs=1e-300)


class _Gaussian:
    """Forecast stub exposing the quantile interface."""

    def __init__(self, mean):
        self.mean = mean

    def quantile(self, u):
        from scipy.stats import norm

        return norm.ppf(u, self.mean)


def test_mse_is_mean_of_squares():
    u = default_u_grid()
    base = QuantileCurve(u, np.zeros_like(u))
    tests = [np.full(50, 0.1), np.full(50, np.sqrt(0.03))]
    assert mse_w2(tests, base, u_grid=u) == pytest.approx(0.02, rel=1e-12)


def test_mse_self_sampled_is_small():
    from scipy.stats import norm

    u = default_u_grid()
    tests = [norm.ppf((np.arange(2000) + 0.5) / 2000) for _ in range(3)]
    assert mse_w2(tests, _Gaussian(0.0), u_grid=u) < 1e-4


def test_mse_per_time_forecasts():
    u = default_u_grid()
    tests = [np.zeros(10), np.ones(10)]
    fcs = [QuantileCurve(u, np.zeros_like(u)), QuantileCurve(u, np.ones_like(u))]
    assert mse_w2(tests, fcs, u_grid=u) == 0.0
    with pytest.raises(ValueError, match="one forecast"):
        mse_w2(tests, fcs[:1], u_grid=u)


def test_mse_errors():
    with pytest.raises(ValueError, match="empty"):
        mse_w2([], None)
    with pytest.raises(ValueError, match="dimension"):
        mse_w2([np.zeros((5, 3))], _Gaussian(0.0), rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="generator"):
        mse_w2([np.zeros((5, 2))], _Gaussian(0.0))


def test_mse_2d_uses_band_sampling(rng):
    seen = {}

    class Recorder:
        def sample(self, n, rng, u_range=(0.0, 1.0)):
            seen["n"], seen["band"] = n, u_range
            return np.zeros((n, 2))

    u = default_u_grid()
    assert mse_w2([np.zeros((400, 2))], Recorder(), u_grid=u, rng=rng) == 0.0
    assert seen["n"] == 800
    assert_allclose(seen["band"], (0.005, 0.995))
