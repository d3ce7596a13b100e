import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermeval
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import norm

from dpdd.forecast import (
    DpddConfig,
    ForecastDensity,
    Grid,
    ModalCoefficients,
    dpdd_forecast,
    fit_dpdd,
    make_grid,
    project_coefficients,
    propagate_coefficients,
    reconstruct_density,
    stationary_moments,
)
from dpdd.koopman import KoopmanModel
from dpdd.transport import w2_sorted_samples

from conftest import ou_pairs

OU_VARIANCE = 0.245
MIDPOINTS = (np.arange(1024) + 0.5) / 1024


@pytest.fixture(scope="module")
def ou_model():
    x, y = ou_pairs(20_000, 21)
    return fit_dpdd(x, y, DpddConfig(n_modes=4))


@pytest.fixture(scope="module")
def ou_2d_model():
    rng = np.random.default_rng(22)
    a = math.exp(-1)
    x = rng.normal(0, math.sqrt(OU_VARIANCE), (8000, 2))
    y = a * x + rng.normal(0, math.sqrt(OU_VARIANCE * (1 - a * a)), x.shape)
    return fit_dpdd(x, y, DpddConfig(n_modes=4))


def _truncated_ou_w2(r: int) -> float:
    """W2 between the exact OU transition density and its r-term Hermite expansion.

    Starting law N(1, s^2) with stationary law N(0, s^2); after one time unit
    the density ratio is sum_n z^n He_n(x / s) / n! with z = e^{-1} / s.
    """
    s = math.sqrt(OU_VARIANCE)
    decay = math.exp(-1)
    z = decay / s
    x = np.linspace(-4, 5, 20001)
    ps = norm.pdf(x, 0, s)
    ratio = 1 + sum(z**n / math.factorial(n) * hermeval(x / s, [0] * n + [1]) for n in range(1, r + 1))
    p = np.maximum(ps * ratio, 0)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    q = np.interp(MIDPOINTS, cdf, x)
    return float(np.sqrt(np.mean((q - norm.ppf(MIDPOINTS, decay, s)) ** 2)))


@pytest.mark.parametrize(
    "r, floor",
    [(1, 0.10303477042559672), (2, 0.05308275862825324), (3, 0.012853712514920651), (4, 0.004823789544494457)],
)
def test_ou_truncation_floor(r, floor):
    # even exact eigenfunctions cannot do better than these truncation errors
    assert _truncated_ou_w2(r) == pytest.approx(floor, rel=1e-9)


@pytest.mark.parametrize("rule", ["matched", "plugin"])
def test_ou_shifted_start_forecast(rule):
    # median over five training sets; the fourth mode is noisy on single draws
    exact = norm.ppf(MIDPOINTS, math.exp(-1), math.sqrt(OU_VARIANCE))
    errors = []
    for seed in range(5):
        x, y = ou_pairs(100_000, seed)
        model = fit_dpdd(x, y, DpddConfig(n_modes=4, coefficients=rule))
        start = np.random.default_rng(seed + 100).normal(1.0, math.sqrt(OU_VARIANCE), 10_000)
        fc = dpdd_forecast(model, start, 1.0, make_grid(model, 2048), rule=rule)
        errors.append(np.sqrt(np.mean((fc.quantile(MIDPOINTS) - exact) ** 2)))
    assert np.median(errors) < 0.05


def test_mass_is_one(ou_model, rng):
    for h in (0.0, 0.3, 1.0, 5.0):
        fc = dpdd_forecast(ou_model, rng.normal(0.8, 0.3, 500), h)
        assert fc.mass == pytest.approx(1.0, abs=1e-6)
        assert np.all(fc.values >= 0)


def test_h_zero_matches_direct_reconstruction(ou_model, rng):
    s = rng.normal(0.5, 0.4, 700)
    grid = make_grid(ou_model)
    direct = reconstruct_density(ou_model, project_coefficients(ou_model, s), grid)
    assert_array_equal(dpdd_forecast(ou_model, s, 0.0, grid).values, direct.values)


def test_long_horizon_returns_to_stationary(ou_model, rng):
    assert np.all(ou_model.mode_rates.real < -0.5)
    grid = make_grid(ou_model)
    ps = ou_model.density(grid.points)
    ps = ps / (ps.sum() * grid.cell_measure)
    fc = dpdd_forecast(ou_model, rng.normal(1.0, 0.2, 400), 50.0, grid)
    assert np.max(np.abs(fc.values - ps)) < 1e-6


def test_zero_coefficients_give_stationary(ou_model):
    grid = make_grid(ou_model)
    ps = ou_model.density(grid.points)
    c = ModalCoefficients(np.zeros(ou_model.mode_count, complex))
    fc = reconstruct_density(ou_model, c, grid)
    assert_allclose(fc.values, ps / (ps.sum() * grid.cell_measure), rtol=1e-12)


def test_samples_from_stationary_project_to_zero(ou_model):
    rng = np.random.default_rng(24)
    n = 20_000
    kde = ou_model.density
    # draw from the Gaussian KDE: pick a kernel centre, add bandwidth noise
    s = kde.samples[rng.integers(0, kde.n_samples, n)] + kde.bandwidth * rng.normal(size=(n, 1))
    c = project_coefficients(ou_model, s)
    assert np.all(np.abs(c.values) < 3 / math.sqrt(n))


def test_single_sample_projection(ou_model):
    x0 = np.array([[0.4]])
    phi = ou_model.eigenfunctions(x0)[0]
    assert_array_equal(project_coefficients(ou_model, x0, rule="plugin").values, phi)
    assert_allclose(project_coefficients(ou_model, x0).values, phi - stationary_moments(ou_model), rtol=1e-15)


def test_empty_projection(ou_model):
    with pytest.raises(ValueError, match="empty"):
        project_coefficients(ou_model, np.zeros((0, 1)))


def test_propagation_examples(ou_model):
    c = ModalCoefficients(np.array([1.0 + 2.0j, 1.0 - 2.0j, 0.5, -0.25]))
    assert_array_equal(propagate_coefficients(c, ou_model, 0.0).values, c.values)
    out = propagate_coefficients(c, ou_model, 0.7)
    assert_allclose(out.values, c.values * np.exp(ou_model.mode_rates * 0.7), rtol=1e-15)
    assert out.time == 0.7
    with pytest.raises(ValueError):
        propagate_coefficients(c, ou_model, -1.0)


def test_scalar_exponential():
    from dpdd.basis import build_dictionary
    from dpdd.koopman import MomentMatrices, fit_koopman, truncate_modes

    d = build_dictionary("monomial", 1, 1)
    m = fit_koopman(MomentMatrices(np.eye(2), np.diag([1.0, math.exp(-1)]), 10, np.full(10, 0.1)), dictionary=d)
    m = truncate_modes(m, n_modes=1)
    out = propagate_coefficients(ModalCoefficients(np.array([1.0])), m, math.log(2))
    assert out.values[0] == pytest.approx(0.5, rel=1e-14)


def test_conjugate_pairs_stay_paired():
    lam = np.array([-0.2 + 1.0j, -0.2 - 1.0j])
    c = np.array([0.3 + 0.4j, 0.3 - 0.4j])
    out = c * np.exp(lam * 1.3)
    assert out[0] == np.conj(out[1])


def test_reconstruction_imaginary_part_small(ou_2d_model, rng):
    s = rng.normal(0.4, 0.4, (500, 2))
    c = project_coefficients(ou_2d_model, s, rule="plugin")
    grid = make_grid(ou_2d_model, 32)
    total = ou_2d_model.eigenfunctions(grid.points) @ c.values
    assert np.max(np.abs(total.imag)) <= 1e-8


def test_monotone_horizon_decay(ou_model, rng):
    grid = make_grid(ou_model)
    ps = ou_model.density(grid.points)
    stationary = ForecastDensity(grid, ps / (ps.sum() * grid.cell_measure))
    start = rng.normal(1.0, 0.3, 2000)
    dist = []
    for h in np.linspace(0, 6, 13):
        fc = dpdd_forecast(ou_model, start, h, grid)
        dist.append(w2_sorted_samples(fc.quantile(MIDPOINTS), stationary.quantile(MIDPOINTS)))
    assert np.all(np.diff(dist) <= 1e-6)


def test_quantile_accessor(ou_model, rng):
    fc = dpdd_forecast(ou_model, rng.normal(0.5, 0.3, 300), 0.5)
    q = fc.quantile(np.linspace(0, 1, 501))
    assert np.all(np.diff(q) >= 0)
    assert q[0] == fc.grid.axes[0][0]
    assert q[-1] == fc.grid.axes[0][-1]


def test_forecast_mean_moves_toward_zero(ou_model, rng):
    start = rng.normal(1.0, math.sqrt(OU_VARIANCE), 5000)
    fc = dpdd_forecast(ou_model, start, 1.0)
    assert abs(fc.mean()[0] - math.exp(-1)) < 0.1


def test_2d_forecast_sampling(ou_2d_model, rng):
    fc = dpdd_forecast(ou_2d_model, rng.normal(0.5, 0.4, (400, 2)), 1.0)
    assert fc.mass == pytest.approx(1.0, abs=1e-6)
    pts = fc.sample(1000, rng)
    assert pts.shape == (1000, 2)
    assert_allclose(pts.mean(axis=0), fc.mean(), atol=0.06)
    band = fc.sample(1000, rng, u_range=(0.005, 0.995))
    assert np.all(band[:, 0] >= fc.quantile(0.005)) and np.all(band[:, 0] <= fc.quantile(0.995))


def test_degenerate_reconstruction(ou_model):
    grid = make_grid(ou_model)
    with pytest.raises(ValueError, match="degenerate"):
        reconstruct_density(ou_model, ModalCoefficients(np.zeros(4)), grid, baseline=np.zeros(len(grid.points)))


def test_clipped_mass_is_reported(ou_model):
    grid = make_grid(ou_model)
    c = ModalCoefficients(np.full(ou_model.mode_count, 50.0), rule="plugin")
    fc = reconstruct_density(ou_model, c, grid)
    assert 0 < fc.clipped_mass < 1
    assert fc.mass == pytest.approx(1.0, abs=1e-6)


def test_export(ou_model, rng, tmp_path):
    fc = dpdd_forecast(ou_model, rng.normal(size=50), 1.0)
    fc.to_csv(tmp_path / "f.csv")
    fc.to_json(tmp_path / "f.json")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,density" and len(lines) == 513
    import json

    meta = json.loads((tmp_path / "f.json").read_text())
    assert meta["meta"] == {"h": 1.0, "r": ou_model.mode_count}
    assert meta["horizon"] == 1.0


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((np.array([0.0]),))
    with pytest.raises(ValueError):
        Grid((np.array([1.0, 0.0]),))


def test_unknown_rule():
    with pytest.raises(ValueError, match="rule"):
        ModalCoefficients(np.zeros(2), rule="bogus")
    with pytest.raises(ValueError):
        DpddConfig(coefficients="bogus")


def test_config_roundtrip():
    cfg = DpddConfig(n_modes=3, kind="monomial", degree=2)
    assert DpddConfig.from_dict({"n_modes": 3, "kind": "monomial", "degree": 2}) == cfg


def test_model_roundtrip_preserves_forecast(ou_model, rng):
    s = rng.normal(size=100)
    again = KoopmanModel.from_dict(ou_model.to_dict())
    assert_array_equal(dpdd_forecast(again, s, 1.0).values, dpdd_forecast(ou_model, s, 1.0).values)
