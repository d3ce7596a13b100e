import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dpdd.basis import build_dictionary
from dpdd.density import importance_weights, kde_fit
from dpdd.forecast import DpddConfig, fit_dpdd
from dpdd.koopman import (
    KoopmanError,
    KoopmanModel,
    MomentMatrices,
    fit_koopman,
    moment_matrices,
    moment_matrices_from_pairs,
    truncate_modes,
)

from conftest import ou_pairs


def _diag_model(mu):
    """Model with a diagonal operator, so eigenvalues are exactly ``mu``."""
    mu = np.asarray(mu, dtype=float)
    J = mu.size
    d = build_dictionary("monomial", J - 1, 1)
    m = MomentMatrices(np.eye(J), np.diag(mu), 100, np.full(100, 0.01))
    return fit_koopman(m, 1.0, dictionary=d)


def test_constant_trajectory_moments():
    d = build_dictionary("hermite", 1, 1, shift=[0.0], scale=[1.0])
    c = 0.7
    z = np.full(6, c)
    w = np.full(5, 0.2)
    m = moment_matrices(z, w, d)
    psi = d(np.array([c]))[0]
    expected = np.outer(psi, psi)
    assert_allclose(m.gram, expected, rtol=1e-15)
    assert_allclose(m.cross, expected, rtol=1e-15)


def test_constant_feature_entry_is_weight_sum(rng):
    d = build_dictionary("hermite", 3, 1)
    z = rng.normal(size=51)
    m = moment_matrices(z, np.full(50, 1 / 50), d)
    assert m.gram[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert m.cross[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_two_pairs_brute_force():
    d = build_dictionary("monomial", 1, 1)
    x = np.array([1.0, 2.0])
    y = np.array([2.0, 4.0])
    w = np.array([0.25, 0.75])
    m = moment_matrices_from_pairs(x, y, w, d)
    gram = np.zeros((2, 2))
    cross = np.zeros((2, 2))
    for k in range(2):
        px = np.array([1.0, x[k]])
        py = np.array([1.0, y[k]])
        gram += w[k] * np.outer(px, px)
        cross += w[k] * np.outer(py, px)
    assert_array_equal(m.gram, gram)
    assert_array_equal(m.cross, cross)


def test_weight_length_mismatch():
    d = build_dictionary("monomial", 1, 1)
    with pytest.raises(ValueError, match="weights"):
        moment_matrices_from_pairs(np.zeros(3), np.zeros(3), np.ones(2), d)


def test_underdetermined_warns():
    d = build_dictionary("hermite", 4, 1)
    with pytest.warns(UserWarning, match="singular"):
        moment_matrices_from_pairs(np.arange(3.0), np.arange(3.0), np.full(3, 1 / 3), d)


def test_diagonal_operator():
    model = _diag_model([1.0, 0.5])
    assert_allclose(model.eigenvalues, [1.0, 0.5])
    assert_allclose(model.rates, [0.0, np.log(0.5)])
    assert model.trivial_index == 0


def test_persistent_features():
    d = build_dictionary("hermite", 3, 1)
    g = np.diag([1.0, 1.0, 2.0, 6.0])
    model = fit_koopman(MomentMatrices(g, g.copy(), 1000, np.full(1000, 1e-3)), dictionary=d)
    assert_allclose(model.eigenvalues, np.ones(4), atol=1e-12)


def test_left_eigenvectors(rng):
    x, y = ou_pairs(5000, 1)
    model = fit_dpdd(x, y, DpddConfig(n_modes=4))
    K = model.operator
    for j in range(len(model.eigenvalues)):
        xi = model.eigenvectors[:, j]
        assert_allclose(K.T @ xi, model.eigenvalues[j] * xi, atol=1e-8)


def test_trivial_mode_is_constant():
    x, y = ou_pairs(5000, 2)
    model = fit_dpdd(x, y)
    t = model.trivial_index
    assert abs(model.eigenvalues[t] - 1) < 1e-10
    phi = model.eigenfunctions(np.linspace(-2, 2, 9)[:, None], modes=[t])[:, 0]
    assert np.ptp(phi.real) < 1e-8 and np.all(np.abs(phi.imag) < 1e-10)
    assert t not in model.modes


def test_whitening_preserves_spectrum():
    x, y = ou_pairs(20000, 3)
    kde = kde_fit(x)
    d = build_dictionary("hermite", 4, 1, data=x)
    m = moment_matrices_from_pairs(x, y, importance_weights(kde, x), d)
    a = fit_koopman(m, dictionary=d, whiten=True)
    b = fit_koopman(m, dictionary=d, whiten=False)
    assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-9)


def test_regularization_branch_is_inert_when_not_triggered():
    x, y = ou_pairs(20000, 4)
    kde = kde_fit(x)
    d = build_dictionary("hermite", 4, 1, data=x)
    m = moment_matrices_from_pairs(x, y, importance_weights(kde, x), d)
    a = fit_koopman(m, dictionary=d, ridge=1e-8)
    b = fit_koopman(m, dictionary=d, ridge=1e-2)
    assert not a.regularized
    assert_array_equal(a.eigenvalues, b.eigenvalues)


def test_regularization_triggers_on_singular_gram():
    d = build_dictionary("monomial", 2, 1)
    g = np.diag([1.0, 1.0, 0.0])
    model = fit_koopman(MomentMatrices(g, g.copy(), 100, np.full(100, 0.01)), dictionary=d)
    assert model.regularized


@pytest.mark.parametrize("seed", [5, 6])
def test_weighted_normalization(seed):
    x, y = ou_pairs(20000, seed)
    model = fit_dpdd(x, y, DpddConfig(normalization="weighted", n_modes=4))
    w = importance_weights(model.density, x)
    phi = model.eigenfunctions(x)
    assert_allclose((w[:, None] * np.abs(phi) ** 2).sum(axis=0), 1.0, atol=1e-8)


def test_sample_normalization():
    x, y = ou_pairs(20000, 7)
    model = fit_dpdd(x, y, DpddConfig(n_modes=4))
    phi = model.eigenfunctions(x)
    assert_allclose((np.abs(phi) ** 2).mean(axis=0), 1.0, atol=1e-8)


def test_ou_leading_rates_single_seed():
    x, y = ou_pairs(200_000, 8)
    model = fit_dpdd(x, y, DpddConfig(n_modes=2))
    rates = np.sort(model.mode_rates.real)[::-1]
    assert rates[0] == pytest.approx(-1.0, abs=0.1)
    assert rates[1] == pytest.approx(-2.0, abs=0.3)


def test_ratio_truncation():
    model = truncate_modes(_diag_model([1.0, 0.95, 0.5]), ratio=0.9)
    assert_allclose(model.mode_eigenvalues, [0.95])


def test_fixed_truncation_keeps_conjugate_pairs():
    d = build_dictionary("monomial", 2, 1)
    cross = np.array([[1.0, 0.0, 0.0], [0.0, 0.8, -0.1], [0.0, 0.1, 0.8]])
    base = fit_koopman(MomentMatrices(np.eye(3), cross, 100, np.full(100, 0.01)), dictionary=d)
    two = truncate_modes(base, n_modes=2)
    assert two.mode_count == 2
    assert_allclose(np.sort_complex(two.mode_eigenvalues), [0.8 - 0.1j, 0.8 + 0.1j])
    one = truncate_modes(base, n_modes=1)
    assert one.mode_count == 2


def test_fixed_two_modes():
    x, y = ou_pairs(5000, 9)
    assert fit_dpdd(x, y, DpddConfig(n_modes=2)).mode_count == 2


def test_truncation_errors():
    model = _diag_model([1.0, 0.5])
    with pytest.raises(ValueError):
        truncate_modes(model, n_modes=0)
    with pytest.raises(ValueError):
        truncate_modes(model, n_modes=5)
    with pytest.raises(ValueError):
        truncate_modes(model, ratio=1.5)


def test_unstable_eigenvalue_warns():
    with pytest.warns(UserWarning, match="mu"):
        model = _diag_model([1.0, 1.2])
    assert model.unstable.tolist() == [True, False]


def test_nonfinite_moments_raise():
    d = build_dictionary("monomial", 1, 1)
    g = np.array([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(KoopmanError):
        fit_koopman(MomentMatrices(g, g, 10, np.full(10, 0.1)), dictionary=d)


def test_dt_must_be_positive():
    d = build_dictionary("monomial", 1, 1)
    with pytest.raises(ValueError):
        fit_koopman(MomentMatrices(np.eye(2), np.eye(2), 10, np.full(10, 0.1)), 0.0, dictionary=d)


def test_serialization_roundtrip():
    x, y = ou_pairs(3000, 10)
    model = fit_dpdd(x, y, DpddConfig(n_modes=3))
    again = KoopmanModel.from_dict(model.to_dict())
    pts = np.linspace(-1, 1, 7)[:, None]
    assert_array_equal(again.eigenvalues, model.eigenvalues)
    assert_array_equal(again.modes, model.modes)
    assert_array_equal(again.eigenfunctions(pts), model.eigenfunctions(pts))
    assert_array_equal(again.density(pts), model.density(pts))


def test_fit_is_deterministic():
    x, y = ou_pairs(3000, 11)
    a = fit_dpdd(x, y)
    b = fit_dpdd(x.copy(), y.copy())
    assert_array_equal(a.eigenvalues, b.eigenvalues)
    assert_array_equal(a.eigenvectors, b.eigenvectors)


def _ou_operator(M, seed):
    d = build_dictionary("hermite", 4, 1, shift=[0.0], scale=[np.sqrt(0.245)])
    x, y = ou_pairs(M, seed)
    kde = kde_fit(x)
    m = moment_matrices_from_pairs(x, y, importance_weights(kde, x), d)
    return fit_koopman(m, dictionary=d, density=kde).operator


def test_successive_operator_differences_shrink():
    sizes = [1000, 4000, 16000, 64000, 256000]
    diffs = []
    for seed in range(5):
        ops = [_ou_operator(M, 500 + 10 * seed + i) for i, M in enumerate(sizes)]
        diffs.append([np.linalg.norm(a - b, 2) for a, b in zip(ops, ops[1:])])
    assert np.all(np.diff(np.median(diffs, axis=0)) < 0)
