"""Wasserstein autoregression baseline on quantile curves.

FPCA of the quantile functions, an independent AR(1) with intercept on each
retained score series, and an isotonic (pool-adjacent-violators) projection
of the reconstructed curve so the forecast is a valid quantile function.
The isotonic step stands in for the log-map correction of the original
method, which is not reproduced here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from .panel import DistributionPanel
from .transport import QuantileCurve, default_u_grid, empirical_quantiles

__all__ = [
    "FpcaModel",
    "ScoreAr1",
    "fit_score_ar1",
    "fpca",
    "quantile_matrix",
    "trapezoid_weights",
    "war_forecast",
    "write_curve_csv",
]


def trapezoid_weights(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    w = np.zeros_like(u)
    du = np.diff(u)
    w[:-1] += du / 2
    w[1:] += du / 2
    return w


def quantile_matrix(panel, u_grid=None) -> np.ndarray:
    """Row ``t`` is the empirical quantile curve of distribution ``t`` on ``u_grid``.

    ``panel`` is a ``DistributionPanel`` (first coordinate) or a sequence of
    1D sample arrays.
    """
    u = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u_grid must lie inside (0, 1)")
    rows = panel.samples[:, :, 0] if isinstance(panel, DistributionPanel) else panel
    out = []
    for t, x in enumerate(rows):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError(f"distribution at row {t} is empty")
        out.append(empirical_quantiles(x, u))
    if not out:
        raise ValueError("empty panel")
    return np.vstack(out)


def _monotone(curve: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted isotonic projection onto nondecreasing curves."""
    fitted = isotonic_regression(curve, weights=np.maximum(weights, 1e-12)).x
    # guard against round-off in the pooled means
    return np.maximum.accumulate(fitted)


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Principal components of quantile curves under the trapezoid inner product.

    ``components`` has shape ``(K, U)`` and is orthonormal with respect to
    ``weights``.
    """

    u_grid: np.ndarray
    mean_curve: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    weights: np.ndarray
    threshold: float

    @property
    def retained(self) -> int:
        return self.components.shape[0]

    @property
    def explained_variance(self) -> float:
        total = self.eigenvalues.sum()
        if not total > 0:
            return 1.0
        return float(self.eigenvalues[: self.retained].sum() / total)

    @property
    def mean(self) -> QuantileCurve:
        return QuantileCurve(self.u_grid, _monotone(self.mean_curve, self.weights))

    def scores(self, curves) -> np.ndarray:
        centered = np.atleast_2d(curves) - self.mean_curve
        return (centered * self.weights) @ self.components.T

    def reconstruct(self, scores) -> np.ndarray:
        return self.mean_curve + np.atleast_2d(scores) @ self.components


def fpca(matrix, threshold: float = 0.95, u_grid=None) -> FpcaModel:
    """Retain the fewest components whose eigenvalues explain ``threshold`` of the variance."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("fpca needs a (T, U) matrix with T >= 3")
    u = default_u_grid(x.shape[1]) if u_grid is None else np.asarray(u_grid, dtype=float)
    if u.shape[0] != x.shape[1]:
        raise ValueError("u_grid length does not match the matrix")
    w = trapezoid_weights(u)
    sw = np.sqrt(w)
    mean = x.mean(axis=0)
    centered = (x - mean) * sw
    cov = centered.T @ centered / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals[::-1], 0.0, None)
    evecs = evecs[:, ::-1]
    total = evals.sum()
    scale = max(1.0, float(np.abs(x).max()) ** 2)
    if total <= 1e-14 * scale:
        k = 0
    else:
        cum = np.cumsum(evals) / total
        k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
        k = min(k, x.shape[0] - 1, x.shape[1])
    comps = (evecs[:, :k] / sw[:, None]).T
    # deterministic sign: largest-magnitude entry positive
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return FpcaModel(u, mean, comps, evals, w, threshold)


@dataclass(frozen=True)
class ScoreAr1:
    """Per-component ``s_t = a s_{t-1} + b + e_t`` fitted by least squares."""

    coef: np.ndarray
    intercept: np.ndarray
    innovation_var: np.ndarray

    @property
    def nonstationary(self) -> np.ndarray:
        return np.abs(self.coef) >= 1

    def step(self, s: np.ndarray) -> np.ndarray:
        return self.coef * s + self.intercept


def fit_score_ar1(scores) -> ScoreAr1:
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] == 0:
        raise ValueError("empty score history")
    k = s.shape[1]
    coef = np.zeros(k)
    icpt = s.mean(axis=0) if s.shape[0] else np.zeros(k)
    ivar = np.zeros(k)
    if s.shape[0] >= 3:
        for i in range(k):
            prev, nxt = s[:-1, i], s[1:, i]
            design = np.column_stack([prev, np.ones_like(prev)])
            (a, b), *_ = np.linalg.lstsq(design, nxt, rcond=None)
            coef[i], icpt[i] = a, b
            resid = nxt - (a * prev + b)
            ivar[i] = resid @ resid / max(len(prev) - 2, 1)
    return ScoreAr1(coef, icpt, ivar)


def war_forecast(
    model: FpcaModel,
    scores_history,
    h: int = 1,
    u_grid=None,
    ar: ScoreAr1 | None = None,
) -> QuantileCurve:
    """Iterate the score AR(1) ``h`` steps from the last score and rebuild a monotone curve.

    ``ar`` defaults to a fit on ``scores_history``.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    if u_grid is not None and not np.allclose(u_grid, model.u_grid):
        raise ValueError("u_grid differs from the one used for FPCA")
    s_hist = np.asarray(scores_history, dtype=float)
    if s_hist.size == 0 and (s_hist.ndim < 2 or s_hist.shape[0] == 0):
        raise ValueError("empty score history")
    if model.retained == 0:
        curve = model.mean_curve.copy()
    else:
        s_hist = s_hist.reshape(-1, model.retained)
        ar = fit_score_ar1(s_hist) if ar is None else ar
        s = s_hist[-1]
        for _ in range(h):
            s = ar.step(s)
        curve = model.reconstruct(s)[0]
    return QuantileCurve(model.u_grid, _monotone(curve, model.weights))


def write_curve_csv(curve: QuantileCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "quantile"])
        for u, q in zip(curve.grid, curve.values):
            w.writerow([repr(float(u)), repr(float(q))])
