"""2-Wasserstein distances between empirical and forecast distributions.

1D distances are computed from quantile functions; for ``d >= 2`` the exact
optimal coupling between equal-size uniform point clouds is found by linear
assignment on the squared Euclidean cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

__all__ = [
    "ASSIGNMENT_CAP",
    "QuantileCurve",
    "default_u_grid",
    "empirical_quantiles",
    "mse_w2",
    "w2_assignment",
    "w2_empirical",
    "w2_quantile_grid",
    "w2_sorted_samples",
]

ASSIGNMENT_CAP = 2000
COMMON_GRID = 1024
N_FORECAST_SAMPLES = 1000


def default_u_grid(n: int = 128, lo: float = 0.005, hi: float = 0.995) -> np.ndarray:
    """Equispaced probability levels used for quantile curves."""
    return np.linspace(lo, hi, n)


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    """A quantile function tabulated on a strictly increasing grid in (0, 1)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if grid.shape != values.shape:
            raise ValueError("grid and values must have the same length")
        if grid.size == 0:
            raise ValueError("empty quantile curve")
        if np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
            raise ValueError("grid must be strictly increasing inside (0, 1)")
        if np.any(np.diff(values) < -1e-12 * max(1.0, np.abs(values).max())):
            raise ValueError("quantile values must be nondecreasing")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def _as_1d(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional samples")
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    return a


def empirical_quantiles(samples, u) -> np.ndarray:
    """Empirical quantile function with linear interpolation between order statistics."""
    return np.quantile(_as_1d(samples, "samples"), np.asarray(u, dtype=float))


def w2_sorted_samples(a, b, n_grid: int = COMMON_GRID) -> float:
    """W2 between two 1D empirical measures.

    Equal sizes are matched in sorted order.  Otherwise both empirical
    quantile functions are evaluated on ``n_grid`` midpoints of (0, 1).
    """
    a = _as_1d(a, "a")
    b = _as_1d(b, "b")
    if a.size == b.size:
        diff = np.sort(a) - np.sort(b)
        return math.sqrt(float(np.mean(diff * diff)))
    u = (np.arange(n_grid) + 0.5) / n_grid
    diff = empirical_quantiles(a, u) - empirical_quantiles(b, u)
    return math.sqrt(float(np.mean(diff * diff)))


def w2_quantile_grid(qa: QuantileCurve, qb: QuantileCurve) -> float:
    """``sqrt(int_0^1 (Q_a - Q_b)^2 du)`` by the trapezoidal rule on the shared grid.

    The squared difference is held constant between 0 and the first level
    and between the last level and 1, so the integral spans all of (0, 1).
    """
    if qa.grid.shape != qb.grid.shape or not np.array_equal(qa.grid, qb.grid):
        raise ValueError("quantile curves are tabulated on different grids")
    diff = qa.values - qb.values
    sq = diff * diff
    total = float(np.trapezoid(sq, qa.grid)) + sq[0] * qa.grid[0] + sq[-1] * (1.0 - qa.grid[-1])
    return math.sqrt(max(total, 0.0))


def w2_assignment(a, b) -> float:
    """Exact W2 between equal-size uniform point clouds via linear assignment."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if b.ndim == 1:
        b = b.reshape(-1, 1)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty point set")
    if a.shape != b.shape:
        raise ValueError(f"point sets must have equal shapes, got {a.shape} and {b.shape}")
    if a.shape[0] > ASSIGNMENT_CAP:
        raise ValueError(f"assignment size {a.shape[0]} exceeds cap {ASSIGNMENT_CAP}")
    cost = cdist(a, b, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    # exactly rounded sum of sorted costs keeps the result order-independent
    matched = np.sort(cost[rows, cols])
    return math.sqrt(math.fsum(matched) / a.shape[0])


def w2_empirical(a, b) -> float:
    """W2 between uniform point clouds of possibly different sizes ``n`` and ``k n``.

    The smaller cloud is replicated ``k`` times, which leaves its measure
    unchanged and turns the transport problem into an assignment.
    """
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    if a.shape[1] == 1:
        return w2_sorted_samples(a[:, 0], b[:, 0])
    if len(a) > len(b):
        a, b = b, a
    k, rem = divmod(len(b), len(a))
    if rem:
        raise ValueError("sizes must be integer multiples of each other")
    return w2_assignment(np.repeat(a, k, axis=0), b)


def _forecast_curve(forecast, u) -> QuantileCurve:
    if isinstance(forecast, QuantileCurve):
        if not np.array_equal(forecast.grid, u):
            raise ValueError("forecast quantile curve is on a different u-grid")
        return forecast
    return QuantileCurve(u, forecast.quantile(u))


def mse_w2(
    test_distributions: Sequence,
    forecast,
    *,
    u_grid=None,
    rng: np.random.Generator | None = None,
    n_forecast_samples: int = N_FORECAST_SAMPLES,
) -> float:
    """Mean squared W2 between test distributions and their forecasts.

    ``forecast`` is a single forecast for all test distributions or a
    sequence aligned with them.  Each forecast is a ``QuantileCurve`` (1D
    only) or an object exposing ``quantile(u)`` / ``sample(n, rng)`` such as
    ``ForecastDensity``.  In 1D errors are ``w2_quantile_grid`` on ``u_grid``;
    in 2D forecast samples (the largest multiple of the test size not
    exceeding ``max(n_forecast_samples, n)`` and the assignment cap), drawn
    with per-axis levels restricted to ``[u_grid[0], u_grid[-1]]``, are
    matched exactly against the test points.
    """
    tests = list(test_distributions)
    if not tests:
        raise ValueError("empty test set")
    if isinstance(forecast, (list, tuple)):
        forecasts = list(forecast)
        if len(forecasts) != len(tests):
            raise ValueError("need one forecast per test distribution")
    else:
        forecasts = [forecast] * len(tests)
    u = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    errors = []
    for x, fc in zip(tests, forecasts):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        d = x.shape[1]
        if d == 1:
            qa = QuantileCurve(u, empirical_quantiles(x[:, 0], u))
            errors.append(w2_quantile_grid(qa, _forecast_curve(fc, u)) ** 2)
        elif d == 2:
            if rng is None:
                raise ValueError("2D evaluation needs an explicit random generator")
            n = x.shape[0]
            k = max(1, min(max(n_forecast_samples, n), ASSIGNMENT_CAP) // n)
            y = fc.sample(k * n, rng, u_range=(u[0], u[-1]))
            errors.append(w2_assignment(np.repeat(x, k, axis=0), y) ** 2)
        else:
            raise ValueError(f"dimension {d} is not supported (d <= 2)")
    return math.fsum(errors) / len(errors)
