"""Sliding-window DPDD for locally stationary panels.

Each forecast refits the stationary KDE, the weighted EDMD operator and its
modes on the last ``W`` distributions up to the forecast origin, then
projects and propagates the origin distribution.  Nothing after the origin
is read.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .forecast import DpddConfig, ForecastDensity, dpdd_forecast, fit_dpdd, make_grid
from .panel import DistributionPanel
from .transport import mse_w2

__all__ = [
    "WindowConfig",
    "fit_window",
    "mixing_time",
    "select_window",
    "sw_dpdd_forecast",
    "window_from_mixing",
    "write_jsonl",
]

ACF_THRESHOLD = 1 / math.e


@dataclass(frozen=True)
class WindowConfig:
    window_length: int
    mixing_time: int | None = None
    multiplier_range: tuple = (2, 5)

    def __post_init__(self):
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2")
        if self.mixing_time is not None:
            lo, hi = self.multiplier_range
            if not lo * self.mixing_time <= self.window_length <= hi * self.mixing_time:
                raise ValueError(
                    f"window {self.window_length} outside [{lo}, {hi}] x mixing time "
                    f"{self.mixing_time}"
                )


def mixing_time(summary_series) -> int:
    """Smallest lag with ``|acf| < 1/e``; ``len // 2`` (with a warning) if none."""
    x = np.asarray(summary_series, dtype=float).reshape(-1)
    n = x.size
    if n < 10:
        raise ValueError(f"summary series too short ({n} < 10)")
    max_lag = n // 2
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom <= 1e-14 * max(1.0, float(np.abs(x).max()) ** 2) * n:
        warnings.warn("constant summary series; autocorrelation undefined", stacklevel=2)
        return max_lag
    for lag in range(1, max_lag + 1):
        rho = float(xc[:-lag] @ xc[lag:]) / denom
        if abs(rho) < ACF_THRESHOLD:
            return lag
    warnings.warn(
        f"autocorrelation stays above 1/e up to lag {max_lag}", stacklevel=2
    )
    return max_lag


def window_from_mixing(tau: int, multiplier: int = 3, max_length: int | None = None) -> int:
    w = max(2, int(multiplier) * int(tau))
    if max_length is not None:
        w = min(w, max_length)
    return w


def fit_window(panel: DistributionPanel, t: int, W: int, config: DpddConfig = DpddConfig()):
    """Fit a DPDD model on rows ``t - W + 1 .. t`` (0-based origin ``t``)."""
    if W < 2:
        raise ValueError("window must span >= 2 distributions")
    if t >= panel.n_times or t < 0:
        raise ValueError(f"origin {t} outside the panel")
    start = t - W + 1
    if start < 0:
        raise ValueError(f"insufficient history: origin {t} has {t + 1} rows, window needs {W}")
    x, y = panel.pairs(start, t + 1)
    return fit_dpdd(x, y, config, density_samples=panel.pooled(start, t + 1))


def sw_dpdd_forecast(
    panel: DistributionPanel,
    t: int,
    W: int,
    h: float = 1,
    config: DpddConfig = DpddConfig(),
    grid=None,
) -> ForecastDensity:
    """Forecast distribution ``t + h`` from a model fitted on the window ending at ``t``."""
    model = fit_window(panel, t, W, config)
    if grid is None:
        grid = make_grid(model, config.grid_points)
    out = dpdd_forecast(model, panel[t], h, grid, rule=config.coefficients)
    out.meta.update(
        {
            "origin": int(t),
            "W": int(W),
            "r": model.mode_count,
            "eigenvalues": [[float(m.real), float(m.imag)] for m in model.mode_eigenvalues],
        }
    )
    return out


def select_window(
    panel: DistributionPanel,
    train_stop: int,
    tau: int,
    config: DpddConfig = DpddConfig(),
    multipliers=(2, 3, 4, 5),
    rng_seed: int = 0,
) -> int:
    """Pick ``W = k tau`` minimizing one-step error over the training rows ``< train_stop``."""
    best, best_err = None, math.inf
    for k in multipliers:
        W = window_from_mixing(tau, k, max_length=train_stop - 1)
        errs = []
        for t in range(W - 1, train_stop - 1):
            try:
                fc = sw_dpdd_forecast(panel, t, W, 1, config)
            except (ValueError, RuntimeError, np.linalg.LinAlgError):
                continue
            errs.append(mse_w2([panel[t + 1]], fc, rng=np.random.default_rng(rng_seed)))
        if errs and np.mean(errs) < best_err:
            best, best_err = W, float(np.mean(errs))
    if best is None:
        raise ValueError("no window length could be evaluated on the training rows")
    return best


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
