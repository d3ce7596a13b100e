"""Density forecasting from a fitted Koopman model.

The forecast density is

    p(x) = p_s(x) * (1 + sum_j a_j phi_j(x)),

tabulated on a uniform lattice, clipped at zero and renormalized.  The
eigenfunction moments ``c_j(T) = E_T[phi_j]`` evolve exactly as
``c_j(T + h) = exp(lambda_j h) c_j(T)`` under the Koopman semigroup.

Two ways of turning moments into the expansion weights ``a`` are offered:

``"plugin"``
    ``a = c``.  Exact when the eigenfunctions are orthonormal and centered
    under ``p_s``, which holds for reversible dynamics in the large-sample
    limit.
``"matched"`` (default)
    Moments are taken relative to their ``p_s`` means and ``a`` solves the
    small linear system that makes the reconstructed density reproduce the
    propagated moments.  Coincides with ``"plugin"`` in the orthonormal
    case and stays consistent when the estimated eigenfunctions are not.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import build_dictionary
from .density import kde_fit, importance_weights
from .koopman import RIDGE, KoopmanModel, fit_koopman, moment_matrices_from_pairs, truncate_modes
from .transport import QuantileCurve

__all__ = [
    "DpddConfig",
    "ForecastDensity",
    "Grid",
    "ModalCoefficients",
    "dpdd_forecast",
    "fit_dpdd",
    "make_grid",
    "project_coefficients",
    "propagate_coefficients",
    "reconstruct_density",
    "stationary_moments",
]

GRID_POINTS = {1: 512, 2: 128}
GRID_PAD = 3.0


COEFFICIENT_RULES = ("matched", "plugin")


@dataclass(frozen=True)
class ModalCoefficients:
    """Eigenfunction moments at ``time``; ``rule`` says how to reconstruct from them."""

    values: np.ndarray
    time: float = 0.0
    rule: str = "matched"

    def __post_init__(self):
        if self.rule not in COEFFICIENT_RULES:
            raise ValueError(f"unknown coefficient rule {self.rule!r}")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor lattice; ``points`` is ``(N, d)`` in C order over ``axes``."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for a in axes:
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be increasing with >= 2 points")
        object.__setattr__(self, "axes", axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def cell_measure(self) -> float:
        return float(np.prod([a[1] - a[0] for a in self.axes]))

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def make_grid(model_or_samples, n_points: int | None = None, pad: float = GRID_PAD) -> Grid:
    """Lattice over the data box padded by ``pad`` KDE bandwidths per axis."""
    if isinstance(model_or_samples, KoopmanModel):
        kde = model_or_samples.density
        samples, bw = kde.samples, kde.bandwidth
    else:
        kde = model_or_samples
        samples, bw = kde.samples, kde.bandwidth
    d = samples.shape[1]
    n = n_points or GRID_POINTS.get(d, 32)
    lo = samples.min(axis=0) - pad * bw
    hi = samples.max(axis=0) + pad * bw
    return Grid(tuple(np.linspace(lo[i], hi[i], n) for i in range(d)))


def _piecewise_cdf(x: np.ndarray, mass: np.ndarray) -> np.ndarray:
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (mass[1:] + mass[:-1]))])
    total = cdf[-1]
    if not total > 0:
        raise ValueError("distribution has no mass")
    return cdf / total


def _inverse_cdf(x: np.ndarray, cdf: np.ndarray, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    idx = np.clip(np.searchsorted(cdf, u, side="left"), 1, len(x) - 1)
    lo, hi = cdf[idx - 1], cdf[idx]
    span = np.where(hi > lo, hi - lo, 1.0)
    t = np.clip((u - lo) / span, 0.0, 1.0)
    out = x[idx - 1] + t * (x[idx] - x[idx - 1])
    return np.where(u <= 0, x[0], out)


@dataclass(frozen=True, eq=False)
class ForecastDensity:
    """Nonnegative density tabulated on a grid with unit Riemann mass."""

    grid: Grid
    values: np.ndarray
    horizon: float = 0.0
    n_modes: int = 0
    clipped_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def cell_measure(self) -> float:
        return self.grid.cell_measure

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_measure)

    def _table(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def marginal(self, axis: int = 0) -> tuple:
        t = self._table()
        other = tuple(i for i in range(self.grid.dim) if i != axis)
        return self.grid.axes[axis], t.sum(axis=other) if other else t

    def cdf(self, axis: int = 0) -> tuple:
        x, dens = self.marginal(axis)
        return x, _piecewise_cdf(x, dens)

    def quantile(self, u, axis: int = 0) -> np.ndarray:
        """Marginal quantile function; nondecreasing, ``0 -> min``, ``1 -> max`` of the grid."""
        x, cdf = self.cdf(axis)
        return _inverse_cdf(x, cdf, u)

    def quantile_curve(self, u) -> QuantileCurve:
        return QuantileCurve(u, self.quantile(u))

    def mean(self) -> np.ndarray:
        w = self.values * self.cell_measure
        return (self.grid.points * w[:, None]).sum(axis=0) / w.sum()

    def sample(self, n: int, rng: np.random.Generator, u_range=(0.0, 1.0)) -> np.ndarray:
        """Draw ``n`` points by sequential conditional inverse-CDF sampling.

        Uniform levels are drawn from ``u_range`` on every axis, so a band
        narrower than (0, 1) excludes the outer tails.
        """
        lo, hi = u_range
        u = lo + (hi - lo) * rng.random((n, self.grid.dim))
        if self.grid.dim == 1:
            return self.quantile(u[:, 0]).reshape(-1, 1)
        if self.grid.dim != 2:
            raise ValueError("sampling is implemented for d <= 2")
        x0 = self.quantile(u[:, 0], axis=0)
        ax0, ax1 = self.grid.axes
        table = self._table()
        rows = np.clip(np.rint((x0 - ax0[0]) / (ax0[1] - ax0[0])).astype(int), 0, ax0.size - 1)
        x1 = np.empty(n)
        for r in np.unique(rows):
            sel = rows == r
            cond = table[r]
            if not cond.sum() > 0:
                # empty row: fall back to the second marginal
                cond = table.sum(axis=0)
            x1[sel] = _inverse_cdf(ax1, _piecewise_cdf(ax1, cond), u[sel, 1])
        return np.stack([x0, x1], axis=1)

    def to_csv(self, path) -> None:
        pts = self.grid.points
        names = ["x"] if self.grid.dim == 1 else [f"x{i + 1}" for i in range(self.grid.dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["density"])
            for p, v in zip(pts, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_modes": self.n_modes,
            "clipped_mass": self.clipped_mass,
            "cell_measure": self.cell_measure,
            "axes": [a.tolist() for a in self.grid.axes],
            "values": self.values.tolist(),
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def stationary_moments(model: KoopmanModel) -> np.ndarray:
    """Means of the retained eigenfunctions over the stationary KDE's samples."""
    if model.density is None:
        raise ValueError("model carries no stationary density")
    return model.eigenfunctions(model.density.samples).mean(axis=0)


def project_coefficients(
    model: KoopmanModel, samples, time: float = 0.0, rule: str = "matched"
) -> ModalCoefficients:
    """Sample means of the eigenfunctions over the current sample set.

    With ``rule="matched"`` the stationary means are subtracted, so the
    moments decay to zero as the forecast horizon grows.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot project an empty sample set")
    c = model.eigenfunctions(x).mean(axis=0)
    if rule == "matched" and c.size:
        c = c - stationary_moments(model)
    return ModalCoefficients(c, time, rule)


def propagate_coefficients(c: ModalCoefficients, model: KoopmanModel, h: float) -> ModalCoefficients:
    """``c_j(T + h) = exp(lambda_j h) c_j(T)``."""
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    growth = np.exp(model.mode_rates * h)
    return ModalCoefficients(c.values * growth, c.time + h, c.rule)


def stationary_on_grid(model: KoopmanModel, grid: Grid) -> np.ndarray:
    return model.density(grid.points)


def _modal_term(model: KoopmanModel, c: ModalCoefficients, pts, ps) -> np.ndarray:
    phi = model.eigenfunctions(pts)
    if c.rule == "plugin":
        return (phi @ c.values).real
    w = ps / ps.sum()
    centered = phi - w @ phi
    # moments of p_s (1 + centered @ a) are E_s[phi] + moments @ a
    moments = (phi * w[:, None]).T @ centered
    a = np.linalg.lstsq(moments, c.values, rcond=None)[0]
    return (centered @ a).real


def reconstruct_density(
    model: KoopmanModel,
    c: ModalCoefficients,
    grid: Grid,
    *,
    baseline: np.ndarray | None = None,
) -> ForecastDensity:
    """``p_s (1 + Re sum_j a_j phi_j)``, clipped at zero and renormalized on ``grid``.

    ``baseline`` may carry precomputed ``p_s`` values on the grid points.
    """
    pts = grid.points
    ps = stationary_on_grid(model, grid) if baseline is None else np.asarray(baseline)
    if not ps.sum() > 0:
        raise ValueError("degenerate reconstruction: stationary density vanishes on the grid")
    if c.values.size:
        modal = _modal_term(model, c, pts, ps)
    else:
        modal = np.zeros(pts.shape[0])
    raw = ps * (1.0 + modal)
    neg = -raw[raw < 0].sum() * grid.cell_measure
    total_abs = np.abs(raw).sum() * grid.cell_measure
    clipped = np.maximum(raw, 0.0)
    mass = clipped.sum() * grid.cell_measure
    if not mass > 0:
        raise ValueError("degenerate reconstruction: no positive mass on the grid")
    return ForecastDensity(
        grid=grid,
        values=clipped / mass,
        horizon=float(c.time),
        n_modes=int(c.values.size),
        clipped_mass=float(neg / total_abs) if total_abs > 0 else 0.0,
    )


def dpdd_forecast(
    model: KoopmanModel,
    samples_T,
    h: float,
    grid: Grid | None = None,
    *,
    baseline: np.ndarray | None = None,
    rule: str = "matched",
) -> ForecastDensity:
    """Project the latest sample set, propagate ``h`` time units, reconstruct."""
    grid = make_grid(model) if grid is None else grid
    c = project_coefficients(model, samples_T, rule=rule)
    c = propagate_coefficients(c, model, h)
    out = reconstruct_density(model, c, grid, baseline=baseline)
    out.meta.update({"h": float(h), "r": model.mode_count})
    return out


@dataclass(frozen=True)
class DpddConfig:
    """Settings for a DPDD fit.

    ``degree`` defaults to 4 in 1D and 3 otherwise.  ``n_modes`` selects a
    fixed mode count; otherwise the modulus-ratio rule with ``ratio`` applies.
    ``coefficients`` is the reconstruction rule, ``"matched"`` or ``"plugin"``.
    ``normalization`` scales eigenfunctions to unit mean square over the
    training points (``"sample"``) or under the importance weights
    (``"weighted"``).
    """

    kind: str = "hermite"
    degree: int | None = None
    n_modes: int | None = None
    ratio: float = 0.9
    bandwidth: object = "auto"
    whiten: bool = True
    ridge: float = RIDGE
    dt: float = 1.0
    grid_points: int | None = None
    coefficients: str = "matched"
    normalization: str = "sample"

    def __post_init__(self):
        if self.normalization not in ("sample", "weighted"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.coefficients not in COEFFICIENT_RULES:
            raise ValueError(f"unknown coefficient rule {self.coefficients!r}")
        if self.n_modes is not None and self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must lie in (0, 1]")

    def degree_for(self, dim: int) -> int:
        if self.degree is not None:
            return self.degree
        return 4 if dim == 1 else 3

    @classmethod
    def from_dict(cls, d: dict | None) -> DpddConfig:
        return cls(**(d or {}))


def fit_dpdd(x, y, config: DpddConfig = DpddConfig(), density_samples=None) -> KoopmanModel:
    """Weighted-EDMD fit from transition pairs ``x -> y``.

    The stationary KDE is built from ``density_samples`` (default ``x``); the
    dictionary is standardized by the per-axis mean and deviation of ``x``.

    The importance weights are proportional to the KDE, so on a trajectory
    drawn from ``p_s`` they describe a measure close to ``p_s^2``.  Unit norm
    under that measure overstates the size of the eigenfunctions in
    ``L^2(p_s)``; the default ``"sample"`` normalization uses the unweighted
    Gram of the training points instead.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x, y = x.reshape(-1, 1), y.reshape(-1, 1)
    if x.shape[0] < 2:
        raise ValueError("need >= 2 transition pairs")
    d = x.shape[1]
    pool = x if density_samples is None else np.asarray(density_samples, dtype=float).reshape(-1, d)
    kde = kde_fit(pool, config.bandwidth)
    weights = importance_weights(kde, x)
    dictionary = build_dictionary(config.kind, config.degree_for(d), d, data=x)
    mats = moment_matrices_from_pairs(x, y, weights, dictionary)
    if config.normalization == "sample":
        feats = dictionary(x)
        norm_gram = feats.T @ feats / feats.shape[0]
    else:
        norm_gram = None
    model = fit_koopman(
        mats,
        config.dt,
        ridge=config.ridge,
        whiten=config.whiten,
        dictionary=dictionary,
        density=kde,
        normalization=norm_gram,
    )
    return truncate_modes(model, n_modes=config.n_modes, ratio=config.ratio)
