"""Gaussian kernel density estimation and importance weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "KdeModel",
    "DENSITY_FLOOR",
    "cv_bandwidth",
    "importance_weights",
    "kde_fit",
    "silverman_bandwidth",
]

DENSITY_FLOOR = 1e-300

# exact pairwise evaluation above this many kernel terms switches to binning
_EXACT_BUDGET = 4e7
_CHUNK = 2**22


def _as_points(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if dim in (None, 1) else x.reshape(1, -1)
    if x.ndim != 2:
        raise ValueError(f"expected a point set of shape (n, d), got {x.shape}")
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x


def silverman_bandwidth(samples) -> np.ndarray:
    """Per-axis rule-of-thumb bandwidth ``sigma_i (4 / ((d + 2) M))^(1/(d+4))``.

    ``sigma_i`` is the sample standard deviation (``ddof=1``) of axis ``i``.
    """
    x = _as_points(samples)
    m, d = x.shape
    if m < 2:
        raise ValueError("silverman_bandwidth needs at least 2 samples")
    sigma = x.std(axis=0, ddof=1)
    for axis, s in enumerate(sigma):
        if not s > 0:
            raise ValueError(f"zero variance on axis {axis}; bandwidth undefined")
    return sigma * (4.0 / ((d + 2) * m)) ** (1.0 / (d + 4))


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Product-Gaussian kernel mixture ``(1 / M prod h) sum_k K((x - z_k) / h)``.

    Call the model on an ``(n, d)`` point set to evaluate the density.
    """

    samples: np.ndarray
    bandwidth: np.ndarray
    kernel: Literal["gaussian"] = "gaussian"

    def __post_init__(self):
        samples = _as_points(self.samples).copy()
        bw = np.array(self.bandwidth, dtype=float).reshape(-1)
        if bw.size == 1 and samples.shape[1] > 1:
            bw = np.repeat(bw, samples.shape[1])
        if bw.size != samples.shape[1]:
            raise ValueError("bandwidth must have one entry per axis")
        if not np.all(bw > 0) or not np.all(np.isfinite(bw)):
            raise ValueError("bandwidth must be positive on every axis")
        if self.kernel != "gaussian":
            raise ValueError("only the gaussian kernel is supported")
        samples.setflags(write=False)
        bw.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "bandwidth", bw)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def __call__(self, x, method: Literal["auto", "exact", "binned"] = "auto") -> np.ndarray:
        x = _as_points(x, self.dim)
        if method == "auto":
            big = self.n_samples * x.shape[0] > _EXACT_BUDGET
            method = "binned" if big and self.dim <= 2 else "exact"
        if method == "binned":
            return _binned_density(self, x)
        return self._exact(x)

    evaluate = __call__

    def _exact(self, x: np.ndarray) -> np.ndarray:
        z = self.samples / self.bandwidth
        q = x / self.bandwidth
        norm = self.n_samples * np.prod(self.bandwidth) * (2 * np.pi) ** (self.dim / 2)
        out = np.empty(q.shape[0])
        step = max(1, _CHUNK // self.n_samples)
        for start in range(0, q.shape[0], step):
            block = q[start : start + step]
            d2 = np.zeros((block.shape[0], self.n_samples))
            for i in range(self.dim):
                d2 += (block[:, i, None] - z[None, :, i]) ** 2
            out[start : start + step] = np.exp(-0.5 * d2).sum(axis=1)
        return out / norm

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "bandwidth": self.bandwidth.tolist(),
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> KdeModel:
        return cls(np.asarray(d["samples"], dtype=float), d["bandwidth"], d.get("kernel", "gaussian"))


def _binned_density(model: KdeModel, x: np.ndarray) -> np.ndarray:
    """Linear binning + FFT convolution + multilinear interpolation."""
    d = model.dim
    h = model.bandwidth
    lo = model.samples.min(axis=0) - 8 * h
    hi = model.samples.max(axis=0) + 8 * h
    n_bins = 2**14 if d == 1 else 512
    delta = (hi - lo) / (n_bins - 1)

    # linear binning of the samples
    pos = (model.samples - lo) / delta
    base = np.clip(np.floor(pos).astype(int), 0, n_bins - 2)
    frac = pos - base
    counts = np.zeros((n_bins,) * d)
    for corner in np.ndindex(*(2,) * d):
        w = np.ones(model.n_samples)
        idx = []
        for i, c in enumerate(corner):
            w = w * (frac[:, i] if c else 1 - frac[:, i])
            idx.append(base[:, i] + c)
        np.add.at(counts, tuple(idx), w)

    kernels = []
    for i in range(d):
        half = int(np.ceil(8 * h[i] / delta[i]))
        t = np.arange(-half, half + 1) * delta[i]
        kernels.append(np.exp(-0.5 * (t / h[i]) ** 2) / (np.sqrt(2 * np.pi) * h[i]))
    kern = kernels[0]
    for k in kernels[1:]:
        kern = np.multiply.outer(kern, k)
    dens = fftconvolve(counts, kern, mode="same") / model.n_samples
    dens = np.maximum(dens, 0.0)

    out = np.zeros(x.shape[0])
    pos = (x - lo) / delta
    inside = np.all((pos >= 0) & (pos <= n_bins - 1), axis=1)
    p = pos[inside]
    base = np.clip(np.floor(p).astype(int), 0, n_bins - 2)
    frac = p - base
    for corner in np.ndindex(*(2,) * d):
        w = np.ones(p.shape[0])
        idx = []
        for i, c in enumerate(corner):
            w = w * (frac[:, i] if c else 1 - frac[:, i])
            idx.append(base[:, i] + c)
        out[inside] += w * dens[tuple(idx)]
    if not np.all(inside):
        # far tails: exact evaluation for the few points beyond the binning box
        out[~inside] = model._exact(x[~inside])
    return out


def cv_bandwidth(samples, folds: int = 5, multipliers=None) -> np.ndarray:
    """k-fold likelihood cross-validation over multiples of the Silverman bandwidth."""
    x = _as_points(samples)
    if x.shape[0] < 2 * folds:
        raise ValueError(f"need at least {2 * folds} samples for {folds}-fold CV")
    base = silverman_bandwidth(x)
    if multipliers is None:
        multipliers = np.geomspace(0.25, 2.0, 13)
    fold_of = np.arange(x.shape[0]) % folds
    best, best_score = None, -np.inf
    for mult in multipliers:
        score = 0.0
        for f in range(folds):
            train, test = x[fold_of != f], x[fold_of == f]
            dens = KdeModel(train, base * mult)(test)
            score += np.log(np.maximum(dens, DENSITY_FLOOR)).sum()
        if score > best_score:
            best, best_score = base * mult, score
    return best


def kde_fit(samples, bandwidth="auto") -> KdeModel:
    """Fit a Gaussian KDE.

    ``bandwidth`` may be ``"auto"``/``"silverman"`` (rule of thumb), ``"cv"``
    (5-fold likelihood cross-validation), a scalar, or a per-axis vector.
    """
    x = _as_points(samples)
    if x.shape[0] == 0:
        raise ValueError("cannot fit a KDE to an empty sample set")
    if isinstance(bandwidth, str):
        if bandwidth in ("auto", "silverman"):
            bw = silverman_bandwidth(x)
        elif bandwidth == "cv":
            bw = cv_bandwidth(x)
        else:
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
    else:
        bw = bandwidth
    return KdeModel(x, bw)


def importance_weights(model: KdeModel, trajectory) -> np.ndarray:
    """Normalized weights ``w_k = p_s(z_k) / sum_l p_s(z_l)``.

    Density values are floored at ``DENSITY_FLOOR`` before normalization.
    """
    z = _as_points(trajectory, model.dim)
    dens = np.asarray(model(z), dtype=float)
    return normalize_weights(dens)


def normalize_weights(dens) -> np.ndarray:
    dens = np.asarray(dens, dtype=float)
    if dens.size == 0:
        raise ValueError("no points to weight")
    if not np.all(np.isfinite(dens)) or np.any(dens < 0):
        raise ValueError("densities must be finite and nonnegative")
    if np.all(dens <= DENSITY_FLOOR):
        raise ValueError("all densities are numerically zero; weights undefined")
    dens = np.maximum(dens, DENSITY_FLOOR)
    return dens / dens.sum()
