"""Polynomial function dictionaries for EDMD.

A dictionary is an ordered family of functions ``psi_1, ..., psi_J`` with
``psi_1 == 1``.  Inputs are affinely standardized per axis before the
polynomials are evaluated, so Hermite polynomials are (close to) orthogonal
under the data distribution whenever it is roughly Gaussian.

Multivariate dictionaries use total-degree truncation; multi-indices are
ordered by total degree and then lexicographically.

Only probabilists' Hermite polynomials and plain monomials are provided.
Hermite *functions* (polynomials times a Gaussian weight), RKHS kernel
eigenfunctions and random Fourier features would slot in as further
``kind`` values evaluated by ``Dictionary.__call__``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Literal

import numpy as np

__all__ = [
    "Dictionary",
    "build_dictionary",
    "eval_features",
    "hermite_e",
    "multi_indices",
]

Kind = Literal["hermite", "monomial"]
KINDS = ("hermite", "monomial")


def multi_indices(max_degree: int, dim: int) -> np.ndarray:
    """All multi-indices of total degree <= ``max_degree`` in ``dim`` variables.

    Rows are sorted by total degree, then lexicographically.
    """
    rows = [
        idx
        for idx in itertools.product(range(max_degree + 1), repeat=dim)
        if sum(idx) <= max_degree
    ]
    rows.sort(key=lambda idx: (sum(idx), idx))
    return np.array(rows, dtype=int).reshape(len(rows), dim)


def hermite_e(x, n: int) -> np.ndarray:
    """Probabilists' Hermite polynomials ``He_0 .. He_n`` evaluated at ``x``.

    Uses the three-term recurrence ``He_{k+1} = x He_k - k He_{k-1}``.
    Returns an array of shape ``(n + 1,) + np.shape(x)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    if n >= 1:
        out[1] = x
    for k in range(1, n):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def _monomials(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    for k in range(1, n + 1):
        out[k] = out[k - 1] * x
    return out


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Tensor-product polynomial dictionary on standardized coordinates.

    Parameters
    ----------
    kind
        ``"hermite"`` (probabilists' Hermite polynomials) or ``"monomial"``.
    max_degree
        Maximum total degree of the multi-indices.
    dim
        Input dimension ``d``.
    shift, scale
        Per-axis standardization, ``x_tilde = (x - shift) / scale``.
    """

    kind: Kind
    max_degree: int
    dim: int
    shift: np.ndarray
    scale: np.ndarray
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1 (degenerate dictionary)")
        if self.dim < 1:
            raise ValueError("dim must be >= 1 (degenerate dictionary)")
        shift = np.array(self.shift, dtype=float).reshape(self.dim)
        scale = np.array(self.scale, dtype=float).reshape(self.dim)
        if not np.all(scale > 0) or not np.all(np.isfinite(scale)):
            raise ValueError("standardization scale must be strictly positive")
        shift.setflags(write=False)
        scale.setflags(write=False)
        indices = multi_indices(self.max_degree, self.dim)
        indices.setflags(write=False)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "indices", indices)

    @property
    def size(self) -> int:
        """Number of basis functions ``J``."""
        return len(self.indices)

    def standardize(self, x) -> np.ndarray:
        return (self._as_points(x) - self.shift) / self.scale

    def _as_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            # a bare vector is one point when d > 1, many points when d == 1
            x = x.reshape(-1, 1) if self.dim == 1 else x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(
                f"expected points of dimension {self.dim}, got shape {np.shape(x)}"
            )
        return x

    def __call__(self, x) -> np.ndarray:
        """Feature matrix of shape ``(n, J)`` for points ``x`` of shape ``(n, d)``."""
        z = self.standardize(x)
        poly = hermite_e if self.kind == "hermite" else _monomials
        # per-axis tables of shape (max_degree + 1, n)
        tables = [poly(z[:, i], self.max_degree) for i in range(self.dim)]
        feats = np.ones((z.shape[0], self.size))
        for i, table in enumerate(tables):
            feats *= table[self.indices[:, i]].T
        feats[:, 0] = 1.0
        return feats

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "max_degree": int(self.max_degree),
            "dim": int(self.dim),
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "size": self.size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Dictionary:
        return cls(d["kind"], int(d["max_degree"]), int(d["dim"]), d["shift"], d["scale"])


def expected_size(kind: str, max_degree: int, dim: int) -> int:
    """Closed-form ``J`` for total-degree truncation (same for both kinds)."""
    return comb(max_degree + dim, dim)


def build_dictionary(
    kind: Kind = "hermite",
    max_degree: int = 4,
    dim: int = 1,
    shift=None,
    scale=None,
    *,
    data=None,
) -> Dictionary:
    """Build a dictionary, optionally standardizing by ``data``.

    If ``data`` is given, ``shift``/``scale`` default to its per-axis mean and
    standard deviation; otherwise they default to the identity map.
    """
    if data is not None:
        pts = np.asarray(data, dtype=float).reshape(-1, dim)
        if shift is None:
            shift = pts.mean(axis=0)
        if scale is None:
            scale = pts.std(axis=0)
            if np.any(scale <= 0):
                axis = int(np.flatnonzero(scale <= 0)[0])
                raise ValueError(f"cannot standardize: zero variance on axis {axis}")
    if shift is None:
        shift = np.zeros(dim)
    if scale is None:
        scale = np.ones(dim)
    return Dictionary(kind, max_degree, dim, shift, scale)


def eval_features(dictionary: Dictionary, x) -> np.ndarray:
    """Feature vector ``Psi(x)`` for a single point ``x`` in ``R^d``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != dictionary.dim:
        raise ValueError(f"expected a point of dimension {dictionary.dim}, got {x.shape[0]}")
    return dictionary(x.reshape(1, -1))[0]
