"""Weighted EDMD approximation of the Koopman operator.

Conventions
-----------
The operator matrix is ``K = A G^+`` with

    G = sum_k w_k Psi(x_k) Psi(x_k)^T,    A = sum_k w_k Psi(y_k) Psi(x_k)^T,

for transition pairs ``(x_k, y_k)``, so that ``Psi(y) ~ K Psi(x)``.  An
eigenfunction ``phi(x) = xi^T Psi(x)`` satisfies ``K^T xi = mu xi``; the
stored eigenvectors ``xi`` are therefore eigenvectors of ``K^T`` (left
eigenvectors of ``K``), expressed in the original (unwhitened) dictionary
coordinates and scaled to unit norm, by default ``sum_k w_k |phi(x_k)|^2 = 1``.
A different normalizing Gram can be supplied; ``fit_dpdd`` uses the
unweighted sample Gram, which approximates the norm of ``L^2(p_s)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import Dictionary
from .density import KdeModel

__all__ = [
    "KoopmanError",
    "KoopmanModel",
    "MomentMatrices",
    "RIDGE",
    "TRIVIAL_TOL",
    "UNSTABLE_TOL",
    "fit_koopman",
    "moment_matrices",
    "moment_matrices_from_pairs",
    "truncate_modes",
]

RIDGE = 1e-8
REG_TRIGGER = 1e-10
TRIVIAL_TOL = 0.02
UNSTABLE_TOL = 0.05


class KoopmanError(RuntimeError):
    """Raised when the operator cannot be estimated or decomposed."""


@dataclass(frozen=True, eq=False)
class MomentMatrices:
    gram: np.ndarray
    cross: np.ndarray
    sample_count: int
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.gram.shape[0]


def moment_matrices_from_pairs(x, y, weights, dictionary: Dictionary) -> MomentMatrices:
    """Weighted Gram and cross matrices from explicit transition pairs ``x -> y``."""
    px = dictionary(x)
    py = dictionary(y)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if px.shape[0] != py.shape[0]:
        raise ValueError("x and y must hold the same number of points")
    if w.shape[0] != px.shape[0]:
        raise ValueError(
            f"got {w.shape[0]} weights for {px.shape[0]} transition pairs"
        )
    if px.shape[0] < dictionary.size:
        warnings.warn(
            f"only {px.shape[0]} transition pairs for {dictionary.size} basis "
            "functions; the Gram matrix is singular",
            stacklevel=2,
        )
    wx = px * w[:, None]
    gram = wx.T @ px
    gram = 0.5 * (gram + gram.T)
    cross = py.T @ wx
    return MomentMatrices(gram, cross, px.shape[0], w)


def moment_matrices(trajectory, weights, dictionary: Dictionary) -> MomentMatrices:
    """Moment matrices for a single trajectory of ``M + 1`` points and ``M`` weights."""
    z = np.asarray(trajectory, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    if z.shape[0] < 2:
        raise ValueError("need >= 2 points to form transition pairs")
    return moment_matrices_from_pairs(z[:-1], z[1:], weights, dictionary)


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Fitted weighted-EDMD model.

    ``eigenvalues``/``eigenvectors`` hold the full spectrum sorted by
    descending modulus; ``modes`` indexes the retained, propagated
    (nontrivial) eigenpairs.
    """

    operator: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    eigenvectors_whitened: np.ndarray
    dt: float
    dictionary: Dictionary
    density: KdeModel | None = None
    trivial_index: int | None = None
    modes: np.ndarray = field(default=None)
    regularized: bool = False
    whitened: bool = True

    def __post_init__(self):
        if self.modes is None:
            modes = np.array(
                [j for j in range(len(self.eigenvalues)) if j != self.trivial_index],
                dtype=int,
            )
            object.__setattr__(self, "modes", modes)
        else:
            object.__setattr__(self, "modes", np.asarray(self.modes, dtype=int))

    @property
    def rates(self) -> np.ndarray:
        """Continuous-time rates ``log(mu) / dt`` (principal branch), all eigenpairs."""
        mu = self.eigenvalues.astype(complex)
        with np.errstate(divide="ignore"):
            return np.log(mu) / self.dt

    @property
    def mode_count(self) -> int:
        return len(self.modes)

    @property
    def mode_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.modes]

    @property
    def mode_rates(self) -> np.ndarray:
        return self.rates[self.modes]

    @property
    def unstable(self) -> np.ndarray:
        """Mask over all eigenvalues with ``|mu| > 1 + UNSTABLE_TOL``."""
        return np.abs(self.eigenvalues) > 1 + UNSTABLE_TOL

    def eigenfunctions(self, x, modes=None) -> np.ndarray:
        """Values ``phi_j(x)`` for the retained modes (or ``modes``), shape ``(n, r)``."""
        idx = self.modes if modes is None else np.asarray(modes, dtype=int)
        return self.dictionary(x) @ self.eigenvectors[:, idx]

    def to_dict(self) -> dict:
        def cpair(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "format": "dpdd-koopman-model",
            "version": 1,
            "dt": float(self.dt),
            "operator": np.asarray(self.operator, dtype=float).tolist(),
            "eigenvalues": cpair(self.eigenvalues),
            "rates": cpair(self.rates),
            "eigenvectors": cpair(self.eigenvectors),
            "eigenvectors_whitened": cpair(self.eigenvectors_whitened),
            "trivial_index": self.trivial_index,
            "modes": self.modes.tolist(),
            "regularized": bool(self.regularized),
            "whitened": bool(self.whitened),
            "dictionary": self.dictionary.to_dict(),
            "density": None if self.density is None else self.density.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> KoopmanModel:
        def carr(a):
            a = np.asarray(a, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        density = d.get("density")
        return cls(
            operator=np.asarray(d["operator"], dtype=float),
            eigenvalues=carr(d["eigenvalues"]),
            eigenvectors=carr(d["eigenvectors"]),
            eigenvectors_whitened=carr(d["eigenvectors_whitened"]),
            dt=float(d["dt"]),
            dictionary=Dictionary.from_dict(d["dictionary"]),
            density=None if density is None else KdeModel.from_dict(density),
            trivial_index=d.get("trivial_index"),
            modes=np.asarray(d["modes"], dtype=int),
            regularized=bool(d.get("regularized", False)),
            whitened=bool(d.get("whitened", True)),
        )


def _sym_eig(gram: np.ndarray, sample_count: int):
    evals, evecs = np.linalg.eigh(gram)
    cutoff = max(gram.shape[0], sample_count) * np.finfo(float).eps * max(abs(evals).max(), 0.0)
    keep = evals > cutoff
    return evals, evecs, keep


def _pinv_sym(gram, sample_count, power=-1.0):
    evals, evecs, keep = _sym_eig(gram, sample_count)
    inv = np.zeros_like(evals)
    inv[keep] = evals[keep] ** power
    return (evecs * inv) @ evecs.T


def _sort_order(mu: np.ndarray) -> np.ndarray:
    # descending modulus; conjugate partners adjacent with positive imag first
    return np.lexsort((-mu.imag, -mu.real, -np.abs(mu)))


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        v = out[:, j]
        k = int(np.argmax(np.abs(v)))
        if abs(v[k]) > 0:
            out[:, j] = v * (abs(v[k]) / v[k])
    return out


def fit_koopman(
    m: MomentMatrices,
    dt: float = 1.0,
    *,
    ridge: float = RIDGE,
    whiten: bool = True,
    dictionary: Dictionary | None = None,
    density: KdeModel | None = None,
    normalization: np.ndarray | None = None,
) -> KoopmanModel:
    """Estimate ``K = A G^+`` and its eigen-decomposition.

    ``G`` receives ``ridge * I`` when its smallest eigenvalue falls below
    ``1e-10 * trace(G) / J``.  With ``whiten`` the eigenproblem is solved for
    ``G^{-1/2} A G^{-1/2}``, whose eigenvalues coincide with those of ``K``.

    Eigenvectors are scaled so that ``xi^H N xi = 1`` with ``N`` the
    ``normalization`` matrix, the weighted Gram ``G`` when omitted.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    gram = np.asarray(m.gram, dtype=float)
    cross = np.asarray(m.cross, dtype=float)
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(cross))):
        raise KoopmanError("non-finite entries in the moment matrices")
    if not np.any(gram):
        raise KoopmanError("Gram matrix is identically zero")
    J = gram.shape[0]

    lam_min = np.linalg.eigvalsh(gram)[0]
    regularized = bool(lam_min < REG_TRIGGER * np.trace(gram) / J)
    g_eff = gram + ridge * np.eye(J) if regularized else gram

    operator = cross @ _pinv_sym(g_eff, m.sample_count)
    try:
        if whiten:
            g_isqrt = _pinv_sym(g_eff, m.sample_count, power=-0.5)
            a_white = g_isqrt @ cross @ g_isqrt
            mu, vec_w = np.linalg.eig(a_white.T)
            vecs = g_isqrt @ vec_w
        else:
            mu, vecs = np.linalg.eig(operator.T)
            vec_w = None
    except np.linalg.LinAlgError as exc:
        raise KoopmanError(f"eigen-decomposition failed: {exc}") from exc
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(vecs))):
        raise KoopmanError("eigen-decomposition produced non-finite values")

    order = _sort_order(mu)
    mu = mu[order]
    vecs = vecs[:, order].astype(complex)

    norm_gram = gram if normalization is None else np.asarray(normalization, dtype=float)
    norms = np.sqrt(np.maximum(np.einsum("ij,ik,kj->j", vecs.conj(), norm_gram, vecs).real, 0.0))
    ok = norms > 0
    vecs[:, ok] = vecs[:, ok] / norms[ok]
    vecs = _fix_phase(vecs)
    if whiten:
        # whitened coordinates of the normalized eigenvectors
        g_sqrt = _pinv_sym(g_eff, m.sample_count, power=0.5)
        vec_w = g_sqrt @ vecs
    else:
        vec_w = vecs.copy()

    trivial = _trivial_index(mu, vecs, gram)
    if dictionary is None:
        raise ValueError("fit_koopman needs the dictionary used for the moment matrices")
    model = KoopmanModel(
        operator=operator,
        eigenvalues=mu,
        eigenvectors=vecs,
        eigenvectors_whitened=vec_w,
        dt=float(dt),
        dictionary=dictionary,
        density=density,
        trivial_index=trivial,
        regularized=regularized,
        whitened=whiten,
    )
    if np.any(model.unstable):
        warnings.warn(
            f"{int(model.unstable.sum())} eigenvalue(s) with |mu| > {1 + UNSTABLE_TOL}",
            stacklevel=2,
        )
    return model


def _trivial_index(mu, vecs, gram) -> int | None:
    cand = np.flatnonzero(np.abs(mu - 1) < TRIVIAL_TOL)
    if cand.size == 0:
        return None
    # overlap of phi_j with the constant function under the weighted measure
    overlap = np.abs(vecs[:, cand].conj().T @ gram[:, 0])
    return int(cand[np.argmax(overlap)])


def truncate_modes(
    model: KoopmanModel,
    n_modes: int | None = None,
    ratio: float = 0.9,
) -> KoopmanModel:
    """Select the propagated modes.

    With ``n_modes`` keep that many largest-modulus nontrivial modes; a
    conjugate pair straddling the cut is kept whole (one extra mode).
    Otherwise keep every nontrivial mode with ``|mu| >= ratio * max |mu|``.
    """
    candidates = np.array(
        [j for j in range(len(model.eigenvalues)) if j != model.trivial_index], dtype=int
    )
    if candidates.size == 0:
        raise ValueError("model has no nontrivial modes")
    mu = model.eigenvalues
    if n_modes is not None:
        if n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if n_modes > candidates.size:
            raise ValueError(
                f"requested {n_modes} modes but only {candidates.size} nontrivial modes exist"
            )
        keep = list(candidates[:n_modes])
        last = keep[-1]
        if mu[last].imag != 0 and n_modes < candidates.size:
            nxt = candidates[n_modes]
            if mu[nxt] == np.conj(mu[last]):
                keep.append(nxt)
        modes = np.array(keep, dtype=int)
    else:
        if not 0 < ratio <= 1:
            raise ValueError("ratio must lie in (0, 1]")
        mods = np.abs(mu[candidates])
        modes = candidates[mods >= ratio * mods.max()]
    return replace(model, modes=modes)
