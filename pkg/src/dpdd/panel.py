"""Sequences of empirical distributions with linked samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DistributionPanel"]


@dataclass(frozen=True, eq=False)
class DistributionPanel:
    """``T`` empirical distributions of ``n`` points in ``R^d``.

    ``samples[t, i]`` is unit ``i`` (a simulated path, a metro area) at time
    ``t``, so consecutive rows supply genuine transition pairs per unit.
    ``times`` optionally labels the rows (e.g. monthly dates).
    """

    samples: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[0] == 0 or s.shape[1] == 0:
            raise ValueError("samples must have shape (T, n, d) with T, n >= 1")
        object.__setattr__(self, "samples", s)
        if self.times is not None:
            t = np.asarray(self.times)
            if t.shape[0] != s.shape[0]:
                raise ValueError("times must label every row")
            object.__setattr__(self, "times", t)

    @property
    def n_times(self) -> int:
        return self.samples.shape[0]

    @property
    def n_units(self) -> int:
        return self.samples.shape[1]

    @property
    def dim(self) -> int:
        return self.samples.shape[2]

    def __len__(self) -> int:
        return self.n_times

    def __getitem__(self, t) -> np.ndarray:
        return self.samples[t]

    def pairs(self, start: int, stop: int) -> tuple:
        """Transition pairs within rows ``start .. stop - 1``, never across units.

        Returns ``(x, y)`` each of shape ``((stop - start - 1) * n, d)``,
        ordered by time then unit.
        """
        if not 0 <= start < stop <= self.n_times:
            raise ValueError(f"invalid row range [{start}, {stop})")
        block = self.samples[start:stop]
        d = self.dim
        return block[:-1].reshape(-1, d), block[1:].reshape(-1, d)

    def pooled(self, start: int, stop: int) -> np.ndarray:
        return self.samples[start:stop].reshape(-1, self.dim)

    def summary_means(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Per-time cross-sectional mean of the first coordinate."""
        return self.samples[start:stop, :, 0].mean(axis=1)
