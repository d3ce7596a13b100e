"""Simulated distributional time series and the forecasting benchmark.

Every scenario simulates ``n_paths`` independent trajectories; the panel row
at time ``t`` is their cross-section.  Diffusions are integrated by
Euler-Maruyama at ``dt`` and recorded every ``steps_per_obs`` steps.
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .forecast import DpddConfig, dpdd_forecast, fit_dpdd, make_grid, stationary_on_grid
from .panel import DistributionPanel
from .sliding import mixing_time, select_window, sw_dpdd_forecast, window_from_mixing
from .transport import QuantileCurve, default_u_grid, mse_w2
from .war import fit_score_ar1, fpca, quantile_matrix, war_forecast

__all__ = [
    "BenchmarkConfig",
    "DgpSpec",
    "KINDS",
    "METHODS",
    "ResultTable",
    "default_specs",
    "drifting_spec",
    "generate",
    "run_benchmark",
    "run_repetition",
    "substream",
]

KINDS = ("ar1", "ar2", "ou", "ar_plus_ou", "ou2d", "drifting_ou")
STATIONARY_KINDS = ("ar1", "ar2", "ou", "ou2d", "ar_plus_ou")
METHODS = ("dpdd", "war", "sw_dpdd")
DIFFUSION_KINDS = ("ou", "ar_plus_ou", "ou2d", "drifting_ou")

_DEFAULTS = {
    "ar1": {"phi": 0.9, "noise_var": 0.49},
    "ar2": {"phi1": 0.6, "phi2": 0.2, "noise_var": 0.49, "burn_in": 200},
    "ou": {"theta": 1.0, "sigma": 0.7, "mean": 0.0},
    "ar_plus_ou": {"phi": 0.9, "noise_var": 0.49, "theta": 1.0, "sigma": 0.7, "mean": 0.0},
    "ou2d": {"theta": 1.0, "sigma": 0.7, "mean": 0.0},
    "drifting_ou": {"theta": 1.0, "sigma": 0.7, "amplitude": 2.0},
}

_MASK64 = (1 << 64) - 1


def substream(seed: int, *names) -> np.random.Generator:
    """Named, reproducible random stream derived from a 64-bit seed."""
    keys = [zlib.crc32(str(n).encode()) for n in names]
    return np.random.default_rng([int(seed) & _MASK64, *keys])


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    params: dict = field(default_factory=dict)
    dt: float = 0.01
    steps_per_obs: int = 100
    n_paths: int = 400
    T: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        merged = {**_DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        if self.kind in DIFFUSION_KINDS and not self.dt > 0:
            raise ValueError("diffusion scenarios need dt > 0")
        if "noise_var" in merged and not merged["noise_var"] > 0:
            raise ValueError("innovation variance must be positive")
        if "sigma" in merged and not merged["sigma"] > 0:
            raise ValueError("diffusion coefficient must be positive")
        if self.n_paths < 1 or self.T < 2 or self.steps_per_obs < 1:
            raise ValueError("need n_paths >= 1, T >= 2, steps_per_obs >= 1")

    @property
    def name(self) -> str:
        return self.kind

    @property
    def obs_interval(self) -> float:
        return self.dt * self.steps_per_obs


def _ar1(p, n, T, rng):
    phi, s = p["phi"], math.sqrt(p["noise_var"])
    x = np.empty((T, n))
    x[0] = rng.normal(0.0, s / math.sqrt(1 - phi**2), n)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + rng.normal(0.0, s, n)
    return x


def _ar2(p, n, T, rng):
    a, b, s = p["phi1"], p["phi2"], math.sqrt(p["noise_var"])
    prev2 = np.zeros(n)
    prev = np.zeros(n)
    for _ in range(int(p["burn_in"])):
        prev2, prev = prev, a * prev + b * prev2 + rng.normal(0.0, s, n)
    x = np.empty((T, n))
    for t in range(T):
        prev2, prev = prev, a * prev + b * prev2 + rng.normal(0.0, s, n)
        x[t] = prev
    return x


def _ou(p, n, T, dt, steps, rng, mean_fn=None, shape=()):
    theta, sigma = p["theta"], p["sigma"]
    size = (n,) + shape
    m0 = p.get("mean", 0.0) if mean_fn is None else mean_fn(0.0)
    x = m0 + rng.normal(0.0, sigma / math.sqrt(2 * theta), size)
    out = np.empty((T,) + size)
    out[0] = x
    sdt = math.sqrt(dt)
    for t in range(1, T):
        for k in range(steps):
            now = ((t - 1) * steps + k) * dt
            m = p.get("mean", 0.0) if mean_fn is None else mean_fn(now)
            x = x - theta * (x - m) * dt + sigma * sdt * rng.normal(size=size)
        out[t] = x
    return out


def generate(spec: DgpSpec, rng: np.random.Generator | None = None) -> DistributionPanel:
    """Simulate the panel of cross-sections; deterministic given ``spec.seed``."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    p, n, T = spec.params, spec.n_paths, spec.T
    if spec.kind == "ar1":
        x = _ar1(p, n, T, rng)
    elif spec.kind == "ar2":
        x = _ar2(p, n, T, rng)
    elif spec.kind == "ou":
        x = _ou(p, n, T, spec.dt, spec.steps_per_obs, rng)
    elif spec.kind == "ar_plus_ou":
        x = _ar1(p, n, T, rng) + _ou(p, n, T, spec.dt, spec.steps_per_obs, rng)
    elif spec.kind == "ou2d":
        x = _ou(p, n, T, spec.dt, spec.steps_per_obs, rng, shape=(2,))
    else:
        total = T * spec.obs_interval
        amp = p["amplitude"]

        def mean_fn(s):
            return amp * math.sin(2 * math.pi * s / total)

        x = _ou(p, n, T, spec.dt, spec.steps_per_obs, rng, mean_fn=mean_fn)
    times = np.arange(1, T + 1) * (spec.obs_interval if spec.kind in DIFFUSION_KINDS else 1.0)
    return DistributionPanel(x, times)


@dataclass(frozen=True)
class BenchmarkConfig:
    n_exp: int = 50
    n_paths: int = 400
    T: int = 20
    methods: tuple = ("dpdd", "war")
    base_seed: int = 20250101
    stride: int = 1_000_003
    horizon: int = 1
    fpca_threshold: float = 0.95
    window_multiplier: int = 3
    window_cv: bool = False
    dpdd: DpddConfig = DpddConfig()

    def __post_init__(self):
        if self.n_exp < 1:
            raise ValueError("n_exp must be >= 1")
        if not 0 < self.T0 < self.T:
            raise ValueError("training split must leave at least one test time")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if isinstance(self.dpdd, dict):
            object.__setattr__(self, "dpdd", DpddConfig.from_dict(self.dpdd))
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def T0(self) -> int:
        return int(math.floor(0.7 * self.T))

    def seed_for(self, rep: int) -> int:
        return (self.base_seed + self.stride * rep) & _MASK64

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


def default_specs(config: BenchmarkConfig, kinds=STATIONARY_KINDS) -> list:
    return [DgpSpec(k, n_paths=config.n_paths, T=config.T) for k in kinds]


def drifting_spec(config: BenchmarkConfig) -> DgpSpec:
    return DgpSpec("drifting_ou", n_paths=config.n_paths, T=config.T)


class _ProductQuantiles:
    """Forecast with independent marginals given by quantile curves."""

    def __init__(self, curves):
        self.curves = curves

    def sample(self, n, rng, u_range=(0.0, 1.0)):
        lo, hi = u_range
        u = lo + (hi - lo) * rng.random((n, len(self.curves)))
        return np.stack(
            [np.interp(u[:, i], c.grid, c.values) for i, c in enumerate(self.curves)], axis=1
        )


def _dpdd_errors(panel, config, spec_name, seed):
    T0, h = config.T0, config.horizon
    x, y = panel.pairs(0, T0)
    model = fit_dpdd(x, y, config.dpdd, density_samples=panel.pooled(0, T0))
    grid = make_grid(model, config.dpdd.grid_points)
    base = stationary_on_grid(model, grid)
    tests, fcs = [], []
    for t in range(T0, panel.n_times):
        fcs.append(
            dpdd_forecast(model, panel[t - h], h, grid, baseline=base, rule=config.dpdd.coefficients)
        )
        tests.append(panel[t])
    return mse_w2(tests, fcs, rng=substream(seed, spec_name, "dpdd", "eval"))


def _war_curves(series, config, u):
    mats = quantile_matrix(list(series), u)
    model = fpca(mats[: config.T0], config.fpca_threshold, u)
    scores = model.scores(mats)
    ar = fit_score_ar1(scores[: config.T0]) if model.retained else None
    return model, scores, ar


def _war_errors(panel, config, spec_name, seed):
    T0, h = config.T0, config.horizon
    u = default_u_grid()
    fitted = [_war_curves(panel.samples[:, :, i], config, u) for i in range(panel.dim)]
    tests, fcs = [], []
    for t in range(T0, panel.n_times):
        curves = [war_forecast(m, s[: t - h + 1], h, ar=ar) for m, s, ar in fitted]
        fcs.append(curves[0] if panel.dim == 1 else _ProductQuantiles(curves))
        tests.append(panel[t])
    return mse_w2(tests, fcs, u_grid=u, rng=substream(seed, spec_name, "war", "eval"))


def _sw_errors(panel, config, spec_name, seed):
    T0, h = config.T0, config.horizon
    tau = mixing_time(panel.summary_means(0, T0))
    if config.window_cv:
        W = select_window(panel, T0, tau, config.dpdd)
    else:
        W = window_from_mixing(tau, config.window_multiplier, max_length=T0)
    tests, fcs = [], []
    for t in range(T0, panel.n_times):
        origin = t - h
        fcs.append(sw_dpdd_forecast(panel, origin, min(W, origin + 1), h, config.dpdd))
        tests.append(panel[t])
    return mse_w2(tests, fcs, rng=substream(seed, spec_name, "sw_dpdd", "eval"))


_RUNNERS = {"dpdd": _dpdd_errors, "war": _war_errors, "sw_dpdd": _sw_errors}


def run_repetition(spec: DgpSpec, config: BenchmarkConfig, rep: int) -> list:
    """Simulate one panel and score every configured method on the hold-out rows."""
    seed = config.seed_for(rep)
    spec = replace(spec, seed=seed, n_paths=config.n_paths, T=config.T)
    panel = generate(spec, substream(seed, spec.name, "data"))
    rows = []
    for method in config.methods:
        row = {"scenario": spec.name, "method": method, "repetition": rep}
        try:
            row["mse_w2"] = float(_RUNNERS[method](panel, config, spec.name, seed))
            row["error"] = ""
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            row["mse_w2"] = math.nan
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


@dataclass
class ResultTable:
    rows: list
    config: dict = field(default_factory=dict)

    def values(self, scenario: str, method: str) -> np.ndarray:
        return np.array(
            [r["mse_w2"] for r in self.rows if r["scenario"] == scenario and r["method"] == method]
        )

    def summary(self) -> dict:
        out = {}
        keys = sorted({(r["scenario"], r["method"]) for r in self.rows})
        for scen, meth in keys:
            vals = self.values(scen, meth)
            ok = np.sort(vals[np.isfinite(vals)])
            entry = {"n": int(vals.size), "failures": int((~np.isfinite(vals)).sum())}
            if ok.size:
                q25, q50, q75 = np.quantile(ok, [0.25, 0.5, 0.75])
                entry.update(
                    mean=math.fsum(ok) / ok.size,
                    q25=float(q25),
                    median=float(q50),
                    q75=float(q75),
                )
            out.setdefault(scen, {})[meth] = entry
        return out

    def mean(self, scenario: str, method: str) -> float:
        return self.summary()[scenario][method].get("mean", math.nan)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "method", "repetition", "mse_w2", "error"])
            for r in self.rows:
                w.writerow([r["scenario"], r["method"], r["repetition"], repr(r["mse_w2"]), r["error"]])

    def to_json(self, path) -> None:
        doc = {"config": self.config, "summary": self.summary()}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")


def run_benchmark(config: BenchmarkConfig, specs, threads: int = 1) -> ResultTable:
    """Run ``config.n_exp`` repetitions of every scenario; rows sorted deterministically."""
    specs = list(specs)
    if not specs or not config.methods:
        raise ValueError("need at least one scenario and one method")
    jobs = [(s, rep) for s in specs for rep in range(config.n_exp)]
    if threads == 1:
        results = [run_repetition(s, config, rep) for s, rep in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as pool:
            results = list(pool.map(lambda job: run_repetition(job[0], config, job[1]), jobs))
    rows = [row for chunk in results for row in chunk]
    rows.sort(key=lambda r: (r["scenario"], r["method"], r["repetition"]))
    return ResultTable(rows, config.to_dict())
