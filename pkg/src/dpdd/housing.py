"""Metro-area house price panels and the monthly relative-price forecast study.

Input is a wide CSV with one row per metro area: leading identifier columns
followed by one column per month (ISO ``YYYY-MM`` or ``YYYY-MM-DD`` headers).
Empty cells mark missing months.  Each month's distribution is the
cross-section of prices divided by their cross-sectional mean, and every
metro's relative-price series serves as one trajectory for the transition
pairs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forecast import DpddConfig, dpdd_forecast, fit_dpdd, make_grid, stationary_on_grid
from .panel import DistributionPanel
from .transport import QuantileCurve, default_u_grid, w2_quantile_grid
from .war import fit_score_ar1, fpca, quantile_matrix, war_forecast

__all__ = [
    "HousingConfig",
    "HousingReport",
    "MetroPanel",
    "TOY_PANEL_CSV",
    "load_panel",
    "normalize_panel",
    "read_panel_text",
    "run_housing_experiment",
    "synthetic_panel",
    "write_panel",
]

MAX_MISSING_FRACTION = 0.2
MIN_TRAIN_MONTHS = 24
HOUSING_METHODS = ("dpdd", "war", "persistence")

_DATE = re.compile(r"^(\d{4})-(\d{2})(?:-(\d{2}))?$")
_MISSING = {"", "na", "nan", "null"}

# Small documented fixture: three metros over four months, no gaps.
TOY_PANEL_CSV = """RegionID,RegionName,2020-01,2020-02,2020-03,2020-04
100,Alpha,250000,252500,251000,255000
200,Beta,180000,181000,183500,182000
300,Gamma,420000,418000,421000,425500
"""


@dataclass(frozen=True, eq=False)
class MetroPanel:
    """Raw monthly prices, ``prices[i, t]`` for metro ``i`` and month ``t``.

    ``dates`` are ``YYYY-MM`` strings; ``prices`` may hold NaN for missing
    months.  ``dropped`` counts rows removed at load time.
    """

    metro_ids: tuple
    dates: tuple
    prices: np.ndarray
    provenance: str = ""
    dropped: int = 0

    def __post_init__(self):
        p = np.array(self.prices, dtype=float)
        ids, dates = tuple(self.metro_ids), tuple(self.dates)
        if p.shape != (len(ids), len(dates)):
            raise ValueError(f"prices shape {p.shape} does not match {len(ids)} metros x {len(dates)} months")
        months = [_month_number(d) for d in dates]
        if any(b - a != 1 for a, b in zip(months, months[1:])):
            raise ValueError("dates must be consecutive months in increasing order")
        if np.any(p[np.isfinite(p)] <= 0):
            raise ValueError("prices must be positive where present")
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "metro_ids", ids)
        object.__setattr__(self, "dates", dates)

    @property
    def n_metros(self) -> int:
        return len(self.metro_ids)

    @property
    def n_months(self) -> int:
        return len(self.dates)


def _month_number(label: str) -> int:
    m = _DATE.match(label)
    if m is None:
        raise ValueError(f"not an ISO month: {label!r}")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"not an ISO month: {label!r}")
    return 12 * year + month - 1


def _month_label(label: str) -> str:
    return label[:7]


def _interpolate_row(row: np.ndarray) -> np.ndarray:
    ok = np.isfinite(row)
    if ok.all():
        return row
    idx = np.arange(row.size)
    # interior gaps are linear; leading/trailing gaps repeat the nearest value
    return np.interp(idx, idx[ok], row[ok])


def read_panel_text(text: str, provenance: str = "") -> MetroPanel:
    """Parse wide-format CSV text; see ``load_panel``."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ValueError("empty file")
    header = [h.strip() for h in rows[0]]
    is_date = [bool(_DATE.match(h)) for h in header]
    if not any(is_date):
        raise ValueError("no date columns in header")
    first = is_date.index(True)
    if first == 0:
        raise ValueError("malformed header: no metro identifier column before the dates")
    if not all(is_date[first:]):
        bad = next(h for h, d in zip(header[first:], is_date[first:]) if not d)
        raise ValueError(f"malformed header: non-date column {bad!r} after the date columns")
    dates = [_month_label(h) for h in header[first:]]
    if len(set(dates)) != len(dates):
        raise ValueError("malformed header: repeated month")
    ids, values = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValueError(f"row {lineno}: expected {len(header)} cells, found {len(r)}")
        vals = []
        for col, cell in zip(header[first:], r[first:]):
            cell = cell.strip()
            if cell.lower() in _MISSING:
                vals.append(math.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"row {lineno}, column {col!r}: non-numeric price {cell!r}") from None
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"row {lineno}, column {col!r}: price must be positive, got {cell!r}")
            vals.append(v)
        ids.append(r[0].strip())
        values.append(vals)
    if not values:
        raise ValueError("empty file: header only")
    prices = np.array(values, dtype=float)
    missing = np.mean(~np.isfinite(prices), axis=1)
    keep = missing <= MAX_MISSING_FRACTION
    prices = np.vstack([_interpolate_row(p) for p in prices[keep]]) if keep.any() else prices[:0]
    return MetroPanel(
        metro_ids=tuple(i for i, k in zip(ids, keep) if k),
        dates=tuple(dates),
        prices=prices,
        provenance=provenance,
        dropped=int((~keep).sum()),
    )


def load_panel(path) -> MetroPanel:
    """Read a wide-format metro price CSV.

    Rows with more than 20% missing months are dropped (``dropped`` counts
    them); remaining gaps are filled by linear interpolation within the row.

    Raises
    ------
    ValueError
        On an empty file, a header without month columns, or a cell that is
        not a positive number (the message names the row and column).
    """
    path = Path(path)
    return read_panel_text(path.read_text(), provenance=str(path))


def write_panel(panel: MetroPanel, path) -> None:
    """Write ``panel`` in the wide format accepted by ``load_panel``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["RegionID", *panel.dates])
        for mid, row in zip(panel.metro_ids, panel.prices):
            w.writerow([mid, *("" if not np.isfinite(v) else repr(float(v)) for v in row)])


def normalize_panel(panel: MetroPanel) -> DistributionPanel:
    """Month ``t`` becomes the prices divided by their cross-sectional mean."""
    p = np.asarray(panel.prices, dtype=float)
    if p.shape[0] < 2:
        raise ValueError(f"need >= 2 metros per month, found {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("panel has missing prices; load it with load_panel first")
    rel = p / p.mean(axis=0, keepdims=True)
    return DistributionPanel(rel.T[:, :, None], np.array(panel.dates))


def synthetic_panel(
    n_metros: int = 150,
    n_months: int = 72,
    seed: int = 0,
    *,
    phi: float = 0.5,
    dispersion: float = 0.3,
    start: str = "2010-01",
) -> MetroPanel:
    """Stationary synthetic metro panel.

    Log relative prices are independent AR(1) series with coefficient
    ``phi`` and stationary deviation ``dispersion`` around metro-specific
    levels drawn once; a common national index multiplies every price and
    is removed again by normalization.
    """
    if not 0 <= phi < 1:
        raise ValueError("phi must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    innov = dispersion * math.sqrt(1 - phi**2)
    z = np.empty((n_metros, n_months))
    z[:, 0] = rng.normal(0.0, dispersion, n_metros)
    for t in range(1, n_months):
        z[:, t] = phi * z[:, t - 1] + rng.normal(0.0, innov, n_metros)
    level = rng.normal(0.0, 0.1, n_metros)[:, None]
    national = np.exp(np.cumsum(rng.normal(0.002, 0.01, n_months)))[None, :]
    prices = 2e5 * national * np.exp(level + z)
    m0 = _month_number(start)
    dates = tuple(f"{(m0 + k) // 12:04d}-{(m0 + k) % 12 + 1:02d}" for k in range(n_months))
    ids = tuple(f"M{i:04d}" for i in range(n_metros))
    return MetroPanel(ids, dates, prices, provenance=f"synthetic(seed={seed})")


@dataclass(frozen=True)
class HousingConfig:
    """Settings for the monthly forecast study.

    ``refit`` re-estimates both methods on all months before each forecast
    origin instead of keeping the training-window fit.
    ``volatile_periods`` maps a label to an inclusive ``(first, last)`` month
    range for the summary breakdown.  ``reference_means`` holds externally
    reported per-method means to print beside the measured ones.
    """

    kind: str = "monomial"
    degree: int = 2
    n_modes: int = 2
    dt: float = 1.0
    bandwidth: object = "silverman"
    fpca_threshold: float = 0.95
    refit: bool = False
    volatile_periods: dict = field(default_factory=dict)
    reference_means: dict | None = None

    def dpdd_config(self) -> DpddConfig:
        return DpddConfig(
            kind=self.kind,
            degree=self.degree,
            n_modes=self.n_modes,
            bandwidth=self.bandwidth,
            dt=self.dt,
        )


@dataclass
class HousingReport:
    """Per-month squared W2 errors for every method plus the summary."""

    rows: list
    summary: dict

    def errors(self, method: str) -> np.ndarray:
        return np.array([r["w2_squared"] for r in self.rows if r["method"] == method])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "method", "w2_squared"])
            for r in self.rows:
                w.writerow([r["date"], r["method"], repr(r["w2_squared"])])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")


def _split_index(dates, split) -> int:
    if isinstance(split, (int, np.integer)):
        return int(split)
    target = _month_number(_month_label(str(split)))
    for i, d in enumerate(dates):
        if _month_number(str(d)) >= target:
            return i
    return len(dates)


def _war_fit(curves, threshold, u):
    model = fpca(curves, threshold, u)
    scores = model.scores(curves)
    ar = fit_score_ar1(scores) if model.retained else None
    return model, scores, ar


def _method_mean(vals) -> float:
    ok = [v for v in vals if math.isfinite(v)]
    return math.fsum(ok) / len(ok) if ok else math.nan


def run_housing_experiment(panel, split, config: HousingConfig = HousingConfig()) -> HousingReport:
    """Rolling one-month-ahead forecasts over the months from ``split`` on.

    Parameters
    ----------
    panel : MetroPanel or DistributionPanel
        Raw prices (normalized here) or already normalized relative prices.
    split : int or str
        First test month, as a row index or a ``YYYY-MM`` label.
    config : HousingConfig

    Returns
    -------
    HousingReport
        Rows ``(date, method, w2_squared)`` for DPDD, WAR and the
        persistence baseline, ordered by month then method.
    """
    dist = normalize_panel(panel) if isinstance(panel, MetroPanel) else panel
    if dist.dim != 1:
        raise ValueError("housing distributions are one-dimensional")
    T = dist.n_times
    dates = [str(d) for d in dist.times] if dist.times is not None else [str(i) for i in range(T)]
    s = _split_index(dates, split)
    if s < MIN_TRAIN_MONTHS:
        raise ValueError(f"split leaves {s} training months; need >= {MIN_TRAIN_MONTHS}")
    if s >= T:
        raise ValueError("split leaves no test months")

    u = default_u_grid()
    curves = quantile_matrix(dist, u)
    dcfg = config.dpdd_config()

    def fit_dpdd_upto(stop):
        x, y = dist.pairs(0, stop)
        model = fit_dpdd(x, y, dcfg, density_samples=dist.pooled(0, stop))
        grid = make_grid(model)
        return model, grid, stationary_on_grid(model, grid)

    fixed_dpdd = fixed_war = None
    rows = []
    for t in range(s, T):
        test = QuantileCurve(u, curves[t])
        errs = {}
        try:
            if config.refit or fixed_dpdd is None:
                fitted = fit_dpdd_upto(t if config.refit else s)
                if not config.refit:
                    fixed_dpdd = fitted
            else:
                fitted = fixed_dpdd
            model, grid, base = fitted
            fc = dpdd_forecast(model, dist[t - 1], config.dt, grid, baseline=base, rule=dcfg.coefficients)
            errs["dpdd"] = (w2_quantile_grid(test, fc.quantile_curve(u)) ** 2, "")
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            errs["dpdd"] = (math.nan, f"{type(exc).__name__}: {exc}")
        try:
            if config.refit or fixed_war is None:
                wf = _war_fit(curves[: (t if config.refit else s)], config.fpca_threshold, u)
                if not config.refit:
                    fixed_war = wf
            else:
                wf = fixed_war
            wmodel, _, ar = wf
            hist = wmodel.scores(curves[:t])
            wc = war_forecast(wmodel, hist, 1, ar=ar)
            errs["war"] = (w2_quantile_grid(test, wc) ** 2, "")
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            errs["war"] = (math.nan, f"{type(exc).__name__}: {exc}")
        errs["persistence"] = (w2_quantile_grid(test, QuantileCurve(u, curves[t - 1])) ** 2, "")
        for m in HOUSING_METHODS:
            val, msg = errs[m]
            rows.append({"date": dates[t], "method": m, "w2_squared": float(val), "error": msg})

    summary = _summarize(rows, dates[s:], config)
    summary.update(
        train_months=s,
        test_months=T - s,
        first_test_month=dates[s],
        n_metros=dist.n_units,
        refit=config.refit,
    )
    if isinstance(panel, MetroPanel):
        summary["dropped_metros"] = panel.dropped
    return HousingReport(rows, summary)


def _summarize(rows, test_dates, config: HousingConfig) -> dict:
    out = {"methods": {}}
    for m in HOUSING_METHODS:
        vals = [r["w2_squared"] for r in rows if r["method"] == m]
        finite = [v for v in vals if math.isfinite(v)]
        entry = {
            "mean": _method_mean(vals),
            "max": max(finite) if finite else math.nan,
            "failures": len(vals) - len(finite),
            "volatile_periods": {},
        }
        for label, (lo, hi) in sorted(config.volatile_periods.items()):
            a, b = _month_number(_month_label(lo)), _month_number(_month_label(hi))
            sel = [
                r["w2_squared"]
                for r in rows
                if r["method"] == m and a <= _month_number_safe(r["date"]) <= b
            ]
            entry["volatile_periods"][label] = {"mean": _method_mean(sel), "months": len(sel)}
        out["methods"][m] = entry
    if config.reference_means:
        out["reference_comparison"] = {
            m: {"reference": float(v), "measured": out["methods"].get(m, {}).get("mean", math.nan)}
            for m, v in sorted(config.reference_means.items())
        }
    return out


def _month_number_safe(label: str) -> float:
    try:
        return _month_number(label)
    except ValueError:
        return math.nan
