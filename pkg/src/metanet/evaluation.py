"""Metrics and experiment harnesses for inferred infection networks.

Covers network similarity, multi-day rollout prediction error, whole-outbreak
simulation comparison, degree-distribution fits and zone-importance rankings.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Metapopulation, OutbreakSeries, as_matrix, check_square
from .dynamics import _infectious_mass, propagate, simulate_outbreak, states_from_deltas
from .errors import (
    AllZeroActuals,
    DimensionMismatch,
    InsufficientSupport,
    InvalidSeries,
    NoConvergence,
    NoSignal,
    ZeroNetwork,
)
from .inference import fit_alpha_adjustment, out_degrees

DEFAULT_HORIZONS = (1, 3, 5, 7)


def _offdiag(a: np.ndarray) -> np.ndarray:
    return a[~np.eye(a.shape[0], dtype=bool)]


def cosine_similarity(g, g_ref) -> float:
    """Cosine of the angle between the off-diagonal weights of two networks."""
    a, b = as_matrix(g), as_matrix(g_ref)
    if a.shape != b.shape:
        raise DimensionMismatch(f"networks have shapes {a.shape} and {b.shape}")
    a, b = _offdiag(a), _offdiag(b)
    ma, mb = np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0)
    if ma == 0 or mb == 0:
        raise ZeroNetwork("cosine similarity is undefined for an all-zero network")
    a, b = a / ma, b / mb  # guards the norms against underflow
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def mape(predicted, actual) -> float:
    """Mean absolute percentage error over entries whose actual value is positive."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {a.shape}")
    mask = a > 0
    if not mask.any():
        raise AllZeroActuals("no positive actual values to compare against")
    return float(np.mean(np.abs(p[mask] - a[mask]) / a[mask]))


def rollout_predict(g, alpha_adj: float, series: OutbreakSeries, pop: Metapopulation,
                    from_day: int, delta: int) -> np.ndarray:
    """Predict new cases for days ``from_day + 1 .. from_day + delta``.

    Only the first ``from_day`` observed days are used; afterwards the model
    ``u = alpha_adj * G v`` is iterated on its own predictions.
    """
    g = as_matrix(g)
    check_square(g, pop.n, "network")
    if not 1 <= from_day <= series.t:
        raise InvalidSeries(f"from_day must be in [1, {series.t}], got {from_day}")
    if delta < 1:
        raise ValueError("delta must be at least 1")
    seen = series.prefix(from_day)
    states_from_deltas(seen, pop)  # raises ExhaustedPopulation when applicable
    d = seen.deltas
    s = pop.populations - d.sum(axis=0)
    v = _infectious_mass(np.vstack([d, np.zeros((1, pop.n))]), series.beta)[-1]
    out, _ = propagate(alpha_adj * g, s, v, series.beta, delta)
    return out


@dataclass(frozen=True)
class PredictionReport:
    horizons: tuple[int, ...]
    horizon_mape: dict
    per_zone: np.ndarray  # (len(horizons), N) mean absolute percentage error, nan if undefined
    start_days: tuple[int, ...]

    def rows(self) -> list[tuple[str, int, float]]:
        return [("mape", h, self.horizon_mape[h]) for h in self.horizons]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "horizon", "value"])
            for metric, h, val in self.rows():
                w.writerow([metric, h, format(val, ".17g")])


def prediction_report(g, alpha_adj: float, series: OutbreakSeries, pop: Metapopulation,
                      start_days: Iterable[int], horizons: Sequence[int] = DEFAULT_HORIZONS
                      ) -> PredictionReport:
    """MAPE of rollout predictions at each horizon, pooled over start days."""
    horizons = tuple(sorted(set(int(h) for h in horizons)))
    longest = horizons[-1]
    starts = tuple(int(t) for t in start_days if t + longest <= series.t)
    if not starts:
        raise InvalidSeries("no start day leaves room for the longest horizon")
    preds = {h: [] for h in horizons}
    acts = {h: [] for h in horizons}
    for t0 in starts:
        path = rollout_predict(g, alpha_adj, series, pop, t0, longest)
        for h in horizons:
            preds[h].append(path[h - 1])
            acts[h].append(series.deltas[t0 + h - 1])
    by_h = {}
    per_zone = np.full((len(horizons), pop.n), np.nan)
    for k, h in enumerate(horizons):
        p, a = np.array(preds[h]), np.array(acts[h])
        by_h[h] = mape(p, a)
        with np.errstate(divide="ignore", invalid="ignore"):
            ape = np.where(a > 0, np.abs(p - a) / a, np.nan)
        has = np.any(a > 0, axis=0)
        per_zone[k, has] = np.nanmean(ape[:, has], axis=0)
    return PredictionReport(horizons, by_h, per_zone, starts)


def _alpha_or_zero(g, states) -> float:
    try:
        return fit_alpha_adjustment(g, states)
    except NoSignal:
        return 0.0


def infectious_curve(series: OutbreakSeries) -> np.ndarray:
    """Citywide infectious count on each day, ``sum_n v_n(t)``."""
    return _infectious_mass(series.deltas, series.beta).sum(axis=1)


def simulate_from_warmup(g, series: OutbreakSeries, pop: Metapopulation, warmup: int) -> OutbreakSeries:
    """Re-fit the infection-rate scale on the warmup days, then simulate to the end."""
    head = series.prefix(warmup)
    a = _alpha_or_zero(g, states_from_deltas(head, pop))
    return simulate_outbreak(a * as_matrix(g), pop, head, series.t - warmup)


@dataclass(frozen=True)
class ComparisonCurves:
    actual: np.ndarray
    d2pri: np.ndarray
    basic: np.ndarray
    sir: np.ndarray

    @property
    def names(self) -> tuple[str, ...]:
        return ("actual", "d2pri", "basic", "sir")

    def peak(self, name: str) -> tuple[int, float]:
        """``(day, height)`` of the curve's maximum; days are 1-based."""
        c = getattr(self, name)
        k = int(np.argmax(c))
        return k + 1, float(c[k])

    def peak_errors(self, name: str) -> tuple[int, float]:
        """Absolute peak-day and peak-height errors against the actual curve."""
        d, h = self.peak(name)
        d0, h0 = self.peak("actual")
        return abs(d - d0), abs(h - h0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["day", *self.names])
            for k in range(len(self.actual)):
                w.writerow([k + 1, *(format(float(getattr(self, n)[k]), ".17g") for n in self.names)])


def simulate_comparison(g_d2pri, g_basic, series2: OutbreakSeries, pop: Metapopulation,
                        warmup: int = 10) -> ComparisonCurves:
    """Simulate an outbreak from its first ``warmup`` days with three models.

    Two networked models use the given networks; the third treats the whole
    city as a single well-mixed population.  Each model's infection-rate
    scale is fitted on the warmup window.
    """
    if series2.t <= warmup:
        raise InvalidSeries(f"series has {series2.t} days, need more than warmup={warmup}")
    curves = {"actual": infectious_curve(series2)}
    for name, g in (("d2pri", g_d2pri), ("basic", g_basic)):
        curves[name] = infectious_curve(simulate_from_warmup(g, series2, pop, warmup))
    city = Metapopulation(("city",), np.array([pop.total]))
    merged = OutbreakSeries(series2.deltas.sum(axis=1, keepdims=True), series2.beta, series2.day0)
    curves["sir"] = infectious_curve(simulate_from_warmup(np.ones((1, 1)), merged, city, warmup))
    return ComparisonCurves(**curves)


@dataclass(frozen=True)
class DegreeFit:
    edges: np.ndarray
    density: np.ndarray
    exponent: float
    intercept: float
    residual: float  # RMS of the log10 fit residuals over non-empty bins

    @property
    def centers(self) -> np.ndarray:
        return np.sqrt(self.edges[:-1] * self.edges[1:])


def fit_power_law(values, n_bins: int = 10) -> DegreeFit:
    """Log-binned density of positive ``values`` and a least-squares log-log line.

    The line is fitted to the non-empty bins from the densest bin upward:
    below the mode the density rises (few zones have almost no contacts) and
    says nothing about the tail exponent.
    """
    x = np.asarray(values, dtype=float)
    x = x[x > 0]
    if x.size == 0 or x.min() == x.max():
        raise InsufficientSupport("degrees are all equal or zero; no distribution to fit")
    edges = np.logspace(np.log10(x.min()), np.log10(x.max()), n_bins + 1)
    edges[0], edges[-1] = x.min(), x.max()
    counts, _ = np.histogram(x, bins=edges)
    density = counts / (x.size * np.diff(edges))
    keep = (counts > 0) & (np.arange(n_bins) >= np.argmax(density))
    if keep.sum() < 3:
        raise InsufficientSupport(f"only {keep.sum()} non-empty tail bins; need at least 3")
    lx = np.log10(np.sqrt(edges[:-1] * edges[1:])[keep])
    ly = np.log10(density[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return DegreeFit(edges, density, float(-slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


def degree_distribution(g, n_bins: int = 10) -> DegreeFit:
    """Power-law fit to the weighted degrees ``sum_{m != n} g_nm`` of a network."""
    g = as_matrix(g)
    if not np.any(g):
        raise ZeroNetwork("network has no edges")
    return fit_power_law(out_degrees(g), n_bins)


def pagerank_importance(g, damping: float = 0.85, tol: float = 1e-10,
                        max_iter: int = 100_000) -> np.ndarray:
    """PageRank scores of the zones by power iteration; sums to one.

    Columns of ``G`` are normalized to sum to one; all-zero columns spread
    their mass uniformly.
    """
    g = as_matrix(g)
    n = g.shape[0]
    if np.any(g < 0):
        raise ValueError("network weights must be non-negative")
    if not np.any(g):
        raise ZeroNetwork("PageRank needs at least one edge")
    col = g.sum(axis=0)
    dangling = col == 0
    m = np.divide(g, col, out=np.zeros_like(g), where=~dangling)
    p = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = damping * (m @ p + p[dangling].sum() / n) + (1.0 - damping) / n
        nxt /= nxt.sum()
        if np.abs(nxt - p).sum() < tol:
            return nxt
        p = nxt
    raise NoConvergence(f"PageRank did not converge in {max_iter} iterations")


def infection_count_importance(series: OutbreakSeries) -> np.ndarray:
    """Share of all recorded cases that fell in each zone."""
    tot = series.deltas.sum(axis=0)
    if tot.sum() == 0:
        raise AllZeroActuals("series records no infections")
    return tot / tot.sum()
