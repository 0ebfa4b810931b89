"""Forward epidemic dynamics.

Two views of the same process live here:

* continuous-time SIR (single population and metapopulation), advanced by
  explicit Euler steps;
* the daily network-interaction recursion ``u(t) = G v(t)`` driven by new
  case counts, together with the reconstruction of ``u``, ``v`` and the SIR
  compartments from observed counts.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    Metapopulation,
    MobilityVolumes,
    OutbreakSeries,
    StateSeries,
    as_matrix,
    check_square,
)
from .errors import DimensionMismatch, ExhaustedPopulation, InvalidSeries

log = logging.getLogger(__name__)


class ClampWarning(RuntimeWarning):
    """Incidence rates were clipped to [0, 1] during a simulation."""


@dataclass(frozen=True)
class SirState:
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.s, self.i, self.r)]
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape) or arrs[0].ndim != 1:
            raise DimensionMismatch("s, i, r must be vectors of equal length")
        for name, a in zip("sir", arrs):
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"compartment {name} must be finite and non-negative")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def total(self) -> np.ndarray:
        return self.s + self.i + self.r

    @classmethod
    def initial(cls, populations, infected) -> "SirState":
        p = np.atleast_1d(np.asarray(populations, dtype=float))
        i = np.atleast_1d(np.asarray(infected, dtype=float))
        return cls(p - i, i, np.zeros_like(p))


def _check_rates(alpha, beta, dt):
    if alpha < 0 or beta < 0:
        raise ValueError("rates must be non-negative")
    if not dt > 0:
        raise ValueError("dt must be positive")


def _advance(state: SirState, force: np.ndarray, beta: float, dt: float) -> SirState:
    # force: per-capita infection pressure on susceptibles, already times dt
    new = np.minimum(state.s * force, state.s)
    rec = np.minimum(beta * dt * state.i, state.i)
    return SirState(state.s - new, state.i + new - rec, state.r + rec)


def step_single_sir(state: SirState, alpha: float, beta: float, dt: float = 0.1) -> SirState:
    """One explicit Euler step of the homogeneous SIR model."""
    _check_rates(alpha, beta, dt)
    if state.s.shape != (1,):
        raise DimensionMismatch("single-population step expects one zone")
    return _advance(state, alpha * state.i * dt, beta, dt)


def step_metapop_sir(
    state: SirState,
    h: MobilityVolumes,
    pop: Metapopulation,
    alpha: float,
    beta: float,
    dt: float = 0.1,
) -> SirState:
    """One Euler step of the metapopulation SIR model with visitor mixing."""
    _check_rates(alpha, beta, dt)
    if state.s.shape != (pop.n,):
        raise DimensionMismatch(f"state has {state.s.shape[0]} zones, expected {pop.n}")
    check_square(h.h, pop.n, "mobility")
    c = h.contact_matrix(pop)
    return _advance(state, alpha * dt * (c @ state.i), beta, dt)


def integrate_sir(state, alpha, beta, days, dt=0.1, h=None, pop=None):
    """Integrate SIR for ``days`` days; returns daily ``(days + 1, N)`` arrays s, i, r.

    With ``h``/``pop`` given the metapopulation model is used, otherwise the
    single-population one.
    """
    steps = int(round(1.0 / dt))
    if not np.isclose(steps * dt, 1.0):
        raise ValueError("dt must divide one day evenly")
    traj = [state]
    for _ in range(days):
        for _ in range(steps):
            if h is None:
                state = step_single_sir(state, alpha, beta, dt)
            else:
                state = step_metapop_sir(state, h, pop, alpha, beta, dt)
        traj.append(state)
    return (
        np.array([x.s for x in traj]),
        np.array([x.i for x in traj]),
        np.array([x.r for x in traj]),
    )


def _susceptible_before(deltas: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Row t holds ``P - sum_{t' < t} delta(t')``."""
    cum = np.cumsum(deltas, axis=0)
    before = np.vstack([np.zeros((1, deltas.shape[1])), cum[:-1]])
    return p[None, :] - before


def _infectious_mass(deltas: np.ndarray, beta: float) -> np.ndarray:
    """Row t holds ``sum_{t' < t} (1 - beta)^(t - t' - 1) delta(t')``."""
    v = np.zeros_like(deltas)
    keep = 1.0 - beta
    for t in range(1, deltas.shape[0]):
        v[t] = keep * v[t - 1] + deltas[t - 1]
    return v


def states_from_deltas(series: OutbreakSeries, pop: Metapopulation) -> StateSeries:
    """Incidence rates ``u`` and infectious mass ``v`` from daily new cases."""
    series.check_against(pop)
    d = series.deltas
    susceptible = _susceptible_before(d, pop.populations)
    exhausted = susceptible <= 0
    if np.any(exhausted):
        t, n = np.argwhere(exhausted)[0]
        raise ExhaustedPopulation(
            f"zone {pop.zone_ids[n]} has no susceptibles left on day {t + 1}"
        )
    u = np.minimum(d / susceptible, 1.0)
    return StateSeries(u, _infectious_mass(d, series.beta))


def reconstruct_sir(series: OutbreakSeries, pop: Metapopulation, at: int) -> SirState:
    """Compartments on day ``at`` (1-based) from cases observed on earlier days.

    ``at`` may be one past the end of the series, giving the state after the
    last observed day.  Susceptibles are the product of ``(1 - u)`` over past
    days, which telescopes to ``P - cumulative cases``; the latter form is
    used because it does not accumulate rounding error.
    """
    if not 1 <= at <= series.t + 1:
        raise InvalidSeries(f"day must be in [1, {series.t + 1}], got {at}")
    series.check_against(pop)
    past = series.deltas[: at - 1]
    p = pop.populations
    s = p - past.sum(axis=0)
    if at <= series.t and np.any(s <= 0):
        n = int(np.flatnonzero(s <= 0)[0])
        raise ExhaustedPopulation(f"zone {pop.zone_ids[n]} has no susceptibles left on day {at}")
    s = np.maximum(s, 0.0)
    weights = (1.0 - series.beta) ** np.arange(at - 2, -1, -1)
    i = weights @ past if at > 1 else np.zeros(pop.n)
    r = np.maximum(p - s - i, 0.0)
    return SirState(s, i, r)


def propagate(g, susceptible, v, beta, horizon, noise=None):
    """Run the daily recursion forward ``horizon`` days.

    ``susceptible`` and ``v`` are the state on the first day to simulate.
    ``noise``, if given, is called with the day offset and returns an array
    added to ``u`` before clipping.  Returns ``(deltas, clamped)`` where
    ``clamped`` counts incidence rates that had to be clipped into [0, 1]
    (noise-induced clips below zero are not counted).
    """
    g = as_matrix(g)
    s = np.array(susceptible, dtype=float)
    v = np.array(v, dtype=float)
    out = np.zeros((horizon, s.shape[0]))
    clamped = 0
    keep = 1.0 - beta
    for k in range(horizon):
        u = g @ v
        clamped += int(np.count_nonzero(u > 1.0))
        if noise is not None:
            u = u + noise(k)
        u = np.clip(u, 0.0, 1.0)
        d = u * s
        out[k] = d
        s = s - d
        v = keep * v + d
    return out, clamped


def simulate_outbreak(
    g,
    pop: Metapopulation,
    init: OutbreakSeries,
    horizon: int,
    beta: float | None = None,
) -> OutbreakSeries:
    """Extend an observed prefix by ``horizon`` simulated days using network ``g``."""
    g = as_matrix(g)
    check_square(g, pop.n, "network")
    init.check_against(pop)
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    beta = init.beta if beta is None else float(beta)
    prefix = init.deltas
    s0 = pop.populations - prefix.sum(axis=0)
    v0 = _infectious_mass(np.vstack([prefix, np.zeros((1, pop.n))]), beta)[-1]
    new, clamped = propagate(g, s0, v0, beta, horizon)
    if clamped:
        msg = f"{clamped} incidence rates exceeded 1 and were clipped"
        log.warning(msg)
        warnings.warn(msg, ClampWarning, stacklevel=2)
    return OutbreakSeries(np.vstack([prefix, new]), beta=beta, day0=init.day0)
