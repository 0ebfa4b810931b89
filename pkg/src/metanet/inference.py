"""Network inference objectives and the alternating proximal gradient solver.

The full objective over a symmetric non-negative network ``G`` and
non-negative feature weights ``w`` is::

    J = sum_t ||u(t) - G v(t)||^2                      (data fit)
      + lam * sum_n ln(eps + sum_{m != n} g_nm)        (power-law degree prior)
      + eta * ||G - X x_k w||_F^2 + mu * ||w||^2       (data prior)
      + l1 * ||G||_1 + l2 * ||G||_F^2                  (baseline regularizers)

Each model variant switches a subset of the weights on; the others are
forced to zero.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import FeatureTensor, InferenceConfig, InfectionNetwork, StateSeries, as_matrix
from .errors import DimensionMismatch, Diverged, InvalidConfig, NoSignal, NumericalBlowup
from .features import mode_k_product

log = logging.getLogger(__name__)

VARIANTS = ("basic", "plpri", "datpri", "l1pri", "l2pri", "d2pri")

# Regularization weights each variant may use.
ACTIVE_WEIGHTS = {
    "basic": (),
    "plpri": ("lam",),
    "datpri": ("eta", "mu"),
    "l1pri": ("l1",),
    "l2pri": ("l2",),
    "d2pri": ("lam", "eta", "mu"),
}
_ALL_WEIGHTS = ("lam", "eta", "mu", "l1", "l2")

# Consecutive iterations above the best objective so far tolerated under a
# fixed step before giving up.
DIVERGENCE_GUARD = 20
# An objective below this fraction of sum(u^2) is a fit at rounding level.
_ZERO_FIT = 1e-20
_MAX_BACKTRACKS = 80
# Penalty of the splitting refinement, relative to the largest data curvature.
_SPLIT_RHO = 1e-7


@dataclass(frozen=True, eq=False)
class InferenceResult:
    g: InfectionNetwork
    w: np.ndarray | None
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    variant: str = "d2pri"

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iter", "objective"])
            for k, val in enumerate(self.objective_trace):
                wr.writerow([k, format(val, ".17g")])


def config_for_variant(cfg: InferenceConfig, variant: str) -> InferenceConfig:
    """Zero every regularization weight the variant does not use."""
    if variant not in ACTIVE_WEIGHTS:
        raise InvalidConfig(f"unknown variant {variant!r}; choose from {VARIANTS}")
    active = ACTIVE_WEIGHTS[variant]
    return replace(cfg, **{k: 0.0 for k in _ALL_WEIGHTS if k not in active})


def inactive_weights_set(cfg: InferenceConfig, variant: str) -> list[str]:
    """Names of non-zero weights the variant would ignore."""
    active = ACTIVE_WEIGHTS[variant]
    return [k for k in _ALL_WEIGHTS if k not in active and getattr(cfg, k) != 0]


def _check(g: np.ndarray, states: StateSeries) -> None:
    if g.shape != (states.n, states.n):
        raise DimensionMismatch(f"network is {g.shape}, states have {states.n} zones")


def residuals(g, states: StateSeries) -> np.ndarray:
    """``(T, N)`` array of ``G v(t) - u(t)``.

    Days on which no zone has any infectious mass (typically the seeding
    day) are set to zero: ``G v(t)`` vanishes there for every ``G``, so their
    cases cannot be explained by the network and carry no information on it.
    """
    g = as_matrix(g)
    _check(g, states)
    r = states.v @ g.T - states.u
    r[~states.v.any(axis=1)] = 0.0
    return r


def objective_j1(g, states: StateSeries) -> float:
    """Squared prediction error of incidence rates, summed over days and zones."""
    r = residuals(g, states)
    return float(np.sum(r * r))


def out_degrees(g: np.ndarray) -> np.ndarray:
    """Weighted out-degree of each node, self-loop excluded."""
    return g.sum(axis=1) - np.diag(g)


def _regression_gap(g, w, x):
    return g - mode_k_product(x, w)


def objective_full(g, w, states: StateSeries, x: FeatureTensor | None, cfg: InferenceConfig) -> float:
    """Value of the full regularized objective (see module docstring)."""
    g = as_matrix(g)
    val = objective_j1(g, states)
    if cfg.lam:
        val += cfg.lam * float(np.sum(np.log(cfg.epsilon_deg + out_degrees(g))))
    if cfg.eta:
        gap = _regression_gap(g, w, x)
        val += cfg.eta * float(np.sum(gap * gap))
    if cfg.mu:
        w = np.asarray(w, dtype=float)
        val += cfg.mu * float(w @ w)
    if cfg.l1:
        val += cfg.l1 * float(np.abs(g).sum())
    if cfg.l2:
        val += cfg.l2 * float(np.sum(g * g))
    return val


def grad_g(g, w, states, x, cfg: InferenceConfig, symmetrize: bool = True, include_l1: bool = False):
    """Gradient of the objective with respect to the network entries.

    With ``symmetrize`` the result is ``(D + D^T) / 2``, the gradient along
    the space of symmetric matrices.  The L1 term is non-smooth and is handled
    by the solver's proximal step; ``include_l1`` adds its derivative for
    strictly positive entries.
    """
    g = as_matrix(g)
    r = residuals(g, states)
    d = 2.0 * (r.T @ states.v)
    if cfg.lam:
        pen = cfg.lam / (cfg.epsilon_deg + out_degrees(g))
        d = d + pen[:, None] * (1.0 - np.eye(g.shape[0]))
    if cfg.eta:
        d = d + 2.0 * cfg.eta * _regression_gap(g, w, x)
    if cfg.l2:
        d = d + 2.0 * cfg.l2 * g
    if include_l1 and cfg.l1:
        d = d + cfg.l1 * np.sign(g)
    if not np.all(np.isfinite(d)):
        raise NumericalBlowup("network gradient is not finite")
    if symmetrize:
        d = (d + d.T) / 2.0
    return d


def grad_w(g, w, x: FeatureTensor, cfg: InferenceConfig) -> np.ndarray:
    """Gradient of the objective with respect to the feature weights."""
    w = np.asarray(w, dtype=float)
    if w.shape != (x.k,):
        raise DimensionMismatch(f"weights have shape {w.shape}, expected ({x.k},)")
    out = 2.0 * cfg.mu * w
    if cfg.eta:
        gap = _regression_gap(as_matrix(g), w, x)
        out = out - 2.0 * cfg.eta * np.einsum("nmk,nm->k", x.x, gap)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowup("weight gradient is not finite")
    return out


def _data_scale(states: StateSeries) -> float:
    """Best constant ``c`` in ``u(t) ~ c * 1 1^T v(t)``; sets the initial network scale."""
    n = states.n
    su = states.u.sum(axis=1)
    sv = states.v.sum(axis=1)
    den = n * float(sv @ sv)
    c = float(su @ sv) / den if den > 0 else 0.0
    return c if np.isfinite(c) and c > 0 else 1.0 / n


def initial_point(states: StateSeries, k: int, seed: int):
    """Random strictly positive start: symmetric network and feature weights."""
    rng = np.random.default_rng(seed)
    n = states.n
    c = _data_scale(states)
    a = 1.0 - rng.random((n, n))
    g = c * (np.triu(a) + np.triu(a, 1).T)
    w = c * (1.0 - rng.random(k)) if k else None
    return g, w


def _symmetric(g: np.ndarray) -> np.ndarray:
    return np.triu(g) + np.triu(g, 1).T


def gradient_metric(states: StateSeries, x: FeatureTensor | None, cfg: InferenceConfig):
    """Diagonal step scaling for the network and weight updates.

    Entry ``(n, m)`` of the network scaling is the inverse curvature of the
    quadratic terms along the symmetric coordinate ``g_nm = g_mn``, i.e.
    ``1 / (a_n + a_m + 2 eta + 2 l2)`` with ``a_n = sum_t v_n(t)^2``.  Days
    and zones differ in infectious mass by orders of magnitude, and without
    this scaling the plain gradient step stalls.
    """
    a = np.sum(states.v * states.v, axis=0)
    curv = a[:, None] + a[None, :] + 2.0 * (cfg.eta + cfg.l2)
    floor = max(float(curv.max()), 1.0) * 1e-12
    dg = 1.0 / np.maximum(curv, floor)
    dw = None
    if x is not None:
        cw = cfg.eta * np.einsum("nmk,nmk->k", x.x, x.x) + cfg.mu
        dw = 1.0 / np.maximum(cw, max(float(cw.max()), 1.0) * 1e-12)
    return dg, dw


class _Solver:
    """State of one SPGD run: objective pieces, step scalings and step sizes."""

    def __init__(self, states, x, cfg):
        self.states, self.x, self.cfg = states, x, cfg
        self.policy = cfg.step_policy
        self.dg, self.dw = gradient_metric(states, x, cfg)
        self.t_g = self.policy.init if self.policy.kind == "backtracking" else self.policy.step
        self.t_w = self.t_g
        self.refine = int(self.policy.refine) if self.policy.kind == "backtracking" else 0
        self.m = states.v.T @ states.v
        self.shift = 2.0 * (cfg.eta + cfg.l2)
        if self.refine:
            self._setup_splitting()

    def value(self, g, w):
        return objective_full(g, w, self.states, self.x, self.cfg)

    def _l1(self, g):
        return self.cfg.l1 * float(np.abs(g).sum()) if self.cfg.l1 else 0.0

    def _prox_g(self, z, t):
        # Soft threshold (in the scaled metric) followed by the clip at zero.
        if self.cfg.l1:
            z = z - t * self.dg * self.cfg.l1
        return np.maximum(z, 0.0)

    @staticmethod
    def _clip(z, t):
        return np.maximum(z, 0.0)

    def _search(self, x0, f0, grad, scale, t, prox, evaluate, nonsmooth):
        """Armijo backtracking along the projection arc; returns ``(x, f, t)``."""
        pol = self.policy
        direction = scale * grad
        if pol.kind == "fixed":
            x1 = prox(x0 - pol.step * direction, pol.step)
            return x1, evaluate(x1), pol.step
        h0 = nonsmooth(x0)
        for _ in range(_MAX_BACKTRACKS):
            x1 = prox(x0 - t * direction, t)
            f1 = evaluate(x1)
            decrease = float(np.sum(grad * (x1 - x0))) + nonsmooth(x1) - h0
            if np.isfinite(f1) and f1 <= f0 + pol.c * decrease:
                # Start the next search one notch larger.
                return x1, f1, t / pol.shrink
            t *= pol.shrink
        return x0, f0, t

    def _setup_splitting(self):
        # Eigenbasis of the data curvature: the quadratic model's Hessian acts
        # on a symmetric E as E M + M E, which is diagonal in this basis.
        self.lam_m, self.q = np.linalg.eigh(self.m)
        self.lam_m = np.maximum(self.lam_m, 0.0)
        b = self.states.u.T @ self.states.v
        self.c = b + b.T
        self.rho = max(float(self.lam_m[-1]), 1e-300) * _SPLIT_RHO
        self.z = None
        self.y = None

    def _linear_term(self, g, w):
        """Right-hand side of the convex model's stationarity condition at ``g``."""
        lin = self.c.copy()
        cfg = self.cfg
        if cfg.eta:
            lin += 2.0 * cfg.eta * mode_k_product(self.x, w)
        if cfg.lam:
            pen = cfg.lam / (cfg.epsilon_deg + out_degrees(g))
            p = pen[:, None] * (1.0 - np.eye(g.shape[0]))
            lin -= (p + p.T) / 2.0
        if cfg.l1:
            lin -= cfg.l1
        return lin

    def _refine(self, g, w, f):
        """Warm-started splitting iterations on a convex model of the objective.

        The model keeps every quadratic term and linearizes the degree prior,
        which is concave, so it bounds the objective from above around ``g``.
        The iterates alternate an exact solve of the unconstrained model with a
        projection onto the non-negative matrices; the projected point replaces
        ``g`` only when it lowers the true objective.
        """
        if self.z is None:
            self.z, self.y = g.copy(), np.zeros_like(g)
        lin = self.q.T @ self._linear_term(g, w) @ self.q
        lam = self.lam_m
        z, y = self.z, self.y
        den = lam[:, None] + lam[None, :] + self.shift + self.rho
        for _ in range(self.refine):
            r = lin + self.rho * (self.q.T @ (z - y) @ self.q)
            xs = self.q @ (r / den) @ self.q.T
            xs = (xs + xs.T) / 2.0
            z = np.maximum(xs + y, 0.0)
            y = y + xs - z
        self.z, self.y = z, y
        f1 = self.value(z, w)
        if np.isfinite(f1) and f1 < f:
            return z.copy(), f1
        return g, f

    def step_g(self, g, w, f):
        grad = grad_g(g, w, self.states, self.x, self.cfg)
        # g, grad and the scaling are exactly symmetric, so the update is too.
        g1, f1, self.t_g = self._search(
            g, f, grad, self.dg, self.t_g, self._prox_g, lambda z: self.value(z, w), self._l1
        )
        if self.refine:
            g1, f1 = self._refine(g1, w, f1)
        return g1, f1

    def step_w(self, g, w, f):
        grad = grad_w(g, w, self.x, self.cfg)
        w1, f1, self.t_w = self._search(
            w, f, grad, self.dw, self.t_w, self._clip, lambda z: self.value(g, z), lambda z: 0.0
        )
        return w1, f1


def spgd_infer(
    states: StateSeries,
    x: FeatureTensor | None = None,
    cfg: InferenceConfig | None = None,
    variant: str = "d2pri",
    g0=None,
    w0=None,
) -> InferenceResult:
    """Infer the infection network by alternating projected gradient steps.

    Each iteration takes one proximal gradient step on ``G`` (clipped at zero
    and kept symmetric), refined by a few splitting iterations on a convex
    model of the objective, followed, when the data prior is active, by one
    gradient step on ``w``.  Every accepted update lowers the objective.
    Stops when the relative change of the objective drops below ``cfg.tol``,
    when the objective reaches rounding level, or after ``cfg.max_iters``
    iterations.
    """
    cfg = config_for_variant(cfg or InferenceConfig(), variant)
    uses_x = variant in ("datpri", "d2pri")
    if uses_x and x is None:
        raise InvalidConfig(f"variant {variant!r} needs a feature tensor")
    if uses_x and x.n != states.n:
        raise DimensionMismatch(f"features cover {x.n} zones, states have {states.n}")
    if states.t < 1:
        raise ValueError("empty state series")

    k = x.k if uses_x else 0
    g_init, w_init = initial_point(states, k, cfg.seed)
    g = g_init if g0 is None else _symmetric(np.maximum(as_matrix(g0).astype(float), 0.0))
    w = w_init if w0 is None or not uses_x else np.maximum(np.asarray(w0, dtype=float), 0.0)
    _check(g, states)

    solver = _Solver(states, x if uses_x else None, cfg)
    f = solver.value(g, w)
    trace = [f]
    converged = False
    floor = _ZERO_FIT * float(np.sum(states.u * states.u))
    best = f
    rises = 0
    it = 0
    for it in range(1, int(cfg.max_iters) + 1):
        f_prev = f
        g, f = solver.step_g(g, w, f)
        if uses_x:
            w, f = solver.step_w(g, w, f)
        trace.append(f)
        if not np.isfinite(f):
            raise Diverged(f"objective became non-finite at iteration {it}", trace)
        if f > best:
            rises += 1
            if rises > DIVERGENCE_GUARD:
                raise Diverged(f"objective stayed above its best value for {rises} iterations", trace)
        else:
            best, rises = f, 0
        if abs(f_prev - f) <= cfg.tol * abs(f_prev) or f <= floor:
            converged = True
            break
    log.debug("%s: %d iterations, objective %.6g, converged=%s", variant, it, f, converged)
    return InferenceResult(
        g=InfectionNetwork(g),
        w=np.asarray(w) if uses_x else None,
        objective_trace=tuple(trace),
        iterations=it,
        converged=converged,
        variant=variant,
    )


def fit_alpha_adjustment(g_ref, states: StateSeries) -> float:
    """Scalar ``a >= 0`` minimizing ``sum_t ||u(t) - a G v(t)||^2`` (closed form)."""
    g = as_matrix(g_ref)
    _check(g, states)
    pred = states.v @ g.T
    den = float(np.sum(pred * pred))
    if den == 0:
        raise NoSignal("G v(t) vanishes on every day; the scale is unidentifiable")
    return max(0.0, float(np.sum(states.u * pred)) / den)
