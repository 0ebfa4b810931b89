"""Domain types shared across the package.

All matrices and series are indexed positionally by zone, in the canonical
order held by :class:`Metapopulation` (zones sorted by ``zone_id``).  Arrays
stored on the types are made read-only at construction.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateZone,
    EmptyMetapopulation,
    InvalidConfig,
    InvalidNetwork,
    InvalidSeries,
    NonPositivePopulation,
)

# Relative slack for comparisons that involve accumulated floating-point sums.
_REL_SLACK = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _arrays_equal(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return a.shape == b.shape and bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class Metapopulation:
    """Zone registry: ids, population sizes and optional planar centroids (km)."""

    zone_ids: tuple[str, ...]
    populations: np.ndarray
    centroids: np.ndarray | None = None

    def __post_init__(self):
        ids = tuple(str(z) for z in self.zone_ids)
        if not ids:
            raise EmptyMetapopulation("a metapopulation needs at least one zone")
        if len(set(ids)) != len(ids):
            dup = sorted({z for z in ids if ids.count(z) > 1})
            raise DuplicateZone(f"duplicate zone ids: {dup}")
        pops = _frozen(self.populations)
        if pops.shape != (len(ids),):
            raise DimensionMismatch(f"expected {len(ids)} populations, got shape {pops.shape}")
        if not np.all(np.isfinite(pops)) or np.any(pops <= 0):
            bad = [ids[i] for i in np.flatnonzero(~(pops > 0))]
            raise NonPositivePopulation(f"populations must be positive (zones {bad})")
        object.__setattr__(self, "zone_ids", ids)
        object.__setattr__(self, "populations", pops)
        if self.centroids is not None:
            cen = _frozen(self.centroids)
            if cen.shape != (len(ids), 2):
                raise DimensionMismatch(f"centroids must be ({len(ids)}, 2), got {cen.shape}")
            object.__setattr__(self, "centroids", cen)

    @property
    def n(self) -> int:
        return len(self.zone_ids)

    @property
    def total(self) -> float:
        return float(self.populations.sum())

    def index(self, zone_id: str) -> int:
        return self.zone_ids.index(zone_id)

    def __eq__(self, other):
        if not isinstance(other, Metapopulation):
            return NotImplemented
        return (
            self.zone_ids == other.zone_ids
            and _arrays_equal(self.populations, other.populations)
            and _arrays_equal(self.centroids, other.centroids)
        )


def validate_metapopulation(records: Iterable[Any]) -> Metapopulation:
    """Build a :class:`Metapopulation` from raw zone records.

    Each record is either a mapping with keys ``zone_id``, ``population`` and
    optionally ``x_km``/``y_km``, or a tuple ``(zone_id, population[, x, y])``.
    Zones are sorted by id to fix the canonical order.  Centroids are kept
    only if every record has them.
    """
    rows = []
    for rec in records:
        if isinstance(rec, Mapping):
            zid, pop = rec["zone_id"], rec["population"]
            x, y = rec.get("x_km"), rec.get("y_km")
        else:
            rec = tuple(rec)
            zid, pop = rec[0], rec[1]
            x, y = (rec[2], rec[3]) if len(rec) >= 4 else (None, None)
        xy = None
        if x not in (None, "") and y not in (None, ""):
            xy = (float(x), float(y))
        rows.append((str(zid), float(pop), xy))
    if not rows:
        raise EmptyMetapopulation("no zone records")
    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        dup = sorted({z for z in ids if ids.count(z) > 1})
        raise DuplicateZone(f"duplicate zone ids: {dup}")
    rows.sort(key=lambda r: r[0])
    centroids = None
    if all(r[2] is not None for r in rows):
        centroids = np.array([r[2] for r in rows])
    return Metapopulation(
        zone_ids=tuple(r[0] for r in rows),
        populations=np.array([r[1] for r in rows]),
        centroids=centroids,
    )


@dataclass(frozen=True, eq=False)
class OutbreakSeries:
    """Daily newly-infected counts, shape ``(T, N)``, plus the recovery rate."""

    deltas: np.ndarray
    beta: float
    day0: _dt.date = _dt.date(2000, 1, 1)

    def __post_init__(self):
        d = _frozen(self.deltas)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise InvalidSeries(f"deltas must be a non-empty (T, N) array, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidSeries("deltas contain non-finite values")
        if np.any(d < 0):
            raise InvalidSeries("deltas must be non-negative")
        beta = float(self.beta)
        if not 0.0 < beta <= 1.0:
            raise InvalidSeries(f"recovery rate beta must be in (0, 1], got {beta}")
        if isinstance(self.day0, str):
            object.__setattr__(self, "day0", _dt.date.fromisoformat(self.day0))
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "beta", beta)

    @property
    def t(self) -> int:
        return self.deltas.shape[0]

    @property
    def n(self) -> int:
        return self.deltas.shape[1]

    @property
    def dates(self) -> list[_dt.date]:
        return [self.day0 + _dt.timedelta(days=k) for k in range(self.t)]

    def check_against(self, pop: Metapopulation) -> None:
        """Raise if the series does not fit ``pop`` (width or cumulative cases)."""
        if self.n != pop.n:
            raise DimensionMismatch(f"series has {self.n} zones, metapopulation has {pop.n}")
        cum = self.deltas.sum(axis=0)
        over = cum > pop.populations * (1 + _REL_SLACK)
        if np.any(over):
            bad = [pop.zone_ids[i] for i in np.flatnonzero(over)]
            raise InvalidSeries(f"cumulative infections exceed population in zones {bad}")

    def prefix(self, days: int) -> "OutbreakSeries":
        if not 1 <= days <= self.t:
            raise InvalidSeries(f"prefix length must be in [1, {self.t}], got {days}")
        return replace(self, deltas=self.deltas[:days])

    def __eq__(self, other):
        if not isinstance(other, OutbreakSeries):
            return NotImplemented
        return (
            self.beta == other.beta
            and self.day0 == other.day0
            and _arrays_equal(self.deltas, other.deltas)
        )


@dataclass(frozen=True, eq=False)
class StateSeries:
    """Incidence rates ``u`` and effective infectious counts ``v``, both ``(T, N)``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u, v = _frozen(self.u), _frozen(self.v)
        if u.ndim != 2 or u.shape != v.shape:
            raise DimensionMismatch(f"u {u.shape} and v {v.shape} must be equal (T, N) arrays")
        if np.any(u < 0) or np.any(u > 1):
            raise InvalidSeries("incidence rates must lie in [0, 1]")
        if np.any(v < 0):
            raise InvalidSeries("infectious counts must be non-negative")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def t(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    def window(self, start: int, stop: int) -> "StateSeries":
        return StateSeries(self.u[start:stop], self.v[start:stop])


@dataclass(frozen=True, eq=False)
class InfectionNetwork:
    """Symmetric non-negative ``(N, N)`` infection network."""

    g: np.ndarray

    def __post_init__(self):
        g = _frozen(self.g)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise InvalidNetwork(f"network must be a square matrix, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidNetwork("network contains non-finite weights")
        if np.any(g < 0):
            raise InvalidNetwork("network weights must be non-negative")
        if not np.array_equal(g, g.T):
            raise InvalidNetwork("network must be exactly symmetric")
        object.__setattr__(self, "g", g)

    @classmethod
    def from_matrix(cls, a) -> "InfectionNetwork":
        """Symmetrize by averaging and clip tiny negatives to zero."""
        a = np.asarray(a, dtype=float)
        sym = (a + a.T) / 2.0
        return cls(np.maximum(sym, 0.0))

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def __eq__(self, other):
        if not isinstance(other, InfectionNetwork):
            return NotImplemented
        return _arrays_equal(self.g, other.g)


@dataclass(frozen=True, eq=False)
class MobilityVolumes:
    """Average daily visitor volumes ``h[n, m]`` from zone n to zone m.

    The diagonal follows the convention ``h[n, n] = P_n / 2``.
    """

    h: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionMismatch(f"mobility must be square, got {h.shape}")
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise InvalidNetwork("mobility volumes must be finite and non-negative")
        object.__setattr__(self, "h", h)

    @classmethod
    def from_offdiagonal(cls, h, pop: Metapopulation) -> "MobilityVolumes":
        h = np.array(h, dtype=float)
        np.fill_diagonal(h, pop.populations / 2.0)
        return cls(h)

    def check_against(self, pop: Metapopulation) -> None:
        if self.h.shape != (pop.n, pop.n):
            raise DimensionMismatch(f"mobility is {self.h.shape}, expected {(pop.n, pop.n)}")
        if not np.allclose(np.diag(self.h), pop.populations / 2.0, rtol=1e-12, atol=0):
            raise InvalidNetwork("mobility diagonal must equal P_n / 2")

    def contact_matrix(self, pop: Metapopulation) -> np.ndarray:
        """``C[n, m] = h[m, n] / P_m + h[n, m] / P_n``; symmetric, unit diagonal."""
        p = pop.populations
        return self.h.T / p[None, :] + self.h / p[:, None]


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Prior features ``x[n, m, k]`` for each zone pair, shape ``(N, N, K)``."""

    x: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        x = _frozen(self.x)
        names = tuple(self.names)
        if x.ndim != 3 or x.shape[0] != x.shape[1]:
            raise DimensionMismatch(f"feature tensor must be (N, N, K), got {x.shape}")
        if len(names) != x.shape[2]:
            raise DimensionMismatch(f"{x.shape[2]} feature slices but {len(names)} names")
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise InvalidNetwork("feature values must be finite and non-negative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[2]


@dataclass(frozen=True)
class StepPolicy:
    """Step-size rule for the gradient updates.

    ``kind="backtracking"`` uses an Armijo test with parameters ``init``,
    ``shrink`` and ``c``; ``kind="fixed"`` always uses ``step``.  Under
    backtracking, ``refine`` is the number of splitting iterations that
    refine each network step (0 gives plain projected gradient steps).
    """

    kind: str = "backtracking"
    init: float = 1.0
    shrink: float = 0.5
    c: float = 1e-4
    step: float = 1e-3
    refine: int = 10

    def __post_init__(self):
        if self.kind not in ("backtracking", "fixed"):
            raise InvalidConfig(f"unknown step policy {self.kind!r}")
        if self.kind == "fixed" and not self.step > 0:
            raise InvalidConfig("fixed step must be positive")
        if self.kind == "backtracking":
            if not self.init > 0 or not 0 < self.shrink < 1 or not 0 < self.c < 1:
                raise InvalidConfig("backtracking needs init > 0, 0 < shrink < 1, 0 < c < 1")
            if int(self.refine) < 0:
                raise InvalidConfig("refine must be non-negative")

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "step": self.step}
        return {"kind": "backtracking", "init": self.init, "shrink": self.shrink, "c": self.c,
                "refine": self.refine}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StepPolicy":
        return cls(**{k: d[k] for k in ("kind", "init", "shrink", "c", "step", "refine") if k in d})


# JSON key -> attribute name (``lambda`` is reserved in Python).
_CONFIG_KEYS = {"lambda": "lam"}


@dataclass(frozen=True)
class InferenceConfig:
    lam: float = 0.0
    eta: float = 0.0
    mu: float = 0.0
    l1: float = 0.0
    l2: float = 0.0
    max_iters: int = 5000
    tol: float = 1e-7
    step_policy: StepPolicy = field(default_factory=StepPolicy)
    epsilon_deg: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("lam", "eta", "mu", "l1", "l2"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise InvalidConfig(f"{name} must be a finite non-negative number, got {val}")
        if int(self.max_iters) < 1:
            raise InvalidConfig("max_iters must be positive")
        if not self.tol > 0:
            raise InvalidConfig("tol must be positive")
        if not self.epsilon_deg > 0:
            raise InvalidConfig("epsilon_deg must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        if isinstance(self.step_policy, Mapping):
            object.__setattr__(self, "step_policy", StepPolicy.from_dict(self.step_policy))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            key = {v: k for k, v in _CONFIG_KEYS.items()}.get(f.name, f.name)
            val = getattr(self, f.name)
            out[key] = val.to_dict() if isinstance(val, StepPolicy) else val
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InferenceConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, val in d.items():
            name = _CONFIG_KEYS.get(key, key)
            if name not in known:
                raise InvalidConfig(f"unknown config key {key!r}")
            kwargs[name] = val
        return cls(**kwargs)


def check_square(a: np.ndarray, n: int, what: str = "matrix") -> None:
    if a.shape != (n, n):
        raise DimensionMismatch(f"{what} has shape {a.shape}, expected {(n, n)}")


def as_matrix(g) -> np.ndarray:
    """Accept an :class:`InfectionNetwork` or a plain array."""
    if isinstance(g, InfectionNetwork):
        return g.g
    return np.asarray(g, dtype=float)


__all__: Sequence[str] = [
    "Metapopulation",
    "validate_metapopulation",
    "OutbreakSeries",
    "StateSeries",
    "InfectionNetwork",
    "MobilityVolumes",
    "FeatureTensor",
    "StepPolicy",
    "InferenceConfig",
]
