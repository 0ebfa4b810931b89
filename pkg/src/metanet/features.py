"""Data-prior feature tensors for the regression prior on the network."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import FeatureTensor, Metapopulation
from .errors import (
    DegenerateDistance,
    DegenerateFeature,
    DimensionMismatch,
    MissingCentroid,
    NegativeFeature,
)


def gravity_raw(pop: Metapopulation) -> np.ndarray:
    """Unnormalized gravity volumes ``P_n P_m / D_nm^2`` with a zero diagonal."""
    if pop.centroids is None:
        raise MissingCentroid("gravity feature needs zone centroids")
    diff = pop.centroids[:, None, :] - pop.centroids[None, :, :]
    d2 = np.einsum("nmk,nmk->nm", diff, diff)
    off = ~np.eye(pop.n, dtype=bool)
    if np.any(d2[off] == 0):
        n, m = np.argwhere((d2 == 0) & off)[0]
        raise DegenerateDistance(
            f"zones {pop.zone_ids[n]} and {pop.zone_ids[m]} share a centroid"
        )
    p = pop.populations
    out = np.zeros((pop.n, pop.n))
    out[off] = (np.outer(p, p)[off]) / d2[off]
    return out


def gravity_feature(pop: Metapopulation) -> np.ndarray:
    """Gravity-model visitor volumes between zones, scaled so the maximum is 1."""
    raw = gravity_raw(pop)
    top = raw.max()
    return raw / top if top > 0 else raw


def self_feature(n: int) -> np.ndarray:
    """Identity slice: lets the regression prior fit within-zone weights."""
    return np.eye(n)


def build_feature_tensor(slices: Sequence, names: Sequence[str]) -> FeatureTensor:
    """Stack ``N x N`` feature slices, max-normalizing each one."""
    if len(slices) != len(names):
        raise DimensionMismatch(f"{len(slices)} slices but {len(names)} names")
    if not slices:
        raise DimensionMismatch("at least one feature slice is required")
    mats = [np.asarray(s, dtype=float) for s in slices]
    n = mats[0].shape[0]
    out = []
    for name, a in zip(names, mats):
        if a.shape != (n, n):
            raise DimensionMismatch(f"feature {name!r} has shape {a.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(a)):
            raise DegenerateFeature(f"feature {name!r} has non-finite entries")
        if np.any(a < 0):
            raise NegativeFeature(f"feature {name!r} has negative entries")
        top = a.max()
        if top == 0:
            raise DegenerateFeature(f"feature {name!r} is identically zero")
        out.append(a / top)
    return FeatureTensor(np.stack(out, axis=2), tuple(names))


def mode_k_product(x: FeatureTensor, w) -> np.ndarray:
    """Contract the feature axis with the weights: ``out[n, m] = sum_k w_k x[n, m, k]``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (x.k,):
        raise DimensionMismatch(f"weights have shape {w.shape}, expected ({x.k},)")
    return x.x @ w
