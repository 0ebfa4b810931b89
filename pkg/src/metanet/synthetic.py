"""Synthetic ground truth: zone registries, mobility networks and outbreaks.

Everything here is deterministic given the seed, so generated scenarios can
serve as oracles for the inference and evaluation code.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .core import (
    FeatureTensor,
    InfectionNetwork,
    Metapopulation,
    MobilityVolumes,
    OutbreakSeries,
)
from .dynamics import propagate
from .features import build_feature_tensor, gravity_feature, self_feature

log = logging.getLogger(__name__)


class DeadOutbreakWarning(RuntimeWarning):
    """The generated epidemic produced no cases after the seeding day."""


def _streams(seed: int, k: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def generate_metapopulation(
    n_zones: int,
    seed: int = 0,
    pop_range: tuple[float, float] = (20_000, 100_000),
    extent_km: float = 40.0,
) -> Metapopulation:
    """Zones ``z000, z001, ...`` with uniform integer populations and random centroids."""
    if n_zones < 1:
        raise ValueError("need at least one zone")
    rng = np.random.default_rng(seed)
    lo, hi = pop_range
    pops = np.floor(rng.uniform(lo, hi, n_zones))
    cen = rng.uniform(0.0, extent_km, (n_zones, 2))
    width = max(3, len(str(n_zones - 1)))
    ids = tuple(f"z{k:0{width}d}" for k in range(n_zones))
    return Metapopulation(ids, pops, cen)


def scale_free_topology(n_zones: int, attach_m: int, seed: int) -> nx.Graph:
    if not 1 <= attach_m < n_zones:
        raise ValueError(f"need 1 <= attach_m < n_zones, got attach_m={attach_m}, n_zones={n_zones}")
    return nx.barabasi_albert_graph(n_zones, attach_m, seed=seed)


def _volumes_on_edges(graph: nx.Graph, pop: Metapopulation, scales, rng) -> MobilityVolumes:
    h = np.zeros((pop.n, pop.n))
    for (a, b), scale in zip(sorted(graph.edges()), scales):
        vol = scale * (1.0 - rng.random())  # uniform on (0, scale]
        h[a, b] = h[b, a] = vol
    return MobilityVolumes.from_offdiagonal(h, pop)


def generate_scale_free_mobility(
    pop: Metapopulation,
    attach_m: int = 3,
    volume_scale: float = 1000.0,
    seed: int = 0,
) -> MobilityVolumes:
    """Preferential-attachment visitor network with uniform symmetric volumes."""
    topo_seed, vol_rng = _streams(seed, 2)
    graph = scale_free_topology(pop.n, attach_m, int(topo_seed.integers(2**31)))
    return _volumes_on_edges(graph, pop, [volume_scale] * graph.number_of_edges(), vol_rng)


def generate_modular_mobility(
    pop: Metapopulation,
    n_modules: int = 4,
    p_intra: float = 0.6,
    p_inter: float = 0.02,
    intra_scale: float = 2000.0,
    inter_scale: float = 100.0,
    seed: int = 0,
) -> MobilityVolumes:
    """Community-structured visitor network: dense strong ties inside modules.

    Zones are split into ``n_modules`` contiguous blocks.  Every module is
    chained to the next by at least one weak edge so the network is connected.
    """
    rng_topo, rng_vol = _streams(seed, 2)
    module = np.arange(pop.n) * n_modules // pop.n
    graph = nx.Graph()
    graph.add_nodes_from(range(pop.n))
    scales = {}
    for a in range(pop.n):
        for b in range(a + 1, pop.n):
            same = module[a] == module[b]
            if rng_topo.random() < (p_intra if same else p_inter):
                graph.add_edge(a, b)
                scales[(a, b)] = intra_scale if same else inter_scale
    for k in range(n_modules):
        members = np.flatnonzero(module == k)
        sub = graph.subgraph(members)
        comps = [sorted(c) for c in nx.connected_components(sub)]
        for c1, c2 in zip(comps, comps[1:]):
            graph.add_edge(c1[0], c2[0])
            scales[(min(c1[0], c2[0]), max(c1[0], c2[0]))] = intra_scale
        if k + 1 < n_modules:
            a = int(members[-1])
            b = int(np.flatnonzero(module == k + 1)[0])
            if not graph.has_edge(a, b):
                graph.add_edge(a, b)
                scales[(a, b)] = inter_scale
    edges = sorted(graph.edges())
    return _volumes_on_edges(graph, pop, [scales[e] for e in edges], rng_vol)


def infection_network(h: MobilityVolumes, pop: Metapopulation, alpha: float) -> InfectionNetwork:
    """``g[n, m] = alpha (h[m, n] / P_m + h[n, m] / P_n)``."""
    return InfectionNetwork(alpha * h.contact_matrix(pop))


@dataclass(frozen=True, eq=False)
class SyntheticScenario:
    pop: Metapopulation
    h: MobilityVolumes
    alpha: float
    beta: float
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.h.check_against(self.pop)
        if self.alpha < 0 or not 0 < self.beta <= 1 or self.noise_sigma < 0:
            raise ValueError("need alpha >= 0, 0 < beta <= 1, noise_sigma >= 0")

    @property
    def g_true(self) -> InfectionNetwork:
        return infection_network(self.h, self.pop, self.alpha)


def alpha_for_r0(r0: float, beta: float, pop: Metapopulation) -> float:
    """Infection rate giving within-zone reproduction number ``r0`` at mean zone size."""
    return r0 * beta / float(np.mean(pop.populations))


def make_scenario(
    n_zones: int = 50,
    attach_m: int = 3,
    r0: float = 2.0,
    beta: float = 0.2,
    noise_sigma: float = 0.0,
    volume_scale: float = 5000.0,
    seed: int = 0,
    modular: bool = False,
    **mobility_kw,
) -> SyntheticScenario:
    """Convenience constructor: zones, mobility network and rates from one seed."""
    s_pop, s_mob, s_noise = (int(x) for x in np.random.SeedSequence(seed).generate_state(3))
    pop = generate_metapopulation(n_zones, seed=s_pop)
    if modular:
        h = generate_modular_mobility(pop, seed=s_mob, **mobility_kw)
    else:
        h = generate_scale_free_mobility(pop, attach_m, volume_scale, seed=s_mob)
    return SyntheticScenario(pop, h, alpha_for_r0(r0, beta, pop), beta, noise_sigma, s_noise)


def generate_outbreak(
    scenario: SyntheticScenario,
    t_days: int,
    seed_zones,
    seed: int | None = None,
    alpha: float | None = None,
) -> OutbreakSeries:
    """Simulate ``t_days`` of new cases; day 1 holds the seeded infections.

    From day 2 on, ``u(t) = G v(t)`` plus Gaussian noise of standard
    deviation ``scenario.noise_sigma``; the noisy rate is clipped to [0, 1]
    so that new cases stay between zero and the susceptible count.  The noisy
    counts feed back into the susceptible and infectious states, so the
    returned series satisfies the inference model exactly up to the noise.
    ``alpha`` overrides the scenario's infection rate (e.g. for a second
    outbreak with a different transmissibility).
    """
    if t_days < 1:
        raise ValueError("t_days must be at least 1")
    pop = scenario.pop
    d1 = np.asarray(seed_zones, dtype=float)
    if d1.shape != (pop.n,) or np.any(d1 < 0) or np.any(d1 > pop.populations):
        raise ValueError("seed_zones must give 0 <= initial cases <= P_n for each zone")
    g = infection_network(scenario.h, pop, scenario.alpha if alpha is None else alpha).g
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    sigma = scenario.noise_sigma
    noise = (lambda k: rng.normal(0.0, sigma, pop.n)) if sigma > 0 else None
    rest, _ = propagate(g, pop.populations - d1, d1, scenario.beta, t_days - 1, noise=noise)
    deltas = np.vstack([d1[None, :], rest])
    if t_days > 1 and not np.any(rest > 0):
        msg = "outbreak died out after the seeding day"
        log.warning(msg)
        warnings.warn(msg, DeadOutbreakWarning, stacklevel=2)
    return OutbreakSeries(deltas, beta=scenario.beta)


def mobility_proxy(scenario: SyntheticScenario, noise: float = 0.5, seed: int = 0) -> np.ndarray:
    """Noisy two-way traffic volumes, standing in for taxi or smart-card counts.

    Off-diagonal ``(h[n, m] + h[m, n]) * LogNormal(0, noise)``, symmetric,
    zero diagonal.
    """
    rng = np.random.default_rng(seed)
    h = scenario.h.h.copy()
    np.fill_diagonal(h, 0.0)
    two_way = h + h.T
    z = rng.normal(0.0, noise, two_way.shape)
    mult = np.exp(np.triu(z, 1) + np.triu(z, 1).T)
    return two_way * mult


def scenario_features(
    scenario: SyntheticScenario,
    proxy_noise: float = 0.5,
    seed: int = 0,
    gravity: bool = True,
) -> FeatureTensor:
    """Feature tensor with slices ``self``, ``traffic`` and (optionally) ``gravity``."""
    slices = [self_feature(scenario.pop.n), mobility_proxy(scenario, proxy_noise, seed)]
    names = ["self", "traffic"]
    if gravity and scenario.pop.centroids is not None and scenario.pop.n > 1:
        slices.append(gravity_feature(scenario.pop))
        names.append("gravity")
    return build_feature_tensor(slices, names)
