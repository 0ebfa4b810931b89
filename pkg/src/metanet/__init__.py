"""Inference of intra-city infection networks from zone-level case counts.

The package estimates a symmetric, non-negative network of infection rates
between city zones from daily new-case series, using a least-squares fit of
a network SIR recursion regularized by a power-law degree prior and a
regression prior on mobility features.  It also predicts and simulates
outbreaks on inferred networks and ranks zones by importance.
"""
from .core import (
    FeatureTensor,
    InferenceConfig,
    InfectionNetwork,
    Metapopulation,
    MobilityVolumes,
    OutbreakSeries,
    StateSeries,
    StepPolicy,
    validate_metapopulation,
)
from .dynamics import (
    SirState,
    integrate_sir,
    propagate,
    reconstruct_sir,
    simulate_outbreak,
    states_from_deltas,
    step_metapop_sir,
    step_single_sir,
)
from .errors import MetanetError
from .evaluation import (
    cosine_similarity,
    degree_distribution,
    mape,
    pagerank_importance,
    prediction_report,
    simulate_comparison,
)
from .features import build_feature_tensor, gravity_feature, mode_k_product
from .inference import InferenceResult, fit_alpha_adjustment, spgd_infer
from .synthetic import SyntheticScenario, generate_outbreak, make_scenario

__version__ = "0.1.0"

__all__ = [
    "FeatureTensor",
    "InferenceConfig",
    "InferenceResult",
    "InfectionNetwork",
    "Metapopulation",
    "MetanetError",
    "MobilityVolumes",
    "OutbreakSeries",
    "SirState",
    "StateSeries",
    "StepPolicy",
    "SyntheticScenario",
    "build_feature_tensor",
    "cosine_similarity",
    "degree_distribution",
    "fit_alpha_adjustment",
    "generate_outbreak",
    "gravity_feature",
    "integrate_sir",
    "make_scenario",
    "mape",
    "mode_k_product",
    "pagerank_importance",
    "prediction_report",
    "propagate",
    "reconstruct_sir",
    "simulate_comparison",
    "simulate_outbreak",
    "spgd_infer",
    "states_from_deltas",
    "step_metapop_sir",
    "step_single_sir",
    "validate_metapopulation",
]
