"""Decentralized stochastic optimization under heavy-tailed gradient noise.

Simulator for n-node first-order methods coupled by a doubly stochastic
mixing matrix, with normalized-momentum tracking as the primary method and
the usual clipping / tracking / adaptive baselines beside it.
"""

from .config import ConfigError, ExperimentConfig, parse_config, serialize_config, validate_config
from .metrics import MetricsTrace, aggregate_traces, fit_rate
from .noise import NoiseSpec, RngStream, empirical_moment, robust_mean, sample, tail_slope
from .objective import (
    Dataset,
    GlobalObjective,
    Oracle,
    QuadraticObjective,
    TukeyObjective,
    build_local_objectives,
    claim1_instance,
    generate_token_dataset,
    partition,
)
from .optim import (
    METHODS,
    Hyper,
    RoundEngine,
    rate_exponent,
    run,
    safe_normalize,
    theorem1_hyper,
    theorem2_hyper,
)
from .topology import (
    Graph,
    MixingMatrix,
    NonPrimitiveError,
    build_graph,
    load_graph,
    make_weights,
    spectral_gap,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "GlobalObjective",
    "Graph",
    "Hyper",
    "METHODS",
    "MetricsTrace",
    "MixingMatrix",
    "NoiseSpec",
    "NonPrimitiveError",
    "Oracle",
    "QuadraticObjective",
    "RngStream",
    "RoundEngine",
    "TukeyObjective",
    "aggregate_traces",
    "build_graph",
    "build_local_objectives",
    "claim1_instance",
    "empirical_moment",
    "fit_rate",
    "generate_token_dataset",
    "load_graph",
    "make_weights",
    "parse_config",
    "partition",
    "rate_exponent",
    "robust_mean",
    "run",
    "safe_normalize",
    "sample",
    "serialize_config",
    "spectral_gap",
    "tail_slope",
    "theorem1_hyper",
    "theorem2_hyper",
    "validate_config",
]
