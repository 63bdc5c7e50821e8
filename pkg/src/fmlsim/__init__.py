"""Deterministic simulator for federated meta-learning over a wireless network."""

from .errors import (
    ConfigurationError,
    InfeasibleAllocationError,
    InvalidInputError,
    NumericalError,
)
from .harness import (
    BoundReport,
    ExperimentConfig,
    RoundMetrics,
    run,
    run_nufm,
    run_wireless,
    sweep,
    theorem1_bound,
)
from .metacore import (
    Batch,
    LogisticModel,
    LossModel,
    MetaHyper,
    QuadraticModel,
    SmoothnessConstants,
    exact_meta_gradient,
    meta_gradient,
)
from .selection import aggregate, select_top_k, shifted_scores
from .tasks import Device, PopulationSpec, generate_population, population_constants
from .ural import Sp1Solution, Sp2Solution, ives, solve_sp1, ural
from .wireless import (
    Allocation,
    ComputeProfile,
    EnvironmentSpec,
    NetworkConfig,
    RadioProfile,
    round_totals,
    sample_environment,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "Batch",
    "BoundReport",
    "ComputeProfile",
    "ConfigurationError",
    "Device",
    "EnvironmentSpec",
    "ExperimentConfig",
    "InfeasibleAllocationError",
    "InvalidInputError",
    "LogisticModel",
    "LossModel",
    "MetaHyper",
    "NetworkConfig",
    "NumericalError",
    "PopulationSpec",
    "QuadraticModel",
    "RadioProfile",
    "RoundMetrics",
    "SmoothnessConstants",
    "Sp1Solution",
    "Sp2Solution",
    "aggregate",
    "exact_meta_gradient",
    "generate_population",
    "ives",
    "meta_gradient",
    "population_constants",
    "round_totals",
    "run",
    "run_nufm",
    "run_wireless",
    "sample_environment",
    "select_top_k",
    "shifted_scores",
    "solve_sp1",
    "sweep",
    "theorem1_bound",
    "ural",
]
