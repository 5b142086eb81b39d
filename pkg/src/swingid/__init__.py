"""Inertia and damping identification for descriptor-form swing dynamics."""

__version__ = "0.1.0"

from .analysis import (
    MonteCarloReport,
    empirical_estimator_covariance,
    error_metrics,
    predicted_covariance,
    relative_errors,
    run_monte_carlo,
    trial_seed,
)
from .config import ExperimentConfig, bundled_scenarios, load_config
from .dynamics import (
    DescriptorSystem,
    GeneratorKind,
    GeneratorParams,
    Trajectory,
    assemble_descriptor,
    residual,
    simulate,
)
from .errors import *  # noqa: F401,F403
from .estimators import (
    DataMatrixPair,
    EstimationResult,
    build_data_matrix,
    estimate,
    estimate_constrained,
    estimate_naive,
    estimate_per_node,
    estimate_unconstrained,
)
from .netmodel import Laplacian, NetworkTopology, build_laplacian, generator_laplacian, kron_reduce
