"""Priors over reversible Markov chains built from hierarchical gamma weights,
with a full hidden Markov model, MCMC inference and held-out prediction."""

from .chain import (
    detailed_balance_residual,
    path_log_likelihood,
    simulate,
    transition_counts,
    tv_convergence_curve,
)
from .emissions import (
    GaussianEmissions,
    GaussianParams,
    MultinomialEmissions,
    MultinomialParams,
    PoissonEmissions,
    PoissonParams,
    make_emission_model,
)
from .ffbs import ffbs, forward_filter
from .gibbs import (
    HMCConfig,
    NUTSConfig,
    SamplerConfig,
    SamplerError,
    SamplerState,
    SliceConfig,
    Trace,
    gibbs_sweep,
    init_state,
    log_joint,
    log_posterior_J,
    run_sampler,
    sample_base_weights_posterior,
    sample_concentrations,
    sample_prior_state,
    sample_weight_matrix_posterior,
    weight_matrix_target,
)
from .hmc import hmc_step, nuts_step
from .predict import PredictionReport, predictive_density, report
from .prior import (
    Hyperparams,
    WeightMatrix,
    log_prior_base_weights,
    log_prior_weight_matrix,
    normalize_rows,
    sample_base_weights,
    sample_weight_matrix,
    stationary_distribution,
)
from .slice_sampling import slice_sample

__version__ = "0.1.0"

__all__ = [
    "GaussianEmissions",
    "GaussianParams",
    "HMCConfig",
    "Hyperparams",
    "MultinomialEmissions",
    "MultinomialParams",
    "NUTSConfig",
    "PoissonEmissions",
    "PoissonParams",
    "PredictionReport",
    "SamplerConfig",
    "SamplerError",
    "SamplerState",
    "SliceConfig",
    "Trace",
    "WeightMatrix",
    "detailed_balance_residual",
    "ffbs",
    "forward_filter",
    "gibbs_sweep",
    "hmc_step",
    "init_state",
    "log_joint",
    "log_posterior_J",
    "log_prior_base_weights",
    "log_prior_weight_matrix",
    "make_emission_model",
    "normalize_rows",
    "nuts_step",
    "path_log_likelihood",
    "predictive_density",
    "report",
    "run_sampler",
    "sample_base_weights",
    "sample_base_weights_posterior",
    "sample_concentrations",
    "sample_prior_state",
    "sample_weight_matrix",
    "sample_weight_matrix_posterior",
    "simulate",
    "slice_sample",
    "stationary_distribution",
    "transition_counts",
    "tv_convergence_curve",
    "weight_matrix_target",
]
