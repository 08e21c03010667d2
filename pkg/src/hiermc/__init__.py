"""Bayesian hierarchical models for measurement error in self-reported energy intake."""

from .data_io import (
    DataError,
    SimEnergyConfig,
    SimLogLogConfig,
    load_csv,
    read_samples,
    simulate_energy,
    simulate_loglog,
    write_csv,
    write_samples,
)
from .diagnostics import ConvergenceReport, bgr_statistic, check_convergence, summarize
from .mcmc import (
    PosteriorSamples,
    SamplerConfig,
    SamplerFault,
    gibbs_sweep,
    run_chain,
    run_multi,
    slice_sample_block,
    slice_sample_scalar,
)
from .model_spec import (
    Dataset,
    Effect,
    EffectPrior,
    Family,
    ModelSpec,
    ParameterState,
    PriorConfig,
    linear_predictor,
    log_joint,
    log_likelihood,
    log_prior,
)
from .selection import FitReport, build_report, compare, dic, mspe, predictive_residuals
from .stats_core import DomainError, RngStream, gamma_logpdf, normal_logpdf, normal_quantile

__all__ = [
    "DataError",
    "SimEnergyConfig",
    "SimLogLogConfig",
    "load_csv",
    "read_samples",
    "simulate_energy",
    "simulate_loglog",
    "write_csv",
    "write_samples",
    "ConvergenceReport",
    "bgr_statistic",
    "check_convergence",
    "summarize",
    "PosteriorSamples",
    "SamplerConfig",
    "SamplerFault",
    "gibbs_sweep",
    "run_chain",
    "run_multi",
    "slice_sample_block",
    "slice_sample_scalar",
    "Dataset",
    "Effect",
    "EffectPrior",
    "Family",
    "ModelSpec",
    "ParameterState",
    "PriorConfig",
    "linear_predictor",
    "log_joint",
    "log_likelihood",
    "log_prior",
    "FitReport",
    "build_report",
    "compare",
    "dic",
    "mspe",
    "predictive_residuals",
    "DomainError",
    "RngStream",
    "gamma_logpdf",
    "normal_logpdf",
    "normal_quantile",
]

__version__ = "0.1.0"
