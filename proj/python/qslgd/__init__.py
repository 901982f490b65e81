"""Quasistatic Langevin gradient descent for entropy-regularized min-max games."""

from ._core import (
    ConfigError,
    Error,
    Kernel,
    Manifold,
    NoConvergence,
    NumericalBlowUp,
    RunConfig,
    beta_threshold,
    fixed_point,
    free_energy,
    kl_to_uniform,
    ni_error,
    run_experiment,
    run_lgda,
    run_qslgd,
)

__all__ = [
    "ConfigError",
    "Error",
    "Kernel",
    "Manifold",
    "NoConvergence",
    "NumericalBlowUp",
    "RunConfig",
    "beta_threshold",
    "fixed_point",
    "free_energy",
    "kl_to_uniform",
    "ni_error",
    "run_experiment",
    "run_lgda",
    "run_qslgd",
]
