"""Koopman-based system identification and model predictive control."""

from ._core import (
    KoopmpcError,
    Model,
    MpcConfig,
    __version__,
    closed_loop_vanderpol,
    derive_seed,
    fit_delay,
    fit_dmdc,
    fit_edmdc,
    generate_training,
    identify_eigenfunction,
    invariant_density,
    mpc_step,
    parse_config,
    run_benchmark,
    simulate_vanderpol,
    solve_qp,
    ulam_vanderpol,
    vanderpol_rhs,
)

__all__ = [
    "KoopmpcError",
    "Model",
    "MpcConfig",
    "__version__",
    "closed_loop_vanderpol",
    "derive_seed",
    "fit_delay",
    "fit_dmdc",
    "fit_edmdc",
    "generate_training",
    "identify_eigenfunction",
    "invariant_density",
    "mpc_step",
    "parse_config",
    "run_benchmark",
    "simulate_vanderpol",
    "solve_qp",
    "ulam_vanderpol",
    "vanderpol_rhs",
]
