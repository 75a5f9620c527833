"""Simulation and verification toolkit for diffusion in narrow tubes with
abrupt width changes, and for the glued 1d diffusion that emerges as the
tube collapses.
"""

__version__ = "0.1.0"

from .ctmc import (
    CtmcExitSolve,
    CtmcModel,
    build_ctmc,
    ctmc_exit_batch,
    ctmc_marginal_batch,
    default_hat_step_size,
    exit_stats_linear_solve,
    hat_exit_batch,
    hat_marginal_batch,
    make_ctmc_grid,
    simulate_ctmc,
    simulate_hat_process,
)
from .geometry import (
    AssumptionReport,
    CrossSectionFamily,
    ExampleFamilySpec,
    build_example_family,
    check_assumptions,
    eval_cross_section,
    inward_normal,
)
from .oracles import (
    StripExitField,
    fd_strip_exit_time,
    green_bvp_solve,
    ks_statistic,
)
from .resolvent import (
    DomainTestFunction,
    build_domain_test_function,
    resolvent_check,
)
from .scale_speed import (
    GluingParameters,
    ScaleSpeedTable,
    compute_scale_speed_eps,
    default_table_grid,
    feature_breakpoints,
    gluing_parameters,
    hat_exit_time_formula,
    limiting_scale_speed,
)
from .simulate2d import (
    ExitObservation,
    MonteCarloSummary,
    ReflectedPathState,
    local_time_diagnostic,
    mc_exit_statistics,
    sample_exit,
    sample_marginal,
    step,
)

__all__ = [
    "__version__",
    "AssumptionReport",
    "CrossSectionFamily",
    "CtmcExitSolve",
    "CtmcModel",
    "DomainTestFunction",
    "ExampleFamilySpec",
    "ExitObservation",
    "GluingParameters",
    "MonteCarloSummary",
    "ReflectedPathState",
    "ScaleSpeedTable",
    "StripExitField",
    "build_ctmc",
    "build_domain_test_function",
    "build_example_family",
    "check_assumptions",
    "compute_scale_speed_eps",
    "ctmc_exit_batch",
    "ctmc_marginal_batch",
    "default_hat_step_size",
    "default_table_grid",
    "eval_cross_section",
    "exit_stats_linear_solve",
    "fd_strip_exit_time",
    "feature_breakpoints",
    "gluing_parameters",
    "green_bvp_solve",
    "hat_exit_batch",
    "hat_exit_time_formula",
    "hat_marginal_batch",
    "inward_normal",
    "ks_statistic",
    "local_time_diagnostic",
    "make_ctmc_grid",
    "mc_exit_statistics",
    "resolvent_check",
    "sample_exit",
    "sample_marginal",
    "simulate_ctmc",
    "simulate_hat_process",
    "step",
]
