"""Generalized phase retrieval: objective, landscape certificates and a tangent-constrained trust-region solver."""

from .core import (
    GAUSSIAN,
    MASKED_DCT,
    MeasurementEnsemble,
    PhaseAlignment,
    align_phase,
    estimate_norm_and_radius,
    gen_gaussian_ensemble,
    gen_masked_dct_ensemble,
    random_ball_init,
    relative_error,
)
from .kernels import BACKEND
from .objective import eval_f, hessian_quadratic_form, population_f, wirtinger_grad
from .solver import RunTrace, SolverConfig, gradient_descent, trm_solve
from .trs import RealTrsProblem, build_tangent_basis, solve_trs_exact

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GAUSSIAN",
    "MASKED_DCT",
    "MeasurementEnsemble",
    "PhaseAlignment",
    "RealTrsProblem",
    "RunTrace",
    "SolverConfig",
    "align_phase",
    "build_tangent_basis",
    "estimate_norm_and_radius",
    "eval_f",
    "gen_gaussian_ensemble",
    "gen_masked_dct_ensemble",
    "gradient_descent",
    "hessian_quadratic_form",
    "population_f",
    "random_ball_init",
    "relative_error",
    "solve_trs_exact",
    "trm_solve",
    "wirtinger_grad",
]
