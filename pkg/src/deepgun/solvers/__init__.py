"""Numerical solvers used by the unmixing loop."""

from .bfgs import BfgsResult, bfgs_minimize, line_search_wolfe
from .fcls import fcls
from .latent import PackedDecoders, latent_objective, solve_z_step
from .simplex import project_simplex
from .tv import (AdmmConfig, AdmmInfo, CGConvergenceError, l21, solve_a_step,
                 spatial_gradients, spatial_gradients_adjoint)

__all__ = [
    "AdmmConfig", "AdmmInfo", "BfgsResult", "CGConvergenceError", "PackedDecoders",
    "bfgs_minimize", "fcls", "l21", "latent_objective", "line_search_wolfe",
    "project_simplex", "solve_a_step", "solve_z_step", "spatial_gradients",
    "spatial_gradients_adjoint",
]
