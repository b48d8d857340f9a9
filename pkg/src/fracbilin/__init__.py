"""Bilinear optimal control of a fractional diffusion equation with memory on an interval."""

from .discretization import Discretization, build_discretization
from .errors import *  # noqa: F401,F403
from .forward import solve_forward, solve_transformed
from .adjoint import solve_adjoint_continuous, solve_adjoint_discrete
from .fracop import assemble
from .optimize import solve_pgd, sosc_check, uniqueness_experiment
from .diagnostics import lipschitz_probe, run_suite
from .problem import Case, OptimizerConfig, ProblemSpec, load_case, load_default_case, make_grid, make_time_grid
from .sensitivity import cost, gradient, hessian_quadratic

__version__ = "0.1.0"
