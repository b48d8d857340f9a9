"""First and second derivatives of the control-to-state map and the reduced cost."""

from __future__ import annotations

import numpy as np

from .adjoint import apply_forward_linear, solve_adjoint_discrete
from .discretization import Discretization
from .forward import solve_forward
from .problem import DirectionField, Field, ProblemSpec

__all__ = [
    "cost",
    "tracking_term",
    "solve_linearized",
    "solve_second",
    "gradient",
    "pairing",
    "hessian_quadratic",
    "hessian_bilinear",
    "hessian_distributed_variant",
    "reduced_gradient",
]


def _vals(v) -> np.ndarray:
    return v.values if hasattr(v, "values") else np.asarray(v, dtype=float)


def _on_omega(disc: Discretization, w) -> np.ndarray:
    return np.where(disc.mask[None, :], _vals(w), 0.0)


def tracking_term(spec: ProblemSpec, disc: Discretization, y) -> float:
    diff = _vals(y)[-1] - spec.yd(disc.grid.nodes)
    return 0.5 * disc.l2(diff) ** 2


def cost(spec: ProblemSpec, disc: Discretization, v, y=None) -> float:
    """Discrete reduced cost 1/2 ||y(T) - y^d||^2 + alpha/2 ||v||^2 over omega x (0, T)."""
    if y is None:
        y = solve_forward(spec, disc, v)
    return tracking_term(spec, disc, y) + 0.5 * spec.alpha * disc.l2_omega_t(_vals(v)) ** 2


def _propagate(disc: Discretization, v, source: np.ndarray) -> Field:
    """Zero-start response to a source supported on omega, the rows k = 0..N-1 driving step k+1."""
    b = disc.dt * source[:-1]
    rho = np.zeros((disc.N + 1, disc.n))
    rho[1:] = apply_forward_linear(disc, v, b)
    return Field(rho, disc.grid, disc.time_grid)


def solve_linearized(spec: ProblemSpec, disc: Discretization, v, y, w) -> Field:
    """rho = G'(v) w: same stepper, source w y on omega, zero initial data."""
    return _propagate(disc, v, _on_omega(disc, w) * _vals(y))


def solve_second(spec: ProblemSpec, disc: Discretization, v, y, w, h,
                 rho_w: Field | None = None, rho_h: Field | None = None) -> Field:
    """z = G''(v)[w, h]: same stepper, source h rho_w + w rho_h on omega."""
    if rho_w is None:
        rho_w = solve_linearized(spec, disc, v, y, w)
    if rho_h is None:
        rho_h = solve_linearized(spec, disc, v, y, h)
    src = _on_omega(disc, h) * _vals(rho_w) + _on_omega(disc, w) * _vals(rho_h)
    return _propagate(disc, v, src)


def gradient(spec: ProblemSpec, disc: Discretization, v, y, q) -> DirectionField:
    """Riesz representative alpha v + y q on omega (zero elsewhere).

    Paired with the h*dt-weighted inner product it gives the directional
    derivative of :func:`cost`.
    """
    g = spec.alpha * _vals(v) + _vals(y) * _vals(q)
    return DirectionField(_on_omega(disc, g))


def pairing(disc: Discretization, g, w) -> float:
    return disc.inner_omega_t(_vals(g), _vals(w))


def reduced_gradient(spec: ProblemSpec, disc: Discretization, v):
    """Convenience: (cost, gradient, y, q) at v."""
    y = solve_forward(spec, disc, v)
    q = solve_adjoint_discrete(spec, disc, v, y)
    return cost(spec, disc, v, y), gradient(spec, disc, v, y, q), y, q


def hessian_bilinear(spec: ProblemSpec, disc: Discretization, v, y, q, w, h,
                     rho_w: Field | None = None, rho_h: Field | None = None) -> float:
    """Second derivative of the discrete cost in directions (w, h).

    Terminal-observation form: the middle term pairs the linearized states at
    the final time only.
    """
    if rho_w is None:
        rho_w = solve_linearized(spec, disc, v, y, w)
    if rho_h is None:
        rho_h = solve_linearized(spec, disc, v, y, h)
    wv, hv, qv = _on_omega(disc, w), _on_omega(disc, h), _vals(q)
    rw, rh = _vals(rho_w), _vals(rho_h)
    cross = disc.inner_omega_t(hv * rw + wv * rh, qv)
    terminal = disc.h * float(rw[-1] @ rh[-1])
    return cross + terminal + spec.alpha * disc.inner_omega_t(wv, hv)


def hessian_quadratic(spec: ProblemSpec, disc: Discretization, v, y, q, w,
                      rho: Field | None = None) -> float:
    return hessian_bilinear(spec, disc, v, y, q, w, w, rho, rho)


def hessian_distributed_variant(spec: ProblemSpec, disc: Discretization, v, y, q, w) -> float:
    """Same quadratic form with the linearized states paired over all of Q.

    Reported for comparison only; it is not the second derivative of the
    terminal-observation cost.
    """
    rho = solve_linearized(spec, disc, v, y, w)
    wv, rv = _on_omega(disc, w), _vals(rho)
    return (2 * disc.inner_omega_t(wv * rv, _vals(q)) + disc.l2_q(rv) ** 2
            + spec.alpha * disc.inner_omega_t(wv, wv))
