"""Adjoint states for the tracking cost.

Two adjoints are provided.  :func:`solve_adjoint_discrete` is the exact
transpose of the forward stepper and is what every gradient uses.
:func:`solve_adjoint_continuous` discretizes the backward equation

    -q_t + (-Delta)^s q + int_t^T kappa(tau, t, x) q(tau, x) dtau = v q chi_omega,
    q(T) = y(T) - y^d,

directly and converges to the discrete one under refinement.  Both are stored
on the forward rows with row k holding the multiplier of step k+1, so the last
row is identically zero and ``alpha v + y q`` is the gradient node by node.
"""

from __future__ import annotations

import numpy as np

from .discretization import Discretization
from .errors import SingularSystem
from .forward import initial_values, source_values
from .fracop import dual_norm, h0s_norm
from .problem import Field, ProblemSpec
from .report import DiagnosticsRecord, le_record

__all__ = [
    "AdjointField",
    "apply_forward_linear",
    "apply_transpose",
    "solve_adjoint_discrete",
    "solve_adjoint_continuous",
    "adjoint_estimate_check",
    "adjoint_estimate_lhs",
]


class AdjointField(Field):
    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values[-1] != 0.0):
            raise ValueError("adjoint terminal row must be identically zero")


def _vals(v) -> np.ndarray:
    return v.values if hasattr(v, "values") else np.asarray(v, dtype=float)


def apply_forward_linear(disc: Discretization, v, b: np.ndarray) -> np.ndarray:
    """Linear part of the stepper: sources b_1..b_N -> states y_1..y_N with y_0 = 0.

    ``b`` and the result have shape (N, n); row k-1 belongs to step k.
    """
    N, dt = disc.N, disc.dt
    vm = np.where(disc.mask[None, :], _vals(v), 0.0)
    kern = disc.kernel
    y = np.zeros((N + 1, disc.n))
    for k in range(1, N + 1):
        rhs = y[k - 1] + dt * vm[k - 1] * y[k - 1] + b[k - 1]
        # y_0 = 0, so only the full-weight trapezoid nodes contribute
        if k > 1:
            rhs -= dt * dt * np.einsum("ji,ji->i", kern[k, 1:k], y[1:k])
        y[k] = disc.solve_step(rhs)
    return y[1:]


def apply_transpose(disc: Discretization, v, c: np.ndarray) -> np.ndarray:
    """Transpose of :func:`apply_forward_linear` in the Euclidean pairing."""
    N, dt = disc.N, disc.dt
    vm = np.where(disc.mask[None, :], _vals(v), 0.0)
    kern = disc.kernel
    lam = np.zeros((N + 2, disc.n))  # lam[k] multiplies step k; lam[N+1] = 0
    for j in range(N, 0, -1):
        rhs = c[j - 1] + lam[j + 1] + dt * vm[j] * lam[j + 1]
        if j < N:
            rhs -= dt * dt * np.einsum("ki,ki->i", kern[j + 1:, j], lam[j + 1:N + 1])
        lam[j] = disc.solve_step(rhs)
    return lam[1:N + 1]


def _terminal_mismatch(spec: ProblemSpec, disc: Discretization, y) -> np.ndarray:
    return _vals(y)[-1] - np.asarray(spec.yd(disc.grid.nodes), dtype=float)


def solve_adjoint_discrete(spec: ProblemSpec, disc: Discretization, v, y) -> AdjointField:
    """Exact discrete adjoint of the reduced tracking cost at control v."""
    c = np.zeros((disc.N, disc.n))
    c[-1] = _terminal_mismatch(spec, disc, y)
    lam = apply_transpose(disc, v, c)
    q = np.zeros((disc.N + 1, disc.n))
    q[:-1] = lam
    return AdjointField(q, disc.grid, disc.time_grid)


def solve_adjoint_continuous(spec: ProblemSpec, disc: Discretization, v, y) -> AdjointField:
    """Backward Euler for the continuous adjoint equation, shifted onto the forward rows."""
    N, dt, n = disc.N, disc.dt, disc.n
    vm = np.where(disc.mask[None, :], _vals(v), 0.0)
    kern = disc.kernel
    a = disc.stiffness.a
    Q = np.zeros((N + 1, n))
    Q[N] = _terminal_mismatch(spec, disc, y)
    eye = np.eye(n)
    for k in range(N - 1, -1, -1):
        # trapezoid on [t_k, T] without the t_k endpoint
        w = np.full(N - k, dt)
        w[-1] = 0.5 * dt
        rhs = Q[k + 1] - dt * np.einsum("j,ji,ji->i", w, kern[k + 1:, k], Q[k + 1:])
        mat = eye + dt * a - dt * np.diag(vm[k])
        try:
            Q[k] = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"backward step {k} is singular (dt too large for v)") from exc
        if not np.all(np.isfinite(Q[k])):
            raise SingularSystem(f"backward step {k} produced non-finite values")
    q = np.zeros((N + 1, n))
    q[:-1] = Q[1:]
    return AdjointField(q, disc.grid, disc.time_grid)


def adjoint_estimate_lhs(q, disc: Discretization) -> float:
    """||q||_inf^2 + ||q||^2_{L2(V)} + ||q_t||^2_{L2(V*)} on the grid."""
    vals = _vals(q)
    a = disc.stiffness
    linf = float(np.max(np.abs(vals)))
    energy = disc.dt * sum(h0s_norm(row, a) ** 2 for row in vals)
    dq = np.diff(vals, axis=0) / disc.dt
    dual = disc.dt * sum(dual_norm(row, a) ** 2 for row in dq)
    return linf**2 + energy + dual


def adjoint_estimate_check(q, spec: ProblemSpec, v, disc: Discretization,
                           constant: float | None = None) -> DiagnosticsRecord:
    """Compare the adjoint size with the data size.

    The bound's constant is not known in closed form.  Without ``constant`` the
    record's rhs is the data term and the pass flag only asserts finiteness;
    the ratio lhs/rhs is what a suite compares across draws.
    """
    lhs = adjoint_estimate_lhs(q, disc)
    y0 = initial_values(spec, disc)
    f = source_values(spec, disc)
    yd = np.asarray(spec.yd(disc.grid.nodes), dtype=float)
    data = float(np.max(np.abs(y0)) ** 2 + np.max(np.abs(f)) ** 2 + np.max(np.abs(yd)) ** 2)
    if constant is None:
        ok = bool(np.isfinite(lhs))
        return DiagnosticsRecord("adjoint_estimate", "adjoint-estimate", lhs, data, ok,
                                 data - lhs)
    return le_record("adjoint_estimate", "adjoint-estimate", lhs, constant * data)
