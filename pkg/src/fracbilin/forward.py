"""Time stepping of the state equation with the Volterra memory term.

Each step solves

    ((1 + dt r) I + dt A) y_k = (I + dt diag(v_{k-1})) y_{k-1} + dt e^{-r t_k} f_k - dt m_k,

where ``m_k`` is the trapezoid rule for int_0^{t_k} e^{r(tau - t_k)} kappa(t_k, tau, x) y(tau) dtau
with the unknown endpoint dropped.  ``r = 0`` is the original equation; ``r > 0`` is the
exponentially shifted system whose solution approximates ``e^{-r t} y``.

The bilinear term is lagged by one step so that the step matrix is the same
symmetric M-matrix at every step; this is what makes the discrete adjoint
vanish at the final level and the gradient read ``alpha v + y q`` node by node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import Discretization, lagged_weights
from .errors import HistoryTooShort
from .fracop import dual_norm, h0s_norm
from .problem import ControlField, Field, Grid, KernelSpec, ProblemSpec, TimeGrid, sample_field
from .report import DiagnosticsRecord, le_record

__all__ = [
    "StepperConfig",
    "MemoryBuffer",
    "memory_integral",
    "march",
    "solve_forward",
    "solve_transformed",
    "check_estimates",
    "check_transformed_estimates",
    "source_values",
    "initial_values",
]


@dataclass(frozen=True)
class StepperConfig:
    theta: float = 1.0
    r: float = 0.0
    memory_rule: str = "trapezoid"

    def __post_init__(self):
        if self.theta != 1.0:
            raise ValueError("only the implicit Euler scheme (theta = 1) is provided")
        if self.r < 0:
            raise ValueError("transformation rate r must be >= 0")
        if self.memory_rule != "trapezoid":
            raise ValueError(f"unknown memory rule {self.memory_rule!r}")


@dataclass
class MemoryBuffer:
    """History y(t_0), ..., y(t_k) of spatial vectors."""

    history: list = field(default_factory=list)

    def push(self, y) -> None:
        self.history.append(np.asarray(y, dtype=float))

    def __len__(self) -> int:
        return len(self.history)


def memory_integral(buffer: MemoryBuffer, kernel: KernelSpec, t_index: int, grid: Grid,
                    time_grid: TimeGrid, rate: float = 0.0,
                    include_endpoint: bool = True) -> np.ndarray:
    """Composite trapezoid value of int_0^{t_k} e^{r(tau - t_k)} kappa(t_k, tau, x) y(tau, x) dtau.

    With ``include_endpoint=False`` the tau = t_k term is dropped, which is the
    form used inside the time stepper.
    """
    last = t_index if include_endpoint else t_index - 1
    if t_index < 0 or last > len(buffer) - 1:
        raise HistoryTooShort(f"memory at step {t_index} needs {last + 1} history levels, "
                              f"have {len(buffer)}")
    if t_index == 0:
        return np.zeros(grid.n_interior)
    t = time_grid.times
    dt = time_grid.dt
    w = np.full(t_index + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    if not include_endpoint:
        w = w[:-1]
    taus = t[: w.size]
    kv = kernel(t[t_index], taus[:, None], grid.nodes[None, :])
    hist = np.asarray(buffer.history[: w.size])
    scale = w * np.exp(rate * (taus - t[t_index]))
    return np.einsum("j,ji,ji->i", scale, kv, hist)


def march(disc: Discretization, v: np.ndarray, source: np.ndarray, init: np.ndarray,
          rate: float = 0.0) -> np.ndarray:
    """Run the stepper for a given control, source rows (index k = 1..N used) and start."""
    N, dt = disc.N, disc.dt
    t = disc.time_grid.times
    vm = np.where(disc.mask[None, :], v, 0.0)
    y = np.empty((N + 1, disc.n))
    y[0] = init
    kern = disc.kernel
    for k in range(1, N + 1):
        rhs = y[k - 1] + dt * vm[k - 1] * y[k - 1] + dt * source[k]
        w = lagged_weights(k, dt)
        if rate != 0.0:
            w = w * np.exp(rate * (t[:k] - t[k]))
        rhs -= dt * np.einsum("j,ji,ji->i", w, kern[k, :k], y[:k])
        y[k] = disc.solve_step(rhs, rate)
    return y


def source_values(spec: ProblemSpec, disc: Discretization, rate: float = 0.0) -> np.ndarray:
    f = sample_field(spec.f, disc.grid, disc.time_grid).values
    if rate:
        f = f * np.exp(-rate * disc.time_grid.times)[:, None]
    return f


def initial_values(spec: ProblemSpec, disc: Discretization) -> np.ndarray:
    y0 = np.asarray(spec.y0(disc.grid.nodes), dtype=float)
    return np.broadcast_to(y0, (disc.n,)).copy()


def _control_values(v) -> np.ndarray:
    return v.values if hasattr(v, "values") else np.asarray(v, dtype=float)


def solve_forward(spec: ProblemSpec, disc: Discretization, v) -> Field:
    """State y = G(v) on the grid."""
    return solve_transformed(spec, disc, v, 0.0)


def solve_transformed(spec: ProblemSpec, disc: Discretization, v, r: float) -> Field:
    """Solution z of the system shifted by rate r (z ~ e^{-rt} y)."""
    if r < 0:
        raise ValueError("rate r must be >= 0")
    vals = march(disc, _control_values(v), source_values(spec, disc, r),
                 initial_values(spec, disc), r)
    return Field(vals, disc.grid, disc.time_grid)


# ---------------------------------------------------------------------------
# a-priori estimates


def _energy_parts(values: np.ndarray, disc: Discretization):
    a = disc.stiffness
    sup_l2 = max(disc.l2(row) ** 2 for row in values)
    energy = disc.dt * sum(h0s_norm(row, a) ** 2 for row in values[1:])
    return sup_l2, energy


def _source_dual_sq(f: np.ndarray, disc: Discretization) -> float:
    a = disc.stiffness
    return disc.dt * sum(dual_norm(row, a) ** 2 for row in f[1:])


def check_estimates(y: Field, spec: ProblemSpec, disc: Discretization, v) -> list[DiagnosticsRecord]:
    """Energy and sup-norm bounds for a computed state.

    Discrete norms: L2 is h-weighted, the energy norm uses the assembled
    operator, time integrals use the right-endpoint rule that matches the
    implicit scheme.  ``vinf`` is the nodal max of |v|, ``kinf`` the declared
    kernel bound.
    """
    vals = y.values if hasattr(y, "values") else np.asarray(y)
    vinf = float(np.max(np.abs(np.where(disc.mask, _control_values(v), 0.0)), initial=0.0))
    kinf = spec.kappa.sup_bound
    T = spec.T
    f = source_values(spec, disc)
    y0 = initial_values(spec, disc)

    sup_l2, energy = _energy_parts(vals, disc)
    rhs = 2 * math.exp(2 * (vinf + kinf + 1) * T) * (_source_dual_sq(f, disc) + disc.l2(y0) ** 2)
    records = [le_record("energy_estimate", "energy-estimate", sup_l2 + energy, rhs)]

    linf = float(np.max(np.abs(vals)))
    data = float(np.max(np.abs(y0), initial=0.0) + np.max(np.abs(f), initial=0.0))
    records.append(le_record("linf_bound", "linf-bound", linf, math.exp(vinf * T) * data))
    records.append(le_record("linf_bound_weak", "linf-bound", linf,
                             math.exp((vinf + kinf + 1) * T) * data))
    return records


def check_transformed_estimates(z: Field, spec: ProblemSpec, disc: Discretization,
                                r: float) -> list[DiagnosticsRecord]:
    """Bounds satisfied by the shifted solution when r >= ||v|| + ||kappa|| + 1."""
    vals = z.values if hasattr(z, "values") else np.asarray(z)
    f = source_values(spec, disc)
    data = _source_dual_sq(f, disc) + disc.l2(initial_values(spec, disc)) ** 2
    sup_l2, energy = _energy_parts(vals, disc)
    return [
        le_record("transformed_sup_l2", "transformed-energy-estimate", sup_l2, data),
        le_record("transformed_energy", "transformed-energy-estimate", energy, data),
    ]
