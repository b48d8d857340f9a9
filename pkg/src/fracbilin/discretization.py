"""Space-time discretization shared by all solvers."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import SingularSystem
from .fracop import StiffnessMatrix, assemble
from .problem import Grid, KernelSpec, ProblemSpec, TimeGrid, make_grid, make_time_grid

__all__ = ["Discretization", "build_discretization", "kernel_table", "lagged_weights"]


def kernel_table(kappa: KernelSpec, grid: Grid, time_grid: TimeGrid) -> np.ndarray:
    """kappa(t_k, t_j, x_i) for j <= k, zero above the diagonal; shape (N+1, N+1, n)."""
    t = time_grid.times
    tab = kappa(t[:, None, None], t[None, :, None], grid.nodes[None, None, :])
    tab = np.where((np.arange(t.size)[:, None] >= np.arange(t.size)[None, :])[:, :, None], tab, 0.0)
    tab.setflags(write=False)
    return tab


def lagged_weights(k: int, dt: float) -> np.ndarray:
    """Trapezoid weights on t_0..t_k with the endpoint t_k dropped (length k)."""
    w = np.full(k, dt)
    if k:
        w[0] = 0.5 * dt
    return w


@dataclass(eq=False)
class Discretization:
    """Grids, assembled operator and the kernel samples for one problem."""

    grid: Grid
    time_grid: TimeGrid
    stiffness: StiffnessMatrix
    kappa: KernelSpec
    kernel: np.ndarray
    _factors: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n_interior

    @property
    def N(self) -> int:
        return self.time_grid.n_steps

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def dt(self) -> float:
        return self.time_grid.dt

    @property
    def mask(self) -> np.ndarray:
        return self.grid.omega_mask

    def step_matrix(self, rate: float = 0.0) -> np.ndarray:
        """(1 + dt*rate) I + dt A, the matrix inverted at every time step."""
        return (1.0 + self.dt * rate) * np.eye(self.n) + self.dt * self.stiffness.a

    def step_factor(self, rate: float = 0.0):
        with self._lock:
            fac = self._factors.get(rate)
            if fac is None:
                try:
                    fac = linalg.cho_factor(self.step_matrix(rate), lower=True)
                except linalg.LinAlgError as exc:
                    raise SingularSystem(f"step matrix with rate {rate} is not invertible") from exc
                self._factors[rate] = fac
        return fac

    def solve_step(self, rhs: np.ndarray, rate: float = 0.0) -> np.ndarray:
        return linalg.cho_solve(self.step_factor(rate), rhs)

    # discrete norms -------------------------------------------------------

    def l2(self, u) -> float:
        """L2(Omega) norm of a spatial vector."""
        return float(np.sqrt(self.h * np.sum(np.square(u))))

    def l2_q(self, u) -> float:
        """L2 norm over all space-time nodes with weights h*dt."""
        return float(np.sqrt(self.h * self.dt * np.sum(np.square(u))))

    def l2_omega_t(self, u) -> float:
        return self.l2_q(np.where(self.mask[None, :], u, 0.0))

    def inner_omega_t(self, a, b) -> float:
        return float(self.h * self.dt * np.sum(np.where(self.mask[None, :], a * b, 0.0)))


def build_discretization(spec: ProblemSpec, n_interior: int, n_steps: int) -> Discretization:
    grid = make_grid(spec, n_interior)
    tgrid = make_time_grid(spec.T, n_steps)
    return Discretization(grid, tgrid, assemble(grid, spec.s), spec.kappa,
                          kernel_table(spec.kappa, grid, tgrid))
