"""Discrete integral fractional Laplacian on an interval with zero exterior data.

The operator is approximated by fractional centred differences,

    (-Delta)^s u(x_i) ~ h^(-2s) sum_k w_k u(x_{i-k}),
    w_k = (-1)^k Gamma(2s+1) / (Gamma(s-k+1) Gamma(s+k+1)),

with all exterior values set to zero.  The resulting matrix is a symmetric
Toeplitz M-matrix and is second-order accurate for smooth data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .problem import Grid

__all__ = [
    "StiffnessMatrix",
    "compute_cns",
    "centered_weights",
    "assemble",
    "bilinear_form",
    "h0s_norm",
    "dual_norm",
    "write_matrix_csv",
]


def _check_order(s: float) -> None:
    if not 0 < s < 1:
        raise DomainError(f"fractional order s={s} must lie in (0, 1)")


def compute_cns(n_dim: int, s: float) -> float:
    """Normalisation constant of the singular-integral fractional Laplacian."""
    _check_order(s)
    if n_dim < 1:
        raise DomainError("n_dim must be >= 1")
    return (4.0**s * math.gamma((n_dim + 2 * s) / 2)
            / (math.pi ** (n_dim / 2) * abs(math.gamma(-s))))


def centered_weights(s: float, n: int) -> np.ndarray:
    """First ``n`` fractional centred-difference weights w_0 .. w_{n-1}."""
    _check_order(s)
    w = np.empty(n)
    w[0] = math.gamma(2 * s + 1) / math.gamma(s + 1) ** 2
    for k in range(n - 1):
        w[k + 1] = w[k] * (k - s) / (k + 1 + s)
    return w


@dataclass(frozen=True, eq=False)
class StiffnessMatrix:
    a: np.ndarray
    s: float
    h: float

    def __matmul__(self, u):
        return self.a @ u

    @property
    def n(self) -> int:
        return self.a.shape[0]


def assemble(grid: Grid, s: float) -> StiffnessMatrix:
    _check_order(s)
    n = grid.n_interior
    w = centered_weights(s, n)
    idx = np.arange(n)
    a = w[np.abs(idx[:, None] - idx[None, :])] / grid.h ** (2 * s)
    # smallest eigenvalue of a symmetric positive definite M-matrix
    lam_min = np.linalg.eigvalsh(a)[0]
    if lam_min < 1e-12:
        raise DomainError(f"assembled operator is not positive definite (min eig {lam_min:g})")
    a.setflags(write=False)
    return StiffnessMatrix(a, s, grid.h)


def _check_dims(a: StiffnessMatrix, *vs) -> None:
    for v in vs:
        if np.shape(v)[-1] != a.n:
            raise DimensionMismatch(f"vector of length {np.shape(v)[-1]} vs operator of size {a.n}")


def bilinear_form(u, w, a: StiffnessMatrix) -> float:
    """h-weighted energy pairing u^T a w h."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_dims(a, u, w)
    return float(u @ (a.a @ w)) * a.h


def h0s_norm(u, a: StiffnessMatrix) -> float:
    return math.sqrt(max(bilinear_form(u, u, a), 0.0))


def dual_norm(g, a: StiffnessMatrix) -> float:
    """Norm in the dual of the energy space: sqrt(h g^T a^{-1} g)."""
    g = np.asarray(g, dtype=float)
    _check_dims(a, g)
    return math.sqrt(max(float(g @ np.linalg.solve(a.a, g)) * a.h, 0.0))


def write_matrix_csv(a: StiffnessMatrix, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in a.a:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
