"""Reference computations that share no code with the package."""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate

mpmath.mp.dps = 40


def cns_mp(n_dim: int, s: float) -> float:
    s = mpmath.mpf(s)
    val = 2 ** (2 * s) * mpmath.gamma((n_dim + 2 * s) / 2) / (
        mpmath.pi ** (mpmath.mpf(n_dim) / 2) * abs(mpmath.gamma(-s)))
    return float(val)


def weight_mp(s: float, k: int) -> float:
    """(-1)^k Gamma(2s+1) / (Gamma(s-k+1) Gamma(s+k+1)) in 40-digit arithmetic."""
    s = mpmath.mpf(s)
    val = (-1) ** k * mpmath.gamma(2 * s + 1) / (mpmath.gamma(s - k + 1) * mpmath.gamma(s + k + 1))
    return float(val)


def stiffness_mp(n: int, s: float, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    h = (hi - lo) / (n + 1)
    w = [weight_mp(s, k) for k in range(n)]
    i = np.arange(n)
    return np.array(w)[np.abs(i[:, None] - i[None, :])] / h ** (2 * s)


def fraclap_cos(x: float, s: float) -> float:
    """Integral fractional Laplacian of cos(pi x / 2) on (-1, 1), zero outside, at x.

    Symmetric form C int_0^inf (2u(x) - u(x+t) - u(x-t)) t^{-1-2s} dt.  Near the
    singularity the second difference is 4u(x) sin^2(pi t / 4) in closed form;
    the far part is one-sided quadrature plus the exact power-law tail.
    """
    u = lambda y: math.cos(math.pi * y / 2) if abs(y) < 1 else 0.0
    d = 1.0 - abs(x)
    ux = u(x)
    near = integrate.quad(lambda t: 4 * ux * (math.pi / 4) ** 2 * np.sinc(t / 4) ** 2, 0.0, d,
                          weight="alg", wvar=(1 - 2 * s, 0), epsabs=1e-14, epsrel=1e-13,
                          limit=200)[0]
    sign = -1.0 if x >= 0 else 1.0
    far = integrate.quad(lambda t: (ux - u(x + sign * t)) / t ** (1 + 2 * s), d, 2 - d,
                         epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    tail = ux * ((1 + x) ** (-2 * s) + (1 - x) ** (-2 * s)) / (2 * s)
    return cns_mp(1, s) * (near + far + tail)


def dense_step_system(a: np.ndarray, v: np.ndarray, kern: np.ndarray, dt: float) -> np.ndarray:
    """Block matrix E with E y = b for the linear stepper started from y_0 = 0.

    Step k (1..N): (I + dt a) y_k - (I + dt diag v_{k-1}) y_{k-1}
                   + dt^2 sum_{1<=j<k} diag(kern[k, j]) y_j = b_k.
    ``v`` holds rows 0..N, ``kern[k, j]`` the kernel at (t_k, t_j) on the nodes.
    """
    N = v.shape[0] - 1
    n = a.shape[0]
    E = np.zeros((N * n, N * n))
    blk = lambda k: slice((k - 1) * n, k * n)
    for k in range(1, N + 1):
        E[blk(k), blk(k)] = np.eye(n) + dt * a
        if k > 1:
            E[blk(k), blk(k - 1)] -= np.eye(n) + dt * np.diag(v[k - 1])
        for j in range(1, k):
            E[blk(k), blk(j)] += dt * dt * np.diag(kern[k, j])
    return E
