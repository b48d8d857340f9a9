"""Projected-gradient solution of the reduced problem and optimality checks."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adjoint import AdjointField, apply_forward_linear, solve_adjoint_discrete
from .discretization import Discretization
from .errors import LineSearchStall, NotConverged
from .forward import initial_values, solve_forward, source_values
from .problem import ControlField, DirectionField, Field, OptimizerConfig, ProblemSpec, project_control
from .sensitivity import cost, gradient, hessian_quadratic, pairing

__all__ = [
    "OptimizerConfig",
    "OptResult",
    "ActiveSet",
    "ConeSample",
    "project_box",
    "projected_control",
    "optimality_residual",
    "fixed_point_margin",
    "variational_inequality_slack",
    "solve_pgd",
    "cost_change",
    "random_control",
    "uniqueness_experiment",
    "UniquenessReport",
    "active_set",
    "cone_sample",
    "sosc_check",
    "SoscReport",
    "n_workers",
]

EQ_TOL = 1e-12
_STEP_MIN, _STEP_MAX = 1e-10, 1e10
TAU_DEFAULT = 1e-8


def n_workers() -> int:
    env = os.environ.get("FRACBILIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _vals(v) -> np.ndarray:
    return v.values if hasattr(v, "values") else np.asarray(v, dtype=float)


def project_box(raw, alpha: float, m: float, M: float, yq):
    """min(max(m, -yq/alpha), M).  ``raw`` is unused and kept for call-site symmetry."""
    return np.minimum(np.maximum(m, -np.asarray(yq, dtype=float) / alpha), M)


def projected_control(spec: ProblemSpec, disc: Discretization, y, q) -> np.ndarray:
    """P_U(-y q / alpha) on omega, zero elsewhere."""
    p = project_box(None, spec.alpha, spec.m, spec.M, _vals(y) * _vals(q))
    return np.where(disc.mask[None, :], p, 0.0)


def optimality_residual(u, y, q, spec: ProblemSpec, disc: Discretization) -> float:
    """h*dt-weighted distance between u and P_U(-y q / alpha) over omega x (0, T)."""
    return disc.l2_omega_t(_vals(u) - projected_control(spec, disc, y, q))


def fixed_point_margin(u, y, q, spec: ProblemSpec, disc: Discretization) -> float:
    """Largest nodal violation of u = P_U(-y q / alpha)."""
    diff = np.where(disc.mask[None, :], _vals(u) - projected_control(spec, disc, y, q), 0.0)
    return float(np.max(np.abs(diff)))


def random_control(spec: ProblemSpec, disc: Discretization, rng: np.random.Generator) -> ControlField:
    raw = rng.uniform(spec.m, spec.M, size=(disc.N + 1, disc.n))
    return project_control(raw, spec, disc.grid)


def variational_inequality_slack(u, y, q, spec: ProblemSpec, disc: Discretization,
                                 n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """<alpha u + y q, v - u> / ||v - u|| for random admissible v."""
    g = spec.alpha * _vals(u) + _vals(y) * _vals(q)
    out = np.empty(n_samples)
    for i in range(n_samples):
        v = random_control(spec, disc, rng).values
        d = v - _vals(u)
        out[i] = pairing(disc, g, d) / max(disc.l2_omega_t(d), 1e-300)
    return out


def cost_change(spec: ProblemSpec, disc: Discretization, u, y, u_new) -> float:
    """J(u_new) - J(u) computed from the state increment.

    The increment d = G(u_new) - G(u) solves the linear stepper with control
    u_new and source (u_new - u) y, which is exact for the bilinear equation;
    working with d avoids the cancellation in a difference of two costs.
    """
    uv, yv, un = _vals(u), _vals(y), _vals(u_new)
    du = np.where(disc.mask[None, :], un - uv, 0.0)
    delta = apply_forward_linear(disc, un, disc.dt * (du * yv)[:-1])[-1]
    err = yv[-1] - np.asarray(spec.yd(disc.grid.nodes), dtype=float)
    tracking = disc.h * float(delta @ (err + 0.5 * delta))
    reg = 0.5 * spec.alpha * disc.inner_omega_t(du, un + uv)
    return tracking + reg


@dataclass
class OptResult:
    u_opt: ControlField
    y_opt: Field
    q_opt: AdjointField
    J_history: np.ndarray
    residual_history: np.ndarray
    iterations: int
    converged: bool
    step_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    decrease_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_json(self) -> dict:
        return {"converged": bool(self.converged), "iterations": int(self.iterations),
                "J_history": [float(x) for x in self.J_history],
                "residual_history": [float(x) for x in self.residual_history]}


def solve_pgd(spec: ProblemSpec, disc: Discretization, cfg: OptimizerConfig,
              u_init) -> OptResult:
    """Projected gradient with Armijo backtracking on the discrete reduced cost.

    Iterates u+ = P_U(u - step g).  The trial step is ``step0`` at the first
    iteration and the Barzilai-Borwein length afterwards; it is shrunk until
    J(u+) - J(u) <= c <g, u+ - u>.  The cost change is evaluated by
    :func:`cost_change`, so the test stays meaningful when the change is far
    below the round-off of J itself.  Stops once the optimality residual is at
    most ``cfg.tol`` or after ``cfg.max_iters`` iterations.
    """
    u = project_control(_vals(u_init), spec, disc.grid).values
    y = solve_forward(spec, disc, u)
    q = solve_adjoint_discrete(spec, disc, u, y)
    J = cost(spec, disc, u, y)
    res = optimality_residual(u, y, q, spec, disc)
    J_hist, r_hist, steps, decs = [J], [res], [], []
    trial = cfg.step0
    g = gradient(spec, disc, u, y, q).values
    it = 0
    while res > cfg.tol and it < cfg.max_iters:
        step = trial
        while True:
            u_new = project_control(u - step * g, spec, disc.grid).values
            expected = pairing(disc, g, u_new - u)
            dJ = cost_change(spec, disc, u, y, u_new)
            if dJ <= cfg.armijo_c * expected and dJ < 0:
                break
            step *= cfg.armijo_shrink
            if step < 1e-16:
                raise LineSearchStall(
                    f"step underflow at iteration {it} (residual {res:.3e}); "
                    "gradient and cost are inconsistent")
        y_new = solve_forward(spec, disc, u_new)
        J_new = cost(spec, disc, u_new, y_new)
        q = solve_adjoint_discrete(spec, disc, u_new, y_new)
        g_new = gradient(spec, disc, u_new, y_new, q).values
        # Barzilai-Borwein length for the next trial step
        du = u_new - u
        curv = pairing(disc, du, g_new - g)
        trial = min(max(pairing(disc, du, du) / curv, _STEP_MIN), _STEP_MAX) if curv > 0 else cfg.step0
        u, y, J, g = u_new, y_new, J_new, g_new
        res = optimality_residual(u, y, q, spec, disc)
        it += 1
        J_hist.append(J)
        r_hist.append(res)
        steps.append(step)
        decs.append(expected)
    return OptResult(
        u_opt=ControlField(u, spec.m, spec.M),
        y_opt=y,
        q_opt=q,
        J_history=np.array(J_hist),
        residual_history=np.array(r_hist),
        iterations=it,
        converged=res <= cfg.tol,
        step_history=np.array(steps),
        decrease_history=np.array(decs),
    )


# ---------------------------------------------------------------------------
# multi-start uniqueness


@dataclass
class UniquenessReport:
    alpha: float
    seeds: list[int]
    distances: np.ndarray
    max_distance: float
    C_emp: float
    large_alpha: bool
    unique: bool | None
    final_J: list[float]
    iterations: list[int]

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "seeds": self.seeds,
                "distances": self.distances.tolist(), "max_distance": self.max_distance,
                "C_emp": self.C_emp, "large_alpha": self.large_alpha, "unique": self.unique,
                "final_J": self.final_J, "iterations": self.iterations}


def uniqueness_experiment(spec: ProblemSpec, disc: Discretization, cfg: OptimizerConfig,
                          n_starts: int, seeds: list[int] | None = None,
                          large_alpha: float = 10.0, dist_tol: float = 1e-6,
                          workers: int | None = None) -> UniquenessReport:
    """Run projected gradient from several random admissible starts and compare the limits.

    Start ``i`` draws its initial control from ``default_rng(seeds[i])``; the
    default seeds are ``cfg.seed + i``.  Uniqueness (all pairwise distances at
    most ``dist_tol``) is only asserted when ``alpha >= large_alpha``.
    """
    if n_starts < 2:
        raise ValueError("n_starts must be >= 2")
    if seeds is None:
        seeds = [cfg.seed + i for i in range(n_starts)]
    if len(seeds) != n_starts:
        raise ValueError("need one seed per start")

    def run(seed):
        u0 = random_control(spec, disc, np.random.default_rng(seed))
        return solve_pgd(spec, disc, cfg, u0)

    workers = workers or n_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, n_starts)) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    failed = [s for s, r in zip(seeds, results) if not r.converged]
    if failed:
        raise NotConverged(f"projected gradient did not converge for seed(s) {failed}")

    dists = []
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            dists.append(disc.l2_omega_t(results[i].u_opt.values - results[j].u_opt.values))
    dists = np.array(dists)
    y0 = initial_values(spec, disc)
    f = source_values(spec, disc)
    yd = np.asarray(spec.yd(disc.grid.nodes), dtype=float)
    data = np.max(np.abs(y0)) ** 2 + np.max(np.abs(yd)) ** 2 + np.max(np.abs(f)) ** 2
    c_emp = spec.alpha**2 / data**2 if data > 0 else math.inf
    is_large = spec.alpha >= large_alpha
    max_d = float(dists.max())
    return UniquenessReport(
        alpha=spec.alpha, seeds=list(seeds), distances=dists, max_distance=max_d,
        C_emp=float(c_emp), large_alpha=is_large,
        unique=(max_d <= dist_tol) if is_large else None,
        final_J=[float(r.J_history[-1]) for r in results],
        iterations=[r.iterations for r in results],
    )


# ---------------------------------------------------------------------------
# second-order conditions


@dataclass(frozen=True, eq=False)
class ActiveSet:
    tau: float
    mask: np.ndarray


def active_set(u, y, q, spec: ProblemSpec, disc: Discretization, tau: float = TAU_DEFAULT) -> ActiveSet:
    """Nodes of omega x [0, T] where |alpha u + y q| > tau."""
    g = np.abs(spec.alpha * _vals(u) + _vals(y) * _vals(q))
    return ActiveSet(tau, (g > tau) & disc.mask[None, :])


@dataclass(frozen=True, eq=False)
class ConeSample:
    v: DirectionField


def cone_sample(u, y, q, tau: float, rng: np.random.Generator, spec: ProblemSpec,
                disc: Discretization) -> ConeSample:
    """Random direction obeying the sign conditions of the tau-critical cone."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    uv = _vals(u)
    v = rng.standard_normal(uv.shape)
    act = active_set(u, y, q, spec, disc, tau).mask
    at_lo = (np.abs(uv - spec.m) <= EQ_TOL) & ~act
    at_hi = (np.abs(uv - spec.M) <= EQ_TOL) & ~act
    v = np.where(at_lo, np.abs(v), v)
    v = np.where(at_hi, -np.abs(v), v)
    v = np.where(act | ~disc.mask[None, :], 0.0, v)
    return ConeSample(DirectionField(v))


@dataclass
class SoscReport:
    n_samples: int
    cone_trivial: bool
    min_value: float
    min_normalized: float
    necessary_ok: bool
    beta_by_radius: dict
    beta: float
    growth_ok: bool
    active_fraction: float

    def to_json(self) -> dict:
        return {"n_samples": self.n_samples, "cone_trivial": self.cone_trivial,
                "min_value": self.min_value, "min_normalized": self.min_normalized,
                "necessary_ok": self.necessary_ok,
                "beta_by_radius": {str(k): v for k, v in self.beta_by_radius.items()},
                "beta": self.beta, "growth_ok": self.growth_ok,
                "active_fraction": self.active_fraction}


def sosc_check(u, y, q, spec: ProblemSpec, disc: Discretization, tau: float = TAU_DEFAULT,
               n_samples: int = 50, seed: int = 0, radii=(1e-2, 1e-3),
               n_growth: int = 10) -> SoscReport:
    """Sample the critical cone and the neighbourhood of a computed minimizer.

    The necessary condition is read as min J''(u) v^2 >= -1e-10 ||v||^2 over
    the samples; the growth constant beta is the smallest observed
    2 (J(v) - J(u)) / ||v - u||^2 over admissible v within each radius.
    """
    rng = np.random.default_rng(seed)
    uv = _vals(u)
    values, normalized, ok = [], [], []
    for _ in range(n_samples):
        v = cone_sample(u, y, q, tau, rng, spec, disc).v
        nv = disc.l2_omega_t(v.values) ** 2
        if nv == 0.0:
            continue
        val = hessian_quadratic(spec, disc, uv, y, q, v)
        values.append(val)
        normalized.append(val / nv)
        ok.append(val >= -1e-10 * nv)
    trivial = not values
    min_val = min(values) if values else 0.0
    min_norm = min(normalized) if normalized else 0.0
    necessary = all(ok)

    J_u = cost(spec, disc, uv)
    betas = {}
    for gamma in radii:
        ratios = []
        for _ in range(n_growth):
            v = project_control(uv + gamma * rng.uniform(-1.0, 1.0, uv.shape), spec, disc.grid)
            d = disc.l2_omega_t(v.values - uv) ** 2
            if d == 0.0:
                continue
            ratios.append(2 * (cost(spec, disc, v) - J_u) / d)
        betas[gamma] = min(ratios) if ratios else math.nan
    finite = [b for b in betas.values() if math.isfinite(b)]
    beta = min(finite) if finite else math.nan
    act = active_set(u, y, q, spec, disc, tau).mask
    return SoscReport(
        n_samples=len(values), cone_trivial=trivial, min_value=float(min_val),
        min_normalized=float(min_norm), necessary_ok=bool(necessary), beta_by_radius=betas,
        beta=float(beta), growth_ok=bool(finite) and beta > 0,
        active_fraction=float(act.sum() / max(disc.mask.sum() * (disc.N + 1), 1)),
    )
