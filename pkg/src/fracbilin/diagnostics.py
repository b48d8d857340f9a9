"""Property suites collected into one seeded report.

Suites: ``maxprinciple``, ``estimates``, ``lipschitz``, ``derivatives`` and
``adjointness``; ``all`` runs every one of them.  Failures become report
entries, never exceptions.  Entries are sorted by name, so the report does not
depend on the order in which checks ran.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .adjoint import adjoint_estimate_lhs, apply_forward_linear, apply_transpose, solve_adjoint_discrete
from .discretization import Discretization, build_discretization
from .errors import DegeneratePair
from .forward import (check_estimates, check_transformed_estimates, initial_values, solve_forward,
                      solve_transformed, source_values)
from .optimize import random_control
from .problem import (ControlField, KernelSpec, Profile, ProblemSpec, SourceFunction,
                      project_control)
from .report import DiagnosticsRecord, DiagnosticsReport, le_record
from .sensitivity import cost, gradient, hessian_bilinear, pairing, solve_linearized, solve_second

__all__ = [
    "SUITES",
    "run_suite",
    "random_instance",
    "smooth_control",
    "lipschitz_probe",
    "LipschitzReport",
]

SUITES = ("maxprinciple", "estimates", "lipschitz", "derivatives", "adjointness")

N_INSTANCES = 50
N_PAIRS = 20
NONNEG_TOL = 1e-12
GRAD_TOL = 1e-7
HESS_TOL = 1e-4
SYM_TOL = 1e-12
TRANSPOSE_TOL = 1e-12


# ---------------------------------------------------------------------------
# random data


def random_instance(rng: np.random.Generator, alpha: float = 1.0) -> ProblemSpec:
    """Problem on (-1, 1) with nonnegative y0 and f, kernel bound <= 1 and T <= 1."""
    u = rng.uniform
    amp_k = u(0.0, 1.0)
    return ProblemSpec(
        domain_lo=-1.0, domain_hi=1.0,
        omega_lo=u(-0.8, -0.1), omega_hi=u(0.1, 0.8),
        T=u(0.25, 1.0), s=u(0.2, 0.9), alpha=alpha,
        m=u(-1.0, 0.0), M=u(0.1, 1.5),
        y0=Profile("bump", {"amplitude": u(0.0, 2.0), "center": u(-0.3, 0.3),
                            "radius": u(0.4, 1.0), "power": u(0.5, 2.0)}),
        yd=Profile("gaussian", {"amplitude": u(0.0, 2.0), "center": u(-0.5, 0.5),
                                "width": u(0.2, 0.6)}),
        f=SourceFunction(Profile("gaussian", {"amplitude": u(0.0, 1.0), "center": u(-0.5, 0.5),
                                              "width": u(0.2, 0.6)}),
                         Profile("constant", {"value": u(0.0, 1.0)})),
        kappa=KernelSpec("exp_decay", {"amplitude": amp_k, "rate": u(0.0, 2.0)}, amp_k),
    )


def _instance_rng(seed: int, tag: int, i: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, i])


def smooth_control(spec: ProblemSpec, disc: Discretization, coeffs: np.ndarray) -> ControlField:
    """Admissible control m + (M - m)(1 + tanh(phi)) / 2 with phi a cosine series in (t, x).

    The same coefficients give the same function at every resolution.
    """
    t = disc.time_grid.times / spec.T
    x = (disc.grid.nodes - spec.omega_lo) / (spec.omega_hi - spec.omega_lo)
    ka, kb = coeffs.shape
    ct = np.cos(np.pi * np.arange(ka)[:, None] * t[None, :])
    cx = np.cos(np.pi * np.arange(kb)[:, None] * x[None, :])
    phi = ct.T @ coeffs @ cx
    raw = spec.m + (spec.M - spec.m) * 0.5 * (1.0 + np.tanh(phi))
    return project_control(raw, spec, disc.grid)


# ---------------------------------------------------------------------------
# suites


def _controls_for(spec: ProblemSpec, disc: Discretization, rng) -> dict[str, np.ndarray]:
    full = np.ones((disc.N + 1, disc.n))
    return {
        "lower": project_control(spec.m * full, spec, disc.grid).values,
        "upper": project_control(spec.M * full, spec, disc.grid).values,
        "random": random_control(spec, disc, rng).values,
    }


def _instances(spec: ProblemSpec, disc: Discretization, seed: int, tag: int):
    """The configured problem followed by the seeded random instances."""
    yield "config", spec, disc, np.random.default_rng([seed, tag])
    for i in range(N_INSTANCES):
        rng = _instance_rng(seed, tag, i)
        inst = random_instance(rng)
        yield f"instance{i:02d}", inst, build_discretization(inst, disc.n, disc.N), rng


def _rename(rec: DiagnosticsRecord, name: str, seed) -> DiagnosticsRecord:
    return dataclasses.replace(rec, name=name, seed=seed)


def suite_maxprinciple(spec, disc, seed) -> list[DiagnosticsRecord]:
    out = []
    for label, sp, d, rng in _instances(spec, disc, seed, 1):
        for cname, v in _controls_for(sp, d, rng).items():
            y = solve_forward(sp, d, v)
            tag = f"{label}/{cname}"
            out.append(le_record(f"nonnegativity[{tag}]", "nonnegativity",
                                 -float(np.min(y.values)), NONNEG_TOL, seed))
            linf = [r for r in check_estimates(y, sp, d, v) if r.name == "linf_bound"][0]
            out.append(_rename(linf, f"linf_bound[{tag}]", seed))
    return out


def suite_estimates(spec, disc, seed) -> list[DiagnosticsRecord]:
    out = []
    ratios = {}
    for label, sp, d, rng in _instances(spec, disc, seed, 2):
        v = random_control(sp, d, rng)
        y = solve_forward(sp, d, v)
        for rec in check_estimates(y, sp, d, v):
            if rec.name == "energy_estimate":
                out.append(_rename(rec, f"energy_estimate[{label}]", seed))
        r = float(np.max(np.abs(v.values))) + sp.kappa.sup_bound + 1.0
        z = solve_transformed(sp, d, v, r)
        for rec in check_transformed_estimates(z, sp, d, r):
            out.append(_rename(rec, f"{rec.name}[{label}]", seed))
        q = solve_adjoint_discrete(sp, d, v, y)
        lhs = adjoint_estimate_lhs(q, d)
        ratios[label] = lhs / max(_data_size(sp, d), 1e-300)
    finite = all(math.isfinite(x) for x in ratios.values())
    worst = max(ratios.values())
    out.append(DiagnosticsRecord("adjoint_estimate_uniform", "adjoint-estimate", worst,
                                 math.inf, finite, math.inf, seed))
    out.append(_adjoint_scaling_record(spec, disc, seed))
    return out


def _data_size(spec: ProblemSpec, disc: Discretization) -> float:
    y0 = initial_values(spec, disc)
    f = source_values(spec, disc)
    yd = np.asarray(spec.yd(disc.grid.nodes), dtype=float)
    return float(np.max(np.abs(y0)) ** 2 + np.max(np.abs(f)) ** 2 + np.max(np.abs(yd)) ** 2)


def _scaled(spec: ProblemSpec, c: float) -> ProblemSpec:
    f = SourceFunction(spec.f.space.scaled(c), spec.f.time)
    return dataclasses.replace(spec, y0=spec.y0.scaled(c), yd=spec.yd.scaled(c), f=f)


def _adjoint_scaling_record(spec, disc, seed) -> DiagnosticsRecord:
    """Scaling all data by 3 must leave adjoint size / data size unchanged."""
    v = random_control(spec, disc, np.random.default_rng([seed, 2, 999]))
    ratios = []
    for c in (1.0, 3.0):
        sp = _scaled(spec, c)
        y = solve_forward(sp, disc, v)
        q = solve_adjoint_discrete(sp, disc, v, y)
        data = _data_size(sp, disc)
        ratios.append(adjoint_estimate_lhs(q, disc) / data if data > 0 else 0.0)
    base = max(abs(ratios[0]), 1e-300)
    return le_record("adjoint_estimate_scaling", "adjoint-estimate",
                     abs(ratios[1] - ratios[0]) / base, 1e-8, seed)


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def suite_derivatives(spec, disc, seed) -> list[DiagnosticsRecord]:
    out = []
    mask = disc.mask[None, :]
    for i in range(10):
        rng = np.random.default_rng([seed, 4, i])
        u = random_control(spec, disc, rng).values
        w = np.where(mask, rng.standard_normal(u.shape), 0.0)
        y = solve_forward(spec, disc, u)
        q = solve_adjoint_discrete(spec, disc, u, y)
        an = pairing(disc, gradient(spec, disc, u, y, q), w)
        eps = 1e-5
        fd = (cost(spec, disc, u + eps * w) - cost(spec, disc, u - eps * w)) / (2 * eps)
        out.append(le_record(f"gradient_fd[{i}]", "gradient-formula", _rel(an, fd), GRAD_TOL, seed))
    for i in range(5):
        rng = np.random.default_rng([seed, 5, i])
        u = random_control(spec, disc, rng).values
        w = np.where(mask, rng.standard_normal(u.shape), 0.0)
        h = np.where(mask, rng.standard_normal(u.shape), 0.0)
        y = solve_forward(spec, disc, u)
        q = solve_adjoint_discrete(spec, disc, u, y)
        eps = 1e-3
        j0 = cost(spec, disc, u, y)
        fd = (cost(spec, disc, u + eps * w) - 2 * j0 + cost(spec, disc, u - eps * w)) / eps**2
        an = hessian_bilinear(spec, disc, u, y, q, w, w)
        out.append(le_record(f"hessian_fd[{i}]", "hessian-formula", _rel(an, fd), HESS_TOL, seed))
        hw_h = hessian_bilinear(spec, disc, u, y, q, w, h)
        hh_w = _hessian_second_state(spec, disc, u, y, h, w)
        out.append(le_record(f"hessian_symmetry[{i}]", "hessian-formula", _rel(hw_h, hh_w),
                             SYM_TOL, seed))
    return out


def _hessian_second_state(spec, disc, u, y, w, h) -> float:
    """J''(u)[w, h] from the second-order state instead of the adjoint."""
    rw = solve_linearized(spec, disc, u, y, w)
    rh = solve_linearized(spec, disc, u, y, h)
    z = solve_second(spec, disc, u, y, w, h, rw, rh)
    err = y.values[-1] - spec.yd(disc.grid.nodes)
    wv = np.where(disc.mask[None, :], w, 0.0)
    hv = np.where(disc.mask[None, :], h, 0.0)
    return (disc.h * float(err @ z.values[-1]) + disc.h * float(rw.values[-1] @ rh.values[-1])
            + spec.alpha * disc.inner_omega_t(wv, hv))


def suite_adjointness(spec, disc, seed) -> list[DiagnosticsRecord]:
    out = []
    for i in range(10):
        rng = np.random.default_rng([seed, 6, i])
        v = random_control(spec, disc, rng)
        b = rng.standard_normal((disc.N, disc.n))
        c = rng.standard_normal((disc.N, disc.n))
        lhs = float(np.sum(apply_forward_linear(disc, v, b) * c))
        rhs = float(np.sum(b * apply_transpose(disc, v, c)))
        out.append(le_record(f"transpose_identity[{i}]", "transpose-identity", _rel(lhs, rhs),
                             TRANSPOSE_TOL, seed))
    return out


def suite_lipschitz(spec, disc, seed) -> list[DiagnosticsRecord]:
    return lipschitz_probe(spec, disc, N_PAIRS, seed).records()


_SUITE_FUNCS = {
    "maxprinciple": suite_maxprinciple,
    "estimates": suite_estimates,
    "lipschitz": suite_lipschitz,
    "derivatives": suite_derivatives,
    "adjointness": suite_adjointness,
}


def run_suite(spec: ProblemSpec, disc: Discretization, suite: str | None, seed: int = 0) -> DiagnosticsReport:
    """Run one suite (or ``all``, or none for an empty selection) and return the sorted report."""
    if suite in (None, "", "none"):
        names: tuple[str, ...] = ()
    elif suite == "all":
        names = SUITES
    elif suite in _SUITE_FUNCS:
        names = (suite,)
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    report = DiagnosticsReport(seed=seed)
    for name in names:
        report.add(*_SUITE_FUNCS[name](spec, disc, seed))
    return report.sorted()


# ---------------------------------------------------------------------------
# Lipschitz probe


@dataclass
class LipschitzReport:
    ratios: np.ndarray
    max_ratio: float
    max_ratio_fine: float
    stability: float
    y0_scaling: float
    redraws: int
    seed: int

    def records(self) -> list[DiagnosticsRecord]:
        a = "lipschitz-control-to-state"
        return [
            le_record("lipschitz_max_ratio", a, self.max_ratio, math.inf, self.seed),
            le_record("lipschitz_resolution_stability", a, self.stability, 2.0, self.seed),
            le_record("lipschitz_y0_scaling", a, self.y0_scaling, 4.0 * 1.1, self.seed),
        ]

    def to_json(self) -> dict:
        return {"ratios": self.ratios.tolist(), "max_ratio": self.max_ratio,
                "max_ratio_fine": self.max_ratio_fine, "stability": self.stability,
                "y0_scaling": self.y0_scaling, "redraws": self.redraws, "seed": self.seed}


def _draw_pair(rng, shape, max_attempts: int = 10):
    for attempt in range(max_attempts):
        c1, c2 = rng.standard_normal(shape), rng.standard_normal(shape)
        if not np.array_equal(c1, c2):
            return c1, c2, attempt
    raise DegeneratePair(f"drew identical controls {max_attempts} times")


def _ratio(spec, disc, v1, v2) -> tuple[float, float]:
    d = disc.l2_omega_t(v1.values - v2.values) ** 2
    if d == 0.0:
        raise DegeneratePair("controls coincide on the grid")
    num = disc.l2_q(solve_forward(spec, disc, v1).values - solve_forward(spec, disc, v2).values) ** 2
    return num, d


def lipschitz_probe(spec: ProblemSpec, disc: Discretization, n_pairs: int = N_PAIRS,
                    seed: int = 0, modes: tuple[int, int] = (4, 4)) -> LipschitzReport:
    """Largest ||G(v1) - G(v2)||^2 / ||v1 - v2||^2 over seeded smooth pairs.

    The same pairs are evaluated with h and dt both halved; ``stability`` is
    the larger of the two max-ratio quotients.  ``y0_scaling`` is the growth of
    the numerator of the first pair when y0 is doubled.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng([seed, 3])
    fine = build_discretization(spec, 2 * disc.n + 1, 2 * disc.N)
    pairs, redraws = [], 0
    while len(pairs) < n_pairs:
        c1, c2, extra = _draw_pair(rng, modes)
        redraws += extra
        try:
            _ratio(spec, disc, smooth_control(spec, disc, c1), smooth_control(spec, disc, c2))
        except DegeneratePair:
            redraws += 1
            if redraws > 10 * n_pairs:
                raise
            continue
        pairs.append((c1, c2))

    def max_ratio(d):
        out = []
        for c1, c2 in pairs:
            num, den = _ratio(spec, d, smooth_control(spec, d, c1), smooth_control(spec, d, c2))
            out.append(num / den)
        return np.array(out)

    coarse = max_ratio(disc)
    fine_r = max_ratio(fine)
    mc, mf = float(coarse.max()), float(fine_r.max())
    stability = max(mc / mf, mf / mc) if mc > 0 and mf > 0 else math.inf

    c1, c2 = pairs[0]
    v1, v2 = smooth_control(spec, disc, c1), smooth_control(spec, disc, c2)
    num1, _ = _ratio(spec, disc, v1, v2)
    num2, _ = _ratio(dataclasses.replace(spec, y0=spec.y0.scaled(2.0)), disc, v1, v2)
    scaling = num2 / num1 if num1 > 0 else 0.0
    return LipschitzReport(coarse, mc, mf, stability, float(scaling), redraws, seed)
