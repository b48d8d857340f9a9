"""Solve the bundled default case end to end and print what happened.

Run: python3 demos/optimize_default.py
"""

import numpy as np

from fracbilin import load_default_case
from fracbilin.discretization import build_discretization
from fracbilin.forward import solve_forward
from fracbilin.optimize import active_set, solve_pgd, sosc_check
from fracbilin.problem import project_control
from fracbilin.sensitivity import cost

case = load_default_case()
spec = case.spec
disc = build_discretization(spec, case.n_interior, case.n_steps)
print(f"grid {disc.n} nodes x {disc.N} steps, s = {spec.s}, alpha = {spec.alpha}, "
      f"controls in [{spec.m}, {spec.M}] on ({spec.omega_lo}, {spec.omega_hi})")

start = project_control(np.zeros((disc.N + 1, disc.n)), spec, disc.grid)
y = solve_forward(spec, disc, start)
print(f"starting control P_U(0): J = {cost(spec, disc, start, y):.10f}, "
      f"state range [{y.values.min():.4f}, {y.values.max():.4f}]")

res = solve_pgd(spec, disc, case.optimizer, start)
print(f"projected gradient: converged={res.converged} after {res.iterations} iterations")
for k, (J, r) in enumerate(zip(res.J_history, res.residual_history)):
    print(f"  it {k:3d}  J = {J:.12f}  residual = {r:.3e}")

act = active_set(res.u_opt, res.y_opt, res.q_opt, spec, disc).mask
u = res.u_opt.values[:, disc.mask]
print(f"optimal control: {np.mean(u == spec.m):.1%} of omega x [0,T] at the lower bound, "
      f"{np.mean(u == spec.M):.1%} at the upper bound, {act.mean():.1%} strongly active")

rep = sosc_check(res.u_opt, res.y_opt, res.q_opt, spec, disc, n_samples=50)
print(f"second-order check: min J''v^2/|v|^2 = {rep.min_normalized:.4f}, growth beta = {rep.beta:.3f}")
