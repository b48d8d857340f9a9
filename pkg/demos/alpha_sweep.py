"""Multi-start experiment: do different starting controls reach the same minimizer?

For each alpha, five random admissible starts are optimized and the largest
pairwise distance between the limits is printed.

Run: python3 demos/alpha_sweep.py
"""

import dataclasses

from fracbilin import load_default_case
from fracbilin.discretization import build_discretization
from fracbilin.optimize import uniqueness_experiment

case = load_default_case()
disc = build_discretization(case.spec, case.n_interior, case.n_steps)
for alpha in (1.0, 3.0, 10.0, 30.0):
    spec = dataclasses.replace(case.spec, alpha=alpha)
    rep = uniqueness_experiment(spec, disc, case.optimizer, 5)
    print(f"alpha = {alpha:5g}: max distance {rep.max_distance:.3e}, "
          f"final J {min(rep.final_J):.10f}, iterations {rep.iterations}, C_emp {rep.C_emp:.3g}")
