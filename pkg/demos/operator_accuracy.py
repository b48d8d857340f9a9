"""How accurate is the discrete fractional Laplacian?

Two test functions on (-1, 1), s = 1/2:
  sqrt(1 - x^2), whose exact image is the constant 1;
  cos(pi x / 2), smooth inside, compared at x = -0.5, 0, 0.5 with a quadrature oracle.
The first shows an interior error that shrinks while the error next to the
boundary grows; the second shows clean second-order convergence.

Run: python3 demos/operator_accuracy.py   (needs mpmath)
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import fraclap_cos  # noqa: E402

from fracbilin import load_default_case  # noqa: E402
from fracbilin.fracop import assemble  # noqa: E402
from fracbilin.problem import make_grid  # noqa: E402

spec = load_default_case().spec
print(" n     sqrt profile: err at x=0   worst (excl. 2 edge nodes)   cos profile: err")
exact = np.array([fraclap_cos(p, 0.5) for p in (-0.5, 0.0, 0.5)])
prev = None
for n in (63, 127, 255, 511):
    g = make_grid(spec, n)
    a = assemble(g, 0.5)
    e = a @ np.sqrt(np.clip(1 - g.nodes**2, 0, None)) - 1.0
    av = a @ np.cos(np.pi * g.nodes / 2)
    idx = [int(np.argmin(np.abs(g.nodes - p))) for p in (-0.5, 0.0, 0.5)]
    ec = float(np.max(np.abs(av[idx] - exact)))
    ratio = f"(ratio {prev / ec:.2f})" if prev else ""
    prev = ec
    print(f"{n:4d}   {abs(e[n // 2]):.3e}              {np.max(np.abs(e[1:-1])):.3f}"
          f"                        {ec:.3e} {ratio}")
