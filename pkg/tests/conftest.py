import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fracbilin.discretization import build_discretization  # noqa: E402
from fracbilin.problem import (KernelSpec, Profile, ProblemSpec, SourceFunction,  # noqa: E402
                               load_case)

DEFAULT_TOML = Path(__file__).resolve().parents[1] / "src" / "fracbilin" / "data" / "default.toml"


@pytest.fixture(scope="session")
def default_case():
    return load_case(DEFAULT_TOML)


@pytest.fixture(scope="session")
def default_disc(default_case):
    c = default_case
    return build_discretization(c.spec, c.n_interior, c.n_steps)


def make_spec(**kw) -> ProblemSpec:
    """Small problem on (-1, 1) with omega = (-0.5, 0.5); keywords override fields."""
    base = dict(
        domain_lo=-1.0, domain_hi=1.0, omega_lo=-0.5, omega_hi=0.5, T=1.0, s=0.5,
        alpha=1.0, m=-1.0, M=1.0,
        y0=Profile("bump", {"amplitude": 1.0, "center": 0.0, "radius": 1.0, "power": 1.0}),
        yd=Profile("gaussian", {"amplitude": 0.5, "center": 0.2, "width": 0.4}),
        f=SourceFunction(Profile("gaussian", {"amplitude": 0.3, "center": -0.2, "width": 0.3}),
                         Profile("constant", {"value": 1.0})),
        kappa=KernelSpec("exp_decay", {"amplitude": 0.5, "rate": 1.0}, 0.5),
    )
    base.update(kw)
    return ProblemSpec(**base)


ZERO_KERNEL = KernelSpec("constant", {"value": 0.0}, 0.0)
ZERO_SOURCE = SourceFunction(Profile("constant", {"value": 0.0}))
ZERO_PROFILE = Profile("constant", {"value": 0.0})


class NodalTarget:
    """Piecewise-linear interpolant through grid values, zero at the domain ends."""

    def __init__(self, spec, nodes, values):
        self.x = np.r_[spec.domain_lo, nodes, spec.domain_hi]
        self.y = np.r_[0.0, values, 0.0]

    def __call__(self, z):
        return np.interp(np.asarray(z, dtype=float), self.x, self.y)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
