import json
import math

import numpy as np
import pytest

from conftest import make_spec
from fracbilin.diagnostics import (SUITES, _draw_pair, _ratio, lipschitz_probe, random_instance,
                                   run_suite, smooth_control)
from fracbilin.discretization import build_discretization
from fracbilin.errors import DegeneratePair
from fracbilin.forward import solve_forward
from fracbilin.report import ANCHORS, DiagnosticsRecord


@pytest.fixture(scope="module")
def small():
    spec = make_spec()
    return spec, build_discretization(spec, 16, 16)


@pytest.mark.parametrize("suite", [None, "", "none"])
def test_empty_selection(small, suite):
    rep = run_suite(*small, suite)
    assert rep.entries == [] and rep.n_pass == 0 and rep.n_fail == 0
    assert rep.to_json()["summary"] == {"n_pass": 0, "n_fail": 0}


def test_unknown_suite(small):
    with pytest.raises(ValueError):
        run_suite(*small, "everything")


def test_unknown_anchor_rejected():
    with pytest.raises(ValueError):
        DiagnosticsRecord("x", "nowhere", 0.0, 1.0, True, 1.0)


@pytest.fixture(scope="module")
def all_small(small):
    return run_suite(*small, "all", seed=3)


def test_all_suites_pass_on_small_case(all_small):
    failing = [r.name for r in all_small.entries if not r.passed]
    assert failing == []
    assert all_small.n_pass + all_small.n_fail == len(all_small.entries)


def test_report_sorted_and_anchored(all_small):
    names = [r.name for r in all_small.entries]
    assert names == sorted(names)
    assert len(set(names)) == len(names)
    assert all(r.anchor in ANCHORS for r in all_small.entries)
    json.dumps(all_small.to_json())


def test_all_is_union_of_suites(small, all_small):
    total = sum(len(run_suite(*small, s, seed=3).entries) for s in SUITES)
    assert total == len(all_small.entries)


def test_deterministic(small):
    a = run_suite(*small, "adjointness", seed=5).to_json()
    b = run_suite(*small, "adjointness", seed=5).to_json()
    assert a == b


def test_maxprinciple_default(default_case, default_disc):
    rep = run_suite(default_case.spec, default_disc, "maxprinciple", seed=default_case.optimizer.seed)
    assert rep.all_passed
    nonneg = [r for r in rep.entries if r.name.startswith("nonnegativity")]
    assert len(nonneg) >= 3 * 50


def test_adjointness_dense_instance():
    spec = make_spec()
    rep = run_suite(spec, build_discretization(spec, 8, 4), "adjointness")
    assert len(rep.entries) == 10 and rep.all_passed
    assert all(r.lhs <= 1e-12 for r in rep.entries)


def test_maxprinciple_flags_negative_initial_data():
    from fracbilin.problem import Profile
    spec = make_spec(y0=Profile.from_dict({"kind": "constant", "value": -1.0}, "y0"))
    rep = run_suite(spec, build_discretization(spec, 12, 12), "maxprinciple")
    assert rep.n_fail > 0


# random instances and smooth controls


def test_random_instance_assumptions():
    for i in range(10):
        spec = random_instance(np.random.default_rng([1, i]))
        d = build_discretization(spec, 16, 16)
        assert spec.kappa.sup_bound <= 1 and spec.T <= 1
        assert np.min(spec.y0(d.grid.nodes)) >= 0
        assert spec.m < 0 < spec.M


def test_smooth_control_resolution_independent(small):
    spec, d = small
    coeffs = np.random.default_rng(0).standard_normal((4, 4))
    fine = build_discretization(spec, 2 * d.n + 1, 2 * d.N)
    a = smooth_control(spec, d, coeffs).values
    b = smooth_control(spec, fine, coeffs).values
    # coarse node i is fine node 2i+1; coarse level k is fine level 2k
    np.testing.assert_allclose(a, b[::2][:, 1::2], rtol=0, atol=1e-14)
    on = a[:, d.mask]
    assert on.min() >= spec.m and on.max() <= spec.M


# Lipschitz probe


class _Repeating:
    """Generator stand-in that repeats a value a fixed number of times."""

    def __init__(self, repeats):
        self.repeats = repeats
        self.calls = 0
        self.inner = np.random.default_rng(0)

    def standard_normal(self, shape):
        self.calls += 1
        if self.calls <= 2 * self.repeats:
            return np.zeros(shape)
        return self.inner.standard_normal(shape)


def test_degenerate_pair_redrawn():
    c1, c2, attempts = _draw_pair(_Repeating(2), (3, 3))
    assert attempts == 2 and not np.array_equal(c1, c2)


def test_degenerate_pair_gives_up():
    with pytest.raises(DegeneratePair):
        _draw_pair(_Repeating(100), (3, 3))


def test_coinciding_controls_raise(small):
    spec, d = small
    v = smooth_control(spec, d, np.ones((4, 4)))
    with pytest.raises(DegeneratePair):
        _ratio(spec, d, v, v)


def test_lipschitz_probe_small(small):
    spec, d = small
    rep = lipschitz_probe(spec, d, n_pairs=5, seed=2)
    assert len(rep.ratios) == 5
    assert math.isfinite(rep.max_ratio) and rep.max_ratio > 0
    assert rep.stability <= 2.0
    assert {r.name for r in rep.records()} == {"lipschitz_max_ratio",
                                               "lipschitz_resolution_stability",
                                               "lipschitz_y0_scaling"}
    with pytest.raises(ValueError):
        lipschitz_probe(spec, d, n_pairs=0)


def test_lipschitz_ratio_matches_direct_evaluation(small):
    spec, d = small
    rep = lipschitz_probe(spec, d, n_pairs=3, seed=4)
    # the reported ratios are ||G(v1) - G(v2)||^2 / ||v1 - v2||^2 with h*dt weights
    rng = np.random.default_rng([4, 3])
    c1, c2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    v1, v2 = smooth_control(spec, d, c1), smooth_control(spec, d, c2)
    num = d.l2_q(solve_forward(spec, d, v1).values - solve_forward(spec, d, v2).values) ** 2
    assert rep.ratios[0] == pytest.approx(num / d.l2_omega_t(v1.values - v2.values) ** 2, rel=1e-14)
