import math

import numpy as np
import pytest

from strongmix.construction import build_model, orbit_point, phi_batch
from strongmix.rng import stream
from strongmix.shifts import WeightedShift, WeightRule
from strongmix.spaces import UNILATERAL, FSpace, SparseVector, f_norm, neighborhood_radius
from strongmix.symbolic import Admissible, SymbolSequence, cylinder_measure
from strongmix.verify import (
    FAIL, INCONCLUSIVE, PASS, Ball, ModeMismatch, SymbolCylinder, check_exactness_structure,
    estimate, hoeffding_radius, indicators, orbit_block, random_ball_events, random_cylinders,
    test_full_support as run_support, test_invariance as run_invariance, test_mixing as run_mixing,
    test_visit_density as run_density, worst_verdict,
)

from conftest import model_for

ZERO = SparseVector.zero(UNILATERAL)
E1 = SparseVector.unit(UNILATERAL, 1)


@pytest.fixture(scope="module")
def wide():
    # radii so large that every ball around 0 is (numerically) everything
    shift = WeightedShift(UNILATERAL, WeightRule.constant(2), FSpace.lp(2, r0=1e9))
    return build_model(shift, depth=6)


def test_hoeffding_radius():
    assert hoeffding_radius(100_000, 0.01) == pytest.approx(math.sqrt(math.log(200) / 200_000))
    assert hoeffding_radius(400) == pytest.approx(hoeffding_radius(100) / 2)


def test_worst_verdict_order():
    assert worst_verdict([PASS, INCONCLUSIVE]) == INCONCLUSIVE
    assert worst_verdict([INCONCLUSIVE, FAIL, PASS]) == FAIL
    assert worst_verdict([]) == PASS


def test_invariance_of_whole_space(wide):
    rep = run_invariance(wide, Ball(ZERO, 1, "all"), 5000, seed=1)
    assert rep.estimates["mu_A"] == rep.estimates["mu_preimage_A"] == 1.0
    assert rep.estimates["difference"] == 0.0 and rep.verdict == PASS


def test_invariance_of_cylinder_is_exact(doubling):
    ev = SymbolCylinder(((0, Admissible.of([2, 3])), (4, Admissible.excluding([1]))), "c")
    rep = run_invariance(doubling, ev)
    assert rep.verdict == PASS and rep.estimates["mu_A"] == rep.estimates["mu_shifted_A"]


def test_invariance_fixture(doubling):
    rep = run_invariance(doubling, Ball(E1, 2, "e1"), 100_000, seed=0)
    assert rep.verdict == PASS
    assert rep.estimates == {"mu_A": 0.03402, "mu_preimage_A": 0.0332, "difference": pytest.approx(0.00082)}
    assert rep.estimates["difference"] <= rep.radius + rep.uncertain_fraction


def test_exact_mixing_of_cylinders(omega):
    A = SymbolCylinder(((1, Admissible.of([1])), (3, Admissible.of([2, 4]))), "A")
    B = SymbolCylinder(((1, Admissible.excluding([1])),), "B")
    rep = run_mixing(omega, A, B, range(0, 30))
    assert rep.verdict == PASS and rep.estimates["max_disjoint_gap"] <= 1e-14
    lag0 = rep.details["curve"][0]
    assert not lag0["disjoint"] and lag0["joint"] == 0.0


def test_mixing_lag_zero_identity(doubling):
    A = Ball(ZERO, 3, "z")
    rep = run_mixing(doubling, A, A, [0, 10], 20_000, seed=2)
    c0 = rep.details["curve"][0]
    assert c0["joint"] == rep.estimates["mu_A"]
    assert c0["product"] == pytest.approx(rep.estimates["mu_A"] ** 2)


def test_mixing_curve_on_doubling(doubling):
    A = Ball(ZERO, 3, "z")
    rep = run_mixing(doubling, A, A, range(0, 21), 100_000, seed=0)
    assert rep.verdict == PASS
    n_star = rep.estimates["n_star"]
    assert n_star is not None and n_star <= 20
    for c in rep.details["curve"]:
        if c["lag"] >= n_star:
            assert abs(c["correlation"]) <= c["band"]


def test_full_support_at_origin(doubling):
    rep = run_support(doubling, 1, 20_000, seed=1)
    assert rep.verdict == PASS
    assert rep.estimates["frequency"] >= rep.estimates["lower_bound"]


def test_full_support_fixture(doubling):
    rep = run_support(doubling, 3, 100_000, seed=0)
    assert rep.verdict == PASS
    assert rep.estimates["frequency"] == 0.0125
    assert rep.estimates["lower_bound"] == pytest.approx(0.002411188932483853, rel=1e-12)


def test_full_support_degenerate_weights():
    m = build_model(WeightedShift(UNILATERAL, WeightRule.constant(2), FSpace.lp(2)), depth=6, theta=1e-9)
    rep = run_support(m, 1, 2000, seed=0)
    assert rep.estimates["frequency"] == 1.0 and rep.verdict == PASS


def test_full_support_range(doubling):
    with pytest.raises(ValueError):
        run_support(doubling, doubling.depth + 1, 10)


def test_visit_density_whole_space(wide):
    rep = run_density(wide, Ball(ZERO, 1, "all"), 500, samples=1000, seed=0)
    assert rep.estimates["density"] == 1.0 and rep.verdict == PASS


def test_visit_density_of_cylinder(omega):
    ev = SymbolCylinder(((1, Admissible.of([1])),), "first")
    rep = run_density(omega, ev, 10_000, seed=0)
    assert rep.verdict == PASS
    assert rep.estimates["measure"] == omega.weights.p(1)


def test_visit_density_fixture(doubling):
    rep = run_density(doubling, Ball(ZERO, 3, "z"), 10_000, samples=100_000, seed=0)
    assert rep.verdict == PASS
    assert rep.estimates["density"] == 0.8129 and rep.estimates["measure"] == 0.79495


def test_exactness_on_omega(omega):
    rep = check_exactness_structure(omega, samples=20_000, seed=0)
    assert rep.verdict == PASS
    assert rep.estimates["equivariance_error"] == 0.0
    assert rep.estimates["marginal_p"] > 0.01 and rep.estimates["independence_p"] > 0.01


def test_exactness_weighted():
    m = build_model(WeightedShift(UNILATERAL, WeightRule.constant(2), FSpace.lp(2)), depth=8, mode="exact")
    rep = check_exactness_structure(m, samples=20_000, seed=0)
    assert rep.verdict == PASS and rep.estimates["equivariance_error"] <= 1e-14


def test_exactness_needs_exact_mode(bilateral):
    with pytest.raises(ModeMismatch):
        check_exactness_structure(bilateral)


@pytest.mark.parametrize("name", ["l2-doubling", "l2-bilateral", "omega-any"])
def test_three_way_membership(name):
    m = model_for(name)
    L = 3
    lo, hi = m.required_window(L)
    blk = m.weights.draw(stream(0, "three"), (3000, hi - lo + 1))
    coords, vals = phi_batch(m, blk, lo, L)
    center = SparseVector.from_dense(m.side, coords, vals[0])
    ev = Ball(center, 2, "b")
    inside, unc = indicators(m, ev, blk, lo, L)
    outside = ~inside & ~unc
    assert not np.any(inside & unc)
    assert (inside.astype(int) + unc + outside == 1).all()
    r, eps = neighborhood_radius(m.space, 2), m.truncation_error(L)
    for i in range(0, 3000, 97):
        d = f_norm(m.space, SparseVector.from_dense(m.side, coords, vals[i]) - center)
        assert inside[i] == (d < r - eps)
        assert unc[i] == (abs(d - r) <= eps)


@pytest.mark.parametrize("name", ["l2-doubling", "omega-any"])
def test_oracle_agreement_on_cylinders(name):
    m = model_for(name)
    for ev in random_cylinders(m, 8, seed=4):
        freq, unc = estimate(m, ev, 20_000, seed=4)
        assert unc == 0.0
        assert abs(freq - cylinder_measure(m.weights, ev.constraints)) <= hoeffding_radius(20_000, 0.001)


def test_cylinder_estimates_follow_orbit(omega):
    ev = SymbolCylinder(((2, Admissible.of([1])),), "c")
    # T^n x in E  iff  symbol n+2 is 1
    freq, _ = estimate(omega, ev, 20_000, seed=0, lag=5)
    assert abs(freq - omega.weights.p(1)) <= hoeffding_radius(20_000, 0.001)


@pytest.mark.parametrize("name", ["l2-doubling", "omega-any"])
def test_orbit_block_matches_orbit_points(name):
    m = model_for(name)
    L, H = 3, 6
    lo, hi = m.required_window(L, H - 1)
    seq = SymbolSequence(lo, m.weights.draw(stream(1, "ob"), hi - lo + 1))
    start, rows = orbit_block(m, seq, H, L)
    coords, vals = phi_batch(m, np.ascontiguousarray(rows), start, L)
    for n in range(H):
        want = orbit_point(m, seq, n, L).value
        got = SparseVector.from_dense(m.side, coords, vals[n])
        assert got == want


def test_random_events_are_deterministic(doubling):
    a = random_ball_events(doubling, 4, seed=3)
    b = random_ball_events(doubling, 4, seed=3)
    assert a == b and len(a) == 4
    assert random_cylinders(doubling, 5, 1) == random_cylinders(doubling, 5, 1)


def test_reports_are_deterministic(doubling):
    ev = Ball(E1, 2, "e1")
    a = run_invariance(doubling, ev, 5000, seed=11).to_dict()
    b = run_invariance(doubling, ev, 5000, seed=11).to_dict()
    assert a == b
    assert a["fingerprint"] == doubling.fingerprint and a["seed"] == 11


def test_inconclusive_when_truncation_dominates(bilateral):
    # at level 1 the certified error (~0.25) exceeds the radius of U_2
    ev = Ball(SparseVector.zero(bilateral.side), 2, "edge")
    rep = run_invariance(bilateral, ev, 2000, seed=0, L=1)
    assert rep.uncertain_fraction > 0.2
    assert rep.verdict == INCONCLUSIVE and "level" in rep.details["hint"]
