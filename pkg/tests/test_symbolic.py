import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strongmix.rng import stream
from strongmix.symbolic import (
    Admissible, ConstraintProfile, SymbolSequence, SymbolWeights, beta, beta_tail_lower, cylinder_mask,
    cylinder_measure, k_measure_direct, k_measure_lower_bound, sample_symbols, shift_cylinder, shift_symbols,
)
from strongmix.verify import hoeffding_radius

SCHED = (3, 7, 12, 18, 25, 33, 42, 52, 63, 75, 88, 102)
W = SymbolWeights.from_schedule(SCHED, 0.5)

admissibles = st.builds(
    lambda vals, cof: Admissible.excluding(vals) if cof else Admissible.of(vals),
    st.lists(st.integers(1, 6), min_size=1, max_size=4, unique=True), st.booleans())
cylinders = st.lists(st.tuples(st.integers(-8, 8), admissibles), max_size=4)


def test_probabilities_sum_to_one():
    total = math.fsum(W.probabilities(W.alphabet)) + W.mass_above(W.alphabet)
    assert total == pytest.approx(1.0, abs=1e-15)
    assert all(W.p(n) > 0 for n in range(1, W.alphabet + 1))


def test_schedule_weights_head():
    # 1 - c_1 = theta / 2 / (N_2 - N_1) = 0.5 / 2 / 4
    assert W.p(1) == 1 - 0.0625
    assert W.mass_above(2) == 0.5 * 0.25 / 5


def test_near_degenerate_weights_give_all_ones():
    w = SymbolWeights.geometric([1 - 1e-12])
    seq = sample_symbols(w, (0, 999), stream(3, "degenerate"))
    assert np.all(seq.symbols == 1)


def test_empirical_frequency_of_first_symbol():
    w = SymbolWeights.geometric([0.9])
    draws = w.draw(stream(5, "freq"), 100_000)
    assert abs(np.mean(draws == 1) - 0.9) <= 3 * 0.3 / math.sqrt(1e5)


def test_sampling_replays():
    a = sample_symbols(W, (-5, 40), stream(9, "replay"))
    b = sample_symbols(W, (-5, 40), stream(9, "replay"))
    c = sample_symbols(W, (-5, 40), stream(10, "replay"))
    assert a == b and hash(a) == hash(b)
    assert a != c


def test_sequence_is_read_only():
    seq = SymbolSequence(0, [1, 2, 3])
    with pytest.raises(ValueError):
        seq.symbols[0] = 5
    with pytest.raises(ValueError):
        SymbolSequence(0, [1, 0])
    with pytest.raises(IndexError):
        seq.at(3)


@given(st.integers(-50, 50), st.integers(-20, 20), st.integers(-20, 20))
def test_shift_group_law(start, a, b):
    seq = sample_symbols(W, (start, start + 30), stream(1, "group"))
    assert shift_symbols(seq, 0) == seq
    one = shift_symbols(seq, 1)
    for k in range(one.start, one.end + 1):
        assert one.at(k) == seq.at(k + 1)
    assert shift_symbols(shift_symbols(seq, a), b) == shift_symbols(seq, a + b)


def test_cylinder_examples():
    assert cylinder_measure(W, []) == 1.0
    assert cylinder_measure(W, [(0, Admissible.of([1]))]) == W.p(1)
    got = cylinder_measure(W, [(0, Admissible.of([1])), (5, Admissible.of([1, 2]))])
    assert got == pytest.approx(W.p(1) * (W.p(1) + W.p(2)), rel=1e-15)


def test_cylinder_example_by_monte_carlo():
    cons = [(0, Admissible.of([1])), (5, Admissible.of([1, 2]))]
    blk = W.draw(stream(2, "mc"), (100_000, 6))
    freq = cylinder_mask(cons, blk, 0).mean()
    assert abs(freq - cylinder_measure(W, cons)) <= hoeffding_radius(100_000)


def test_admissible_algebra():
    a, b = Admissible.of([1, 2, 3]), Admissible.excluding([2])
    assert (a & b) == Admissible.of([1, 3])
    assert (b & Admissible.excluding([5])) == Admissible.excluding([2, 5])
    assert Admissible.excluding([1]).measure(W) == pytest.approx(1 - W.p(1), rel=1e-15)
    assert Admissible.upto(3).measure(W) == W.cumulative(3)


@given(cylinders)
def test_measure_in_unit_interval_and_shift_invariant(cons):
    m = cylinder_measure(W, cons)
    assert 0.0 <= m <= 1.0
    for n in (-3, 1, 17):
        assert cylinder_measure(W, shift_cylinder(cons, n)) == m


@given(cylinders, cylinders, st.integers(0, 100))
def test_disjoint_cylinders_are_independent(a, b, lag):
    lag_needed = 17  # windows are within [-8, 8]
    n = lag + lag_needed
    joint = cylinder_measure(W, list(a) + shift_cylinder(b, n))
    assert abs(joint - cylinder_measure(W, a) * cylinder_measure(W, b)) <= 1e-14


@given(cylinders)
@settings(max_examples=20, deadline=None)
def test_cylinder_mask_matches_measure(cons):
    blk = W.draw(stream(4, "mask"), (20_000, 17))
    freq = cylinder_mask(cons, blk, -8).mean()
    assert abs(freq - cylinder_measure(W, cons)) <= 1.5 * hoeffding_radius(20_000, 1e-4)


# -- the compact set K -------------------------------------------------------------


def test_profile_validation():
    with pytest.raises(ValueError):
        ConstraintProfile((3, 5))
    with pytest.raises(ValueError):
        ConstraintProfile((3, 3))
    with pytest.raises(ValueError):
        ConstraintProfile(())


def test_profile_caps():
    prof = ConstraintProfile(SCHED)
    assert [prof.cap(k) for k in (0, 3, 4, 7, 8, 12, 13)] == [1, 1, 1, 1, 2, 2, 3]
    assert all(prof.cap(k) == prof.cap(-k) for k in range(200))
    for l in range(1, 30):
        assert prof.gap(l + 1) > prof.gap(l)


def test_admissibility_tag():
    prof = ConstraintProfile(SCHED)
    ok = SymbolSequence(-10, [prof.cap(k) for k in range(-10, 11)])
    assert prof.contains(ok)
    bad = SymbolSequence(-10, [prof.cap(k) + (k == 9) for k in range(-10, 11)])
    assert not prof.contains(bad)
    # shifting the sequence shifts the constraint set
    assert prof.contains(shift_symbols(ok, 2), s=2)


def test_beta_arithmetic():
    w = SymbolWeights.geometric([0.5, 0.25])
    prof = ConstraintProfile((1, 3))
    assert beta(w, prof, 1) == 0.25


def test_k_bound_matches_direct_product():
    prof = ConstraintProfile(SCHED)
    kb = k_measure_lower_bound(W, prof, 20)
    assert kb.partial == pytest.approx(k_measure_direct(W, prof, 20), rel=1e-14)
    assert 0 < kb.lower_bound <= kb.partial


def test_k_bound_monotone_and_positive():
    prof = ConstraintProfile(SCHED)
    vals = [k_measure_lower_bound(W, prof, L).lower_bound for L in range(1, 30)]
    assert all(v > 0 for v in vals)
    # the certified bound tightens with L while the partial product shrinks
    assert all(b >= a * (1 - 1e-13) for a, b in zip(vals, vals[1:]))
    partials = [k_measure_lower_bound(W, prof, L).partial for L in range(1, 30)]
    assert all(b <= a for a, b in zip(partials, partials[1:]))


def test_beta_tail_bound_is_valid():
    prof = ConstraintProfile(SCHED)
    for L in (1, 5, 12):
        direct = math.prod(beta(W, prof, l) for l in range(L + 1, 400))
        assert beta_tail_lower(W, L) <= direct


def test_near_degenerate_k_bound():
    w = SymbolWeights.from_schedule(SCHED, 1e-9)
    prof = ConstraintProfile(SCHED)
    assert k_measure_lower_bound(w, prof, 12).lower_bound == pytest.approx(1.0, abs=1e-6)


def test_one_sided_bound():
    prof = ConstraintProfile(SCHED, side="unilateral")
    kb = k_measure_lower_bound(W, prof, 10)
    assert kb.partial == pytest.approx(k_measure_direct(W, prof, 10), rel=1e-14)
