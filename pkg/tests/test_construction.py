import math

import numpy as np
import pytest

from strongmix.construction import (
    EXACT, BuildError, WindowError, build_model, build_schedule, evaluate_phi, orbit_point, phi_batch,
    sample_point,
)
from strongmix.rng import stream
from strongmix.shifts import (
    BlockCaps, DenseSetEnumeration, TailMajorant, WeightedShift, WeightRule, apply_backward, apply_power,
)
from strongmix.spaces import BILATERAL, UNILATERAL, FSpace, SparseVector, neighborhood_radius
from strongmix.symbolic import SymbolSequence, k_measure_lower_bound
from strongmix.verify import schedule_replay, test_semiconjugacy as run_semiconjugacy

from conftest import model_for

L2 = FSpace.lp(2)
DOUBLING = WeightedShift(UNILATERAL, WeightRule.constant(2), L2)


class ZeroMajorant(TailMajorant):
    """Every dense vector treated as 0."""

    def cap_profile(self, cap):
        return {}


def l1_oracle(schedule, K):
    """Direct sum of the worst per-coordinate amplitudes of S_k x_m, w = 2, unilateral."""
    enum = DenseSetEnumeration(UNILATERAL)
    caps = BlockCaps(tuple(schedule))
    total = 0.0
    for k in range(K + 1, 400):
        amp = {}
        for m in range(1, caps.cap_at(k) + 1):
            for j, c in enum.vector(m).entries.items():
                amp[j] = max(amp.get(j, 0.0), abs(c))
        total += sum(amp.values()) * 2.0 ** -k
    return total


def test_zero_bundle_schedule_is_gap_rule():
    prof = build_schedule(ZeroMajorant(DOUBLING), 6, L2)
    assert prof.schedule == tuple(n * (n + 1) // 2 for n in range(1, 7))


def test_doubling_schedule_fixture():
    m = build_model(DOUBLING, depth=3)
    assert m.schedule == (3, 7, 12)
    for cert in m.certificates:
        assert cert["tail_T"] == 0.0
        assert cert["tail_S"] < neighborhood_radius(L2, cert["n"] + 1)
        assert cert["tail_S"] == pytest.approx(l1_oracle(m.schedule, cert["N"]), rel=1e-9)
    # one step earlier fails the first certificate
    assert l1_oracle((2, 7, 12), 2) >= neighborhood_radius(L2, 2)


@pytest.mark.parametrize("name", ["l2-doubling", "l2-bilateral", "omega-any"])
def test_gap_growth_and_certificates(name):
    m = model_for(name)
    N = (0,) + m.schedule
    gaps = [b - a for a, b in zip(N, N[1:])]
    assert all(b > a for a, b in zip(gaps, gaps[1:]))
    for cert in m.certificates:
        r = neighborhood_radius(m.space, cert["n"] + 1)
        assert all(cert[f"tail_{w}"] < r for w in m.sides)


@pytest.mark.parametrize("name", ["l2-doubling", "l2-bilateral", "omega-any"])
def test_certificate_replay(name):
    m = model_for(name)
    for n in range(1, m.depth + 1):
        rep = schedule_replay(m, n, draws=1000, seed=n, span=3)
        assert rep["ok"], rep


def test_positive_k_measure_bound():
    m = model_for("l2-doubling")
    kb = k_measure_lower_bound(m.weights, m.profile, m.depth)
    assert kb.lower_bound > 0.2


@pytest.mark.parametrize("rule", [WeightRule.constant(1), WeightRule.constant(0.5), WeightRule.power(2),
                                  WeightRule.from_table({2: 10.0, 3: 0.1}, 0.7)])
def test_omega_models_build(rule):
    m = build_model(WeightedShift(UNILATERAL, rule, FSpace.omega()), depth=6)
    assert m.mode == EXACT
    assert m.truncation_error(6) < neighborhood_radius(m.space, 7)


def test_rebuild_is_identical():
    a = build_model(DOUBLING, depth=6)
    b = build_model(DOUBLING, depth=6)
    assert a.fingerprint == b.fingerprint
    assert build_model(DOUBLING, depth=6, theta=0.25).fingerprint != a.fingerprint


def test_no_chaos_certificate():
    with pytest.raises(BuildError, match="no chaos certificate"):
        build_model(WeightedShift(UNILATERAL, WeightRule.constant(1), L2))


def test_exact_mode_needs_unilateral():
    with pytest.raises(BuildError):
        build_model(WeightedShift(BILATERAL, WeightRule.power(3), L2), mode=EXACT)


@pytest.mark.parametrize("name", ["l2-doubling", "l2-bilateral", "omega-any"])
def test_all_ones_code_zero(name):
    m = model_for(name)
    lo, hi = m.required_window(4)
    out = evaluate_phi(m, SymbolSequence(lo, np.ones(hi - lo + 1, dtype=int)), 4)
    assert out.value.is_zero()
    assert out.truncation_error == m.truncation_error(4) > 0


def test_exact_single_term():
    m = model_for("omega-any")
    syms = np.ones(m.N(3), dtype=int)
    syms[0] = 2
    assert evaluate_phi(m, SymbolSequence(1, syms), 3).value == SparseVector.unit(UNILATERAL, 1)


def test_fhc_single_term_matches_operators():
    m = model_for("l2-bilateral")
    L = 3
    lo, hi = m.positions(L)
    for pos in (-5, 0, 4):
        syms = np.ones(hi - lo + 1, dtype=int)
        syms[pos - lo] = 5
        x = m.enum.vector(5)
        want = apply_power(m.shift, pos, x) if pos >= 0 else _forward(m.shift, -pos, x)
        got = evaluate_phi(m, SymbolSequence(lo, syms), L).value
        assert got.allclose(want, 1e-12)


def _forward(shift, n, x):
    from strongmix.shifts import apply_right_inverse
    return apply_right_inverse(shift, n, x)


def test_unweighted_orbit_drops_first_symbol():
    m = model_for("omega-any")
    L = 4
    g = stream(0, "drop")
    seq = SymbolSequence(1, m.weights.draw(g, m.N(L) + 3))
    x = evaluate_phi(m, seq, L).value
    y = orbit_point(m, seq, 1, L).value
    for k in range(1, m.N(L)):
        assert y[k] == x[k + 1] == apply_backward(m.shift, x)[k]
    assert orbit_point(m, seq, 0, L).value == x


@pytest.mark.parametrize("name", ["l2-doubling", "l2-bilateral", "omega-any"])
def test_semiconjugacy_small(name):
    rep = run_semiconjugacy(model_for(name), sequences=200, max_lag=5, seed=3)
    assert rep.verdict == "pass"


def test_orbit_window_is_checked():
    m = model_for("l2-doubling")
    lo, hi = m.required_window(3)
    seq = SymbolSequence(lo, np.ones(hi - lo + 1, dtype=int))
    with pytest.raises(WindowError):
        orbit_point(m, seq, 1, 3)
    with pytest.raises(ValueError):
        orbit_point(m, seq, -1, 3)


@pytest.mark.parametrize("name", ["l2-doubling", "l2-bilateral", "omega-any"])
def test_truncation_error_decreases(name):
    m = model_for(name)
    errs = [m.truncation_error(L) for L in range(1, m.depth + 1)]
    assert all(e >= 0 for e in errs)
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert m.expected_tail_budget(6) <= m.truncation_error(6) * 1.0001 + 1e-300
    assert 0 < m.tail_admissible_probability(6) <= 1


def test_sample_point_is_reproducible():
    m = model_for("l2-bilateral")
    a = sample_point(m, stream(4, "pt"))
    b = sample_point(m, stream(4, "pt"))
    assert a == b


def test_concentration_for_degenerate_weights():
    m = build_model(DOUBLING, depth=6, theta=1e-9)
    L = 6
    lo, hi = m.required_window(L)
    blk = m.weights.draw(stream(1, "deg"), (2000, hi - lo + 1))
    coords, vals = phi_batch(m, blk, lo, L)
    freq = np.mean(m.space.norm_rows(vals, coords) < neighborhood_radius(m.space, 1))
    assert freq >= m.weights.p(1) ** (hi - lo + 1) - 3 * math.sqrt(0.25 / 2000)
    assert freq == 1.0


def test_mean_norm_is_stable_across_seeds():
    m = model_for("l2-doubling")
    L = 6
    lo, hi = m.required_window(L)
    stats = []
    for seed in (1, 2, 3):
        blk = m.weights.draw(stream(seed, "mean"), (20_000, hi - lo + 1))
        coords, vals = phi_batch(m, blk, lo, L)
        f = m.space.norm_rows(vals, coords)
        stats.append((f.mean(), f.std() / math.sqrt(len(f))))
    for (a, sa), (b, sb) in zip(stats, stats[1:]):
        assert math.isfinite(a) and abs(a - b) <= 3 * (sa + sb)


def test_window_errors():
    m = model_for("l2-doubling")
    with pytest.raises(WindowError):
        phi_batch(m, np.ones((1, 3), dtype=int), 0, 6)
    with pytest.raises(ValueError):
        m.truncation_error(0)
