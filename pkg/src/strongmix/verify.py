"""Statistical and exact checks of the constructed measure.

All Monte-Carlo radii are Hoeffding radii ``sqrt(log(2/delta) / (2 n))``;
truncation is carried as a three-way ball membership (inside / outside /
uncertain) and the uncertain mass is added to every tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .construction import (
    EXACT, FHC, DEFAULT_LEVEL, MeasureModel, chunk_rows, code_batch, phi_batch,
)
from .spaces import SparseVector, neighborhood_radius
from .symbolic import (
    Admissible, SymbolSequence, beta, beta_tail_lower, cylinder_mask, cylinder_measure, shift_cylinder,
)


def schedule_replay(model: MeasureModel, n: int, draws: int = 10_000, seed: int = 0, span: int = 4) -> dict:
    """Code random admissible tails on ``(N_n, N_{n+span}]`` and compare with ``r_{n+1}``.

    Symbols are uniform on ``{1..2l}`` in block ``l``, which stresses the caps
    far harder than the measure does.  Each side is checked separately.
    """
    g = rngmod.stream(seed, f"replay/{n}")
    ks = np.arange(model.N(n) + 1, model.N(n + span) + 1)
    caps = np.array([2 * model.profile.cap(int(k)) for k in ks])
    r = neighborhood_radius(model.space, n + 1)
    out = {"n": n, "radius": r, "positions": [int(ks[0]), int(ks[-1])]}
    ok = True
    for which in model.sides:
        sym = 1 + np.floor(g.random((draws, len(ks))) * caps).astype(np.int64)
        pos = -ks if which == "S" and model.mode == FHC else ks
        coords, vals = code_batch(model, sym, pos)
        worst = float(model.space.norm_rows(vals, coords).max())
        cert = model.certificates[n - 1][f"tail_{which}"] if n <= model.depth else None
        out[which] = {"max_norm": worst, "certified": cert}
        ok &= worst < r and (cert is None or worst <= cert * (1 + 1e-12) + 1e-300)
    out["ok"] = bool(ok)
    return out

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
MAX_UNCERTAIN = 0.2


def hoeffding_radius(n: int, delta: float = 0.01) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


class ModeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Ball:
    center: SparseVector
    level: int
    label: str = "ball"

    def to_json(self):
        return {"kind": "ball", "center": self.center.to_json(), "level": self.level, "label": self.label}


@dataclass(frozen=True)
class SymbolCylinder:
    constraints: tuple
    label: str = "cylinder"

    def to_json(self):
        return {"kind": "cylinder", "label": self.label,
                "constraints": [[k, a.to_json()] for k, a in self.constraints]}


EventSpec = Ball | SymbolCylinder


@dataclass
class VerificationReport:
    test: str
    verdict: str
    estimates: dict
    radius: float
    uncertain_fraction: float
    fingerprint: str
    seed: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def worst_verdict(verdicts: Sequence[str]) -> str:
    if FAIL in verdicts:
        return FAIL
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    return PASS


# ---------------------------------------------------------------------------
# engine


def _cyl_coords(event: SymbolCylinder, lag: int, mode: str):
    s = -lag if mode == FHC else lag
    return [k + s for k, _ in event.constraints]


def _window(model: MeasureModel, L: int, max_lag: int, events: Sequence[EventSpec], lags: Sequence[int]):
    if all(isinstance(ev, SymbolCylinder) for ev in events):
        # symbol events never evaluate the coding map
        ks = [k for ev in events for lag in lags for k in _cyl_coords(ev, lag, model.mode)]
        return (min(ks), max(ks)) if ks else (0, 0)
    lo, hi = model.required_window(L, max_lag)
    for ev in events:
        if isinstance(ev, SymbolCylinder):
            for lag in lags:
                ks = _cyl_coords(ev, lag, model.mode)
                lo, hi = min([lo] + ks), max([hi] + ks)
    return lo, hi


def _blocks(model, seed, label, samples, window, L, max_lag):
    g = rngmod.stream(seed, label)
    lo, hi = window
    rows = max(1, min(chunk_rows(model, L, max_lag), 4_000_000 // (hi - lo + 1)))
    done = 0
    while done < samples:
        r = min(rows, samples - done)
        yield lo, model.weights.draw(g, (r, hi - lo + 1))
        done += r


def indicators(model: MeasureModel, event: EventSpec, block: np.ndarray, start: int, L: int, lag: int = 0):
    """``(inside, uncertain)`` boolean arrays for ``T^lag x`` of each row."""
    if isinstance(event, SymbolCylinder):
        cons = shift_cylinder(event.constraints, -lag if model.mode == FHC else lag)
        inside = cylinder_mask(cons, block, start)
        return inside, np.zeros_like(inside)
    c = event.center
    coords, vals = phi_batch(model, block, start, L, lag, extra_coords=c.support)
    if c.entries:
        cvec = np.zeros(len(coords))
        for k, v in c.entries.items():
            cvec[k - coords[0]] = v
        vals = vals - cvec
    d = model.space.norm_rows(vals, coords)
    r = neighborhood_radius(model.space, event.level)
    eps = model.truncation_error(L)
    inside = d < r - eps
    uncertain = ~inside & (d <= r + eps)
    return inside, uncertain


def estimate(model: MeasureModel, event: EventSpec, samples: int, seed: int, L: int = DEFAULT_LEVEL,
             lag: int = 0, label: str | None = None) -> tuple[float, float]:
    """Frequency of ``T^lag x in event`` and the uncertain fraction."""
    window = _window(model, L, lag, [event], [lag])
    ins = unc = 0
    for start, block in _blocks(model, seed, label or f"estimate/{event.label}", samples, window, L, lag):
        i, u = indicators(model, event, block, start, L, lag)
        ins += int(i.sum())
        unc += int(u.sum())
    return ins / samples, unc / samples


def _base(model, test, seed, verdict, estimates, radius, unc, **details):
    return VerificationReport(test, verdict, estimates, radius, unc, model.fingerprint, seed, details)


# ---------------------------------------------------------------------------
# tests


def test_invariance(model: MeasureModel, event: EventSpec, samples: int = 100_000, delta: float = 0.01,
                    seed: int = 0, L: int = DEFAULT_LEVEL) -> VerificationReport:
    if isinstance(event, SymbolCylinder):
        a = cylinder_measure(model.weights, event.constraints)
        b = cylinder_measure(model.weights, shift_cylinder(event.constraints, 1))
        verdict = PASS if abs(a - b) <= 1e-14 else FAIL
        return _base(model, "invariance", seed, verdict, {"mu_A": a, "mu_shifted_A": b}, 0.0, 0.0,
                     exact=True, event=event.to_json())
    window = _window(model, L, 1, [event], [0, 1])
    n_a = n_ta = n_unc = 0
    for start, block in _blocks(model, seed, f"invariance/{event.label}", samples, window, L, 1):
        i0, u0 = indicators(model, event, block, start, L, 0)
        i1, u1 = indicators(model, event, block, start, L, 1)
        n_a += int(i0.sum())
        n_ta += int(i1.sum())
        n_unc += int((u0 | u1).sum())
    mu_a, mu_ta, unc = n_a / samples, n_ta / samples, n_unc / samples
    radius = 2 * hoeffding_radius(samples, delta)
    diff = abs(mu_a - mu_ta)
    if unc > MAX_UNCERTAIN:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS if diff <= radius + unc else FAIL
    return _base(model, "invariance", seed, verdict, {"mu_A": mu_a, "mu_preimage_A": mu_ta, "difference": diff},
                 radius, unc, event=event.to_json(), level=L, samples=samples,
                 hint="raise the level L" if verdict == INCONCLUSIVE else None)


def test_mixing(model: MeasureModel, A: EventSpec, B: EventSpec, lags: Sequence[int], samples: int = 100_000,
                delta: float = 0.01, seed: int = 0, L: int = DEFAULT_LEVEL) -> VerificationReport:
    lags = sorted(set(int(n) for n in lags))
    if isinstance(A, SymbolCylinder) and isinstance(B, SymbolCylinder):
        return _exact_mixing(model, A, B, lags, seed)
    max_lag = max(lags)
    window = _window(model, L, max_lag, [A, B], lags)
    nA = 0
    nB = 0
    joint = np.zeros(len(lags))
    unc = np.zeros(len(lags))
    for start, block in _blocks(model, seed, f"mixing/{A.label}/{B.label}", samples, window, L, max_lag):
        ia, ua = indicators(model, A, block, start, L, 0)
        ib0, _ = indicators(model, B, block, start, L, 0)
        nA += int(ia.sum())
        nB += int(ib0.sum())
        for t, n in enumerate(lags):
            ib, ub = indicators(model, B, block, start, L, n)
            joint[t] += int((ia & ib).sum())
            unc[t] += int((ua | ub).sum())
    muA, muB = nA / samples, nB / samples
    joint /= samples
    unc /= samples
    h = hoeffding_radius(samples, delta)
    band = 3 * h + unc
    corr = joint - muA * muB
    within = np.abs(corr) <= band
    n_star = None
    for t in range(len(lags) - 1, -1, -1):
        if not within[t]:
            break
        n_star = lags[t]
    if np.max(unc) > MAX_UNCERTAIN:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS if n_star is not None else FAIL
    curve = [{"lag": n, "joint": float(j), "product": muA * muB, "correlation": float(c),
              "band": float(b), "uncertain": float(u)}
             for n, j, c, b, u in zip(lags, joint, corr, band, unc)]
    return _base(model, "mixing", seed, verdict, {"mu_A": muA, "mu_B": muB, "n_star": n_star},
                 3 * h, float(np.max(unc)), curve=curve, A=A.to_json(), B=B.to_json(), level=L, samples=samples)


def _exact_mixing(model, A, B, lags, seed):
    muA = cylinder_measure(model.weights, A.constraints)
    muB = cylinder_measure(model.weights, B.constraints)
    curve = []
    worst = 0.0
    a_coords = [k for k, _ in A.constraints]
    for n in lags:
        sB = shift_cylinder(B.constraints, n)
        disjoint = not set(a_coords) & {k for k, _ in sB}
        joint = cylinder_measure(model.weights, list(A.constraints) + sB)
        c = joint - muA * muB
        if disjoint:
            worst = max(worst, abs(c))
        curve.append({"lag": n, "joint": joint, "product": muA * muB, "correlation": c, "disjoint": disjoint})
    verdict = PASS if worst <= 1e-14 else FAIL
    return _base(model, "mixing", seed, verdict, {"mu_A": muA, "mu_B": muB, "max_disjoint_gap": worst},
                 0.0, 0.0, curve=curve, exact=True)


def support_center(model: MeasureModel, m: int) -> SparseVector:
    if model.mode == FHC:
        return model.enum.vector(m)
    return SparseVector.unit(model.side, 1, model.pool.value(m)) if m > 1 else SparseVector.zero(model.side)


def full_support_bound(model: MeasureModel, m: int) -> float:
    """Analytic lower bound on ``mu(center_m + U_m)``."""
    w = model.weights
    prod = 1.0
    for l in range(m, model.depth + 1):
        prod *= beta(w, model.profile, l)
    prod *= beta_tail_lower(w, model.depth)
    if model.mode == FHC:
        return w.p(m) * w.p(1) ** (2 * model.N(m)) * prod ** 2
    return w.p(m) * w.p(1) ** (model.N(m) - 1) * prod


def test_full_support(model: MeasureModel, m: int, samples: int = 100_000, delta: float = 0.01,
                      seed: int = 0, L: int = DEFAULT_LEVEL) -> VerificationReport:
    if not 1 <= m <= model.depth:
        raise ValueError("m must lie in 1..depth")
    event = Ball(support_center(model, m), m, f"support-{m}")
    freq, unc = estimate(model, event, samples, seed, L, label=f"support/{m}")
    bound = full_support_bound(model, m)
    h = hoeffding_radius(samples, delta)
    if unc > MAX_UNCERTAIN:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS if freq >= bound - h - unc else FAIL
    return _base(model, "full_support", seed, verdict, {"frequency": freq, "lower_bound": bound,
                                                        "margin": freq - bound}, h, unc,
                 m=m, event=event.to_json(), level=L, samples=samples)


def orbit_block(model: MeasureModel, seq: SymbolSequence, H: int, L: int) -> tuple[int, np.ndarray]:
    """Rows ``n = 0..H-1`` hold the symbols that code ``T^n x`` at lag 0."""
    lo, hi = model.positions(L)
    W = hi - lo + 1
    if model.mode == FHC:
        first = lo - (H - 1)
        if not seq.covers(first, hi):
            raise ValueError(f"sequence must cover [{first}, {hi}] for horizon {H}")
        base = seq.symbols[first - seq.start:hi - seq.start + 1]
        view = np.lib.stride_tricks.sliding_window_view(base, W)
        return lo, view[::-1][:H]
    if not seq.covers(lo, hi + H - 1):
        raise ValueError(f"sequence must cover [{lo}, {hi + H - 1}] for horizon {H}")
    base = seq.symbols[lo - seq.start:hi + H - seq.start]
    return lo, np.lib.stride_tricks.sliding_window_view(base, W)[:H]


def test_visit_density(model: MeasureModel, event: EventSpec, H: int = 10_000, seq: SymbolSequence | None = None,
                       samples: int = 100_000, seed: int = 0, L: int = DEFAULT_LEVEL) -> VerificationReport:
    if seq is None:
        g = rngmod.stream(seed, f"orbit/{event.label}")
        lo, hi = model.required_window(L, H - 1)
        if isinstance(event, SymbolCylinder):
            ks = [k for k, _ in event.constraints]
            lo, hi = min([lo] + ks) - H, max([hi] + ks) + H
        seq = SymbolSequence(lo, model.weights.draw(g, hi - lo + 1))
    if isinstance(event, SymbolCylinder):
        step = -1 if model.mode == FHC else 1
        hits = np.zeros(H, dtype=bool)
        for n in range(H):
            cons = shift_cylinder(event.constraints, step * n)
            hits[n] = all(adm.mask(np.array([seq.at(k)]))[0] for k, adm in cons)
        density, unc_orbit = float(hits.mean()), 0.0
        mu, unc_mc = cylinder_measure(model.weights, event.constraints), 0.0
        reference = "exact"
    else:
        start, rows = orbit_block(model, seq, H, L)
        ins = unc = 0
        for i in range(0, H, 5000):
            a, u = indicators(model, event, np.ascontiguousarray(rows[i:i + 5000]), start, L, 0)
            ins += int(a.sum())
            unc += int(u.sum())
        density, unc_orbit = ins / H, unc / H
        mu, unc_mc = estimate(model, event, samples, seed, L, label=f"density-reference/{event.label}")
        reference = "monte-carlo"
    radius = 3 * (H ** -0.5 + (samples ** -0.5 if reference == "monte-carlo" else 0.0))
    unc = unc_orbit + unc_mc
    diff = abs(density - mu)
    if unc > MAX_UNCERTAIN:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS if diff <= radius + unc else FAIL
    return _base(model, "visit_density", seed, verdict, {"density": density, "measure": mu, "difference": diff},
                 radius, unc, horizon=H, reference=reference, event=event.to_json(), level=L)


def test_semiconjugacy(model: MeasureModel, sequences: int = 1000, max_lag: int = 10, seed: int = 0,
                       L: int = DEFAULT_LEVEL) -> VerificationReport:
    """``F(orbit_point(n) - T^n Phi_L) <= error_L + orbit_budget(n)`` on sampled sequences."""
    g = rngmod.stream(seed, "semiconjugacy")
    lo, hi = model.required_window(L, max_lag)
    blk = model.weights.draw(g, (sequences, hi - lo + 1))
    worst_ratio = 0.0
    failures = 0
    eps = model.truncation_error(L)
    budgets = {n: eps + model.orbit_budget(n, L) for n in range(0, max_lag + 1)}
    base_coords, base_vals = phi_batch(model, blk, lo, L, 0)
    for n in range(0, max_lag + 1):
        coords, vals = phi_batch(model, blk, lo, L, n)
        pushed_coords, pushed = _apply_T_dense(model, base_coords, base_vals, n)
        lo_c = min(coords[0], pushed_coords[0])
        hi_c = max(coords[-1], pushed_coords[-1])
        diff = np.zeros((sequences, hi_c - lo_c + 1))
        diff[:, coords[0] - lo_c:coords[-1] - lo_c + 1] += vals
        diff[:, pushed_coords[0] - lo_c:pushed_coords[-1] - lo_c + 1] -= pushed
        d = model.space.norm_rows(diff, np.arange(lo_c, hi_c + 1))
        failures += int((d > budgets[n]).sum())
        if budgets[n] > 0:
            worst_ratio = max(worst_ratio, float(d.max() / budgets[n]))
        elif d.max() > 0:
            worst_ratio = math.inf
    verdict = PASS if failures == 0 else FAIL
    return _base(model, "semiconjugacy", seed, verdict,
                 {"failures": failures, "worst_ratio": worst_ratio}, 0.0, 0.0,
                 budgets={str(k): v for k, v in budgets.items()}, sequences=sequences, level=L)


def _apply_T_dense(model, coords, vals, n):
    """``T^n`` on dense rows: coordinate ``i`` moves to ``i - n`` scaled by ``v_i / v_{i-n}``."""
    if n == 0:
        return coords, vals
    new = coords - n
    sh = model.shift
    if model.side == "unilateral":
        keep = new >= 1
        scale = sh.ratio(coords[keep], new[keep])
        return new[keep], vals[:, keep] * scale
    return new, vals * sh.ratio(coords, new)


def check_exactness_structure(model: MeasureModel, samples: int = 100_000, n_coords: int = 10,
                              sequences: int = 1000, seed: int = 0, L: int = DEFAULT_LEVEL) -> VerificationReport:
    if model.mode != EXACT:
        raise ModeMismatch("exactness applies to the one-sided (exact) model only")
    if model.N(L) < n_coords + 1:
        raise ValueError("level too small for the requested coordinates")
    g = rngmod.stream(seed, "exactness/marginal")
    lo, hi = model.required_window(L)
    blk = model.weights.draw(g, (samples, hi - lo + 1))
    coords, vals = phi_batch(model, blk, lo, L)
    k = np.arange(1, n_coords + 1)
    b = 1.0 / model.shift.ratio(1, k)
    recovered = vals[:, :n_coords] * b
    bins = np.full(recovered.shape, 3, dtype=np.int64)
    bins[recovered == 0.0] = 0
    bins[recovered == 1.0] = 1
    bins[recovered == -1.0] = 2
    pool_vals = model.pool.values(model.weights.alphabet)
    probs = model.weights.probabilities(model.weights.alphabet)
    expected = np.array([probs[pool_vals == 0.0].sum(), probs[pool_vals == 1.0].sum(),
                         probs[pool_vals == -1.0].sum(), 0.0])
    expected[3] = 1.0 - expected[:3].sum()
    counts = np.bincount(bins.ravel(), minlength=4)
    marginal = stats.chisquare(counts, expected * counts.sum())
    pairs = [(bins[:, i], bins[:, i + 1]) for i in range(0, n_coords - 1, 2)]
    table = np.zeros((4, 4))
    for a, c in pairs:
        np.add.at(table, (a, c), 1)
    indep = stats.chi2_contingency(table)
    # one-step equivariance on fresh sequences
    g2 = rngmod.stream(seed, "exactness/equivariance")
    wlo, whi = model.required_window(L, 1)
    sblk = model.weights.draw(g2, (sequences, whi - wlo + 1))
    c0, v0 = phi_batch(model, sblk, wlo, L, 0)
    c1, v1 = phi_batch(model, sblk, wlo, L, 1)
    pc, pv = _apply_T_dense(model, c0, v0, 1)
    m = len(pc)
    eq_err = float(np.max(np.abs(v1[:, :m] - pv) / np.maximum(1.0, np.abs(pv)))) if m else 0.0
    ok = marginal.pvalue > 0.01 and indep.pvalue > 0.01 and eq_err <= 1e-14
    return _base(model, "exactness", seed, PASS if ok else FAIL,
                 {"marginal_p": float(marginal.pvalue), "independence_p": float(indep.pvalue),
                  "equivariance_error": eq_err}, 0.0, 0.0,
                 note="exactness is inherited from the one-sided Bernoulli shift via the equivariant coding map; "
                      "only its premises are tested", samples=samples, coordinates=n_coords)


# ---------------------------------------------------------------------------
# event generators


def random_ball_events(model: MeasureModel, count: int, seed: int, L: int = DEFAULT_LEVEL,
                       levels: Sequence[int] = (1, 2, 3, 4), pilot: int = 2000,
                       band: tuple[float, float] = (0.05, 0.95)) -> list[Ball]:
    """Balls around sampled points, preferring ones with pilot mass inside ``band``."""
    g = rngmod.stream(seed, "events")
    lo, hi = model.required_window(L)
    centers_blk = model.weights.draw(g, (8 * count, hi - lo + 1))
    coords, vals = phi_batch(model, centers_blk, lo, L)
    out: list[Ball] = []
    spare: list[Ball] = []
    for i in range(centers_blk.shape[0]):
        if len(out) == count:
            break
        nz = np.nonzero(vals[i])[0]
        center = SparseVector.from_dense(model.side, coords[nz], vals[i][nz])
        level = int(levels[int(g.integers(len(levels)))])
        ev = Ball(center, level, f"ball-{len(out) + len(spare)}")
        p, _ = estimate(model, ev, pilot, seed, L, label=f"pilot/{i}")
        (out if band[0] <= p <= band[1] else spare).append(ev)
    out.extend(spare[:count - len(out)])
    return [Ball(e.center, e.level, f"ball-{i}") for i, e in enumerate(out)]


def random_cylinders(model: MeasureModel, count: int, seed: int, span: int = 6, max_coords: int = 3,
                     max_symbol: int = 4) -> list[SymbolCylinder]:
    g = rngmod.stream(seed, "cylinders")
    lo = -span if model.mode == FHC else 1
    out = []
    for i in range(count):
        ncoord = int(g.integers(1, max_coords + 1))
        ks = sorted(g.choice(np.arange(lo, lo + 2 * span + 1), size=ncoord, replace=False).tolist())
        cons = []
        for k in ks:
            size = int(g.integers(1, max_symbol + 1))
            vals = sorted(g.choice(np.arange(1, max_symbol + 2), size=size, replace=False).tolist())
            adm = Admissible.excluding(vals) if g.random() < 0.25 else Admissible.of(vals)
            cons.append((int(k), adm))
        out.append(SymbolCylinder(tuple(cons), f"cyl-{i}"))
    return out
