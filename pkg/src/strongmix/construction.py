"""The invariant measure: schedule, model assembly, coding map and sampling.

Two modes share one interface:

``fhc``
    Two-sided symbol sequences ``(n_k)_{k in Z}`` coded by
    ``Phi(n) = sum_{k<0} S_{-k} x_{n_k} + x_{n_0} + sum_{k>0} T^k x_{n_k}``.
    Works for any shift with certified tails (unilateral or bilateral).
``exact``
    One-sided sequences of scalars from the pool, coded by
    ``Phi(alpha) = sum_k alpha_k e_k / b_k`` with ``b_k = w_2 ... w_k``, so
    that ``B_w Phi = Phi sigma``.  Unilateral shifts only.

Truncation errors are certified on the event that the unsampled tail obeys
the block caps ``m_k <= 2l`` on ``(N_l, N_{l+1}]``; that event has
probability at least ``tail_admissible_probability(L)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .shifts import (
    BlockCaps, DenseSetEnumeration, NoCertificate, PoolMajorant, ScalarPool, TailMajorant,
    WeightedShift, chaos_check, tail_sum,
)
from .spaces import BILATERAL, UNILATERAL, FSpace, SparseVector, neighborhood_radius
from .symbolic import (
    ConstraintProfile, SymbolSequence, SymbolWeights, beta, beta_tail_lower, shift_symbols,
)

FHC = "fhc"
EXACT = "exact"
SEARCH_LIMIT = 2 ** 32
DEFAULT_DEPTH = 12
DEFAULT_LEVEL = 6
# max dense entries materialised at once by the batch kernels
CHUNK_ENTRIES = 4_000_000


class BuildError(RuntimeError):
    pass


class WindowError(ValueError):
    pass


def majorant_for(shift: WeightedShift, mode: str) -> TailMajorant:
    return TailMajorant(shift) if mode == FHC else PoolMajorant(shift)


def sides_for(mode: str) -> tuple[str, ...]:
    return ("T", "S") if mode == FHC else ("S",)


def _tails(majorant, sides, schedule, K, shift=0):
    caps = BlockCaps(tuple(schedule), shift=shift)
    return {w: tail_sum(majorant, w, caps, K) for w in sides}


def build_schedule(majorant: TailMajorant, depth: int, space: FSpace, sides=("T", "S")) -> ConstraintProfile:
    """Smallest ``N_1 < ... < N_depth`` whose worst-case tails beyond ``N_n`` lie in ``U_{n+1}``.

    Later blocks are taken at their minimal gap-growth positions while
    searching, which maximises the caps; enlarging them afterwards only
    shrinks the certified tails.
    """
    N: list[int] = []
    for n in range(1, depth + 1):
        r = neighborhood_radius(space, n + 1)
        prev = N[-1] if N else 0
        prev_gap = prev - (N[-2] if len(N) >= 2 else 0)
        lower = prev + prev_gap + 1

        def ok(cand):
            try:
                t = _tails(majorant, sides, N + [cand], cand)
            except NoCertificate:
                return False
            return all(v < r for v in t.values())

        if ok(lower):
            N.append(lower)
            continue
        lo, hi = lower, lower
        step = max(lower, 1)
        while not ok(hi):
            lo, hi = hi, hi + step
            step *= 2
            if hi > SEARCH_LIMIT:
                raise BuildError(f"certificate unobtainable at depth {n}: tails stay above r_{n + 1} = {r:g}")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        N.append(hi)
    return ConstraintProfile(N, BILATERAL)


@dataclass
class TruncatedVector:
    value: SparseVector
    truncation_error: float


@dataclass
class MeasureModel:
    shift: WeightedShift
    mode: str
    profile: ConstraintProfile
    weights: SymbolWeights
    depth: int
    theta: float
    certificates: list[dict] = field(default_factory=list)
    enum: DenseSetEnumeration = field(default=None)
    pool: ScalarPool = field(default=None)

    def __post_init__(self):
        self.enum = self.enum or DenseSetEnumeration(self.shift.side)
        self.pool = self.pool or ScalarPool()
        self.majorant = majorant_for(self.shift, self.mode)

    @property
    def space(self) -> FSpace:
        return self.shift.space

    @property
    def side(self) -> str:
        return self.shift.side

    @property
    def schedule(self) -> tuple[int, ...]:
        return self.profile.schedule

    def N(self, l: int) -> int:
        return self.profile.N(l)

    @property
    def sides(self):
        return sides_for(self.mode)

    # -- certificates -------------------------------------------------------
    def tail_bounds(self, L: int) -> dict:
        return _tails(self.majorant, self.sides, self.schedule, self.N(L))

    def truncation_error(self, L: int) -> float:
        self._check_level(L)
        return self._trunc(L)

    @cached_property
    def _trunc_cache(self):
        return {}

    def _trunc(self, L):
        if L not in self._trunc_cache:
            self._trunc_cache[L] = sum(self.tail_bounds(L).values())
        return self._trunc_cache[L]

    def orbit_budget(self, n: int, L: int) -> float:
        """Bound on ``F(T^n (tail beyond level L))``: the tail seen through ``n`` steps."""
        if n == 0:
            return 0.0
        K = self.N(L)
        if n > K:
            raise WindowError(f"lag {n} exceeds N_L = {K}")
        if self.mode == FHC:
            out = _tails(self.majorant, ("T",), self.schedule, K)["T"]
            out += _tails(self.majorant, ("S",), self.schedule, K - n, shift=n)["S"]
            return out
        return _tails(self.majorant, ("S",), self.schedule, K - n, shift=n)["S"]

    def tail_admissible_probability(self, L: int) -> float:
        """Lower bound on the probability that every symbol beyond level ``L`` obeys the caps."""
        two = 2 if self.mode == FHC else 1
        prod = 1.0
        for l in range(L, self.depth + 1):
            prod *= beta(self.weights, self.profile, l)
        return (prod * beta_tail_lower(self.weights, self.depth)) ** two

    def expected_tail_budget(self, L: int) -> float:
        """``sum_{k>N_L} sum_m p_m bound(m, k)`` for unconditioned i.i.d. tails (both sides)."""
        K = self.N(L)
        maj = self.majorant
        total = 0.0
        for which in self.sides:
            for m in range(1, 65):
                total += self.weights.p(m) * maj.weighted_tail(maj.weight_delta(self._amplitude(m), {}), which, K)
            t, first = self._level_of(65), 65
            while True:
                mass = self.weights.mass_above(first - 1)
                if mass < 1e-300:
                    break
                prof = maj.cap_profile(self._level_end(t))
                total += mass * maj.weighted_tail(maj.weight_delta(prof, {}), which, K)
                t += 1
                first = self._level_end(t - 1) + 1
        return total

    def _amplitude(self, m):
        if self.mode == FHC:
            return {j: abs(c) for j, c in self.enum.vector(m).entries.items()}
        return {1: abs(self.pool.value(m))}

    def _level_of(self, m):
        return self.enum.level_of(m) if self.mode == FHC else self.pool.level_of(m)

    def _level_end(self, t):
        return self.enum.cumulative(t) if self.mode == FHC else self.pool.cumulative(t)

    def _check_level(self, L):
        if not 1 <= L <= self.depth:
            raise ValueError(f"level {L} outside 1..{self.depth}")

    # -- layout -------------------------------------------------------------
    def positions(self, L: int) -> tuple[int, int]:
        NL = self.N(L)
        return (-NL, NL) if self.mode == FHC else (1, NL)

    def required_window(self, L: int, max_lag: int = 0) -> tuple[int, int]:
        lo, hi = self.positions(L)
        return (lo - max_lag, hi) if self.mode == FHC else (lo, hi + max_lag)

    def symbol_values(self, upto: int) -> list[SparseVector]:
        if self.mode == FHC:
            return [self.enum.vector(m) for m in range(1, upto + 1)]
        return [SparseVector.unit(UNILATERAL, 1, self.pool.value(m)) for m in range(1, upto + 1)]

    # -- identity -----------------------------------------------------------
    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "operator": self.shift.describe(),
            "depth": self.depth,
            "theta": self.theta,
            "schedule": list(self.schedule),
            "weights": self.weights.describe(),
            "weights_head": self.weights.head(8),
            "enumeration": ENUM_VERSION,
            "certificates": self.certificates,
        }

    @cached_property
    def fingerprint(self) -> str:
        blob = json.dumps(self.summary(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


ENUM_VERSION = DenseSetEnumeration.version


def build_model(shift: WeightedShift, depth: int = DEFAULT_DEPTH, theta: float = 0.5, mode: str | None = None) -> MeasureModel:
    if mode is None:
        mode = EXACT if shift.space.is_omega else FHC
    if mode not in (FHC, EXACT):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == EXACT and shift.side != UNILATERAL:
        raise BuildError("the exact model needs a unilateral shift")
    verdict = chaos_check(shift)
    if not verdict.chaotic:
        raise BuildError(f"no chaos certificate for {shift!r}: {verdict.status} {verdict.witness}")
    majorant = majorant_for(shift, mode)
    profile = build_schedule(majorant, depth, shift.space, sides_for(mode))
    if mode == EXACT:
        profile = ConstraintProfile(profile.schedule, UNILATERAL)
    weights = SymbolWeights.from_schedule(profile.schedule, theta)
    certs = []
    for n in range(1, depth + 1):
        t = _tails(majorant, sides_for(mode), profile.schedule, profile.N(n))
        certs.append({"n": n, "N": profile.N(n), "radius": neighborhood_radius(shift.space, n + 1),
                      **{f"tail_{k}": v for k, v in t.items()}})
    return MeasureModel(shift, mode, profile, weights, depth, theta, certs)


# ---------------------------------------------------------------------------
# coding map, batch form


def _fhc_terms(model: MeasureModel, positions: np.ndarray, max_symbol: int):
    """Per symbol ``m``: list of (output coords, coefficients) over ``positions``."""
    out = {}
    sh = model.shift
    for m in range(2, max_symbol + 1):
        x = model.enum.vector(m)
        if x.is_zero():
            continue
        parts = []
        for j, c in x.entries.items():
            oc = j - positions
            safe = np.maximum(oc, 1) if model.side == UNILATERAL else oc
            coef = c * sh.ratio(j, safe)
            parts.append((oc, coef))
        out[m] = parts
    return out


def phi_batch(model: MeasureModel, symbols: np.ndarray, start: int, L: int, lag: int = 0,
              extra_coords: tuple[int, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Coded vectors of ``T^lag Phi_L`` for each row of ``symbols``.

    Rows hold symbols for coordinates ``start, start+1, ...``.  Returns
    ``(coords, values)``, values of shape ``(rows, len(coords))``.
    """
    symbols = np.atleast_2d(symbols)
    lo, hi = model.positions(L)
    # column of the symbol that lands at position k after ``lag`` steps
    shift = -lag if model.mode == FHC else lag
    c_lo, c_hi = lo + shift - start, hi + shift - start
    if c_lo < 0 or c_hi >= symbols.shape[1]:
        need = (lo + shift, hi + shift)
        raise WindowError(f"window must cover {need} for level L={L} (N_L={model.N(L)}), lag {lag}")
    block = symbols[:, c_lo:c_hi + 1]
    return code_batch(model, block, np.arange(lo, hi + 1), extra_coords)


def code_batch(model: MeasureModel, block: np.ndarray, positions: np.ndarray,
               extra_coords: tuple[int, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Sum of the coded terms for symbols ``block[:, i]`` placed at ``positions[i]``."""
    R = block.shape[0]
    if model.mode == EXACT:
        vals = model.pool.values(int(block.max(initial=1)))
        inv_b = model.shift.ratio(1, positions)
        coords = np.arange(1, int(positions.max()) + 1)
        values = np.zeros((R, len(coords)))
        values[:, positions - 1] = vals[block - 1] * inv_b
        return _with_extra(coords, values, extra_coords)

    side = model.side
    lo, hi = int(positions.min()), int(positions.max())
    max_sym = int(block.max(initial=1))
    terms = _fhc_terms(model, positions, max_sym)
    win = [j for m in terms for j in model.enum.vector(m).support] or [1]
    cmin = min(win) - hi
    cmax = max(win) - lo
    if side == UNILATERAL:
        cmin = max(cmin, 1)
    cmin = min([cmin] + list(extra_coords))
    cmax = max([cmax] + list(extra_coords))
    if cmax < cmin:
        cmax = cmin
    C = cmax - cmin + 1
    idx_parts, w_parts = [], []
    for m, parts in terms.items():
        rows, cols = np.nonzero(block == m)
        if rows.size == 0:
            continue
        for oc, coef in parts:
            o = oc[cols]
            keep = o >= 1 if side == UNILATERAL else slice(None)
            idx_parts.append(rows[keep] * C + (o[keep] - cmin))
            w_parts.append(coef[cols][keep])
    flat = np.zeros(R * C)
    if idx_parts:
        idx = np.concatenate(idx_parts)
        w = np.concatenate(w_parts)
        flat += np.bincount(idx, weights=w, minlength=R * C)
    return np.arange(cmin, cmax + 1), flat.reshape(R, C)


def _with_extra(coords, values, extra):
    if not extra:
        return coords, values
    lo = min(coords[0], min(extra))
    hi = max(coords[-1], max(extra))
    out = np.zeros((values.shape[0], hi - lo + 1))
    out[:, coords[0] - lo:coords[-1] - lo + 1] = values
    return np.arange(lo, hi + 1), out


def chunk_rows(model: MeasureModel, L: int, max_lag: int = 0) -> int:
    lo, hi = model.required_window(L, max_lag)
    width = (hi - lo + 1) + 16
    return max(1, min(20_000, CHUNK_ENTRIES // width))


def sample_symbol_block(model: MeasureModel, rng: np.random.Generator, rows: int, L: int, max_lag: int = 0):
    lo, hi = model.required_window(L, max_lag)
    return lo, model.weights.draw(rng, (rows, hi - lo + 1))


# ---------------------------------------------------------------------------
# single-sequence API


def _to_sparse(model, coords, row) -> SparseVector:
    nz = np.nonzero(row)[0]
    return SparseVector.from_dense(model.side, coords[nz], row[nz])


def evaluate_phi(model: MeasureModel, seq: SymbolSequence, L: int) -> TruncatedVector:
    model._check_level(L)
    coords, vals = phi_batch(model, seq.symbols[None, :], seq.start, L)
    return TruncatedVector(_to_sparse(model, coords, vals[0]), model.truncation_error(L))


def sample_point(model: MeasureModel, rng: np.random.Generator, L: int = DEFAULT_LEVEL) -> TruncatedVector:
    model._check_level(L)
    lo, hi = model.required_window(L)
    seq = SymbolSequence(lo, model.weights.draw(rng, hi - lo + 1))
    return evaluate_phi(model, seq, L)


def orbit_point(model: MeasureModel, seq: SymbolSequence, n: int, L: int) -> TruncatedVector:
    """``T^n Phi(seq)`` computed as ``Phi(sigma^{-n} seq)`` (or ``Phi(sigma^n seq)`` one-sided)."""
    if n < 0:
        raise ValueError("orbit index must be >= 0")
    shifted = shift_symbols(seq, -n if model.mode == FHC else n)
    try:
        return evaluate_phi(model, shifted, L)
    except WindowError as exc:
        raise WindowError(f"window exhausted for orbit step {n}: {exc}") from None
