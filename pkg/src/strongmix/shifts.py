"""Weighted backward shifts, their right inverses and certified tail majorants.

Every weight rule is stored through its *potential* ``v`` with
``w_i = v_i / v_{i-1}`` (``v_0 = 1`` bilaterally, ``v_1 = 1`` unilaterally).
Then

    T^k e_j = (v_j / v_{j-k}) e_{j-k}       S_k e_j = (v_j / v_{j+k}) e_{j+k}

which is the diagonal conjugacy to the unweighted shift.  All tail bounds
below are sums of F-norms of such unit terms, which is a valid upper bound
for the F-norm of the series by subadditivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Protocol

import numpy as np

from .spaces import BILATERAL, UNILATERAL, FSpace, SparseVector, SpaceError

ENUMERATION_VERSION = "dyadic-levels-v1"

# caps up to this value use exact per-coordinate maxima of the dense vectors;
# beyond it the per-level envelope is used
EXACT_CAP = 64
# tails are summed level by level until the block start exceeds this
FAR_POSITION = 1e250


class NoCertificate(ArithmeticError):
    """A tail majorant diverges, so no finite bound can be certified."""


# ---------------------------------------------------------------------------
# weight rules


@dataclass(frozen=True)
class WeightRule:
    """``constant`` (lam), ``power`` (a) or ``table`` (explicit weights, lam beyond)."""

    kind: str
    lam: float = 1.0
    a: float = 0.0
    table: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("constant", "power", "table"):
            raise ValueError(f"unknown weight rule {self.kind!r}")
        if self.kind in ("constant", "table") and self.lam == 0:
            raise ValueError("weights must be nonzero")
        if self.kind == "power" and not self.a > 0:
            raise ValueError("power rule needs a > 0")
        if any(w == 0 for _, w in self.table):
            raise ValueError("weights must be nonzero")

    @classmethod
    def constant(cls, lam: float) -> "WeightRule":
        return cls("constant", lam=float(lam))

    @classmethod
    def power(cls, a: float) -> "WeightRule":
        return cls("power", a=float(a))

    @classmethod
    def from_table(cls, weights: dict[int, float], lam: float) -> "WeightRule":
        return cls("table", lam=float(lam), table=tuple(sorted((int(k), float(v)) for k, v in weights.items())))

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "power":
            d["a"] = self.a
        else:
            d["lam"] = self.lam
        if self.kind == "table":
            d["table"] = [list(t) for t in self.table]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WeightRule":
        if d["kind"] == "constant":
            return cls.constant(d["lam"])
        if d["kind"] == "power":
            return cls.power(d["a"])
        return cls.from_table({int(k): v for k, v in d["table"]}, d["lam"])


class WeightedShift:
    """Backward shift ``(Tx)_k = w_{k+1} x_{k+1}`` on N or Z."""

    def __init__(self, side: str, rule: WeightRule, space: FSpace):
        if side not in (UNILATERAL, BILATERAL):
            raise ValueError(f"unknown side {side!r}")
        if space.is_omega and side == BILATERAL:
            raise SpaceError("bilateral omega is not supported")
        self.side = side
        self.rule = rule
        self.space = space
        self.ref = 0 if side == BILATERAL else 1
        self._setup_potential()

    def __repr__(self):
        return f"WeightedShift({self.side}, {self.rule.describe()}, {self.space})"

    def describe(self) -> dict:
        return {"side": self.side, "weights": self.rule.describe(), "space": self.space.describe()}

    @property
    def lowest_index(self) -> int | None:
        return 1 if self.side == UNILATERAL else None

    def weight(self, j: int) -> float:
        r = self.rule
        if r.kind == "power":
            if self.side == UNILATERAL:
                return ((j + 1) / j) ** r.a if j >= 2 else 1.0
            return ((j + 1) / j) ** r.a if j >= 1 else ((1 - j) / (2 - j)) ** r.a
        return self._table.get(j, r.lam)

    # -- potential ---------------------------------------------------------
    def _setup_potential(self):
        r = self.rule
        self._table = dict(r.table)
        if r.kind == "power":
            return
        keys = list(self._table)
        self._lo = min([self.ref] + [k - 1 for k in keys])
        self._hi = max([self.ref] + keys)
        idx = np.arange(self._lo, self._hi + 1)
        lw = np.array([math.log(abs(self.weight(int(i)))) for i in idx])
        neg = np.array([self.weight(int(i)) < 0 for i in idx], dtype=np.int64)
        # log|v_i| = sum_{ref < u <= i} log|w_u|  (negated sum for i < ref)
        c = np.concatenate([[0.0], np.cumsum(lw[1:])])
        cn = np.concatenate([[0], np.cumsum(neg[1:])])
        r0 = self.ref - self._lo
        self._logv = c - c[r0]
        self._negv = (cn - cn[r0]) % 2
        self._loglam = math.log(abs(r.lam))
        self._neglam = 1 if r.lam < 0 else 0

    def log_potential(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        r = self.rule
        if r.kind == "power":
            if self.side == UNILATERAL:
                return r.a * (np.log1p(i.astype(float)) - math.log(2.0))
            return r.a * np.log1p(np.abs(i).astype(float))
        ic = np.clip(i, self._lo, self._hi)
        return self._logv[ic - self._lo] + (i - ic) * self._loglam

    def sign_potential(self, i) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        if self.rule.kind == "power":
            return np.ones(i.shape)
        ic = np.clip(i, self._lo, self._hi)
        par = self._negv[ic - self._lo] + np.abs(i - ic) * self._neglam
        return np.where(par % 2 == 1, -1.0, 1.0)

    def ratio(self, j, i) -> np.ndarray:
        """``v_j / v_i`` evaluated stably in log space."""
        return (self.sign_potential(j) * self.sign_potential(i)
                * np.exp(self.log_potential(j) - self.log_potential(i)))

    # -- unit-term tails ----------------------------------------------------
    def unit_term(self, j: int, k: int, which: str) -> float:
        """F-norm bound for the image of ``e_j`` under ``T^k`` or ``S_k`` (unit amplitude)."""
        out = j - k if which == "T" else j + k
        if self.side == UNILATERAL and out < 1:
            return 0.0
        if self.space.is_omega:
            return math.ldexp(1.0, -out)
        lr = float(self.log_potential(j) - self.log_potential(out))
        return math.exp(self.space.q * lr)

    def unit_tail(self, j: int, which: str, K) -> float:
        """Upper bound for ``sum_{k > K} unit_term(j, k, which)`` in closed form."""
        K = max(int(K), 0)
        if which == "T" and self.side == UNILATERAL:
            return sum(self.unit_term(j, k, "T") for k in range(int(K) + 1, j))
        if self.space.is_omega:
            # unilateral S side only
            return math.ldexp(1.0, -j) * 2.0 ** (-K)
        q = self.space.q
        r = self.rule
        if r.kind == "power":
            s = r.a * q
            if which == "S":
                K0 = max(K, -j)
                far = j + K0 + 1.0
            else:
                K0 = max(K, j)
                far = K0 - j + 1.0
            direct = sum(self.unit_term(j, k, which) for k in range(int(K) + 1, int(K0) + 1)) if K0 > K else 0.0
            if s <= 1:
                return math.inf
            return direct + (abs(j) + 1.0) ** s * far ** (1.0 - s) / (s - 1.0)
        if which == "S":
            K0 = max(K, self._hi - j)
            rho = math.exp(-q * self._loglam)
            base = float(self.log_potential(j) - self.log_potential(self._hi))
            expo = j + K0 + 1 - self._hi
        else:
            K0 = max(K, j - self._lo)
            rho = math.exp(q * self._loglam)
            base = float(self.log_potential(j) - self.log_potential(self._lo))
            expo = self._lo - j + K0 + 1
        direct = sum(self.unit_term(j, k, which) for k in range(int(K) + 1, int(K0) + 1)) if K0 > K else 0.0
        if rho >= 1:
            return math.inf
        return direct + math.exp(q * base + float(expo) * math.log(rho)) / (1.0 - rho)

    def unit_terms_vanish(self, which: str) -> bool | None:
        """False when the unit terms provably do not tend to zero (so the series diverges)."""
        if self.space.is_omega or self.rule.kind == "power":
            return None
        lam = abs(self.rule.lam)
        return (lam > 1) if which == "S" else (lam < 1)


def apply_backward(shift: WeightedShift, x: SparseVector) -> SparseVector:
    if x.side != shift.side:
        raise SpaceError("index kinds differ")
    out = {}
    for i, c in x.entries.items():
        if shift.side == UNILATERAL and i == 1:
            continue
        out[i - 1] = shift.weight(i) * c
    return SparseVector(x.side, out)


def apply_right_inverse(shift: WeightedShift, n: int, x: SparseVector) -> SparseVector:
    """``S_n = S_1^n`` with ``S_1 e_k = e_{k+1} / w_{k+1}``; ``S_0`` is the identity."""
    if n < 0:
        raise ValueError("S_n needs n >= 0")
    if x.side != shift.side:
        raise SpaceError("index kinds differ")
    entries = dict(x.entries)
    for _ in range(n):
        entries = {i + 1: c / shift.weight(i + 1) for i, c in entries.items()}
    return SparseVector(x.side, entries)


def apply_power(shift: WeightedShift, n: int, x: SparseVector) -> SparseVector:
    for _ in range(n):
        x = apply_backward(shift, x)
    return x


# ---------------------------------------------------------------------------
# dense set and scalar pool


def _zigzag(d: int) -> int:
    """0, 1, -1, 2, -2, ... for d = 0, 1, 2, 3, 4, ..."""
    return (d + 1) // 2 if d % 2 else -(d // 2)


def _unzigzag(a: int) -> int:
    return 2 * a - 1 if a > 0 else -2 * a


def _thresholds(enum, lo: int):
    c = lo + 1
    while c <= EXACT_CAP + 1:
        yield c
        c += 1
    t = enum.level_of(c - 1)
    while True:
        t += 1
        yield enum.cumulative(t - 1) + 1


class DenseSetEnumeration:
    """Deterministic enumeration of finitely supported dyadic vectors, ``x_1 = 0``.

    Level ``t`` lists every vector supported in the window ``{1..t}``
    (unilateral) or ``{-t..t}`` (bilateral) with coordinates ``a / 2**(t-1)``,
    ``|a| <= t 2**(t-1)``, in little-endian mixed radix.  Levels are
    concatenated, so the level-1 all-zero vector is ``x_1``.  Repeats across
    levels are harmless.
    """

    version = ENUMERATION_VERSION

    def __init__(self, side: str):
        self.side = side

    def window(self, t: int) -> list[int]:
        if self.side == UNILATERAL:
            return list(range(1, t + 1))
        return [_zigzag(d) for d in range(2 * t + 1)]

    @staticmethod
    def radix(t: int) -> int:
        return t * 2 ** t + 1

    def level_count(self, t: int) -> int:
        return self.radix(t) ** len(self.window(t))

    @lru_cache(maxsize=None)
    def cumulative(self, t: int) -> int:
        return 0 if t == 0 else self.cumulative(t - 1) + self.level_count(t)

    def level_of(self, m: int) -> int:
        if m < 1:
            raise ValueError("dense-set indices start at 1")
        t = 1
        while self.cumulative(t) < m:
            t += 1
        return t

    @lru_cache(maxsize=4096)
    def vector(self, m: int) -> SparseVector:
        t = self.level_of(m)
        r = m - 1 - self.cumulative(t - 1)
        Q = self.radix(t)
        scale = 2.0 ** (t - 1)
        out = {}
        for j in self.window(t):
            r, d = divmod(r, Q)
            if d:
                out[j] = _zigzag(d) / scale
        return SparseVector(self.side, out)

    def index_of(self, x: SparseVector) -> int:
        """Smallest ``m`` with ``x_m == x``."""
        if x.side != self.side:
            raise SpaceError("index kinds differ")
        t = 1
        while True:
            win = self.window(t)
            scale = 2 ** (t - 1)
            if set(x.support) <= set(win) and all(
                    float(c * scale).is_integer() and abs(c) <= t for c in x.entries.values()):
                Q = self.radix(t)
                r = 0
                for j in reversed(win):
                    r = r * Q + _unzigzag(int(round(x[j] * scale)))
                return self.cumulative(t - 1) + r + 1
            t += 1
            if t > 64:
                raise ValueError("vector is not dyadic")

    def amplitude_profile(self, cap: int) -> dict[int, float]:
        """Per-coordinate majorant of ``|x_m|`` over ``m <= cap``."""
        if cap <= EXACT_CAP:
            prof: dict[int, float] = {}
            for m in range(1, cap + 1):
                for j, c in self.vector(m).entries.items():
                    prof[j] = max(prof.get(j, 0.0), abs(c))
            return prof
        t = self.level_of(cap)
        return {j: float(t) for j in self.window(t)}

    def thresholds(self, lo: int) -> Iterator[int]:
        """Caps ``c > lo`` at which ``amplitude_profile`` may change (increasing)."""
        yield from _thresholds(self, lo)

    def describe(self) -> dict:
        return {"version": self.version, "side": self.side}


class ScalarPool:
    """Countable dense scalar set ``z_1 = 0, z_2 = 1, z_3 = -1, ...``.

    Level ``t`` lists the nonzero ``a / 2**(t-1)`` with ``|a| <= t 2**(t-1)``
    in zigzag order of ``a``.
    """

    version = ENUMERATION_VERSION

    @staticmethod
    def level_count(t: int) -> int:
        return t * 2 ** t

    @lru_cache(maxsize=None)
    def cumulative(self, t: int) -> int:
        return 1 if t == 0 else self.cumulative(t - 1) + self.level_count(t)

    def level_of(self, n: int) -> int:
        if n < 1:
            raise ValueError("pool indices start at 1")
        t = 0
        while self.cumulative(t) < n:
            t += 1
        return t

    @lru_cache(maxsize=4096)
    def value(self, n: int) -> float:
        t = self.level_of(n)
        if t == 0:
            return 0.0
        r = n - 1 - self.cumulative(t - 1)
        return _zigzag(r + 1) / 2.0 ** (t - 1)

    def values(self, upto: int) -> np.ndarray:
        return np.array([self.value(n) for n in range(1, upto + 1)])

    def max_abs(self, cap: int) -> float:
        if cap <= EXACT_CAP:
            return max(abs(self.value(n)) for n in range(1, cap + 1))
        return float(self.level_of(cap))

    def thresholds(self, lo: int) -> Iterator[int]:
        yield from _thresholds(self, lo)


# ---------------------------------------------------------------------------
# caps on symbol values


class Caps(Protocol):
    def cap_at(self, k: int) -> int: ...

    def start_of(self, c: int) -> int:
        """Largest position with cap < c; every k beyond has cap >= c."""


@dataclass(frozen=True)
class ConstantCap:
    cap: int

    def cap_at(self, k):
        return self.cap

    def start_of(self, c):
        return -1 if c <= self.cap else math.inf


def extend_schedule(schedule, upto: int):
    """``N_l`` for ``l <= upto``: stored values, then minimal gap growth."""
    N = list(schedule)
    while len(N) < upto:
        prev = N[-2] if len(N) >= 2 else 0
        N.append(N[-1] + (N[-1] - prev) + 1)
    return N


def schedule_value(schedule, l: int) -> int:
    """``N_l`` (1-based) with minimal gap-growth extension, in closed form."""
    D = len(schedule)
    if l <= D:
        return schedule[l - 1]
    prev = schedule[-2] if D >= 2 else 0
    g = schedule[-1] - prev
    j = l - D
    return schedule[-1] + j * g + j * (j + 1) // 2


@dataclass(frozen=True)
class BlockCaps:
    """``cap(k) = factor * l`` for ``N_l < k + shift <= N_{l+1}``, the block symbol cap."""

    schedule: tuple[int, ...]
    shift: int = 0
    factor: int = 2

    def cap_at(self, k):
        pos = k + self.shift
        l = 0
        while pos > schedule_value(self.schedule, l + 1):
            l += 1
        return self.factor * max(l, 1)

    def start_of(self, c):
        l = max(-(-c // self.factor), 1)
        if l == 1:
            return -math.inf
        return schedule_value(self.schedule, l) - self.shift


# ---------------------------------------------------------------------------
# majorants


class TailMajorant:
    """Closed-form bounds on ``F(T^k x_m)``, ``F(S_k x_m)`` and their tails."""

    def __init__(self, shift: WeightedShift, enum: DenseSetEnumeration | None = None):
        self.shift = shift
        self.enum = enum or DenseSetEnumeration(shift.side)
        self.space = shift.space

    def _amp(self, c: float) -> float:
        if c <= 0:
            return 0.0
        return 1.0 if self.space.is_omega else c ** self.space.q

    def profile_term(self, profile: dict[int, float], k: int, which: str) -> float:
        return sum(self._amp(a) * self.shift.unit_term(j, k, which) for j, a in profile.items())

    def profile_tail(self, profile: dict[int, float], which: str, K) -> float:
        return sum(self._amp(a) * self.shift.unit_tail(j, which, K) for j, a in profile.items() if a > 0)

    def bound(self, m: int, k: int, which: str) -> float:
        return self.profile_term(self._profile_of(m), k, which)

    def tail(self, m: int, which: str, K: int) -> float:
        return self.profile_tail(self._profile_of(m), which, K)

    def _profile_of(self, m):
        return {j: abs(c) for j, c in self.enum.vector(m).entries.items()}

    def cap_profile(self, cap: int) -> dict[int, float]:
        return self.enum.amplitude_profile(cap)

    def thresholds(self, lo: int):
        return self.enum.thresholds(lo)

    def weight_delta(self, new: dict, old: dict) -> dict:
        """Profile whose amplitude weights are ``amp(new) - amp(old)`` (>= 0)."""
        out = {}
        for j, a in new.items():
            d = self._amp(a) - self._amp(old.get(j, 0.0))
            if d > 0:
                out[j] = d
        return out

    def weighted_tail(self, weights: dict, which: str, K) -> float:
        return sum(w * self.shift.unit_tail(j, which, K) for j, w in weights.items())


class PoolMajorant(TailMajorant):
    """Majorant for the one-sided model ``sum_k z_{n_k} e_k / b_k`` with ``b_k = v_k``.

    Coordinate ``k`` plays the role of ``S_{k-1} e_1``, so the same unit tails apply.
    """

    def __init__(self, shift: WeightedShift, pool: ScalarPool | None = None):
        if shift.side != UNILATERAL:
            raise ValueError("the one-sided model needs a unilateral shift")
        super().__init__(shift, DenseSetEnumeration(UNILATERAL))
        self.pool = pool or ScalarPool()

    def cap_profile(self, cap):
        return {1: self.pool.max_abs(cap)}

    def thresholds(self, lo):
        return self.pool.thresholds(lo)

    def weighted_tail(self, weights, which, K):
        # position k > K  <->  S_{k-1} e_1 with k-1 > K-1
        unit = self.shift.unit_tail(1, "S", K - 1)
        if K < 1:
            unit += 0.5 if self.space.is_omega else 1.0
        return sum(w * unit for w in weights.values())

    def position_term(self, k: int) -> float:
        """Unit-amplitude bound at coordinate ``k`` of the one-sided model."""
        return self.shift.unit_term(1, k - 1, "S")


def tail_sum(majorant: TailMajorant, which: str, caps: Caps, K) -> float:
    """Upper bound on ``F(sum_{k>K} R_k x_{m_k})`` over every assignment with
    ``m_k <= caps.cap_at(k)``; ``R_k`` is ``T^k`` or ``S_k``.

    The worst case per position is majorised by the cap profile, and the
    nondecreasing cap sequence is summed as a telescoping series of profile
    increments, each with a closed-form tail.  Levels of the enumeration are
    added until the next block starts beyond ``FAR_POSITION``; the rest is
    bounded by twice the last level term once terms at least halve.
    """
    c0 = caps.cap_at(K + 1)
    prof = majorant.cap_profile(c0)
    total = majorant.weighted_tail(majorant.weight_delta(prof, {}), which, K)
    last_terms = []
    for c in majorant.thresholds(c0):
        a = caps.start_of(c)
        if a == math.inf:
            break
        a = max(K, a)
        if a > FAR_POSITION:
            if len(last_terms) >= 2 and last_terms[-1] > 0.5 * last_terms[-2] and last_terms[-1] > 1e-300:
                raise NoCertificate("far-tail terms are not shrinking")
            total += 2 * (last_terms[-1] if last_terms else 0.0)
            break
        new = majorant.cap_profile(c)
        delta = majorant.weight_delta(new, prof)
        prof = new
        term = majorant.weighted_tail(delta, which, a) if delta else 0.0
        if math.isinf(term) or math.isnan(term):
            raise NoCertificate(f"{which}-side majorant diverges")
        total += term
        if c > EXACT_CAP:
            last_terms.append(term)
    if math.isinf(total) or math.isnan(total):
        raise NoCertificate(f"{which}-side majorant diverges")
    return total


# ---------------------------------------------------------------------------
# chaos


@dataclass
class ChaosVerdict:
    chaotic: bool
    status: str  # "chaotic", "not_chaotic" (proved), "no_certificate"
    witness: dict = field(default_factory=dict)


def chaos_check(shift: WeightedShift, tolerance: float = 1e-6) -> ChaosVerdict:
    """Certificate that ``sum_n e_n`` converges unconditionally.

    Uses the unit-term tails from ``e_0`` (bilateral) or ``e_1`` (unilateral):
    the forward direction always, the backward direction only bilaterally.
    """
    j = shift.ref
    sides = ["S"] if shift.side == UNILATERAL else ["S", "T"]
    witness = {}
    for which in sides:
        tail0 = shift.unit_tail(j, which, 0)
        if math.isinf(tail0):
            vanish = shift.unit_terms_vanish(which)
            witness[which] = {"tail_from_0": None}
            if vanish is False:
                return ChaosVerdict(False, "not_chaotic",
                                    {**witness, "reason": f"{which}-side unit terms do not tend to 0"})
            return ChaosVerdict(False, "no_certificate", {**witness, "reason": f"{which}-side majorant diverges"})
        K = 1
        while shift.unit_tail(j, which, K) >= tolerance:
            K *= 2
            if K > 2 ** 40:
                return ChaosVerdict(False, "no_certificate", {**witness, "reason": "tail above tolerance"})
        partial = sum(shift.unit_term(j, k, which) for k in range(1, min(K, 10_000) + 1))
        witness[which] = {"tail_from_0": tail0, "cutoff": K,
                          "tail_at_cutoff": shift.unit_tail(j, which, K), "partial_sum": partial}
    return ChaosVerdict(True, "chaotic", witness)
