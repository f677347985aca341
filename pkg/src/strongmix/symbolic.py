"""Product measures on symbol sequences, the Bernoulli shift and cylinder oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .shifts import schedule_value
from .spaces import BILATERAL

# sampling alphabet is cut where the residual mass drops below this; uniform
# doubles never exceed 1 - 2**-53, so the cut is invisible to inverse-CDF draws
RESIDUAL_CUTOFF = 2.0 ** -60


class SymbolWeights:
    """Symbol law ``(p_n)`` given by its cumulative ``c_j`` and exact residuals ``1 - c_j``.

    Use :meth:`from_schedule` for the construction's rule
    ``1 - c_j = theta 2**-j / (N_{j+1} - N_j)``, or :meth:`geometric` for an
    explicit head followed by a geometric tail.
    """

    def __init__(self, residual, describe: dict, schedule: Sequence[int] | None = None, theta: float | None = None):
        self._residual = residual
        self._describe = describe
        self.schedule = tuple(schedule) if schedule is not None else None
        self.theta = theta
        J = 1
        while residual(J) >= RESIDUAL_CUTOFF:
            J += 1
        self.alphabet = J
        self._cum = np.array([1.0 - residual(j) for j in range(1, J + 1)])
        res = [residual(j) for j in range(1, J + 2)]
        if self._cum[0] <= 0 or any(b >= a for a, b in zip(res, res[1:])):
            raise ValueError("symbol probabilities must be positive")

    @classmethod
    def from_schedule(cls, schedule: Sequence[int], theta: float = 0.5) -> "SymbolWeights":
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        sched = tuple(schedule)

        def residual(j):
            gap = schedule_value(sched, j + 1) - schedule_value(sched, j)
            return theta * 2.0 ** -j / gap

        return cls(residual, {"rule": "schedule", "theta": theta}, sched, theta)

    @classmethod
    def geometric(cls, head: Sequence[float], ratio: float = 0.5) -> "SymbolWeights":
        head = [float(h) for h in head]
        rest = 1.0 - sum(head)
        if rest < 0 or not all(h > 0 for h in head) or not 0 < ratio < 1:
            raise ValueError("bad head/ratio")
        L = len(head)
        tails = np.cumsum(head[::-1])[::-1]  # tails[i] = sum head[i:]

        def residual(j):
            if j < L:
                return float(tails[j]) + rest
            return rest * ratio ** (j - L)

        return cls(residual, {"rule": "geometric", "head": head, "ratio": ratio})

    def describe(self) -> dict:
        return dict(self._describe)

    def mass_above(self, j: int) -> float:
        """``1 - c_j`` computed without cancellation."""
        return 0.0 if j < 0 else (1.0 if j == 0 else self._residual(j))

    def cumulative(self, j: int) -> float:
        if j <= 0:
            return 0.0
        if j <= self.alphabet:
            return float(self._cum[j - 1])
        return 1.0 - self._residual(j)

    def p(self, n: int) -> float:
        if n < 1:
            return 0.0
        if n == 1:
            return self.cumulative(1)
        return self.mass_above(n - 1) - self.mass_above(n)

    def probabilities(self, upto: int) -> np.ndarray:
        return np.array([self.p(n) for n in range(1, upto + 1)])

    def head(self, n: int = 8) -> list[float]:
        return [self.p(k) for k in range(1, n + 1)]

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        u = rng.random(shape)
        return np.searchsorted(self._cum, u, side="right").astype(np.int32) + 1


# ---------------------------------------------------------------------------


class ConstraintProfile:
    """The compact set ``K = prod F_k``; ``F_k = {1..m}`` for ``N_m < |k| <= N_{m+1}``."""

    def __init__(self, schedule: Sequence[int], side: str = BILATERAL):
        N = tuple(int(n) for n in schedule)
        if not N or N[0] < 1 or any(b <= a for a, b in zip(N, N[1:])):
            raise ValueError("schedule must be increasing positive integers")
        gaps = [b - a for a, b in zip((0,) + N, N)]
        if any(g2 <= g1 for g1, g2 in zip(gaps, gaps[1:])):
            raise ValueError("schedule gaps must grow strictly")
        self.schedule = N
        self.side = side

    @property
    def depth(self) -> int:
        return len(self.schedule)

    def N(self, l: int) -> int:
        return schedule_value(self.schedule, l)

    def gap(self, l: int) -> int:
        return self.N(l + 1) - self.N(l)

    def cap(self, k: int) -> int:
        a = abs(k) if self.side == BILATERAL else k
        m = 0
        while a > self.N(m + 1):
            m += 1
        return max(m, 1)

    def contains(self, seq: "SymbolSequence", s: int = 0) -> bool:
        """Window check of membership in ``K(s) = sigma^s(K)``."""
        return all(1 <= seq.at(k) <= self.cap(k + s) for k in seq.indices())

    def describe(self) -> dict:
        return {"schedule": list(self.schedule), "side": self.side}


@dataclass(frozen=True)
class SymbolSequence:
    """Finite window of a symbol sequence: ``symbols[i]`` sits at coordinate ``start + i``."""

    start: int
    symbols: np.ndarray = field(repr=False)
    offset: int = 0

    def __post_init__(self):
        arr = np.asarray(self.symbols, dtype=np.int32)
        if arr.ndim != 1 or np.any(arr < 1):
            raise ValueError("symbols must be a 1-d array of positive integers")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @property
    def end(self) -> int:
        return self.start + len(self.symbols) - 1

    def indices(self) -> range:
        return range(self.start, self.end + 1)

    def covers(self, lo: int, hi: int) -> bool:
        return self.start <= lo and hi <= self.end

    def at(self, k: int) -> int:
        if not self.start <= k <= self.end:
            raise IndexError(f"coordinate {k} outside window [{self.start}, {self.end}]")
        return int(self.symbols[k - self.start])

    def __eq__(self, other):
        return (isinstance(other, SymbolSequence) and self.start == other.start
                and np.array_equal(self.symbols, other.symbols))

    def __hash__(self):
        return hash((self.start, self.symbols.tobytes()))


def sample_symbols(weights: SymbolWeights, window: tuple[int, int], rng: np.random.Generator) -> SymbolSequence:
    lo, hi = window
    return SymbolSequence(lo, weights.draw(rng, hi - lo + 1))


def shift_symbols(seq: SymbolSequence, t: int) -> SymbolSequence:
    """``sigma^t``: ``(sigma^t s)(k) = s(k + t)``."""
    return SymbolSequence(seq.start - t, seq.symbols, seq.offset + t)


# ---------------------------------------------------------------------------
# cylinders


@dataclass(frozen=True)
class Admissible:
    """A finite or cofinite set of symbols."""

    members: frozenset
    cofinite: bool = False

    @classmethod
    def of(cls, values: Iterable[int]) -> "Admissible":
        return cls(frozenset(int(v) for v in values))

    @classmethod
    def upto(cls, m: int) -> "Admissible":
        return cls(frozenset(range(1, m + 1)))

    @classmethod
    def excluding(cls, values: Iterable[int]) -> "Admissible":
        return cls(frozenset(int(v) for v in values), cofinite=True)

    def __and__(self, other: "Admissible") -> "Admissible":
        if not self.cofinite and not other.cofinite:
            return Admissible(self.members & other.members)
        if self.cofinite and other.cofinite:
            return Admissible(self.members | other.members, True)
        fin, cof = (self, other) if not self.cofinite else (other, self)
        return Admissible(fin.members - cof.members)

    def measure(self, weights: SymbolWeights) -> float:
        members = sorted(self.members)
        if not self.cofinite and members == list(range(1, len(members) + 1)):
            return weights.cumulative(len(members))
        s = math.fsum(weights.p(n) for n in members)
        return 1.0 - s if self.cofinite else s

    def mask(self, symbols: np.ndarray) -> np.ndarray:
        hit = np.isin(symbols, np.fromiter(self.members, dtype=np.int64, count=len(self.members)))
        return ~hit if self.cofinite else hit

    def to_json(self):
        return {"members": sorted(self.members), "cofinite": self.cofinite}


Cylinder = Sequence[tuple[int, Admissible]]


def merge_constraints(constraints: Cylinder) -> dict[int, Admissible]:
    merged: dict[int, Admissible] = {}
    for k, adm in constraints:
        merged[k] = merged[k] & adm if k in merged else adm
    return merged


def shift_cylinder(constraints: Cylinder, n: int) -> list[tuple[int, Admissible]]:
    """Constraints of ``sigma^{-n} E``: ``s in sigma^{-n}E`` iff ``s_{k+n}`` obeys ``E``'s constraint at ``k``."""
    return [(k + n, adm) for k, adm in constraints]


def cylinder_measure(weights: SymbolWeights, constraints: Cylinder) -> float:
    out = 1.0
    for _, adm in sorted(merge_constraints(constraints).items()):
        out *= adm.measure(weights)
    return out


def cylinder_mask(constraints: Cylinder, symbols: np.ndarray, start: int) -> np.ndarray:
    """Membership of each row of ``symbols`` (coordinates from ``start``)."""
    ok = np.ones(symbols.shape[0], dtype=bool)
    for k, adm in merge_constraints(constraints).items():
        col = k - start
        if not 0 <= col < symbols.shape[1]:
            raise IndexError(f"coordinate {k} outside sampled window")
        ok &= adm.mask(symbols[:, col])
    return ok


# ---------------------------------------------------------------------------


def beta(weights: SymbolWeights, profile: ConstraintProfile, j: int) -> float:
    """``beta_j = c_j ** (N_{j+1} - N_j)``."""
    return weights.cumulative(j) ** profile.gap(j)


@dataclass(frozen=True)
class KBound:
    partial: float        # p1^(2N1+1) (prod_{l<=L} beta_l)^2, or the one-sided analogue
    tail_factor: float    # certified lower bound on the neglected (prod_{l>L} beta_l)^power
    lower_bound: float    # partial * tail_factor
    depth: int


def beta_tail_lower(weights: SymbolWeights, L: int) -> float:
    """Lower bound on ``prod_{l>L} beta_l`` for the schedule rule.

    With ``y_l = 1 - c_l = theta 2**-l / g_l`` and ``log(1-y) >= -y/(1-y)``:
    ``log beta_l >= -theta 2**-l / (1 - y_l)`` and ``y_l <= theta 2**-(L+1)``.
    """
    if weights.theta is None:
        raise ValueError("no closed-form tail rule for these weights")
    th = weights.theta
    return math.exp(-th * 2.0 ** -L / (1.0 - th * 2.0 ** -(L + 1)))


def k_measure_lower_bound(weights: SymbolWeights, profile: ConstraintProfile, L: int, start: int = 1) -> KBound:
    """``mu(K) >= p1^(2N1+1) (prod beta_l)^2`` (bilateral) or ``p1^N1 prod beta_l``
    (unilateral), with the product over ``l >= start`` and a certified tail beyond ``L``."""
    two = 2 if profile.side == BILATERAL else 1
    N1 = profile.N(start)
    p1 = weights.p(1)
    head = p1 ** (2 * N1 + 1) if profile.side == BILATERAL else p1 ** N1
    prod = 1.0
    for l in range(start, L + 1):
        prod *= beta(weights, profile, l)
    partial = head * prod ** two
    tail = beta_tail_lower(weights, L) ** two
    return KBound(partial, tail, partial * tail, L)


def k_measure_direct(weights: SymbolWeights, profile: ConstraintProfile, L: int) -> float:
    """Coordinate-by-coordinate product of ``mu_k(F_k)`` over ``|k| <= N_{L+1}`` (oracle)."""
    NL = profile.N(L + 1)
    ks = range(-NL, NL + 1) if profile.side == BILATERAL else range(1, NL + 1)
    out = 1.0
    for k in ks:
        out *= weights.cumulative(profile.cap(k)) if abs(k) > profile.N(1) else weights.p(1)
    return out
