"""Sequence F-spaces: finitely supported vectors, F-norms and dyadic 0-neighbourhoods.

Two families are supported:

* ``lp(p)`` for ``0 < p < inf`` -- the usual norm for ``p >= 1`` and the
  p-th power sum ``sum |x_n|**p`` for ``p < 1``;
* ``omega`` -- the countable product, metrised by the Frechet sum
  ``sum_{n>=1} 2**-n |x_n| / (1 + |x_n|)``.  Omega is unilateral only.

Neighbourhood radii are ``r_n = r0 * 2**-n`` so that subadditivity of the
F-norm gives ``U_{n+1} + U_{n+1} ⊂ U_n`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

UNILATERAL = "unilateral"
BILATERAL = "bilateral"


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class FSpace:
    kind: str
    p: float | None = None
    r0: float = 1.0

    def __post_init__(self):
        if self.kind == "lp":
            if self.p is None or not (0 < self.p < math.inf):
                raise SpaceError(f"lp requires 0 < p < inf, got p={self.p!r}")
        elif self.kind == "omega":
            if self.p is not None:
                raise SpaceError("omega takes no exponent")
        else:
            raise SpaceError(f"unknown space kind {self.kind!r}")
        if not self.r0 > 0:
            raise SpaceError("base radius r0 must be positive")

    @classmethod
    def lp(cls, p: float, r0: float = 1.0) -> "FSpace":
        return cls("lp", float(p), r0)

    @classmethod
    def omega(cls, r0: float = 1.0) -> "FSpace":
        return cls("omega", None, r0)

    @property
    def is_omega(self) -> bool:
        return self.kind == "omega"

    @property
    def q(self) -> float:
        """Homogeneity exponent: ``F(c e_i) = |c|**q`` on lp spaces."""
        if self.is_omega:
            raise SpaceError("omega is not homogeneous")
        return 1.0 if self.p >= 1 else self.p

    def describe(self) -> dict:
        return {"kind": self.kind, "p": self.p, "r0": self.r0}

    def __str__(self):
        return "omega" if self.is_omega else f"l^{self.p:g}"

    # dense kernels -- rows are vectors, ``coords`` the index of each column
    def norm_rows(self, values: np.ndarray, coords: np.ndarray) -> np.ndarray:
        a = np.abs(np.atleast_2d(values))
        if self.is_omega:
            if np.any(coords < 1):
                raise SpaceError("omega coordinates start at 1")
            w = np.ldexp(1.0, -np.asarray(coords, dtype=np.int64).clip(max=1100))
            return (a / (1.0 + a)) @ w
        if self.p == 1.0:
            return a.sum(axis=1)
        if self.p < 1:
            return (a ** self.p).sum(axis=1)
        # scale by the row maximum so tiny or huge entries neither under- nor overflow
        m = a.max(axis=1, initial=0.0)
        safe = np.where(m > 0, m, 1.0)
        b = a / safe[:, None]
        if self.p == 2.0:
            return m * np.sqrt(np.einsum("ij,ij->i", b, b))
        return m * (b ** self.p).sum(axis=1) ** (1.0 / self.p)

    def unit_norm(self, coef: float, index: int) -> float:
        """F-norm of ``coef * e_index``."""
        c = abs(coef)
        if self.is_omega:
            return math.ldexp(c / (1.0 + c), -index)
        return c ** self.q


def neighborhood_radius(space: FSpace, n: int) -> float:
    if n < 1:
        raise SpaceError("neighbourhood index starts at 1")
    return math.ldexp(space.r0, -n)


@dataclass(frozen=True)
class SparseVector:
    """Finitely supported real vector indexed by N (unilateral) or Z (bilateral)."""

    side: str
    entries: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.side not in (UNILATERAL, BILATERAL):
            raise SpaceError(f"unknown index kind {self.side!r}")
        clean = {}
        for k, v in self.entries.items():
            k = int(k)
            if self.side == UNILATERAL and k < 1:
                raise SpaceError(f"unilateral index {k} < 1")
            if v != 0:
                clean[k] = float(v)
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, side: str) -> "SparseVector":
        return cls(side, {})

    @classmethod
    def unit(cls, side: str, index: int, coef: float = 1.0) -> "SparseVector":
        return cls(side, {index: coef})

    @classmethod
    def from_dense(cls, side: str, coords: Iterable[int], values: Iterable[float]) -> "SparseVector":
        return cls(side, {int(k): float(v) for k, v in zip(coords, values) if v != 0})

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.entries)

    def is_zero(self) -> bool:
        return not self.entries

    def __getitem__(self, k: int) -> float:
        return self.entries.get(k, 0.0)

    def __add__(self, other: "SparseVector") -> "SparseVector":
        return vec_add(self, other)

    def __sub__(self, other: "SparseVector") -> "SparseVector":
        return vec_add(self, vec_scale(-1.0, other))

    def __neg__(self):
        return vec_scale(-1.0, self)

    def __rmul__(self, c: float) -> "SparseVector":
        return vec_scale(c, self)

    def __hash__(self):
        return hash((self.side, tuple(self.entries.items())))

    def __eq__(self, other):
        return (isinstance(other, SparseVector) and self.side == other.side
                and self.entries == other.entries)

    def allclose(self, other: "SparseVector", atol: float = 1e-12) -> bool:
        keys = set(self.entries) | set(other.entries)
        return all(abs(self[k] - other[k]) <= atol for k in keys)

    def to_json(self) -> dict:
        return {"side": self.side, "entries": [[k, v] for k, v in self.entries.items()]}


def _check_compatible(x: SparseVector, y: SparseVector):
    if x.side != y.side:
        raise SpaceError(f"cannot combine {x.side} and {y.side} vectors")


def vec_add(x: SparseVector, y: SparseVector) -> SparseVector:
    _check_compatible(x, y)
    out = dict(x.entries)
    for k, v in y.entries.items():
        out[k] = out.get(k, 0.0) + v
    return SparseVector(x.side, out)


def vec_scale(c: float, x: SparseVector) -> SparseVector:
    if c == 0:
        return SparseVector.zero(x.side)
    return SparseVector(x.side, {k: c * v for k, v in x.entries.items()})


def f_norm(space: FSpace, x: SparseVector) -> float:
    if space.is_omega and x.side == BILATERAL:
        raise SpaceError("omega is unilateral")
    if x.is_zero():
        return 0.0
    coords = np.fromiter(x.entries.keys(), dtype=np.int64)
    vals = np.fromiter(x.entries.values(), dtype=float)
    return float(space.norm_rows(vals[None, :], coords)[0])


def vec_truncate(space: FSpace, x: SparseVector, window: tuple[int, int]) -> tuple[SparseVector, float]:
    """Keep the entries with index in the closed ``window``; return the kept
    vector and the F-norm of what was discarded."""
    lo, hi = window
    kept = {k: v for k, v in x.entries.items() if lo <= k <= hi}
    dropped = {k: v for k, v in x.entries.items() if not lo <= k <= hi}
    return SparseVector(x.side, kept), f_norm(space, SparseVector(x.side, dropped))


def in_neighborhood(space: FSpace, x: SparseVector, n: int) -> bool:
    return f_norm(space, x) < neighborhood_radius(space, n)
