"""Experiment configuration (JSON) and shipped presets."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .construction import EXACT, FHC, MeasureModel, build_model
from .shifts import WeightedShift, WeightRule
from .spaces import BILATERAL, UNILATERAL, FSpace


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "custom"
    space: dict = field(default_factory=lambda: {"kind": "lp", "p": 2.0, "r0": 1.0})
    operator: dict = field(default_factory=lambda: {"side": UNILATERAL, "weights": {"kind": "constant", "lam": 2.0}})
    mode: str | None = None
    depth: int = 12
    level: int = 6
    theta: float = 0.5
    samples: int = 100_000
    delta: float = 0.01
    lags: list = field(default_factory=lambda: list(range(51)))
    horizon: int = 10_000
    events: int = 10
    support_levels: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    sample_count: int = 10
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in (None, FHC, EXACT):
            raise ConfigError(f"mode must be 'fhc', 'exact' or null, got {self.mode!r}")
        if not 1 <= self.level <= self.depth:
            raise ConfigError("need 1 <= level <= depth")
        if not 0 < self.theta < 1:
            raise ConfigError("theta must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.samples < 1 or self.horizon < 1 or self.events < 1 or self.sample_count < 0:
            raise ConfigError("counts must be positive")
        if not self.lags or min(self.lags) < 0:
            raise ConfigError("lags must be a nonempty list of nonnegative integers")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if any(not 1 <= m <= self.depth for m in self.support_levels):
            raise ConfigError("support levels must lie in 1..depth")
        try:
            self.shift()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad operator/space: {exc}") from None

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**copy.deepcopy(d))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(d)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    # -- model --------------------------------------------------------------
    def shift(self) -> WeightedShift:
        s = self.space
        space = FSpace.omega(s.get("r0", 1.0)) if s["kind"] == "omega" else FSpace.lp(s["p"], s.get("r0", 1.0))
        op = self.operator
        return WeightedShift(op["side"], WeightRule.from_dict(op["weights"]), space)

    def build(self) -> MeasureModel:
        return build_model(self.shift(), self.depth, self.theta, self.mode)


PRESETS: dict[str, dict] = {
    "l2-doubling": {
        "name": "l2-doubling",
        "space": {"kind": "lp", "p": 2.0, "r0": 1.0},
        "operator": {"side": UNILATERAL, "weights": {"kind": "constant", "lam": 2.0}},
        "mode": FHC,
    },
    "l2-bilateral": {
        "name": "l2-bilateral",
        "space": {"kind": "lp", "p": 2.0, "r0": 1.0},
        "operator": {"side": BILATERAL, "weights": {"kind": "power", "a": 3.0}},
        "mode": FHC,
        "level": 8,
    },
    "omega-any": {
        "name": "omega-any",
        "space": {"kind": "omega", "p": None, "r0": 1.0},
        "operator": {"side": UNILATERAL, "weights": {"kind": "constant", "lam": 1.0}},
        "mode": EXACT,
    },
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.from_dict(PRESETS[name])


def resolve(name: str) -> ExperimentConfig:
    """A shipped preset name or a path to a JSON config."""
    if name in PRESETS:
        return preset(name)
    return ExperimentConfig.load(name)
