"""Invariant strongly mixing (and exact) measures for weighted backward shifts."""

from .config import PRESETS, ExperimentConfig, preset
from .construction import (
    EXACT, FHC, BuildError, MeasureModel, TruncatedVector, build_model, evaluate_phi, orbit_point, sample_point,
)
from .shifts import DenseSetEnumeration, ScalarPool, WeightedShift, WeightRule, chaos_check
from .spaces import BILATERAL, UNILATERAL, FSpace, SparseVector, f_norm
from .symbolic import Admissible, ConstraintProfile, SymbolSequence, SymbolWeights, cylinder_measure
from .verify import Ball, SymbolCylinder, VerificationReport

__all__ = [
    "PRESETS", "ExperimentConfig", "preset", "EXACT", "FHC", "BuildError", "MeasureModel", "TruncatedVector",
    "build_model", "evaluate_phi", "orbit_point", "sample_point", "DenseSetEnumeration", "ScalarPool",
    "WeightedShift", "WeightRule", "chaos_check", "BILATERAL", "UNILATERAL", "FSpace", "SparseVector", "f_norm",
    "Admissible", "ConstraintProfile", "SymbolSequence", "SymbolWeights", "cylinder_measure", "Ball",
    "SymbolCylinder", "VerificationReport",
]
