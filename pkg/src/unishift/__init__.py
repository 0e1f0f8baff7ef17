"""Unimodular diagonal plus weighted backward shift operators at finite truncation."""

__version__ = "0.1.0"

from .estimators import EigenfieldTransformer, GaussianEigenMeasure, ShiftDiagOperator, UnimodularSpectrum
from .exceptions import GridRangeError, NumericRangeError, ShapeError, UnishiftError, UnsupportedModeError
from .hilbert import CVec, Grid, WeightFamily, basis_vector, inner, norm
from .operator import OperatorSpec, apply, power_apply, to_matrix
from .spectrum import EigenSequence, build_sequence, j_block, max_step_length, sample_K, verify_constraints

__all__ = [
    "CVec",
    "EigenSequence",
    "EigenfieldTransformer",
    "GaussianEigenMeasure",
    "Grid",
    "GridRangeError",
    "NumericRangeError",
    "OperatorSpec",
    "ShapeError",
    "ShiftDiagOperator",
    "UnimodularSpectrum",
    "UnishiftError",
    "UnsupportedModeError",
    "WeightFamily",
    "apply",
    "basis_vector",
    "build_sequence",
    "inner",
    "j_block",
    "max_step_length",
    "norm",
    "power_apply",
    "sample_K",
    "to_matrix",
    "verify_constraints",
]
