"""Toolkit for measuring how much a text or audio channel tells you about a
discrete linguistic feature, with exact synthetic oracles for validation."""

from . import units
from .infocore import (
    ChannelDecomposition,
    Estimator,
    InfoEstimate,
    LabelSpace,
    ProbVector,
    ProsodyEstimates,
    RegionReport,
    ValidationError,
    build_decomposition,
    conditional_mi,
    entropy_of,
    mi_from_entropies,
    solve_regions,
    uncertainty_coefficient,
)

__all__ = [
    "units",
    "ChannelDecomposition",
    "Estimator",
    "InfoEstimate",
    "LabelSpace",
    "ProbVector",
    "ProsodyEstimates",
    "RegionReport",
    "ValidationError",
    "build_decomposition",
    "conditional_mi",
    "entropy_of",
    "mi_from_entropies",
    "solve_regions",
    "uncertainty_coefficient",
]

__version__ = "0.1.0"
