"""Monte Carlo simulation of the two-tier network with CSMA-controlled D2D."""

from .estimate import (
    InsufficientSamplesError,
    RatioEstimate,
    StructureStats,
    estimate_aloha_coverage,
    estimate_coverage,
    estimate_load_histogram,
    estimate_retention,
    estimate_structure,
    ratio_estimate,
    sample_serving_distances,
    wilson_interval,
)
from .measure import KINDS, ProbeSamples, applicable_kinds, measure_sir, sir_from_geometry
from .realization import (
    NetworkRealization,
    SimSettings,
    associate,
    build_realization,
    run_csma,
    sample_realization,
)

__all__ = [
    "InsufficientSamplesError", "RatioEstimate", "StructureStats", "estimate_aloha_coverage",
    "estimate_coverage", "estimate_load_histogram", "estimate_retention", "estimate_structure",
    "ratio_estimate", "sample_serving_distances", "wilson_interval", "KINDS", "ProbeSamples",
    "applicable_kinds", "measure_sir", "sir_from_geometry", "NetworkRealization", "SimSettings",
    "associate", "build_realization", "run_csma", "sample_realization",
]
