"""Coverage, throughput and simulation of two-tier dynamic TDD networks with CSMA-controlled D2D."""

from .analytics import CoverageReport, ThroughputReport, coverage_overall, derive, throughput
from .params import ConfigError, NetworkConfig, default_config, load_config, validate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CoverageReport", "NetworkConfig", "ThroughputReport", "coverage_overall",
    "default_config", "derive", "load_config", "throughput", "validate", "__version__",
]
