"""Network configuration, unit conversions and input validation.

Everything inside the package works in linear units: powers in mW,
thresholds as linear ratios, densities in points per square meter and
distances in meters. Decibel quantities only appear at the file/CLI
boundary (see :func:`config_from_mapping`).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

MACRO_DENSITY = 1.0 / (math.pi * 500.0**2)

# Fields that depend on the scenario and therefore have no default.
SCENARIO_FIELDS = ("lambda_s", "lambda_u", "eta", "zeta")

# Fields stored in mW but written in dBm inside config files.
POWER_FIELDS = ("p_m", "p_s", "q_m", "q_s", "q_d", "rho_s", "rho_d", "rho_min")
# Fields stored as linear ratios but written in dB inside config files.
THRESHOLD_FIELDS = ("gamma_m_d", "gamma_m_u", "gamma_s_d", "gamma_s_u", "gamma_d")
DENSITY_FIELDS = ("lambda_m", "lambda_s", "lambda_u")
PROBABILITY_FIELDS = ("q_dm", "q_ds", "eta", "zeta", "mu")
BIAS_FIELDS = ("b_dm", "b_ds", "b_um", "b_us")


class ConfigError(ValueError):
    """Raised when a configuration cannot be built or is invalid."""


def _require_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite value, got {x!r}")
    return x


def dbm_to_mw(x_dbm: float) -> float:
    """Convert dBm to mW."""
    return 10.0 ** (_require_finite(x_dbm) / 10.0)


def mw_to_dbm(x_mw: float) -> float:
    """Convert mW to dBm. Zero power maps to -inf."""
    x_mw = float(x_mw)
    if x_mw < 0 or math.isnan(x_mw) or math.isinf(x_mw):
        raise ValueError(f"power must be finite and non-negative, got {x_mw!r}")
    if x_mw == 0:
        return -math.inf
    return 10.0 * math.log10(x_mw)


def db_to_linear(x_db: float) -> float:
    """Convert a ratio in dB to linear scale."""
    return 10.0 ** (_require_finite(x_db) / 10.0)


def linear_to_db(x: float) -> float:
    """Convert a positive linear ratio to dB."""
    x = float(x)
    if not (x > 0) or math.isinf(x):
        raise ValueError(f"ratio must be finite and positive, got {x!r}")
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class NetworkConfig:
    """Scalar parameters of the two-tier network, in linear units.

    Densities are per square meter, powers and sensing thresholds in mW,
    SIR thresholds are linear. ``lambda_u`` may be ``math.inf`` to denote
    the fully-loaded limit in analytic computations. ``rho_s`` and
    ``rho_d`` may be ``math.inf`` to disable the respective sensing stage.
    """

    lambda_m: float = MACRO_DENSITY
    lambda_s: Optional[float] = None
    lambda_u: Optional[float] = None
    alpha: float = 4.0
    p_m: float = dbm_to_mw(46.0)
    p_s: float = dbm_to_mw(26.0)
    q_m: float = dbm_to_mw(20.0)
    q_s: float = dbm_to_mw(10.0)
    q_d: float = dbm_to_mw(0.0)
    q_dm: float = 0.5
    q_ds: float = 0.5
    b_dm: float = 1.0
    b_ds: float = 1.0
    b_um: float = 1.0
    b_us: float = 1.0
    gamma_m_d: float = 1.0
    gamma_m_u: float = 1.0
    gamma_s_d: float = 1.0
    gamma_s_u: float = 1.0
    gamma_d: float = 1.0
    r_d: float = 20.0
    rho_s: float = dbm_to_mw(-60.0)
    rho_d: float = dbm_to_mw(-60.0)
    epsilon: float = 1e-5
    eta: Optional[float] = None
    zeta: Optional[float] = None
    mu: float = 0.5
    rho_min: Optional[float] = None

    def replace(self, **changes: Any) -> "NetworkConfig":
        """Return a copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def tier(self, tier: str) -> "TierView":
        """Per-tier view of the parameters ("m" or "s")."""
        if tier == "m":
            return TierView(self.lambda_m, self.p_m, self.q_m, self.q_dm, self.b_dm, self.b_um,
                            self.gamma_m_d, self.gamma_m_u)
        if tier == "s":
            return TierView(self.lambda_s or 0.0, self.p_s, self.q_s, self.q_ds, self.b_ds,
                            self.b_us, self.gamma_s_d, self.gamma_s_u)
        raise ValueError(f"unknown tier {tier!r}; expected 'm' or 's'")


@dataclass(frozen=True)
class TierView:
    """The parameters of one tier, with uniform names."""

    density: float
    p_dl: float
    p_ul: float
    q_dl: float
    bias_dl: float
    bias_ul: float
    gamma_dl: float
    gamma_ul: float


def default_config(**overrides: Any) -> NetworkConfig:
    """Default parameter set; scenario fields stay unset unless overridden."""
    names = {f.name for f in dataclasses.fields(NetworkConfig)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown configuration field(s): {', '.join(sorted(unknown))}")
    return NetworkConfig(**overrides)


@dataclass(frozen=True)
class HatParams:
    """Ratios of tier k parameters to those of the serving tier i.

    A ratio whose denominator is zero is reported as NaN.
    """

    lambda_hat: float
    q_d_hat: float
    q_u_hat: float
    p_hat: float
    q_hat: float
    b_d_hat: float
    b_u_hat: float


def _ratio(num: float, den: float) -> float:
    if num == den:
        return 1.0
    return num / den if den != 0 else math.nan


def hat_params(cfg: NetworkConfig, tier_k: str, tier_i: str) -> HatParams:
    """Normalized parameters of tier ``tier_k`` relative to tier ``tier_i``."""
    k, i = cfg.tier(tier_k), cfg.tier(tier_i)
    return HatParams(
        lambda_hat=_ratio(k.density, i.density),
        q_d_hat=_ratio(k.q_dl, i.q_dl),
        q_u_hat=_ratio(1.0 - k.q_dl, 1.0 - i.q_dl),
        p_hat=_ratio(k.p_dl, i.p_dl),
        q_hat=_ratio(k.p_ul, i.p_ul),
        b_d_hat=_ratio(k.bias_dl, i.bias_dl),
        b_u_hat=_ratio(k.bias_ul, i.bias_ul),
    )


@dataclass
class ValidationOutcome:
    """Result of :func:`validate`: errors make a config unusable, warnings do not."""

    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def exclusion_radius(rho: float, q_d: float, epsilon: float, alpha: float) -> float:
    """Equivalent exclusion radius for sensing threshold ``rho``.

    Zero threshold gives an infinite radius, an infinite threshold a zero one.
    """
    if rho == 0:
        return math.inf
    if math.isinf(rho):
        return 0.0
    return (-math.log(epsilon) / (rho / q_d)) ** (1.0 / alpha)


def validate(cfg: NetworkConfig, modes: Iterable[str] = ("dl", "ul")) -> ValidationOutcome:
    """Check invariants and flag degenerate regimes.

    ``modes`` lists the link directions the caller intends to query, so
    that an empty mode only triggers a warning when it matters.
    """
    out = ValidationOutcome()
    err, warn = out.errors.append, out.warnings.append
    modes = set(modes)

    for name in SCENARIO_FIELDS:
        if getattr(cfg, name) is None:
            err(f"missing required scenario field: {name}")

    def num(name: str) -> Optional[float]:
        v = getattr(cfg, name)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
            err(f"{name} must be a number, got {v!r}")
            return None
        return float(v)

    alpha = num("alpha")
    if alpha is not None and not alpha > 2:
        err("alpha must exceed 2")
    for name in DENSITY_FIELDS:
        v = num(name)
        if v is not None and v < 0:
            err(f"{name} must be non-negative")
        if v is not None and math.isinf(v) and name != "lambda_u":
            err(f"{name} must be finite")
    for name in ("p_m", "p_s", "q_m", "q_s", "q_d"):
        v = num(name)
        if v is not None and not (0 < v < math.inf):
            err(f"{name} must be positive and finite")
    for name in PROBABILITY_FIELDS:
        v = num(name)
        if v is not None and not 0 <= v <= 1:
            err(f"{name} must lie in [0, 1]")
    for name in BIAS_FIELDS + THRESHOLD_FIELDS:
        v = num(name)
        if v is not None and not (0 < v < math.inf):
            err(f"{name} must be positive and finite")
    for name in ("rho_s", "rho_d"):
        v = num(name)
        if v is not None and v < 0:
            err(f"{name} must be non-negative")
    if cfg.rho_min is not None:
        v = num("rho_min")
        if v is not None and v < 0:
            err("rho_min must be non-negative")
    eps = num("epsilon")
    if eps is not None and not 0 < eps < 1:
        err("epsilon must lie in (0, 1)")
    r_d = num("r_d")
    if r_d is not None and not (0 <= r_d < math.inf):
        err("r_d must be non-negative and finite")
    if out.errors:
        return out

    for tier, q in (("macro", cfg.q_dm), ("small", cfg.q_ds)):
        if q == 1 and "ul" in modes:
            warn(f"{tier} UL mode empty (q = 1)")
        if q == 0 and "dl" in modes:
            warn(f"{tier} DL mode empty (q = 0)")
    if cfg.rho_s == 0:
        warn("no D2D transmissions (rho_s = 0)")
    if cfg.zeta == 0:
        warn("no potential D2D users (zeta = 0)")
    iota_s = exclusion_radius(cfg.rho_s, cfg.q_d, cfg.epsilon, cfg.alpha)
    iota_d = exclusion_radius(cfg.rho_d, cfg.q_d, cfg.epsilon, cfg.alpha)
    if cfg.r_d > iota_s:
        warn(f"r_d = {cfg.r_d:g} m exceeds iota_s = {iota_s:.4g} m; D2D coverage is approximate")
    if cfg.r_d > iota_d:
        warn(f"r_d = {cfg.r_d:g} m exceeds iota_d = {iota_d:.4g} m; D2D coverage is approximate")
    return out


def require_valid(cfg: NetworkConfig, modes: Iterable[str] = ("dl", "ul")) -> NetworkConfig:
    """Raise :class:`ConfigError` listing all violations if ``cfg`` is invalid."""
    outcome = validate(cfg, modes)
    if not outcome.ok:
        raise ConfigError("; ".join(outcome.errors))
    return cfg


def _parse_number(name: str, raw: Any) -> float:
    if isinstance(raw, bool):
        raise ConfigError(f"{name}: expected a number, got {raw!r}")
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        text = raw.strip().lower()
        if text in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(text)
        except ValueError:
            pass
    raise ConfigError(f"{name}: expected a number, got {raw!r}")


def parse_field(name: str, raw: Any, lambda_m: float = MACRO_DENSITY) -> Optional[float]:
    """Convert one file-level value to the internal linear unit.

    Powers are read in dBm, SIR thresholds in dB, and densities either as
    absolute values or as a multiple of ``lambda_m`` written ``"5x"``.
    ``"inf"`` is accepted for ``lambda_u`` and the sensing thresholds.
    """
    if raw is None:
        return None
    if name in DENSITY_FIELDS and isinstance(raw, str) and raw.strip().lower().endswith("x"):
        mult = _parse_number(name, raw.strip()[:-1])
        return mult * lambda_m
    value = _parse_number(name, raw)
    if name in POWER_FIELDS:
        if math.isinf(value):
            return math.inf if value > 0 else 0.0
        return dbm_to_mw(value)
    if name in THRESHOLD_FIELDS:
        return db_to_linear(value)
    return value


def config_from_mapping(data: Mapping[str, Any], base: Optional[NetworkConfig] = None) -> NetworkConfig:
    """Build a config from a file-level mapping (dBm/dB units, "5x" densities)."""
    base = base or default_config()
    names = {f.name for f in dataclasses.fields(NetworkConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown configuration field(s): {', '.join(sorted(unknown))}")
    lambda_m = base.lambda_m
    if "lambda_m" in data:
        lambda_m = parse_field("lambda_m", data["lambda_m"], MACRO_DENSITY)
    changes = {"lambda_m": lambda_m}
    for name, raw in data.items():
        if name != "lambda_m":
            changes[name] = parse_field(name, raw, lambda_m)
    return dataclasses.replace(base, **changes)


def load_config(path: str) -> NetworkConfig:
    """Read a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_mapping(data)


def config_to_mapping(cfg: NetworkConfig) -> dict[str, Any]:
    """Inverse of :func:`config_from_mapping`, for reports and manifests."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            out[f.name] = None
        elif f.name in POWER_FIELDS:
            out[f.name] = "inf" if math.isinf(v) else ("-inf" if v == 0 else mw_to_dbm(v))
        elif f.name in THRESHOLD_FIELDS:
            out[f.name] = linear_to_db(v)
        elif f.name in DENSITY_FIELDS and math.isinf(v):
            out[f.name] = "inf"
        else:
            out[f.name] = v
    return out
