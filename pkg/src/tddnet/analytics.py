"""Closed-form and quadrature-based performance metrics.

All functions are pure functions of a :class:`NetworkConfig`. The
intermediate quantities (association and void probabilities, active
densities, exclusion radii, retention) are bundled in
:class:`DerivedQuantities`; functions that need them accept an optional
precomputed instance so callers can substitute values, e.g. force the
active D2D density to zero.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .params import ConfigError, NetworkConfig, exclusion_radius, require_valid
from .special import (
    QuadratureSettings,
    ball_exterior_integral,
    c_alpha,
    delta_fn,
    gamma_fn,
    integrate_1d,
)

# Shape parameter of the gamma approximation to the Voronoi cell area.
CELL_SHAPE = 3.5
FULL_LOAD_VOID = 1e-4

TIERS = ("m", "s")
MODES = ("dl", "ul")


class ApproximationWarning(UserWarning):
    """A formula is evaluated outside the regime where it is accurate."""


@dataclass(frozen=True)
class DerivedQuantities:
    """Association, load and retention quantities derived from a config."""

    a_d_m: float
    a_d_s: float
    a_u_m: float
    a_u_s: float
    pe_d_m: float
    pe_d_s: float
    pe_u_m: float
    pe_u_s: float
    lam_d_m: float
    lam_d_s: float
    lam_u_m: float
    lam_u_s: float
    iota_s: float
    iota_d: float
    k_os: float
    k_od: float
    beta_ret: float
    lambda_d2d: float

    @property
    def fully_loaded(self) -> bool:
        """True when every non-empty mode has void probability below 1e-4."""
        return all(pe < FULL_LOAD_VOID or pe == 1.0
                   for pe in (self.pe_d_m, self.pe_d_s, self.pe_u_m, self.pe_u_s))

    def replace(self, **changes) -> "DerivedQuantities":
        return dataclasses.replace(self, **changes)


def _check(cfg: NetworkConfig) -> None:
    require_valid(cfg)


def _weights(cfg: NetworkConfig, mode: str) -> tuple[float, float]:
    """Biased effective densities q lambda (P B)^(2/alpha) of both tiers."""
    e = 2.0 / cfg.alpha
    if mode == "dl":
        wm = cfg.q_dm * cfg.lambda_m * (cfg.p_m * cfg.b_dm) ** e
        ws = cfg.q_ds * cfg.lambda_s * (cfg.p_s * cfg.b_ds) ** e
    else:
        wm = (1.0 - cfg.q_dm) * cfg.lambda_m * (cfg.q_m * cfg.b_um) ** e
        ws = (1.0 - cfg.q_ds) * cfg.lambda_s * (cfg.q_s * cfg.b_us) ** e
    return wm, ws


def association_probabilities(cfg: NetworkConfig) -> tuple[float, float, float, float]:
    """Probabilities that a DL receiver / UL transmitter joins each tier.

    Returns ``(a_d_m, a_d_s, a_u_m, a_u_s)``. A mode with no base stations
    at all gets ``(0, 0)``.
    """
    _check(cfg)
    out = []
    for mode in MODES:
        wm, ws = _weights(cfg, mode)
        tot = wm + ws
        out.extend((wm / tot, ws / tot) if tot > 0 else (0.0, 0.0))
    return tuple(out)


def _void_from_ratio(c: float) -> float:
    return (1.0 + c / CELL_SHAPE) ** (-CELL_SHAPE)


def _load_ratio(cfg: NetworkConfig, tier: str, mode: str, assoc=None) -> Optional[float]:
    """Mean number of users per cell of a tier and mode, or None if no such cells."""
    a_d_m, a_d_s, a_u_m, a_u_s = assoc or association_probabilities(cfg)
    a = {"dl": {"m": a_d_m, "s": a_d_s}, "ul": {"m": a_u_m, "s": a_u_s}}[mode][tier]
    t = cfg.tier(tier)
    frac = t.q_dl if mode == "dl" else 1.0 - t.q_dl
    cells = frac * t.density
    if cells <= 0:
        return None
    role = (1.0 - cfg.mu) if mode == "dl" else cfg.mu
    users = role * (1.0 - cfg.zeta) * a
    if users == 0:
        return 0.0
    return users * cfg.lambda_u / cells


def void_probabilities(cfg: NetworkConfig) -> tuple[float, float, float, float]:
    """Probability that a cell of each tier and mode has no users.

    Returns ``(pe_d_m, pe_d_s, pe_u_m, pe_u_s)``; modes without cells get 1.
    """
    assoc = association_probabilities(cfg)
    out = []
    for mode in MODES:
        for tier in TIERS:
            c = _load_ratio(cfg, tier, mode, assoc)
            out.append(1.0 if c is None else _void_from_ratio(c))
    return tuple(out)


def load_pmf(cfg: NetworkConfig, tier: str, mode: str, n: int) -> float:
    """Probability that a cell of the given tier and mode holds ``n`` users."""
    if n < 0 or int(n) != n:
        raise ValueError("n must be a non-negative integer")
    c = _load_ratio(cfg, tier, mode)
    if c is None:
        raise ValueError(f"tier {tier!r} has no {mode.upper()} cells")
    if n == 0:
        return _void_from_ratio(c)
    if c == 0:
        return 0.0
    if math.isinf(c):
        return 0.0
    k = CELL_SHAPE
    log_p = (k * math.log(k) - math.lgamma(n + 1) + math.lgamma(n + k) - math.lgamma(k)
             + n * math.log(c) - (n + k) * math.log(k + c))
    return math.exp(log_p)


def load_mean(cfg: NetworkConfig, tier: str, mode: str) -> float:
    """Mean cell load, the ratio of user to cell density."""
    c = _load_ratio(cfg, tier, mode)
    if c is None:
        raise ValueError(f"tier {tier!r} has no {mode.upper()} cells")
    return c


def active_densities(cfg: NetworkConfig) -> tuple[float, float, float, float]:
    """Densities of non-void cells ``(lam_d_m, lam_d_s, lam_u_m, lam_u_s)``.

    The UL value doubles as the density of served UL users of that tier.
    """
    pe_d_m, pe_d_s, pe_u_m, pe_u_s = void_probabilities(cfg)
    return (
        cfg.lambda_m * cfg.q_dm * (1.0 - pe_d_m),
        cfg.lambda_s * cfg.q_ds * (1.0 - pe_d_s),
        cfg.lambda_m * (1.0 - cfg.q_dm) * (1.0 - pe_u_m),
        cfg.lambda_s * (1.0 - cfg.q_ds) * (1.0 - pe_u_s),
    )


def exclusion_radii(cfg: NetworkConfig) -> tuple[float, float]:
    """Equivalent exclusion radii ``(iota_s, iota_d)`` in meters."""
    _check(cfg)
    return (exclusion_radius(cfg.rho_s, cfg.q_d, cfg.epsilon, cfg.alpha),
            exclusion_radius(cfg.rho_d, cfg.q_d, cfg.epsilon, cfg.alpha))


def _sensing_area(rho: float, q_d: float, alpha: float) -> float:
    """Mean sensing area ``2 pi Gamma(2/alpha) / (alpha (rho/Q_d)^(2/alpha))``."""
    if rho == 0:
        return math.inf
    if math.isinf(rho):
        return 0.0
    return 2.0 * math.pi * gamma_fn(2.0 / alpha) / (alpha * (rho / q_d) ** (2.0 / alpha))


def retaining_probability(cfg: NetworkConfig) -> tuple[float, float, float, float]:
    """Retention probability of a potential D2D transmitter under CSMA.

    Returns ``(beta, lambda_d, k_os, k_od)`` where ``lambda_d`` is the
    density of active D2D transmitters.
    """
    _, lam_d_s, _, lam_u_s = active_densities(cfg)
    k_os = _sensing_area(cfg.rho_s, cfg.q_d, cfg.alpha)
    k_od = _sensing_area(cfg.rho_d, cfg.q_d, cfg.alpha)
    if cfg.rho_s == 0 or cfg.rho_d == 0:
        return 0.0, 0.0, k_os, k_od
    small_tx = lam_d_s + lam_u_s
    hole = math.exp(-small_tx * k_os) if small_tx * k_os > 0 else 1.0
    pot = cfg.zeta * cfg.lambda_u
    x = pot * k_od
    if pot == 0:
        return hole, 0.0, k_os, k_od
    if x == 0:
        return hole, hole * pot, k_os, k_od
    if math.isinf(pot):
        # Infinitely many contenders: survivors per unit area saturate at 1/k_od.
        return 0.0, hole / k_od, k_os, k_od
    contention = -math.expm1(-x) / x
    beta = hole * contention
    return beta, beta * pot, k_os, k_od


@functools.lru_cache(maxsize=8192)
def derive(cfg: NetworkConfig) -> DerivedQuantities:
    """All intermediate quantities for ``cfg`` (cached; configs are immutable)."""
    a = association_probabilities(cfg)
    pe = void_probabilities(cfg)
    lam = active_densities(cfg)
    iota_s, iota_d = exclusion_radii(cfg)
    beta, lam_d, k_os, k_od = retaining_probability(cfg)
    return DerivedQuantities(*a, *pe, *lam, iota_s, iota_d, k_os, k_od, beta, lam_d)


def _assoc(dq: DerivedQuantities, tier: str, mode: str) -> float:
    return getattr(dq, f"a_{'d' if mode == 'dl' else 'u'}_{tier}")


def distance_pdf(cfg: NetworkConfig, tier: str, mode: str, y) -> np.ndarray:
    """Density of the distance from a user to its serving base station."""
    dq = derive(cfg)
    t = cfg.tier(tier)
    frac = t.q_dl if mode == "dl" else 1.0 - t.q_dl
    a = _assoc(dq, tier, mode)
    if frac * t.density == 0 or a == 0:
        raise ValueError(f"no {mode.upper()} links to tier {tier!r}")
    rate = math.pi * frac * t.density / a
    y = np.asarray(y, dtype=float)
    return 2.0 * rate * y * np.exp(-rate * y * y)


def _dq(cfg: NetworkConfig, dq: Optional[DerivedQuantities]) -> DerivedQuantities:
    return derive(cfg) if dq is None else dq


def _macro_like(cfg: NetworkConfig, dq: DerivedQuantities, tier: str) -> tuple[Optional[float], Optional[float]]:
    """Closed-form per-tier coverage without D2D interference."""
    t = cfg.tier(tier)
    al = cfg.alpha
    e = 2.0 / al
    ca = c_alpha(al)
    lam_dl = getattr(dq, f"lam_d_{tier}")
    lam_tx = getattr(dq, f"lam_u_{tier}")
    a_d = _assoc(dq, tier, "dl")
    a_u = _assoc(dq, tier, "ul")

    p_d = None
    num = t.q_dl * t.density
    if num > 0 and a_d > 0:
        den = (lam_dl * a_d * delta_fn(t.gamma_dl, al)
               + lam_tx * a_d * ca * (t.p_ul / t.p_dl * t.gamma_dl) ** e + num)
        p_d = num / den
    p_u = None
    num = (1.0 - t.q_dl) * t.density
    if num > 0 and a_u > 0:
        den = ca * t.gamma_ul**e * a_u * (lam_dl * (t.p_dl / t.p_ul) ** e + lam_tx) + num
        p_u = num / den
    return p_d, p_u


def coverage_macro(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None
                   ) -> tuple[Optional[float], Optional[float]]:
    """Macro-tier DL and UL coverage; None marks a mode without macrocells."""
    return _macro_like(cfg, _dq(cfg, dq), "m")


def asymptotic_no_d2d(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None
                      ) -> tuple[Optional[float], Optional[float]]:
    """Small-tier DL and UL coverage when no D2D transmitter is active."""
    return _macro_like(cfg, _dq(cfg, dq), "s")


def asymptotic_no_sensing(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None
                          ) -> tuple[Optional[float], Optional[float]]:
    """Small-tier coverage when D2D users do not sense small-cell transmitters.

    Active D2D transmitters then form a hard-core field of density close to
    ``1/k_od``, which interferes without any exclusion region. The
    approximation needs many contenders per sensing area; a warning is
    issued when ``zeta lambda_u k_od < 10``.
    """
    dq = _dq(cfg, dq)
    al = cfg.alpha
    e = 2.0 / al
    ca = c_alpha(al)
    x = cfg.zeta * cfg.lambda_u * dq.k_od
    if x < 10:
        warnings.warn(f"few D2D contenders per sensing area ({x:.3g} < 10); "
                      "no-sensing approximation is coarse", ApproximationWarning, stacklevel=2)
    d2d = al / (2.0 * math.pi * gamma_fn(e))
    lam_dl, lam_tx = dq.lam_d_s, dq.lam_u_s
    p_d = None
    num = cfg.q_ds * cfg.lambda_s
    if num > 0 and dq.a_d_s > 0:
        den = (lam_dl * dq.a_d_s * delta_fn(cfg.gamma_s_d, al)
               + ca * cfg.gamma_s_d**e * dq.a_d_s
               * (lam_tx * (cfg.q_s / cfg.p_s) ** e + d2d * (cfg.rho_d / cfg.p_s) ** e)
               + num)
        p_d = num / den
    p_u = None
    num = (1.0 - cfg.q_ds) * cfg.lambda_s
    if num > 0 and dq.a_u_s > 0:
        den = (ca * cfg.gamma_s_u**e * dq.a_u_s
               * (lam_dl * (cfg.p_s / cfg.q_s) ** e + lam_tx + d2d * (cfg.rho_d / cfg.q_s) ** e)
               + num)
        p_u = num / den
    return p_d, p_u


def _small_integral(cfg: NetworkConfig, dq: DerivedQuantities, rate: float, gamma: float,
                    p_serve: float, settings: QuadratureSettings, n_theta: int) -> float:
    """``int_0^inf e^-w L(w) dw`` with ``w = pi rate r^2`` and L the D2D Laplace factor."""
    al = cfg.alpha
    lam_d = dq.lambda_d2d
    iota = dq.iota_s

    def integrand(w: float) -> float:
        if lam_d == 0:
            return math.exp(-w)
        r = math.sqrt(w / (math.pi * rate))
        s = gamma * r**al / p_serve
        expo = lam_d * ball_exterior_integral(s, cfg.q_d, iota, r, al, n_theta)
        return math.exp(-w - expo)

    split = math.pi * rate * iota * iota
    if math.isinf(split):
        return integrate_1d(integrand, 0.0, math.inf, settings)
    return integrate_1d(integrand, 0.0, split, settings) + integrate_1d(integrand, split, math.inf, settings)


def coverage_small(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None,
                   settings: QuadratureSettings = QuadratureSettings(rel_tol=1e-8, abs_tol=1e-11),
                   n_theta: int = 48) -> tuple[Optional[float], Optional[float]]:
    """Small-tier DL and UL coverage including D2D interference.

    The serving distance is integrated out numerically, split where it
    crosses the exclusion radius around the small-cell transmitter. D2D
    transmitters are modelled as a Poisson field of density ``lambda_d``
    outside that exclusion disk.
    """
    dq = _dq(cfg, dq)
    al = cfg.alpha
    e = 2.0 / al
    ca = c_alpha(al)
    lam_dl, lam_tx = dq.lam_d_s, dq.lam_u_s

    p_d = None
    cells = cfg.q_ds * cfg.lambda_s
    if cells > 0 and dq.a_d_s > 0:
        own = cells / dq.a_d_s
        f_rate = (lam_dl * delta_fn(cfg.gamma_s_d, al)
                  + lam_tx * ca * (cfg.q_s / cfg.p_s * cfg.gamma_s_d) ** e + own)
        integral = _small_integral(cfg, dq, f_rate, cfg.gamma_s_d, cfg.p_s, settings, n_theta)
        p_d = own / f_rate * integral
    p_u = None
    cells = (1.0 - cfg.q_ds) * cfg.lambda_s
    if cells > 0 and dq.a_u_s > 0:
        own = cells / dq.a_u_s
        g_rate = ca * cfg.gamma_s_u**e * (lam_dl * (cfg.p_s / cfg.q_s) ** e + lam_tx) + own
        integral = _small_integral(cfg, dq, g_rate, cfg.gamma_s_u, cfg.q_s, settings, n_theta)
        p_u = own / g_rate * integral
    return p_d, p_u


def d2d_exponents(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None
                  ) -> tuple[float, float, float]:
    """Interference exponents at a D2D receiver from DL SAPs, UL users and D2D."""
    dq = _dq(cfg, dq)
    al = cfg.alpha
    s = cfg.gamma_d * cfg.r_d**al / cfg.q_d
    for name, iota in (("iota_s", dq.iota_s), ("iota_d", dq.iota_d)):
        if cfg.r_d > iota:
            warnings.warn(f"r_d = {cfg.r_d:g} m exceeds {name} = {iota:.4g} m; the receiver may lie "
                          "outside its own exclusion disk", ApproximationWarning, stacklevel=3)
    i1 = dq.lam_d_s * ball_exterior_integral(s, cfg.p_s, dq.iota_s, cfg.r_d, al) if dq.lam_d_s else 0.0
    i2 = dq.lam_u_s * ball_exterior_integral(s, cfg.q_s, dq.iota_s, cfg.r_d, al) if dq.lam_u_s else 0.0
    i3 = dq.lambda_d2d * ball_exterior_integral(s, cfg.q_d, dq.iota_d, cfg.r_d, al) if dq.lambda_d2d else 0.0
    return i1, i2, i3


def coverage_d2d(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None) -> float:
    """Coverage probability of a typical active D2D receiver."""
    return math.exp(-sum(d2d_exponents(cfg, dq)))


@dataclass
class CoverageReport:
    """Per-tier, D2D and overall coverage.

    Entries are None when the corresponding link type does not exist in
    the configuration. Simulated reports carry 95% confidence half-widths
    in ``ci`` and effective sample sizes in ``samples``.
    """

    p_m_d: Optional[float] = None
    p_m_u: Optional[float] = None
    p_s_d: Optional[float] = None
    p_s_u: Optional[float] = None
    p_d2d: Optional[float] = None
    overall_d: Optional[float] = None
    overall_u: Optional[float] = None
    source: str = "analytic"
    ci: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    insufficient: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    FIELDS = ("p_m_d", "p_m_u", "p_s_d", "p_s_u", "p_d2d", "overall_d", "overall_u")

    def values(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}

    def as_dict(self) -> dict:
        out = {"source": self.source, **self.values()}
        if self.source == "simulated":
            out["ci_half"] = dict(self.ci)
            out["effective_samples"] = dict(self.samples)
            out["insufficient"] = list(self.insufficient)
        if self.extras:
            out["extras"] = dict(self.extras)
        return out


def combine_overall(parts: tuple[Optional[float], Optional[float]], weights: tuple[float, float]
                    ) -> Optional[float]:
    """Association-weighted average of per-tier coverages, skipping empty modes."""
    total, any_part = 0.0, False
    for p, a in zip(parts, weights):
        if p is not None and a > 0:
            total += p * a
            any_part = True
    return total if any_part else None


def coverage_overall(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None) -> CoverageReport:
    """Full analytic coverage report."""
    dq = _dq(cfg, dq)
    p_m_d, p_m_u = coverage_macro(cfg, dq)
    p_s_d, p_s_u = coverage_small(cfg, dq)
    p_d = coverage_d2d(cfg, dq)
    return CoverageReport(
        p_m_d=p_m_d, p_m_u=p_m_u, p_s_d=p_s_d, p_s_u=p_s_u, p_d2d=p_d,
        overall_d=combine_overall((p_m_d, p_s_d), (dq.a_d_m, dq.a_d_s)),
        overall_u=combine_overall((p_m_u, p_s_u), (dq.a_u_m, dq.a_u_s)),
    )


@dataclass
class ThroughputReport:
    """Area throughput in bits/s/Hz/m^2 per link type and in total."""

    t_m_d: float
    t_m_u: float
    t_s_d: float
    t_s_u: float
    t_d2d: float
    total_d: float
    total_u: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def throughput_from_parts(cfg: NetworkConfig, dq: DerivedQuantities, p_m_d, p_m_u, p_s_d, p_s_u,
                          p_d2d) -> ThroughputReport:
    """Assemble throughputs from coverage values (None counts as no traffic)."""

    def rate(lam, p, gamma):
        return 0.0 if p is None or lam == 0 else lam * p * math.log2(1.0 + gamma)

    t_m_d = rate(dq.lam_d_m, p_m_d, cfg.gamma_m_d)
    t_s_d = rate(dq.lam_d_s, p_s_d, cfg.gamma_s_d)
    t_m_u = rate(dq.lam_u_m, p_m_u, cfg.gamma_m_u)
    t_s_u = rate(dq.lam_u_s, p_s_u, cfg.gamma_s_u)
    t_d = rate(dq.lambda_d2d, p_d2d, cfg.gamma_d)
    eta = cfg.eta
    return ThroughputReport(
        t_m_d, t_m_u, t_s_d, t_s_u, t_d,
        total_d=eta * t_m_d + (1.0 - eta) * (t_s_d + 0.5 * t_d),
        total_u=eta * t_m_u + (1.0 - eta) * (t_s_u + 0.5 * t_d),
    )


def throughput(cfg: NetworkConfig, dq: Optional[DerivedQuantities] = None,
               modes: tuple[str, ...] = MODES) -> ThroughputReport:
    """Area throughput; ``modes`` restricts which small-tier integrals are computed."""
    dq = _dq(cfg, dq)
    p_m_d, p_m_u = coverage_macro(cfg, dq)
    if set(modes) == set(MODES):
        p_s_d, p_s_u = coverage_small(cfg, dq)
    else:
        p_s_d, p_s_u = _small_one_mode(cfg, dq, modes[0])
    p_d = coverage_d2d(cfg, dq) if dq.lambda_d2d > 0 else None
    return throughput_from_parts(cfg, dq, p_m_d, p_m_u, p_s_d, p_s_u, p_d)


def _small_one_mode(cfg: NetworkConfig, dq: DerivedQuantities, mode: str):
    if mode == "dl":
        # A UL-free copy of the config would change the densities; instead
        # skip the UL integral by temporarily marking it not applicable.
        p_d, _ = coverage_small(cfg, dq.replace(a_u_s=0.0))
        return p_d, None
    _, p_u = coverage_small(cfg, dq.replace(a_d_s=0.0))
    return None, p_u


def require_scenario(cfg: NetworkConfig) -> None:
    """Raise ConfigError when a scenario field is missing (convenience for callers)."""
    missing = [n for n in ("lambda_s", "lambda_u", "eta", "zeta") if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"missing required scenario field: {', '.join(missing)}")
