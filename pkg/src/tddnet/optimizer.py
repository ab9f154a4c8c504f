"""Optimizers for UL/DL configuration, density, bias, bandwidth and sensing.

The closed-form optima assume a fully-loaded network without D2D traffic.
Each closed form is returned together with a grid search of the analytic
objective it claims to maximize, so any disagreement is visible in the
result rather than hidden.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import analytics
from .params import ConfigError, NetworkConfig, require_valid
from .special import c_alpha, delta_fn

UL_DL_GRID = tuple(np.round(np.linspace(0.0, 1.0, 21), 10))
DENSITY_RANGE = (1.0, 100.0)
BIAS_RANGE = (1e-2, 1e2)
GRID_POINTS = 50
STAGE_GRID = 25
REFINE_REL = 0.01
# Relative change below which two objective values count as equal; matches
# the accuracy of the quadrature-backed coverage values.
FLAT_REL = 1e-6


@dataclass
class OptimizationResult:
    """Outcome of one optimizer call.

    ``arguments`` maps parameter names to their optimal values and
    ``objective`` is the objective at exactly those values. ``checks``
    holds the grid-oracle cross-check and any alternative forms.
    """

    target: str
    arguments: dict
    objective: float
    method: str
    grid_step: Optional[float] = None
    q_bar: Optional[float] = None
    case: Optional[str] = None
    tags: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Fully-loaded objectives

def full_load_config(cfg: NetworkConfig) -> NetworkConfig:
    """Copy of ``cfg`` with unlimited users and no D2D transmissions."""
    return cfg.replace(lambda_u=math.inf, rho_s=0.0, zeta=cfg.zeta if cfg.zeta is not None else 0.0,
                       eta=cfg.eta if cfg.eta is not None else 0.5,
                       lambda_s=cfg.lambda_s if cfg.lambda_s is not None else 0.0)


def _tier_limit(cfg: NetworkConfig, tier: str, mode: str) -> float:
    """Coverage of a tier in a mode whose share of base stations vanishes."""
    t = cfg.tier(tier)
    other = cfg.tier("s" if tier == "m" else "m")
    e = 2.0 / cfg.alpha
    ca = c_alpha(cfg.alpha)
    if mode == "dl":
        g = other.q_dl * other.density * (other.p_dl * other.bias_dl / (t.p_dl * t.bias_dl)) ** e
        c = ca * (t.p_ul / t.p_dl * t.gamma_dl) ** e
        if g > 0:
            return g / (g + t.density * c)
        return 1.0 / (1.0 + delta_fn(t.gamma_dl, cfg.alpha)) if c == 0 else 0.0
    g = (1.0 - other.q_dl) * other.density * (other.p_ul * other.bias_ul / (t.p_ul * t.bias_ul)) ** e
    y = ca * t.gamma_ul**e * (t.p_dl / t.p_ul) ** e
    return g / (g + t.density * y) if g > 0 else 0.0


def full_load_coverage(cfg: NetworkConfig, tier: str, mode: str) -> float:
    """Per-tier coverage of a fully-loaded network without D2D.

    Uses the analytic macro-style closed form; when the mode has no base
    stations of this tier the limit as their share vanishes is returned.
    """
    fl = full_load_config(cfg)
    p_d, p_u = analytics._macro_like(fl, analytics.derive(fl), tier)
    value = p_d if mode == "dl" else p_u
    return _tier_limit(fl, tier, mode) if value is None else float(value)


def full_load_overall(cfg: NetworkConfig, mode: str) -> float:
    """Overall DL or UL coverage of a fully-loaded network without D2D."""
    fl = full_load_config(cfg)
    dq = analytics.derive(fl)
    pm_d, pm_u = analytics.coverage_macro(fl, dq)
    ps_d, ps_u = analytics.asymptotic_no_d2d(fl, dq)
    if mode == "dl":
        value = analytics.combine_overall((pm_d, ps_d), (dq.a_d_m, dq.a_d_s))
    else:
        value = analytics.combine_overall((pm_u, ps_u), (dq.a_u_m, dq.a_u_s))
    return math.nan if value is None else float(value)


def _assumption_notes(cfg: NetworkConfig) -> list:
    notes = []
    if cfg.lambda_u is not None and cfg.lambda_s is not None and cfg.eta is not None \
            and cfg.zeta is not None and not analytics.derive(cfg).fully_loaded:
        notes.append("configuration is not fully loaded; optimum computed in the fully-loaded limit")
    if cfg.rho_s > 0 and (cfg.zeta or 0.0) > 0:
        notes.append("D2D transmissions present; optimum computed without D2D (rho_s -> 0)")
    return notes


def _check_mode(mode: str) -> str:
    if mode not in ("dl", "ul"):
        raise ValueError(f"mode must be 'dl' or 'ul', got {mode!r}")
    return mode


# ---------------------------------------------------------------------------
# UL/DL configuration

def q_bar(cfg: NetworkConfig, tier: str) -> float:
    """Threshold on the other tier's DL fraction that decides the DL optimum of ``tier``.

    Returns ``inf`` when the DL coverage of ``tier`` increases with its DL
    fraction regardless of the other tier (the DL interference term does not
    dominate).
    """
    t = cfg.tier(tier)
    other = cfg.tier("s" if tier == "m" else "m")
    e = 2.0 / cfg.alpha
    ratio = delta_fn(t.gamma_dl, cfg.alpha) / (c_alpha(cfg.alpha) * (t.p_ul / t.p_dl * t.gamma_dl) ** e)
    if ratio <= 1.0:
        return math.inf
    if other.density == 0:
        return math.inf
    scale = (t.density / other.density) * (t.p_dl * t.bias_dl / (other.p_dl * other.bias_dl)) ** e
    return scale / (ratio - 1.0)


def optimal_uldl_config(cfg: NetworkConfig, tier: str, mode: str) -> OptimizationResult:
    """DL fraction of ``tier`` maximizing its own DL or UL coverage.

    The UL coverage of a tier always falls with its DL fraction when base
    stations outpower users, so the UL answer is 0. For DL the optimum is 1
    when UL interference dominates (case i) or when the other tier's DL
    fraction is below :func:`q_bar` (case ii), and 0 otherwise.
    """
    require_valid(full_load_config(cfg))
    mode = _check_mode(mode)
    name = f"q_d{tier}"
    t = cfg.tier(tier)
    other_tier = "s" if tier == "m" else "m"
    e = 2.0 / cfg.alpha
    notes = _assumption_notes(cfg)

    qb = None
    if mode == "ul":
        q_star, case = 0.0, "ul"
        if t.p_ul >= t.p_dl:
            notes.append("user power is not below base-station power; UL optimum may differ")
    else:
        lhs = delta_fn(t.gamma_dl, cfg.alpha) / (c_alpha(cfg.alpha) * t.gamma_dl**e)
        qb = q_bar(cfg, tier)
        if lhs <= (t.p_ul / t.p_dl) ** e:
            q_star, case = 1.0, "i"
        elif cfg.tier(other_tier).q_dl < qb:
            q_star, case = 1.0, "ii-increasing"
        else:
            q_star, case = 0.0, "ii-decreasing"

    def objective(q: float) -> float:
        return full_load_coverage(cfg.replace(**{name: float(q)}), tier, mode)

    values = np.array([objective(q) for q in UL_DL_GRID])
    best = int(np.argmax(values))
    diffs = np.diff(values)
    checks = {
        "grid": list(UL_DL_GRID),
        "grid_values": values.tolist(),
        "grid_argmax": float(UL_DL_GRID[best]),
        "agrees": bool(math.isclose(values[best], objective(q_star), rel_tol=1e-9, abs_tol=1e-12)),
        "monotone": "non-increasing" if np.all(diffs <= 1e-12) else
                    "non-decreasing" if np.all(diffs >= -1e-12) else "neither",
    }
    return OptimizationResult(
        target="uldl", arguments={name: q_star}, objective=objective(q_star), method="closed-form",
        grid_step=0.05, q_bar=qb, case=case, checks=checks, notes=notes)


# ---------------------------------------------------------------------------
# Density and bias

def _dl_interference_factor(cfg: NetworkConfig, tier: str, with_c: bool) -> float:
    t = cfg.tier(tier)
    e = 2.0 / cfg.alpha
    c = c_alpha(cfg.alpha) if with_c else 1.0
    return (t.q_dl * t.p_dl**e * delta_fn(t.gamma_dl, cfg.alpha)
            + (1.0 - t.q_dl) * c * (t.p_ul * t.gamma_dl) ** e)


def _ul_interference_factor(cfg: NetworkConfig, tier: str) -> float:
    t = cfg.tier(tier)
    e = 2.0 / cfg.alpha
    return t.gamma_ul**e * (t.q_dl * t.p_dl**e + (1.0 - t.q_dl) * t.p_ul**e)


def density_product(cfg: NetworkConfig, mode: str, form: str = "printed") -> float:
    """Optimal value of ``lambda_hat * B_hat^(2/alpha)`` for the small tier.

    ``form="printed"`` leaves out C(alpha) on the macro UL-interference term
    of the DL expression, as the published closed form does; ``"derived"``
    keeps it, which is what setting the derivative of the overall coverage
    to zero actually gives. The UL expressions of both forms coincide.
    """
    if mode == "dl":
        return (_dl_interference_factor(cfg, "m", form == "derived")
                / _dl_interference_factor(cfg, "s", True))
    return _ul_interference_factor(cfg, "m") / _ul_interference_factor(cfg, "s")


def _bias_hat(cfg: NetworkConfig, mode: str) -> float:
    return cfg.b_ds / cfg.b_dm if mode == "dl" else cfg.b_us / cfg.b_um


def _log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _grid_and_refine(objective: Callable[[float], float], lo: float, hi: float, n: int) -> dict:
    """Log grid argmax followed by bounded refinement between its neighbours."""
    grid = _log_grid(lo, hi, n)
    values = np.array([objective(x) for x in grid])
    best = int(np.nanargmax(values))
    a = math.log(grid[max(best - 1, 0)])
    b = math.log(grid[min(best + 1, n - 1)])
    res = minimize_scalar(lambda u: -objective(math.exp(u)), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-6})
    refined = math.exp(res.x) if -res.fun >= values[best] else float(grid[best])
    return {
        "grid": grid.tolist(), "grid_values": values.tolist(), "grid_argmax": float(grid[best]),
        "log_step": math.log(grid[1] / grid[0]), "refined": refined,
        "refined_objective": objective(refined),
    }


def _within_step(x: float, y: float, log_step: float) -> bool:
    return abs(math.log(x) - math.log(y)) <= log_step * (1.0 + 1e-9)


def optimal_density(cfg: NetworkConfig, mode: str, grid_range: Sequence[float] = DENSITY_RANGE,
                    grid_points: int = GRID_POINTS) -> OptimizationResult:
    """Small-to-macro density ratio maximizing the overall DL or UL coverage.

    The reported argument is the closed form as published; ``checks``
    carries the derived form, the grid argmax and the refined optimum of the
    analytic overall coverage, and whether each closed form lies within one
    grid step of the grid argmax.
    """
    mode = _check_mode(mode)
    require_valid(full_load_config(cfg))
    e = 2.0 / cfg.alpha
    bh = _bias_hat(cfg, mode)
    printed = density_product(cfg, mode, "printed") / bh**e
    derived = density_product(cfg, mode, "derived") / bh**e

    def objective(lam_hat: float) -> float:
        return full_load_overall(cfg.replace(lambda_s=lam_hat * cfg.lambda_m), mode)

    checks = _grid_and_refine(objective, grid_range[0], grid_range[1], grid_points)
    checks.update(_closed_form_checks(printed, derived, checks, objective))
    return OptimizationResult(
        target="density", arguments={"lambda_hat": printed}, objective=objective(printed),
        method="closed-form", grid_step=checks["log_step"], checks=checks,
        notes=_assumption_notes(cfg))


def optimal_bias(cfg: NetworkConfig, mode: str, grid_range: Sequence[float] = BIAS_RANGE,
                 grid_points: int = GRID_POINTS) -> OptimizationResult:
    """Small-to-macro bias ratio maximizing the overall DL or UL coverage.

    The macro bias is held fixed; the small-tier bias is ``B_hat`` times it.
    Reporting follows :func:`optimal_density`.
    """
    mode = _check_mode(mode)
    require_valid(full_load_config(cfg))
    if not cfg.lambda_s:
        raise ConfigError("lambda_s must be positive to optimize the bias")
    half = cfg.alpha / 2.0
    lam_hat = cfg.lambda_s / cfg.lambda_m
    printed = (density_product(cfg, mode, "printed") / lam_hat) ** half
    derived = (density_product(cfg, mode, "derived") / lam_hat) ** half
    field_name, ref = ("b_ds", cfg.b_dm) if mode == "dl" else ("b_us", cfg.b_um)

    def objective(b_hat: float) -> float:
        return full_load_overall(cfg.replace(**{field_name: b_hat * ref}), mode)

    checks = _grid_and_refine(objective, grid_range[0], grid_range[1], grid_points)
    checks.update(_closed_form_checks(printed, derived, checks, objective))
    return OptimizationResult(
        target="bias", arguments={"b_hat": printed}, objective=objective(printed),
        method="closed-form", grid_step=checks["log_step"], checks=checks,
        notes=_assumption_notes(cfg))


def _closed_form_checks(printed: float, derived: float, grid: dict, objective) -> dict:
    step = grid["log_step"]
    return {
        "printed": printed,
        "derived": derived,
        "derived_objective": objective(derived),
        "printed_vs_derived_rel": printed / derived - 1.0,
        "printed_within_step": _within_step(printed, grid["grid_argmax"], step),
        "derived_within_step": _within_step(derived, grid["grid_argmax"], step),
        "refined_vs_derived_rel": grid["refined"] / derived - 1.0,
    }


# ---------------------------------------------------------------------------
# Bandwidth partition

def optimal_bandwidth(cfg: NetworkConfig, mode: str = "dl",
                      report: Optional[analytics.ThroughputReport] = None) -> OptimizationResult:
    """Macro share of the bandwidth maximizing the total throughput.

    The total is affine in ``eta``, so the optimum is 1 when the macro
    throughput exceeds the small-cell plus half the D2D throughput, 0 when
    it falls short, and any value on equality (tagged ``indifferent``; the
    configured ``eta`` is reported).
    """
    mode = _check_mode(mode)
    analytics.require_scenario(cfg)
    rep = report or analytics.throughput(cfg, modes=(mode,))
    macro = rep.t_m_d if mode == "dl" else rep.t_m_u
    small = (rep.t_s_d if mode == "dl" else rep.t_s_u) + 0.5 * rep.t_d2d
    tags = []
    if macro > small:
        eta = 1.0
    elif macro < small:
        eta = 0.0
    else:
        eta = float(cfg.eta)
        tags.append("indifferent")
    return OptimizationResult(
        target="bandwidth", arguments={"eta": eta}, objective=eta * macro + (1.0 - eta) * small,
        method="closed-form", tags=tags,
        checks={"macro": macro, "small_plus_half_d2d": small, "difference": macro - small})


# ---------------------------------------------------------------------------
# Sensing thresholds

def _objective_mode(objective: str) -> str:
    key = objective.split("-")[0].lower()
    if key not in ("dl", "ul"):
        raise ValueError(f"objective must be 'dl-throughput' or 'ul-throughput', got {objective!r}")
    return key


def sensing_objective(cfg: NetworkConfig, objective: str = "dl-throughput") -> float:
    """Total DL or UL area throughput at the thresholds stored in ``cfg``."""
    mode = _objective_mode(objective)
    rep = analytics.throughput(cfg, modes=(mode,))
    return rep.total_d if mode == "dl" else rep.total_u


def sensing_profile(cfg: NetworkConfig, which: str, values_mw: Sequence[float],
                    objective: str = "dl-throughput") -> np.ndarray:
    """Objective at each value of ``rho_s`` or ``rho_d`` (other threshold fixed)."""
    if which not in ("rho_s", "rho_d"):
        raise ValueError("which must be 'rho_s' or 'rho_d'")
    return np.array([sensing_objective(cfg.replace(**{which: float(v)}), objective) for v in values_mw])


def count_sign_changes(values: Sequence[float], rel_tol: float = FLAT_REL) -> int:
    """Sign changes of successive differences, ignoring numerically flat steps."""
    v = np.asarray(values, dtype=float)
    scale = np.max(np.abs(v)) if v.size else 0.0
    d = np.diff(v)
    signs = np.sign(d[np.abs(d) > rel_tol * scale])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _search_1d(f: Callable[[float], float], lo: float, hi: float, n: int) -> tuple[float, float, dict]:
    """Maximize ``f`` over ``[lo, hi]`` (mW) on a log grid, then refine to 1%."""
    grid = _log_grid(lo, hi, n)
    values = np.array([f(x) for x in grid])
    best = int(np.argmax(values))
    info = {"grid": grid.tolist(), "grid_values": values.tolist()}
    span = np.max(values) - np.min(values)
    if not span > FLAT_REL * max(abs(np.max(values)), 1e-300):
        info["flat"] = True
        return float(grid[0]), float(values[0]), info
    a = math.log10(grid[max(best - 1, 0)])
    b = math.log10(grid[min(best + 1, n - 1)])
    res = minimize_scalar(lambda u: -f(10.0**u), bounds=(a, b), method="bounded",
                          options={"xatol": math.log10(1.0 + REFINE_REL)})
    x, fx = 10.0 ** float(res.x), -float(res.fun)
    if fx < values[best]:
        x, fx = float(grid[best]), float(values[best])
    info["flat"] = False
    return x, fx, info


def optimal_sensing(cfg: NetworkConfig, objective: str = "dl-throughput",
                    stage_grid: int = STAGE_GRID, domain: Optional[Sequence[float]] = None
                    ) -> OptimizationResult:
    """Two-stage search for the sensing thresholds maximizing total throughput.

    Stage one optimizes ``rho_s`` with ``rho_d`` fixed at its configured
    value; stage two optimizes ``rho_d`` at the stage-one ``rho_s``. Each
    stage scans ``stage_grid`` log-spaced points over ``domain`` (default
    ``[rho_min, q_d]``) and refines the best point to 1% relative. A
    flat objective returns the lower domain boundary tagged ``degenerate``.
    """
    _objective_mode(objective)
    analytics.require_scenario(cfg)
    if domain is None:
        if cfg.rho_min is None or cfg.rho_min <= 0:
            raise ConfigError("rho_min must be set (and positive) to bound the sensing search")
        domain = (cfg.rho_min, cfg.q_d)
    lo, hi = float(domain[0]), float(domain[1])
    if not 0 < lo < hi:
        raise ConfigError(f"invalid sensing search domain [{lo}, {hi}]")

    def f_s(x: float) -> float:
        return sensing_objective(cfg.replace(rho_s=x), objective)

    rho_s, _, info_s = _search_1d(f_s, lo, hi, stage_grid)

    def f_d(x: float) -> float:
        return sensing_objective(cfg.replace(rho_s=rho_s, rho_d=x), objective)

    rho_d, _, info_d = _search_1d(f_d, lo, hi, stage_grid)
    tags = []
    if info_s["flat"] and info_d["flat"]:
        tags.append("degenerate")
        rho_s = rho_d = lo
    value = sensing_objective(cfg.replace(rho_s=rho_s, rho_d=rho_d), objective)
    endpoints = {
        "rho_s_lo": info_s["grid_values"][0], "rho_s_hi": info_s["grid_values"][-1],
        "rho_d_lo": info_d["grid_values"][0], "rho_d_hi": info_d["grid_values"][-1],
    }
    checks = {
        "domain": [lo, hi], "stage_rho_s": info_s, "stage_rho_d": info_d, "endpoints": endpoints,
        "not_below_endpoints": bool(all(value >= v * (1.0 - FLAT_REL) for v in endpoints.values())),
    }
    return OptimizationResult(
        target="sensing", arguments={"rho_s": rho_s, "rho_d": rho_d}, objective=value,
        method="two-stage", grid_step=(math.log10(hi) - math.log10(lo)) / (stage_grid - 1),
        tags=tags, checks=checks)


def locate_threshold(cfg: NetworkConfig, which: str, domain: Sequence[float],
                     objective: str = "dl-throughput", stage_grid: int = STAGE_GRID) -> OptimizationResult:
    """Best value of one sensing threshold with the other held at its configured value."""
    if which not in ("rho_s", "rho_d"):
        raise ValueError("which must be 'rho_s' or 'rho_d'")
    _objective_mode(objective)
    analytics.require_scenario(cfg)
    lo, hi = float(domain[0]), float(domain[1])
    if not 0 < lo < hi:
        raise ConfigError(f"invalid sensing search domain [{lo}, {hi}]")
    x, fx, info = _search_1d(lambda v: sensing_objective(cfg.replace(**{which: v}), objective),
                             lo, hi, stage_grid)
    return OptimizationResult(
        target="sensing", arguments={which: x}, objective=fx, method="grid+bounded",
        grid_step=(math.log10(hi) - math.log10(lo)) / (stage_grid - 1),
        tags=["degenerate"] if info["flat"] else [], checks={"domain": [lo, hi], "stage": info})
