"""Monte Carlo estimators built on independent snapshots."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..analytics import CoverageReport, combine_overall
from ..params import NetworkConfig, require_valid
from .measure import KINDS, applicable_kinds, measure_sir
from .realization import (
    MACRO,
    SMALL,
    SimSettings,
    associate,
    build_realization,
    run_csma,
    sample_realization,
)

MIN_EFFECTIVE_SAMPLES = 100
Z95 = 1.959963984540054


class InsufficientSamplesError(RuntimeError):
    """A requested estimate has too few effective samples."""


def wilson_interval(p: float, n_eff: float, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a proportion ``p`` from ``n_eff`` samples."""
    if n_eff <= 0 or math.isnan(p):
        return 0.0, 1.0
    z2 = z * z / n_eff
    center = (p + 0.5 * z2) / (1.0 + z2)
    half = z * math.sqrt(p * (1.0 - p) / n_eff + 0.25 * z2 / n_eff) / (1.0 + z2)
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class RatioEstimate:
    """Ratio estimate ``sum(y)/sum(w)`` over snapshots with a clustered CI."""

    value: float
    lo: float
    hi: float
    n_eff: float
    probes: int
    snapshots: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


def ratio_estimate(y: Sequence[float], w: Sequence[float], n: Sequence[int]) -> RatioEstimate:
    """Combine per-snapshot sums into a proportion with a 95% interval.

    Probes within a snapshot are correlated, so the variance is estimated
    from the snapshot totals (linearized ratio estimator). The Wilson
    interval is then evaluated at the implied effective sample size.
    """
    y, w, n = np.asarray(y, float), np.asarray(w, float), np.asarray(n, int)
    used = w > 0
    y, w, n = y[used], w[used], n[used]
    m = len(w)
    if m == 0:
        return RatioEstimate(math.nan, 0.0, 1.0, 0.0, 0, 0)
    total_w = w.sum()
    p = float(y.sum() / total_w)
    probes = int(n.sum())
    if m > 1:
        var = float(((y - p * w) ** 2).sum()) * m / (m - 1) / total_w**2
    else:
        var = 0.0
    n_eff = p * (1.0 - p) / var if var > 0 else float(probes)
    n_eff = min(n_eff, float(probes))
    lo, hi = wilson_interval(p, n_eff)
    return RatioEstimate(p, lo, hi, n_eff, probes, m)


def map_iterations(fn: Callable, cfg: NetworkConfig, settings: SimSettings, indices: Sequence[int],
                   extra=None) -> list:
    """Evaluate ``fn(cfg, settings, index, extra)`` over snapshot indices, in order."""
    indices = list(indices)
    if settings.workers <= 1 or len(indices) < 2:
        return [fn(cfg, settings, i, extra) for i in indices]
    chunk = max(1, len(indices) // (4 * settings.workers))
    with ProcessPoolExecutor(max_workers=settings.workers) as pool:
        return list(pool.map(_call, [(fn, cfg, settings, i, extra) for i in indices], chunksize=chunk))


def _call(args):
    fn, cfg, settings, i, extra = args
    return fn(cfg, settings, i, extra)


def _coverage_iteration(cfg: NetworkConfig, settings: SimSettings, index: int, extra) -> dict:
    kinds, aloha_p = extra
    real = sample_realization(cfg, settings, index)
    associate(real, cfg)
    active = None
    if aloha_p is None:
        run_csma(real, cfg, settings=settings)
    else:
        active = real.streams["aloha"].random(len(real.d2d_user)) < aloha_p
        real.d2d_retained = active
    thresholds = {"m_dl": cfg.gamma_m_d, "m_ul": cfg.gamma_m_u, "s_dl": cfg.gamma_s_d,
                  "s_ul": cfg.gamma_s_u, "d2d": cfg.gamma_d}
    out = {}
    for kind in kinds:
        s = measure_sir(real, cfg, kind, settings, d2d_active=active)
        cov = s.sir > thresholds[kind]
        out[kind] = (float(np.dot(s.weight, cov)), float(s.weight.sum()), s.size)
    n_pot = len(real.d2d_user)
    out["_d2d"] = (int(real.d2d_retained.sum()) if n_pot else 0, n_pot)
    return out


def _run_coverage(cfg: NetworkConfig, settings: SimSettings, aloha_p: Optional[float]) -> CoverageReport:
    require_valid(cfg)
    kinds = tuple(k for k in (settings.kinds or KINDS) if k in applicable_kinds(cfg))
    n = settings.iterations
    rows = map_iterations(_coverage_iteration, cfg, settings, range(n), (kinds, aloha_p))
    per_kind = {k: [r[k] for r in rows if r[k][2] > 0] for k in kinds}
    discarded = {k: n - len(v) for k, v in per_kind.items()}
    # Resample snapshots for kinds that came up empty, up to 10x the budget.
    next_index = n
    while True:
        short = tuple(k for k in kinds if len(per_kind[k]) < n)
        if not short or next_index >= 10 * n:
            break
        need = max(n - len(per_kind[k]) for k in short)
        batch = range(next_index, min(next_index + need, 10 * n))
        next_index = batch.stop
        for r in map_iterations(_coverage_iteration, cfg, settings, batch, (short, aloha_p)):
            for k in short:
                if r[k][2] > 0 and len(per_kind[k]) < n:
                    per_kind[k].append(r[k])
                elif r[k][2] == 0:
                    discarded[k] += 1

    report = CoverageReport(source="simulated")
    est = {}
    names = {"m_dl": "p_m_d", "m_ul": "p_m_u", "s_dl": "p_s_d", "s_ul": "p_s_u", "d2d": "p_d2d"}
    for k in kinds:
        data = per_kind[k]
        e = ratio_estimate([d[0] for d in data], [d[1] for d in data], [d[2] for d in data])
        est[k] = e
        field_name = names[k]
        if e.snapshots == 0:
            report.insufficient.append(field_name)
            continue
        setattr(report, field_name, e.value)
        report.ci[field_name] = e.half_width
        report.samples[field_name] = e.n_eff
        report.extras.setdefault("ci_bounds", {})[field_name] = [e.lo, e.hi]
        if e.n_eff < MIN_EFFECTIVE_SAMPLES:
            report.insufficient.append(field_name)
    report.extras["discarded_snapshots"] = discarded
    retained = sum(r["_d2d"][0] for r in rows)
    potential = sum(r["_d2d"][1] for r in rows)
    report.extras["d2d_active_fraction"] = retained / potential if potential else None

    # Overall coverage uses empirical association shares of the probe weights.
    for mode, (km, ks), fld in (("dl", ("m_dl", "s_dl"), "overall_d"), ("ul", ("m_ul", "s_ul"), "overall_u")):
        wm = sum(d[1] for d in per_kind.get(km, [])) if km in est else 0.0
        ws = sum(d[1] for d in per_kind.get(ks, [])) if ks in est else 0.0
        tot = wm + ws
        if tot > 0:
            setattr(report, fld, combine_overall(
                (getattr(report, names[km]) if km in est else None,
                 getattr(report, names[ks]) if ks in est else None),
                (wm / tot, ws / tot)))
    return report


def estimate_coverage(cfg: NetworkConfig, settings: SimSettings) -> CoverageReport:
    """Empirical coverage of every applicable probe kind under CSMA.

    Each snapshot contributes all (or a random subset of) its probes of a
    kind; UL probes are weighted by their cell load. Snapshots without any
    probe of a kind are discarded for that kind and replaced by extra
    snapshots, up to ten times the iteration budget.
    """
    return _run_coverage(cfg, settings, None)


def estimate_aloha_coverage(cfg: NetworkConfig, settings: SimSettings, p_access: float) -> CoverageReport:
    """As :func:`estimate_coverage`, with D2D activity drawn independently with ``p_access``."""
    if not 0 < p_access <= 1:
        raise ValueError("p_access must lie in (0, 1]")
    return _run_coverage(cfg, replace(settings, exclusion="none"), p_access)


# ---------------------------------------------------------------------------
# structural statistics

def _tier_code(tier: str) -> int:
    if tier not in ("m", "s"):
        raise ValueError(f"unknown tier {tier!r}")
    return MACRO if tier == "m" else SMALL


def _structure_iteration(cfg: NetworkConfig, settings: SimSettings, index: int, extra) -> dict:
    with_csma = extra
    real = build_realization(cfg, settings, index) if with_csma else associate(
        sample_realization(cfg, settings, index), cfg)
    out = {"n_mbs": len(real.mbs_xy), "n_sap": len(real.sap_xy), "n_user": len(real.user_xy)}
    cellular = ~real.user_d2d
    for mode, role in (("dl", ~real.user_tx), ("ul", real.user_tx)):
        users = cellular & role
        out[f"users_{mode}"] = int(users.sum())
        for t, name in ((MACRO, "m"), (SMALL, "s")):
            out[f"assoc_{mode}_{name}"] = int((users & (real.user_tier == t)).sum())
            dl_flag = real.bs_dl(t) if mode == "dl" else ~real.bs_dl(t)
            out[f"loads_{mode}_{name}"] = np.bincount(real.load(t)[dl_flag]) if dl_flag.any() else np.zeros(1, int)
    if with_csma:
        out["retained"] = int(real.d2d_retained.sum())
        out["potential"] = len(real.d2d_user)
    return out


@dataclass
class StructureStats:
    """Aggregated counts over snapshots."""

    snapshots: int
    area: float
    mbs_counts: np.ndarray
    sap_counts: np.ndarray
    user_counts: np.ndarray
    association: dict
    load_hist: dict
    retained: int = 0
    potential: int = 0

    def association_fraction(self, tier: str, mode: str) -> float:
        n = self.association[f"users_{mode}"]
        return self.association[f"assoc_{mode}_{tier}"] / n if n else math.nan

    def load_histogram(self, tier: str, mode: str) -> np.ndarray:
        h = self.load_hist[f"loads_{mode}_{tier}"]
        return h / h.sum() if h.sum() else h.astype(float)

    def active_density(self, tier: str, mode: str) -> float:
        h = self.load_hist[f"loads_{mode}_{tier}"]
        return float(h[1:].sum()) / (self.snapshots * self.area)

    @property
    def retention_fraction(self) -> float:
        return self.retained / self.potential if self.potential else math.nan


def estimate_structure(cfg: NetworkConfig, settings: SimSettings, with_csma: bool = True) -> StructureStats:
    """Point counts, association frequencies, cell loads and D2D retention."""
    require_valid(cfg)
    rows = map_iterations(_structure_iteration, cfg, settings, range(settings.iterations), with_csma)
    assoc, hist = {}, {}
    for r in rows:
        for key, v in r.items():
            if key.startswith(("assoc_", "users_")):
                assoc[key] = assoc.get(key, 0) + v
            elif key.startswith("loads_"):
                h = hist.get(key, np.zeros(0, dtype=np.int64))
                size = max(len(h), len(v))
                h = np.pad(h, (0, size - len(h))) + np.pad(v, (0, size - len(v)))
                hist[key] = h
    return StructureStats(
        snapshots=len(rows), area=settings.window**2,
        mbs_counts=np.array([r["n_mbs"] for r in rows]),
        sap_counts=np.array([r["n_sap"] for r in rows]),
        user_counts=np.array([r["n_user"] for r in rows]),
        association=assoc, load_hist=hist,
        retained=sum(r.get("retained", 0) for r in rows),
        potential=sum(r.get("potential", 0) for r in rows),
    )


def estimate_load_histogram(cfg: NetworkConfig, settings: SimSettings, tier: str, mode: str) -> np.ndarray:
    """Empirical distribution of users per cell (index n holds Pr[N = n])."""
    _tier_code(tier)
    stats = estimate_structure(cfg, settings, with_csma=False)
    return stats.load_histogram(tier, mode)


def estimate_retention(cfg: NetworkConfig, settings: SimSettings) -> float:
    """Fraction of potential D2D transmitters that survive CSMA."""
    return estimate_structure(cfg, settings, with_csma=True).retention_fraction


def _nearest_iteration(cfg: NetworkConfig, settings: SimSettings, index: int, extra) -> np.ndarray:
    tier, mode = extra
    real = associate(sample_realization(cfg, settings, index), cfg)
    t = _tier_code(tier)
    role = ~real.user_tx if mode == "dl" else real.user_tx
    users = np.nonzero(~real.user_d2d & role & (real.user_tier == t))[0]
    if not len(users):
        return np.zeros(0)
    bs = real.bs_xy(t)[real.user_bs[users]]
    d = np.abs(real.user_xy[users] - bs)
    if real.torus:
        d = np.minimum(d, real.window - d)
    return np.hypot(d[:, 0], d[:, 1])


def sample_serving_distances(cfg: NetworkConfig, settings: SimSettings, tier: str, mode: str,
                             per_snapshot: int = 1) -> np.ndarray:
    """Serving-link distances of randomly chosen associated users, ``per_snapshot`` each."""
    rows = map_iterations(_nearest_iteration, cfg, settings, range(settings.iterations), (tier, mode))
    out = []
    for i, d in enumerate(rows):
        if len(d):
            rng = np.random.default_rng([settings.seed, i, 7])
            out.append(rng.choice(d, size=min(per_snapshot, len(d)), replace=False))
    return np.concatenate(out) if out else np.zeros(0)
