"""Data for the published coverage and throughput figures.

Each figure is a set of named series; a series is a sweep (or, for the
CSMA/ALOHA comparison, a paired simulation) written to its own CSV. The
parameters of every series are recorded in a manifest next to the CSVs.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import analytics
from .optimizer import count_sign_changes
from .params import NetworkConfig, config_from_mapping, config_to_mapping, dbm_to_mw
from .simulator import SimSettings, estimate_aloha_coverage, estimate_coverage
from .special import QuadratureError
from .sweep import SweepSpec, rows_to_csv, run_sweep, sweep_columns

DEFAULT_ITERATIONS = 1_000
FULL_ITERATIONS = 10_000
CSMA_ALOHA_WINDOW = 1500.0

FIG3 = {"lambda_s": "5x", "lambda_u": "100x", "q_dm": 0.5, "q_ds": 0.5, "rho_d": -60.0,
        "zeta": 0.1, "eta": 0.5}
FIG4 = {"lambda_s": "5x", "lambda_u": "100x", "q_dm": 0.5, "zeta": 0.1, "rho_s": -60.0,
        "rho_d": -60.0, "eta": 0.5}
FIG5 = {"lambda_u": "1000x", "q_dm": 0.5, "q_ds": 0.5, "rho_s": -60.0, "rho_d": -60.0,
        "zeta": 0.01, "eta": 0.5}
FIG6 = {"lambda_u": "1000x", "q_dm": 0.5, "q_ds": 0.5, "zeta": 0.01, "rho_s": -60.0,
        "rho_d": -60.0, "eta": 0.5}
FIG7 = {"lambda_u": "10000x", "lambda_s": "100x", "q_dm": 0.5, "q_ds": 0.5, "zeta": 0.1,
        "eta": 0.5}
FIG8 = {"lambda_u": "10000x", "lambda_s": "100x", "q_dm": 0.5, "q_ds": 0.5, "zeta": 0.1,
        "rho_d": -20.0, "eta": 0.5}

FIG8_RHO_S = (-80.0, -75.0, -70.0, -65.0, -60.0)
FIG8_KINDS = ("p_s_d", "p_s_u", "p_d2d")


@dataclass
class Series:
    """One CSV of a figure."""

    name: str
    config: dict
    spec: Optional[SweepSpec] = None
    runner: Optional[Callable[..., tuple[list, list]]] = None
    notes: str = ""
    settings: dict = field(default_factory=dict)


def _sweep(name, config, param, values, engine, outputs, notes="", **sim):
    spec = SweepSpec(param=param, values=tuple(values), engine=engine, outputs=tuple(outputs),
                     sim=sim)
    return Series(name=name, config=dict(config), spec=spec, notes=notes, settings=dict(sim))


def _db_range(lo: float, hi: float, step: float) -> list:
    n = int(round((hi - lo) / step)) + 1
    return [float(np.round(v, 10)) for v in np.linspace(lo, hi, n)]


def _relative(lo: float, hi: float, n: int) -> list:
    return [f"{float(np.round(v, 6))!r}x" for v in np.logspace(math.log10(lo), math.log10(hi), n)]


def csma_aloha_rows(cfg: NetworkConfig, settings: SimSettings, rho_s_dbm=FIG8_RHO_S) -> tuple[list, list]:
    """Paired CSMA and ALOHA coverage with the access probability set to beta."""
    cols = ["swept_param", "value", "beta"]
    for k in FIG8_KINDS:
        cols += [f"csma_{k}", f"aloha_{k}"]
    for k in FIG8_KINDS:
        cols += [f"ci_half_csma_{k}", f"ci_half_aloha_{k}"]
    cols += ["csma_total_d", "aloha_total_d", "status"]
    rows = []
    for r in rho_s_dbm:
        c = cfg.replace(rho_s=dbm_to_mw(r))
        dq = analytics.derive(c)
        row = {k: None for k in cols}
        row.update(swept_param="rho_s", value=r, beta=dq.beta_ret)
        if dq.beta_ret <= 0:
            row["status"] = "error:no D2D activity"
            rows.append(row)
            continue
        csma = estimate_coverage(c, settings)
        aloha = estimate_aloha_coverage(c, settings, dq.beta_ret)
        for tag, rep in (("csma", csma), ("aloha", aloha)):
            for k in FIG8_KINDS:
                row[f"{tag}_{k}"] = getattr(rep, k)
                row[f"ci_half_{tag}_{k}"] = rep.ci.get(k)
            thr = analytics.throughput_from_parts(c, dq, rep.p_m_d, rep.p_m_u, rep.p_s_d, rep.p_s_u,
                                                  rep.p_d2d)
            row[f"{tag}_total_d"] = thr.total_d
        short = sorted(set(csma.insufficient) | set(aloha.insufficient))
        row["status"] = "insufficient:" + "|".join(short) if short else "ok"
        rows.append(row)
    return rows, cols


def figure_series() -> dict:
    """Series definitions keyed by figure name."""
    figs = {
        "fig3": [_sweep("fig3", FIG3, "rho_s", _db_range(-100.0, -20.0, 5.0), "both",
                        ("p_s_d", "p_s_u", "p_d2d"),
                        "small-cell and D2D coverage vs protection threshold")],
        "fig4": [_sweep("fig4", FIG4, "q_ds", [round(0.1 * i, 10) for i in range(1, 10)], "both",
                        ("p_m_d", "p_m_u", "p_s_d", "p_s_u", "p_d2d"),
                        "per-tier and D2D coverage vs small-cell DL fraction")],
        "fig5a": [_sweep("fig5a", FIG5, "lambda_s", _relative(1.0, 100.0, 25), "analytic",
                         ("p_m_d", "p_s_d", "p_d2d"), "DL coverage per tier vs SAP density")],
        "fig5b": [_sweep("fig5b", FIG5, "lambda_s", _relative(1.0, 100.0, 25), "analytic",
                         ("overall_d",), "overall DL coverage vs SAP density")],
        "fig6": [
            _sweep(f"fig6_lambda_s_{m}x", {**FIG6, "lambda_s": f"{m}x"}, "b_ds",
                   [float(np.round(10.0 ** (d / 10.0), 10)) for d in _db_range(-10.0, 20.0, 1.25)],
                   "analytic", ("overall_d",),
                   f"overall DL coverage vs SAP DL bias (linear), lambda_s = {m} lambda_m")
            for m in (5, 20)
        ],
        "fig7": [
            _sweep("fig7a", {**FIG7, "rho_d": -20.0}, "rho_s", _db_range(-100.0, 0.0, 2.5), "analytic",
                   ("total_d", "t_s_d", "t_d2d", "beta"), "DL throughput vs protection threshold"),
            _sweep("fig7b", {**FIG7, "rho_s": -20.0}, "rho_d", _db_range(-100.0, 0.0, 2.5), "analytic",
                   ("total_d", "t_s_d", "t_d2d", "beta"), "DL throughput vs contention threshold"),
        ],
        "fig8": [Series(name="fig8", config=dict(FIG8), runner=csma_aloha_rows,
                        notes="CSMA vs ALOHA at matched activity p = beta",
                        settings={"window": CSMA_ALOHA_WINDOW,
                                  "kinds": ("m_dl", "s_dl", "s_ul", "d2d")})],
    }
    return figs


def write_figures(out_dir: str, iterations: Optional[int] = None, full: bool = False, seed: int = 0,
                  workers: int = 1, only: Optional[list] = None, log=print) -> dict:
    """Write every figure CSV and ``manifest.json``; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    n_iter = iterations or (FULL_ITERATIONS if full else DEFAULT_ITERATIONS)
    manifest = {"schema_version": 1, "iterations": n_iter, "seed": seed, "figures": {}}
    figs = figure_series()
    if only:
        unknown = [f for f in only if f not in figs]
        if unknown:
            raise ValueError(f"unknown figures: {', '.join(unknown)}")
        figs = {k: v for k, v in figs.items() if k in only}
    for fig, series in figs.items():
        entries = []
        for s in series:
            path = os.path.join(out_dir, f"{s.name}.csv")
            entry = {"file": os.path.basename(path), "notes": s.notes, "caption_parameters": s.config}
            try:
                cfg = config_from_mapping(s.config)
                settings = SimSettings(iterations=n_iter, seed=seed, workers=workers)
                if s.spec is not None:
                    settings_used = dataclasses.replace(settings, **s.spec.sim)
                    rows = run_sweep(s.spec, cfg, settings)
                    cols = sweep_columns(s.spec)
                    entry["swept_param"] = s.spec.param
                    entry["engine"] = s.spec.engine
                else:
                    settings_used = dataclasses.replace(settings, **s.settings)
                    rows, cols = s.runner(cfg, settings_used)
                    entry["swept_param"] = "rho_s"
                    entry["engine"] = "simulate"
                with open(path, "w", newline="") as fh:
                    fh.write(rows_to_csv(rows, cols))
                entry["full_config"] = config_to_mapping(cfg)
                if entry["engine"] != "analytic":
                    entry["simulation"] = {"iterations": settings_used.iterations,
                                           "window": settings_used.window, "seed": settings_used.seed}
                entry["status"] = "ok"
                entry["failed_points"] = sum(1 for r in rows if not str(r["status"]).startswith("ok"))
                log(f"{s.name}: wrote {len(rows)} rows to {path}")
            except (ValueError, QuadratureError, RuntimeError) as exc:
                entry["status"] = f"error:{type(exc).__name__}:{exc}"
                log(f"{s.name}: failed ({exc})")
            entries.append(entry)
        manifest["figures"][fig] = entries
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return manifest


def _json_default(x: Any) -> Any:
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def interior_maximum(values) -> bool:
    """True when the maximum is not at either end and the curve is unimodal."""
    v = np.asarray(values, dtype=float)
    i = int(np.argmax(v))
    return 0 < i < len(v) - 1 and count_sign_changes(v) == 1
