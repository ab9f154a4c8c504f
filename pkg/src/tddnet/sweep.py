"""Parameter sweeps over a single configuration field.

A sweep evaluates analytic and/or simulated metrics at each value of one
:class:`NetworkConfig` field and emits one row per value. The column set
depends only on the :class:`SweepSpec`, so the CSV schema is stable.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from . import analytics
from .analytics import CoverageReport
from .params import ConfigError, NetworkConfig, config_from_mapping, parse_field
from .simulator import SimSettings, estimate_coverage
from .special import QuadratureError

COVERAGE_FIELDS = CoverageReport.FIELDS
THROUGHPUT_FIELDS = ("t_m_d", "t_m_u", "t_s_d", "t_s_u", "t_d2d", "total_d", "total_u")
DERIVED_FIELDS = ("beta", "lambda_d")
OUTPUT_FIELDS = COVERAGE_FIELDS + THROUGHPUT_FIELDS + DERIVED_FIELDS
ENGINES = ("analytic", "simulate", "both")
SIM_FIELDS = {f.name for f in dataclasses.fields(SimSettings)}


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep.

    Attributes:
        param: the swept NetworkConfig field.
        values: raw values in file units (dBm, dB, "5x" densities).
        engine: ``analytic``, ``simulate`` or ``both``.
        outputs: requested output fields (see ``OUTPUT_FIELDS``).
        sim: SimSettings overrides.
        config: config overrides in file units applied before sweeping.
    """

    param: str
    values: tuple
    engine: str = "analytic"
    outputs: tuple = ("p_s_d", "p_s_u", "p_d2d")
    sim: Mapping[str, Any] = field(default_factory=dict)
    config: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = {f.name for f in dataclasses.fields(NetworkConfig)}
        if self.param not in names:
            raise ConfigError(f"swept parameter {self.param!r} is not a configuration field")
        if len(self.values) < 2:
            raise ConfigError("a sweep needs at least two values")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {', '.join(ENGINES)}")
        bad = [o for o in self.outputs if o not in OUTPUT_FIELDS]
        if bad or not self.outputs:
            raise ConfigError(f"unknown outputs: {', '.join(bad) or '(none requested)'}")
        bad = [k for k in self.sim if k not in SIM_FIELDS]
        if bad:
            raise ConfigError(f"unknown simulation settings: {', '.join(bad)}")

    @property
    def simulates(self) -> bool:
        return self.engine in ("simulate", "both")

    @property
    def computes_analytic(self) -> bool:
        return self.engine in ("analytic", "both")


def _range_values(rng: Mapping[str, Any], param: str) -> tuple:
    try:
        start, stop, count = float(rng["start"]), float(rng["stop"]), int(rng["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"range needs numeric start, stop and count ({exc})") from None
    if count < 2:
        raise ConfigError("a sweep needs at least two values")
    scale = rng.get("scale", "lin")
    if scale == "lin":
        vals = np.linspace(start, stop, count)
    elif scale == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log-scaled ranges need positive bounds")
        vals = np.logspace(math.log10(start), math.log10(stop), count)
    else:
        raise ConfigError("range scale must be 'lin' or 'log'")
    vals = [float(np.round(v, 12)) for v in vals]
    if rng.get("relative", False):
        return tuple(f"{v!r}x" for v in vals)
    return tuple(vals)


def spec_from_mapping(data: Mapping[str, Any]) -> SweepSpec:
    """Build a SweepSpec from a parsed JSON object."""
    if "param" not in data:
        raise ConfigError("sweep file must name the swept 'param'")
    param = data["param"]
    if "values" in data and "range" in data:
        raise ConfigError("give either 'values' or 'range', not both")
    if "values" in data:
        values = tuple(data["values"])
    elif "range" in data:
        values = _range_values(data["range"], param)
    else:
        raise ConfigError("sweep file needs 'values' or 'range'")
    outputs = data.get("outputs", SweepSpec.outputs)
    if isinstance(outputs, str):
        outputs = (outputs,)
    return SweepSpec(param=param, values=values, engine=data.get("engine", "analytic"),
                     outputs=tuple(outputs), sim=dict(data.get("sim", {})),
                     config=dict(data.get("config", {})))


def sweep_columns(spec: SweepSpec) -> list:
    """CSV header for a sweep: a pure function of the sweep definition."""
    cols = ["swept_param", "value"]
    sim_cov = [o for o in spec.outputs if o in COVERAGE_FIELDS or o in THROUGHPUT_FIELDS]
    if spec.engine == "analytic":
        cols += list(spec.outputs)
    elif spec.engine == "simulate":
        cols += list(spec.outputs)
    else:
        cols += list(spec.outputs) + [f"sim_{o}" for o in sim_cov]
    if spec.simulates:
        cols += [f"ci_half_{o}" for o in spec.outputs if o in COVERAGE_FIELDS]
    cols.append("status")
    return cols


def analytic_values(cfg: NetworkConfig) -> dict:
    """Every output field computed analytically."""
    dq = analytics.derive(cfg)
    rep = analytics.coverage_overall(cfg, dq)
    thr = analytics.throughput_from_parts(cfg, dq, rep.p_m_d, rep.p_m_u, rep.p_s_d, rep.p_s_u,
                                          rep.p_d2d if dq.lambda_d2d > 0 else None)
    out = rep.values()
    out.update(thr.as_dict())
    out.update(beta=dq.beta_ret, lambda_d=dq.lambda_d2d)
    return out


def simulated_values(cfg: NetworkConfig, settings: SimSettings) -> tuple[dict, CoverageReport]:
    """Simulated coverage fields plus throughputs assembled from them."""
    rep = estimate_coverage(cfg, settings)
    dq = analytics.derive(cfg)
    thr = analytics.throughput_from_parts(cfg, dq, rep.p_m_d, rep.p_m_u, rep.p_s_d, rep.p_s_u,
                                          rep.p_d2d if dq.lambda_d2d > 0 else None)
    out = rep.values()
    out.update(thr.as_dict())
    out.update(beta=rep.extras.get("d2d_active_fraction"), lambda_d=None)
    return out, rep


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def run_sweep(spec: SweepSpec, base: NetworkConfig, settings: SimSettings) -> list:
    """Evaluate a sweep; returns rows (dicts keyed by :func:`sweep_columns`).

    A failing point yields a row with empty values and an ``error`` status;
    the sweep continues with the next value.
    """
    cols = sweep_columns(spec)
    settings = dataclasses.replace(settings, **spec.sim)
    try:
        cfg0 = config_from_mapping(spec.config, base) if spec.config else base
    except ConfigError:
        raise
    rows = []
    for raw in spec.values:
        row = {c: None for c in cols}
        row["swept_param"], row["value"] = spec.param, raw
        try:
            cfg = cfg0.replace(**{spec.param: parse_field(spec.param, raw, cfg0.lambda_m)})
            status = "ok"
            if spec.computes_analytic:
                a = analytic_values(cfg)
                for o in spec.outputs:
                    row[o] = a[o]
            if spec.simulates:
                s, rep = simulated_values(cfg, settings)
                prefix = "sim_" if spec.engine == "both" else ""
                for o in spec.outputs:
                    key = prefix + o
                    if key in row and (o in COVERAGE_FIELDS or o in THROUGHPUT_FIELDS or not prefix):
                        row[key] = s[o]
                    if o in COVERAGE_FIELDS:
                        row[f"ci_half_{o}"] = rep.ci.get(o)
                short = [o for o in spec.outputs if o in rep.insufficient]
                if short:
                    status = "insufficient:" + "|".join(short)
            row["status"] = status
        except ConfigError as exc:
            row["status"] = f"error:config:{exc}"
        except QuadratureError as exc:
            row["status"] = f"error:quadrature:{exc}"
        except (ValueError, ArithmeticError) as exc:
            row["status"] = f"error:{type(exc).__name__}:{exc}"
        rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    """Serialize rows with RFC-4180 quoting and ``\\n`` line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def base_settings(iterations: Optional[int] = None, seed: int = 0, workers: int = 1,
                  **overrides: Any) -> SimSettings:
    """SimSettings with CLI-level overrides."""
    kw = dict(seed=seed, workers=workers, **overrides)
    if iterations is not None:
        kw["iterations"] = iterations
    return SimSettings(**kw)
