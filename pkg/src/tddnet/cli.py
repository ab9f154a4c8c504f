"""Command-line interface: coverage, sweep, optimize and figures.

Data goes to stdout (or ``--out``); diagnostics go to stderr. Exit codes:
2 for invalid configurations, 3 for quadrature failures, 4 when a
simulated estimate has too few effective samples.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import warnings
from typing import Any, Optional, Sequence

import numpy as np

from . import analytics, optimizer
from .figures import write_figures
from .params import ConfigError, NetworkConfig, config_to_mapping, default_config, load_config, validate
from .simulator import InsufficientSamplesError, SimSettings, estimate_coverage
from .special import QuadratureError
from .sweep import rows_to_csv, run_sweep, spec_from_mapping, sweep_columns

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_QUADRATURE, EXIT_SAMPLES = 0, 2, 3, 4
TARGETS = ("uldl", "density", "bias", "bandwidth", "sensing")


def _clean(x: Any) -> Any:
    """Make a value strictly JSON-compatible (inf as a string, NaN as null)."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


def dump_json(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path: Optional[str]) -> NetworkConfig:
    return load_config(path) if path else default_config()


def _settings(args: argparse.Namespace) -> SimSettings:
    kw = {"seed": args.seed, "workers": args.workers}
    if args.iterations is not None:
        kw["iterations"] = args.iterations
    elif getattr(args, "full", False):
        kw["iterations"] = 10_000
    else:
        kw["iterations"] = 1_000
    return SimSettings(**kw)


def _require(cfg: NetworkConfig) -> list:
    outcome = validate(cfg)
    if not outcome.ok:
        raise ConfigError("; ".join(outcome.errors))
    return list(outcome.warnings)


def _derived_summary(dq: analytics.DerivedQuantities) -> dict:
    return {k: v for k, v in dataclasses.asdict(dq).items()}


def cmd_coverage(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    notes = _require(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        dq = analytics.derive(cfg)
        rep = analytics.coverage_overall(cfg, dq)
        thr = analytics.throughput_from_parts(cfg, dq, rep.p_m_d, rep.p_m_u, rep.p_s_d, rep.p_s_u,
                                              rep.p_d2d if dq.lambda_d2d > 0 else None)
    notes += [str(w.message) for w in caught]
    doc = {
        "schema_version": SCHEMA_VERSION, "command": "coverage", "config": config_to_mapping(cfg),
        "warnings": notes, "analytic": rep.as_dict(), "throughput": thr.as_dict(),
        "derived": _derived_summary(dq),
    }
    code = EXIT_OK
    if args.simulate:
        settings = _settings(args)
        sim = estimate_coverage(cfg, settings)
        doc["simulated"] = sim.as_dict()
        doc["simulation"] = {"iterations": settings.iterations, "window": settings.window,
                             "seed": settings.seed}
        doc["relative_error"] = {
            k: (getattr(rep, k) - v) / v if v and getattr(rep, k) is not None else None
            for k, v in sim.values().items() if v is not None}
        if sim.insufficient:
            print(f"insufficient samples for: {', '.join(sim.insufficient)}", file=sys.stderr)
            code = EXIT_SAMPLES
    _emit(dump_json(doc), args.out)
    return code


def cmd_sweep(args: argparse.Namespace) -> int:
    if not args.sweep:
        raise ConfigError("sweep needs --sweep FILE")
    try:
        with open(args.sweep, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep file {args.sweep}: {exc}") from exc
    spec = spec_from_mapping(data)
    base = _load(args.config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", analytics.ApproximationWarning)
        rows = run_sweep(spec, base, _settings(args))
    for r in rows:
        if r["status"] != "ok":
            print(f"{spec.param}={r['value']}: {r['status']}", file=sys.stderr)
    _emit(rows_to_csv(rows, sweep_columns(spec)), args.out)
    return EXIT_OK


def _optimize(cfg: NetworkConfig, target: str, args: argparse.Namespace) -> list:
    modes = [args.mode] if args.mode else ["dl", "ul"]
    if target == "uldl":
        tiers = [args.tier] if args.tier else ["m", "s"]
        return [optimizer.optimal_uldl_config(cfg, t, m) for t in tiers for m in modes]
    if target == "density":
        return [optimizer.optimal_density(cfg, m) for m in modes]
    if target == "bias":
        return [optimizer.optimal_bias(cfg, m) for m in modes]
    if target == "bandwidth":
        return [optimizer.optimal_bandwidth(cfg, m) for m in modes]
    return [optimizer.optimal_sensing(cfg, f"{m}-throughput") for m in modes]


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", analytics.ApproximationWarning)
        results = _optimize(cfg, args.target, args)
    doc = {"schema_version": SCHEMA_VERSION, "command": "optimize", "target": args.target,
           "results": [r.as_dict() for r in results]}
    _emit(dump_json(doc), args.out)
    return EXIT_OK


def cmd_figures(args: argparse.Namespace) -> int:
    only = args.only.split(",") if args.only else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", analytics.ApproximationWarning)
        write_figures(args.out or "figures", iterations=args.iterations, full=args.full,
                      seed=args.seed, workers=args.workers, only=only,
                      log=lambda msg: print(msg, file=sys.stderr))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tddnet", description="Coverage and throughput of two-tier dynamic TDD networks with D2D.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim=True):
        p.add_argument("--config", help="JSON configuration file (dBm/dB units, '5x' densities)")
        p.add_argument("--out", help="output file (default: stdout)")
        if sim:
            p.add_argument("--seed", type=int, default=0, help="master random seed")
            p.add_argument("--iterations", type=int, help="Monte Carlo snapshots (default 1000)")
            p.add_argument("--workers", type=int, default=1, help="worker processes")
            p.add_argument("--full", action="store_true", help="use 10^4 snapshots")

    p = sub.add_parser("coverage", help="analytic (and optionally simulated) coverage report")
    common(p)
    p.add_argument("--simulate", action="store_true", help="also run the Monte Carlo simulator")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("sweep", help="sweep one parameter and write CSV")
    common(p)
    p.add_argument("--sweep", help="JSON sweep specification")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="run an optimizer and report its oracle cross-check")
    common(p, sim=False)
    p.add_argument("target", choices=TARGETS)
    p.add_argument("--mode", choices=("dl", "ul"), help="restrict to one mode")
    p.add_argument("--tier", choices=("m", "s"), help="tier for the uldl target")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("figures", help="write CSV data for the published figures")
    common(p)
    p.add_argument("--only", help="comma-separated figure names (fig3,fig4,fig5a,fig5b,fig6,fig7,fig8)")
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureError as exc:
        print(f"quadrature did not converge: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE
    except InsufficientSamplesError as exc:
        print(f"insufficient samples: {exc}", file=sys.stderr)
        return EXIT_SAMPLES


if __name__ == "__main__":
    sys.exit(main())
