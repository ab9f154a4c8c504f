"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the pytest terminal
summary; per-check details are printed to stdout (shown with ``-s``).
"""

import itertools
import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from tddnet import analytics
from tddnet.analytics import ApproximationWarning
from tddnet.figures import CSMA_ALOHA_WINDOW, FIG3, FIG5, FIG7, FIG8, FIG8_KINDS, FIG8_RHO_S, csma_aloha_rows
from tddnet.optimizer import (
    count_sign_changes,
    locate_threshold,
    optimal_bandwidth,
    optimal_bias,
    optimal_density,
    optimal_sensing,
    optimal_uldl_config,
    sensing_profile,
)
from tddnet.params import config_from_mapping, dbm_to_mw, mw_to_dbm
from tddnet.simulator import SimSettings, estimate_coverage, estimate_structure

pytestmark = pytest.mark.acceptance

BASELINE = 1.0 / (1.0 + math.pi / 4.0)
SINGLE_TIER = {"lambda_s": "0x", "q_dm": 1.0, "zeta": 0.0, "eta": 1.0}


class Verdict:
    """Soft checks for one criterion, reported as a single line."""

    def __init__(self, log, number, title):
        self.log, self.number, self.title = log, number, title
        self.failures = []

    def check(self, ok, message):
        print(("  ok    " if ok else "  FAIL  ") + message)
        if not ok:
            self.failures.append(message)

    def note(self, message):
        print("  note  " + message)

    def finish(self):
        status = "FAIL" if self.failures else "PASS"
        line = f"criterion {self.number}: {status}  {self.title}"
        if self.failures:
            line += f" ({len(self.failures)} failed checks)"
        self.log.append(line)
        print(line)
        assert not self.failures, "; ".join(self.failures)


@pytest.fixture
def verdict(acceptance_log, request):
    made = []

    def make(number, title):
        made.append(Verdict(acceptance_log, number, title))
        return made[-1]

    yield make
    for v in made:
        if not any(line.startswith(f"criterion {v.number}:") for line in acceptance_log):
            # The test raised before finishing its checks.
            acceptance_log.append(f"criterion {v.number}: FAIL  {v.title} (error)")


def rel(a, b):
    return abs(a - b) / abs(b)


def test_criterion_1_single_tier_baseline(verdict):
    v = verdict(1, "single-tier baseline, analytic and simulated")
    t0 = time.perf_counter()
    full = config_from_mapping({**SINGLE_TIER, "lambda_u": "inf"})
    p = analytics.coverage_macro(full)[0]
    v.check(abs(p - BASELINE) <= 1e-6, f"analytic {p:.10f} vs 1/(1+pi/4) = {BASELINE:.10f}")
    # A finite but very dense user field keeps every cell loaded in the simulator.
    cfg = config_from_mapping({**SINGLE_TIER, "lambda_u": "300x"})
    sim = estimate_coverage(cfg, SimSettings(iterations=10_000, window=5000.0, seed=2024, kinds=("m_dl",)))
    half = sim.ci["p_m_d"]
    v.check(abs(sim.p_m_d - BASELINE) <= half,
            f"simulated {sim.p_m_d:.4f} +/- {half:.4f} covers {BASELINE:.4f}")
    elapsed = time.perf_counter() - t0
    v.check(elapsed < 120.0, f"runtime {elapsed:.0f} s < 120 s")
    v.finish()


def test_criterion_2_small_tier_vs_simulation(verdict):
    v = verdict(2, "small-cell and D2D coverage vs simulation at the Fig. 3 setting")
    t0 = time.perf_counter()
    for rho in (-100.0, -60.0, -30.0):
        cfg = config_from_mapping({**FIG3, "rho_s": rho})
        an = analytics.coverage_overall(cfg)
        sim = estimate_coverage(cfg, SimSettings(iterations=1_000, seed=11))
        for k in ("p_s_d", "p_s_u", "p_d2d"):
            err = rel(getattr(an, k), getattr(sim, k))
            tol = 0.05 if rho in (-100.0, -60.0) and k != "p_d2d" else 0.10
            v.check(err <= tol, f"rho_s={rho:g} {k}: analytic {getattr(an, k):.4f} simulated "
                                f"{getattr(sim, k):.4f} +/- {sim.ci[k]:.4f} rel err {err:.3f} <= {tol}")
        # Diagnostic: UL interferers drawn as a Poisson field of the analytic density.
        diag = estimate_coverage(cfg, SimSettings(iterations=1_000, seed=11, kinds=("s_ul",),
                                                  ul_interferers="poisson"))
        v.note(f"rho_s={rho:g} p_s_u with Poisson UL interferers: {diag.p_s_u:.4f} "
               f"+/- {diag.ci['p_s_u']:.4f} (rel err {rel(an.p_s_u, diag.p_s_u):.3f})")
    elapsed = time.perf_counter() - t0
    v.check(elapsed < 600.0, f"runtime {elapsed:.0f} s < 600 s")
    v.finish()


def test_criterion_3_asymptotic_consistency(verdict):
    v = verdict(3, "small-tier coverage reduces to its no-D2D and no-sensing limits")
    rng = np.random.default_rng(3)
    for i in range(20):
        cfg = config_from_mapping({
            "lambda_s": f"{rng.uniform(1, 50):.3f}x", "lambda_u": rng.choice(["20x", "100x", "1000x", "inf"]),
            "q_dm": rng.uniform(0.1, 0.9), "q_ds": rng.uniform(0.1, 0.9), "b_ds": 10 ** rng.uniform(-0.5, 1),
            "b_us": 10 ** rng.uniform(-0.5, 1), "gamma_s_d": rng.uniform(-5, 10), "gamma_s_u": rng.uniform(-5, 10),
            "zeta": 0.1, "eta": 0.5, "rho_s": rng.uniform(-100, -30), "rho_d": -60.0})
        dq = analytics.derive(cfg)
        general = analytics.coverage_small(cfg, dq.replace(lambda_d2d=0.0))
        limit = analytics.asymptotic_no_d2d(cfg, dq)
        worst = max(abs(a - b) for a, b in zip(general, limit))
        v.check(worst <= 1e-6, f"grid point {i}: |general - no-D2D limit| = {worst:.2e}")
    checked = 0
    for ls, lu, z, rd in itertools.product(("5x", "100x"), ("1000x", "10000x"), (0.1, 0.5),
                                           (-100.0, -80.0, -60.0)):
        cfg = config_from_mapping({"lambda_s": ls, "lambda_u": lu, "zeta": z, "eta": 0.5,
                                   "rho_s": 40.0, "rho_d": rd})
        dq = analytics.derive(cfg)
        if z * cfg.lambda_u * dq.k_od <= 10:
            continue
        checked += 1
        general = analytics.coverage_small(cfg, dq)
        with warnings.catch_warnings():
            warnings.simplefilter("error", ApproximationWarning)
            limit = analytics.asymptotic_no_sensing(cfg, dq)
        worst = max(rel(a, b) for a, b in zip(general, limit))
        v.check(worst <= 0.02, f"lambda_s={ls} lambda_u={lu} zeta={z} rho_d={rd:g}: "
                               f"rel err vs no-sensing limit {worst:.2e}")
    v.check(checked >= 10, f"{checked} no-sensing points satisfy the contention condition")
    v.finish()


def test_criterion_4_retention_vs_simulation(verdict):
    v = verdict(4, "analytic retaining probability vs simulated CSMA retention")
    for rho in (-100.0, -60.0, -30.0):
        cfg = config_from_mapping({**FIG3, "rho_s": rho})
        beta = analytics.derive(cfg).beta_ret
        frac = estimate_structure(cfg, SimSettings(iterations=1_000, seed=4)).retention_fraction
        v.check(rel(beta, frac) <= 0.05, f"rho_s={rho:g}: beta {beta:.4f} simulated {frac:.4f}")
    v.finish()


def _tv_distance(cfg, hist, tier, mode):
    n = np.arange(len(hist) + 200)
    pmf = np.array([analytics.load_pmf(cfg, tier, mode, int(k)) for k in n])
    emp = np.pad(hist, (0, len(n) - len(hist)))
    return 0.5 * (np.abs(emp - pmf).sum() + max(0.0, 1.0 - pmf.sum())), pmf[0]


def test_criterion_5_load_distribution(verdict):
    v = verdict(5, "load PMF and void probability vs Voronoi cell loads")
    for lu in ("2x", "6x", "20x", "100x"):
        cfg = config_from_mapping({**SINGLE_TIER, "q_dm": 0.5, "lambda_u": lu})
        stats = estimate_structure(cfg, SimSettings(iterations=10_000, seed=6), with_csma=False)
        for mode in ("dl", "ul"):
            hist = stats.load_histogram("m", mode)
            tv, void = _tv_distance(cfg, hist, "m", mode)
            v.check(tv < 0.02, f"lambda_u={lu} {mode}: total variation {tv:.4f}")
            v.check(abs(hist[0] - void) <= 0.02, f"lambda_u={lu} {mode}: empty cells {hist[0]:.4f} "
                                                 f"vs void probability {void:.4f}")
    # Diagnostic: biased two-tier cells are weighted Voronoi cells.
    cfg = config_from_mapping({**FIG3, "rho_s": -60.0})
    stats = estimate_structure(cfg, SimSettings(iterations=300, seed=6), with_csma=False)
    for tier, mode in itertools.product("ms", ("dl", "ul")):
        hist = stats.load_histogram(tier, mode)
        tv, void = _tv_distance(cfg, hist, tier, mode)
        v.note(f"two-tier {tier} {mode}: total variation {tv:.3f}, empty {hist[0]:.4f} vs {void:.4f}")
    v.finish()


def test_criterion_6_association(verdict):
    v = verdict(6, "association probabilities vs empirical frequencies")
    points = {
        "Fig. 3": {**FIG3, "rho_s": -60.0},
        "unequal biases": {**FIG3, "rho_s": -60.0, "lambda_s": "20x", "b_ds": 10.0, "b_us": 0.5, "b_um": 2.0},
        "skewed modes": {**FIG3, "rho_s": -60.0, "q_dm": 0.8, "q_ds": 0.2, "b_dm": 2.0, "b_ds": 0.25},
    }
    for name, mapping in points.items():
        cfg = config_from_mapping(mapping)
        expect = dict(zip(("dl_m", "dl_s", "ul_m", "ul_s"), analytics.association_probabilities(cfg)))
        stats = estimate_structure(cfg, SimSettings(iterations=300, seed=12), with_csma=False)
        for key, a in expect.items():
            mode, tier = key.split("_")
            f = stats.association_fraction(tier, mode)
            v.check(abs(f - a) <= 0.02, f"{name} {mode} {tier}: analytic {a:.4f} empirical {f:.4f}")
    v.finish()


def test_criterion_7_optimizer_oracles(verdict):
    v = verdict(7, "closed-form optima vs grid oracles")
    cfg = config_from_mapping({**FIG5, "lambda_s": "5x"})
    for name, fn in (("density", optimal_density), ("bias", optimal_bias)):
        for mode in ("dl", "ul"):
            c = fn(cfg, mode).checks
            v.check(len(c["grid"]) == 50, f"{name} {mode}: 50-point log grid")
            v.check(c["printed_within_step"], f"{name} {mode}: closed form {c['printed']:.4f} within one "
                                              f"step of grid argmax {c['grid_argmax']:.4f}")
            v.note(f"{name} {mode}: printed {c['printed']:.6f} derived {c['derived']:.6f} "
                   f"(printed/derived - 1 = {c['printed_vs_derived_rel']:+.3e}); "
                   f"refined grid optimum / derived - 1 = {c['refined_vs_derived_rel']:+.1e}")
    for tier in ("m", "s"):
        res = optimal_uldl_config(cfg, tier, "ul")
        v.check(res.arguments[f"q_d{tier}"] == 0.0 and res.checks["monotone"] == "non-increasing",
                f"UL q*_{tier} = 0 with a non-increasing grid")
    for mode in ("dl", "ul"):
        for base in (cfg, config_from_mapping({**FIG3, "rho_s": -60.0})):
            res = optimal_bandwidth(base, mode)
            diff = res.checks["difference"]
            expect = 1.0 if diff > 0 else 0.0 if diff < 0 else base.eta
            v.check(res.arguments["eta"] == expect, f"eta* {mode} = {res.arguments['eta']} for sign "
                                                    f"{np.sign(diff):+.0f}")
    v.finish()


def test_criterion_8_sensing_thresholds(verdict):
    v = verdict(8, "DL throughput unimodal in rho_s with rho_d* > rho_s*")
    grid = np.linspace(-100.0, 0.0, 41)
    cfg_a = config_from_mapping({**FIG7, "rho_d": -20.0})
    values = sensing_profile(cfg_a, "rho_s", [dbm_to_mw(x) for x in grid])
    i = int(np.argmax(values))
    v.check(count_sign_changes(values) == 1, f"{count_sign_changes(values)} sign change(s) of the differences")
    v.check(0 < i < len(grid) - 1, f"maximum at rho_s = {grid[i]:g} dBm is interior")
    domain = (dbm_to_mw(-100.0), dbm_to_mw(0.0))
    rho_s = mw_to_dbm(locate_threshold(cfg_a, "rho_s", domain).arguments["rho_s"])
    rho_d = mw_to_dbm(locate_threshold(config_from_mapping({**FIG7, "rho_s": -20.0}), "rho_d",
                                       domain).arguments["rho_d"])
    v.check(rho_d > rho_s, f"rho_d* = {rho_d:.1f} dBm (rho_s = -20) > rho_s* = {rho_s:.1f} dBm (rho_d = -20)")
    joint = optimal_sensing(config_from_mapping({**FIG7, "rho_d": -20.0, "rho_min": -100.0}))
    js, jd = (mw_to_dbm(joint.arguments[k]) for k in ("rho_s", "rho_d"))
    v.check(jd > js, f"two-stage search: rho_d* = {jd:.1f} dBm > rho_s* = {js:.1f} dBm")
    v.finish()


def test_criterion_9_csma_beats_aloha(verdict):
    v = verdict(9, "CSMA coverage at least ALOHA coverage at matched activity")
    cfg = config_from_mapping(FIG8)
    settings = SimSettings(iterations=200, seed=2, window=CSMA_ALOHA_WINDOW, kinds=("s_dl", "s_ul", "d2d"))
    rows, _ = csma_aloha_rows(cfg, settings, FIG8_RHO_S)
    separated = total = 0
    for row in rows:
        for k in FIG8_KINDS:
            c, a = row[f"csma_{k}"], row[f"aloha_{k}"]
            hc, ha = row[f"ci_half_csma_{k}"], row[f"ci_half_aloha_{k}"]
            total += 1
            apart = c - hc > a + ha
            separated += apart
            v.check(c >= a, f"rho_s={row['value']:g} (beta {row['beta']:.3f}) {k}: CSMA {c:.4f} +/- {hc:.4f} "
                            f"ALOHA {a:.4f} +/- {ha:.4f}{'' if apart else ' (CIs overlap)'}")
    v.check(2 * separated >= total, f"{separated} of {total} comparisons have disjoint CIs")
    v.finish()


INVARIANT_TESTS = [
    "tests/test_analytics.py::test_coverage_decreases_with_threshold",
    "tests/test_analytics.py::test_d2d_coverage_decreases_with_threshold",
    "tests/test_analytics.py::test_retention_increases_with_threshold",
    "tests/test_analytics.py::test_association_normalized",
    "tests/test_analytics.py::test_throughput_affine_in_eta",
    "tests/test_simulator.py::test_realization_is_deterministic",
    "tests/test_simulator.py::test_coverage_replay_is_bitwise_identical",
    "tests/test_cli.py::test_coverage_simulation_replays_identically",
]


def test_criterion_10_invariant_suites(verdict):
    v = verdict(10, "invariant suites green in under 5 minutes")
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *INVARIANT_TESTS],
                          cwd=root, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    v.check(proc.returncode == 0, f"invariant tests: {tail}")
    v.check(elapsed < 300.0, f"runtime {elapsed:.0f} s < 300 s")
    v.finish()
