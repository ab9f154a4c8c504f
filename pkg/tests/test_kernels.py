import importlib.util
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tddnet import kernels

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not available")


def random_interference_inputs(seed, n_probe, n_src, box, alpha):
    rng = np.random.default_rng(seed)
    side = box if box > 0 else 1000.0
    rx = rng.uniform(0, side, (n_probe, 2))
    return dict(
        rx=rx, signal=rng.exponential(size=n_probe), src=rng.uniform(0, side, (n_src, 2)),
        src_pow=rng.uniform(0.5, 2.0, n_src), fades=rng.exponential(size=(n_probe, n_src)),
        skip=rng.integers(-1, max(n_src, 1), n_probe) if n_src else np.full(n_probe, -1),
        ball_c=rx + rng.normal(0, 30, rx.shape), ball_r=np.where(rng.random(n_src) < 0.5, 60.0, 0.0),
        box=box, alpha=alpha)


def brute_force_sir(rx, signal, src, src_pow, fades, skip, ball_c, ball_r, box, alpha):
    out = []
    for p in range(len(rx)):
        total = 0.0
        for j in range(len(src)):
            if j == skip[p]:
                continue
            db = np.abs(ball_c[p] - src[j])
            dr = np.abs(rx[p] - src[j])
            if box > 0:
                db, dr = np.minimum(db, box - db), np.minimum(dr, box - dr)
            if np.hypot(*db) < ball_r[j]:
                continue
            total += src_pow[j] * fades[p, j] * np.hypot(*dr) ** (-alpha)
        out.append(signal[p] / total if total > 0 else np.inf)
    return np.array(out)


@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(0, 30), st.sampled_from([0.0, 1000.0]),
       st.sampled_from([3.0, 4.0, 4.5]))
def test_interference_matches_brute_force(seed, n_probe, n_src, box, alpha):
    kw = random_interference_inputs(seed, n_probe, n_src, box, alpha)
    expect = brute_force_sir(**kw)
    for name, (interference, _, _) in kernels.implementations().items():
        np.testing.assert_allclose(interference(**kw), expect, rtol=1e-12)


def test_interference_without_sources_is_infinite():
    kw = random_interference_inputs(0, 3, 0, 1000.0, 4.0)
    for interference, _, _ in kernels.implementations().values():
        assert np.all(np.isinf(interference(**kw)))


def sensing_inputs(seed, n, m):
    rng = np.random.default_rng(seed)
    return dict(i=rng.integers(0, n, m), k=rng.integers(0, n, m), d2=rng.uniform(1, 400, m) ** 2,
                fades=rng.exponential(size=m), timers=rng.random(n))


@given(st.integers(0, 10_000), st.integers(1, 40), st.integers(0, 200), st.sampled_from([3.0, 4.0]))
def test_sensing_kernels_match_definition(seed, n, m, alpha):
    d = sensing_inputs(seed, n, m)
    power, rho = 1.0, 1e-8
    hit = power * d["fades"] * d["d2"] ** (-alpha / 2) >= rho
    blocked = np.zeros(n, bool)
    blocked[d["i"][hit]] = True
    losers = np.zeros(n, bool)
    for a, b in zip(d["i"][hit], d["k"][hit]):
        a_first = (d["timers"][a], a) < (d["timers"][b], b)
        losers[b if a_first else a] = True
    for _, sensed_any, timer_losers in kernels.implementations().values():
        np.testing.assert_array_equal(sensed_any(d["i"], d["d2"], d["fades"], power, rho, alpha, n), blocked)
        np.testing.assert_array_equal(
            timer_losers(d["i"], d["k"], d["d2"], d["fades"], power, rho, alpha, d["timers"], n), losers)


@needs_numba
def test_numba_is_default_backend():
    if os.environ.get("TDDNET_DISABLE_NUMBA"):
        pytest.skip("numba disabled in this environment")
    assert kernels.BACKEND == "numba"
    assert set(kernels.implementations()) == {"numpy", "numba"}


@pytest.mark.parametrize("flag, backend", [
    ("1", "numpy"),
    ("0", "numba" if importlib.util.find_spec("numba") else "numpy"),
])
def test_environment_flag_selects_backend(flag, backend):
    env = {**os.environ, "TDDNET_DISABLE_NUMBA": flag}
    out = subprocess.run([sys.executable, "-c", "from tddnet import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == backend


def lattice_sum(dx, dy, box, alpha, shells=100):
    a = np.arange(-shells, shells + 1)
    x = dx + box * a[:, None]
    y = dy + box * a[None, :]
    g = (x * x + y * y) ** (-alpha / 2)
    g[shells, shells] = 0.0
    return g.sum()


@pytest.mark.parametrize("alpha", [3.0, 4.0, 5.0])
def test_image_table_matches_lattice_sum(alpha):
    box = 2000.0
    table = kernels.image_table(box, alpha)
    rng = np.random.default_rng(int(alpha))
    for dx, dy in rng.uniform(-box / 2, box / 2, (5, 2)):
        got = kernels._lookup_np(table, np.array(dx), np.array(dy), box)
        # Bilinear interpolation of a convex function; 1e-3 bounds the grid error.
        if alpha > 3:
            expect = lattice_sum(dx, dy, box, alpha, shells=60)
        else:
            # The tail decays like 1/shells here; extrapolate it away.
            expect = 2 * lattice_sum(dx, dy, box, alpha, 400) - lattice_sum(dx, dy, box, alpha, 200)
        assert got == pytest.approx(expect, rel=1e-3)


def test_image_table_symmetry_and_scaling():
    t = kernels.image_table(1000.0, 4.0)
    np.testing.assert_allclose(t, t[::-1, :], rtol=1e-12)
    np.testing.assert_allclose(t, t.T, rtol=1e-12)
    np.testing.assert_allclose(kernels.image_table(2000.0, 4.0), t / 16.0, rtol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 6))
def test_interference_with_images_adds_far_field(seed, n_probe, n_src):
    box, alpha = 1000.0, 4.0
    kw = random_interference_inputs(seed, n_probe, n_src, box, alpha)
    near = brute_force_sir(**kw)
    far = np.array([sum(kw["src_pow"][j] * lattice_sum(*(((kw["src"][j] - kw["rx"][p]) + box / 2) % box
                                                         - box / 2), box, alpha)
                        for j in range(n_src)) for p in range(n_probe)])
    expect = kw["signal"] / (kw["signal"] / near + far)
    results = [interference(**kw, images=kernels.image_table(box, alpha))
               for interference, _, _ in kernels.implementations().values()]
    for got in results:
        np.testing.assert_allclose(got, expect, rtol=1e-3)
    for got in results[1:]:
        np.testing.assert_allclose(got, results[0], rtol=1e-12)
