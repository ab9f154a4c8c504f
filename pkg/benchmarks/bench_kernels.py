"""Compare the numba and numpy simulator kernels on snapshot-sized inputs.

Run with ``python3 benchmarks/bench_kernels.py``. The numba timings exclude
the first (compiling) call, which is reported separately.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tddnet import kernels


def make_inputs(n_probe: int, n_src: int, n_d2d: int, seed: int, box: float = 5000.0):
    rng = np.random.default_rng(seed)
    rx = rng.uniform(0, box, (n_probe, 2))
    src = rng.uniform(0, box, (n_src, 2))
    interference = dict(
        rx=rx, signal=rng.exponential(size=n_probe) * 1e-6, src=src,
        src_pow=np.full(n_src, 1.0), fades=rng.exponential(size=(n_probe, n_src)),
        skip=rng.integers(-1, n_src, n_probe), ball_c=rx + rng.normal(0, 20, rx.shape),
        ball_r=np.where(rng.random(n_src) < 0.5, 58.0, 0.0), box=box, alpha=4.0,
        images=kernels.image_table(box, 4.0))
    n_pairs = 20 * n_d2d
    i = rng.integers(0, n_d2d, n_pairs)
    k = rng.integers(0, n_d2d, n_pairs)
    d2 = rng.uniform(1.0, 300.0, n_pairs) ** 2
    fades = rng.exponential(size=n_pairs)
    sensing = dict(owner=i, d2=d2, fades=fades, power=1.0, rho=1e-9, alpha=4.0, n=n_d2d)
    timers = dict(i=i, k=k, d2=d2, fades=fades, power=1.0, rho=1e-9, alpha=4.0,
                  timers=rng.random(n_d2d), n=n_d2d)
    return interference, sensing, timers


def best_of(fn, kwargs, repeats: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(**kwargs)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--probes", type=int, default=256)
    parser.add_argument("--sources", type=int, default=4000)
    parser.add_argument("--d2d", type=int, default=20000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    inputs = make_inputs(args.probes, args.sources, args.d2d, args.seed)
    impls = kernels.implementations()
    names = ("interference", "sensed_any", "timer_losers")
    print(f"active back end: {kernels.BACKEND}")
    if "numba" in impls:
        t0 = time.perf_counter()
        for fn, kw in zip(impls["numba"], inputs):
            fn(**kw)
        print(f"numba first call (compile or cache load): {time.perf_counter() - t0:.2f} s")

    results = {}
    print(f"{'kernel':<14}{'backend':<8}{'best (ms)':>12}")
    for backend, fns in impls.items():
        for name, fn, kw in zip(names, fns, inputs):
            t, out = best_of(fn, kw, args.repeats)
            results[(backend, name)] = (t, out)
            print(f"{name:<14}{backend:<8}{1e3 * t:>12.2f}")
    if "numba" in impls:
        print()
        for name in names:
            t_np, a = results[("numpy", name)]
            t_nb, b = results[("numba", name)]
            same = np.allclose(a, b, rtol=1e-12, atol=0) if a.dtype.kind == "f" else np.array_equal(a, b)
            print(f"{name:<14}speedup {t_np / t_nb:6.1f}x  outputs agree: {same}")


if __name__ == "__main__":
    main()
