"""Hot loops of the simulator, compiled with numba when available.

Set ``TDDNET_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
Both back ends take identical inputs (all randomness is drawn by the
caller) and return identical results up to floating-point rounding.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np
from scipy import integrate

_DISABLED = os.environ.get("TDDNET_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by TDDNET_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


IMAGE_GRID = 129
IMAGE_SHELLS = 12
NO_IMAGES = np.zeros((0, 0))


@lru_cache(maxsize=8)
def _unit_image_table(alpha: float, n: int, shells: int) -> np.ndarray:
    """Lattice sum of ``|z + (a, b)|**-alpha`` over all copies but the central one.

    Tabulated on an ``n x n`` grid of offsets ``z`` in ``[-1/2, 1/2]^2`` for a
    unit torus. Copies beyond ``shells`` rings are replaced by the continuum
    integral over the exterior of the explicit square.
    """
    g = np.linspace(-0.5, 0.5, n)
    x, y = np.meshgrid(g, g, indexing="ij")
    table = np.zeros((n, n))
    for a in range(-shells, shells + 1):
        for b in range(-shells, shells + 1):
            if a or b:
                table += ((x + a) ** 2 + (y + b) ** 2) ** (-0.5 * alpha)
    side = 2 * shells + 1
    tail, _ = integrate.quad(lambda t: (0.5 * side / np.cos(t)) ** (2.0 - alpha), 0.0, 0.25 * np.pi)
    return table + 8.0 * tail / (alpha - 2.0)


def image_table(box: float, alpha: float, n: int = IMAGE_GRID, shells: int = IMAGE_SHELLS) -> np.ndarray:
    """Far-field path gain from the periodic copies of a torus of side ``box``.

    Entry ``[i, j]`` is the summed path gain (unit power, unit fading) at a
    receiver offset by ``(x_i, y_j)`` from a source, with ``x`` and ``y`` on
    an even grid over ``[-box/2, box/2]`` and the central copy excluded.
    """
    return _unit_image_table(float(alpha), int(n), int(shells)) * float(box) ** (-alpha)


def _lookup_np(table: np.ndarray, dx: np.ndarray, dy: np.ndarray, box: float) -> np.ndarray:
    n = table.shape[0]
    u = np.clip((dx / box + 0.5) * (n - 1), 0.0, n - 1.0)
    v = np.clip((dy / box + 0.5) * (n - 1), 0.0, n - 1.0)
    i = np.minimum(u.astype(np.int64), n - 2)
    j = np.minimum(v.astype(np.int64), n - 2)
    s, t = u - i, v - j
    return ((1 - s) * (1 - t) * table[i, j] + s * (1 - t) * table[i + 1, j]
            + (1 - s) * t * table[i, j + 1] + s * t * table[i + 1, j + 1])


# ---------------------------------------------------------------------------
# numpy implementations

def _pair_d2_np(a: np.ndarray, b: np.ndarray, box: float) -> np.ndarray:
    d = np.abs(a[:, None, :] - b[None, :, :])
    if box > 0:
        d = np.minimum(d, box - d)
    return (d * d).sum(axis=-1)


def interference_np(rx, signal, src, src_pow, fades, skip, ball_c, ball_r, box, alpha,
                    images=NO_IMAGES, chunk=256):
    """SIR at each probe receiver.

    Args:
        rx: (P, 2) receiver positions.
        signal: (P,) received signal powers (fading included).
        src: (I, 2) interferer positions; src_pow: (I,) their powers.
        fades: (P, I) fading gains of each probe-interferer link.
        skip: (P,) index of an interferer to ignore per probe, or -1.
        ball_c: (P, 2) centers of the per-probe exclusion disks.
        ball_r: (I,) exclusion radius applying to each interferer (0 for none).
        box: torus side length, or 0 for the Euclidean metric. On the torus
            all positions must lie in ``[0, box]``.
        alpha: path-loss exponent.
        images: table from :func:`image_table` adding the mean interference
            of the periodic copies of every source on the torus (copies
            carry unit fading and ignore exclusion disks), or an empty array.

    Returns:
        (P,) SIR values; ``inf`` when no interference remains.
    """
    n_probe = rx.shape[0]
    out = np.empty(n_probe)
    half = 0.5 * alpha
    r2_ball = ball_r * ball_r
    for start in range(0, n_probe, chunk):
        sl = slice(start, min(start + chunk, n_probe))
        d2 = _pair_d2_np(rx[sl], src, box)
        keep = _pair_d2_np(ball_c[sl], src, box) >= r2_ball[None, :]
        rows = np.arange(sl.start, sl.stop)
        has_skip = skip[sl] >= 0
        keep[np.nonzero(has_skip)[0], skip[sl][has_skip]] = False
        with np.errstate(divide="ignore"):
            gain = src_pow[None, :] * fades[sl] * d2 ** (-half)
        interf = np.where(keep, gain, 0.0).sum(axis=1)
        if images.size and box > 0:
            d = src[None, :, :] - rx[sl, None, :]
            d -= box * np.floor(d / box + 0.5)
            interf += (src_pow[None, :] * _lookup_np(images, d[..., 0], d[..., 1], box)).sum(axis=1)
        with np.errstate(divide="ignore"):
            out[sl] = np.where(interf > 0, signal[rows] / np.where(interf > 0, interf, 1.0), np.inf)
    return out


def sensed_any_np(owner, d2, fades, power, rho, alpha, n):
    """Flag owners for which any sensing link reaches ``rho``."""
    hit = power * fades * d2 ** (-0.5 * alpha) >= rho
    out = np.zeros(n, dtype=np.bool_)
    out[owner[hit]] = True
    return out


def timer_losers_np(i, k, d2, fades, power, rho, alpha, timers, n):
    """Flag transmitters that hear a contender with an earlier timer.

    For each sensing pair ``(i, k)`` whose received power reaches ``rho``,
    the member with the larger ``(timer, index)`` backs off.
    """
    hit = power * fades * d2 ** (-0.5 * alpha) >= rho
    a, b = i[hit], k[hit]
    ta, tb = timers[a], timers[b]
    a_loses = (ta > tb) | ((ta == tb) & (a > b))
    out = np.zeros(n, dtype=np.bool_)
    out[np.where(a_loses, a, b)] = True
    return out


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True)
    def _interference_nb(rx, signal, src, src_pow, fades, skip, ball_c, ball_r, box, alpha, images):
        n_probe = rx.shape[0]
        n_src = src.shape[0]
        half = 0.5 * alpha
        n_img = images.shape[0]
        use_images = n_img > 1 and box > 0.0
        half_box = 0.5 * box
        cell = (n_img - 1) / box if box > 0.0 else 0.0
        mid = 0.5 * (n_img - 1)
        out = np.empty(n_probe)
        for p in range(n_probe):
            total = 0.0
            far = 0.0
            for j in range(n_src):
                if use_images:
                    # Positions lie in [0, box), so one shift gives the signed offset.
                    ex = src[j, 0] - rx[p, 0]
                    ey = src[j, 1] - rx[p, 1]
                    ex = ex - box if ex > half_box else (ex + box if ex < -half_box else ex)
                    ey = ey - box if ey > half_box else (ey + box if ey < -half_box else ey)
                    u = min(max(ex * cell + mid, 0.0), n_img - 1.0)
                    v = min(max(ey * cell + mid, 0.0), n_img - 1.0)
                    a = min(int(u), n_img - 2)
                    b = min(int(v), n_img - 2)
                    s = u - a
                    t = v - b
                    far += src_pow[j] * ((1 - s) * (1 - t) * images[a, b] + s * (1 - t) * images[a + 1, b]
                                         + (1 - s) * t * images[a, b + 1] + s * t * images[a + 1, b + 1])
                if j == skip[p]:
                    continue
                r = ball_r[j]
                if r > 0.0:
                    bx = abs(ball_c[p, 0] - src[j, 0])
                    by = abs(ball_c[p, 1] - src[j, 1])
                    if box > 0.0:
                        bx = min(bx, box - bx)
                        by = min(by, box - by)
                    if bx * bx + by * by < r * r:
                        continue
                dx = abs(rx[p, 0] - src[j, 0])
                dy = abs(rx[p, 1] - src[j, 1])
                if box > 0.0:
                    dx = min(dx, box - dx)
                    dy = min(dy, box - dy)
                d2 = dx * dx + dy * dy
                if d2 == 0.0:
                    total = np.inf
                    break
                path = 1.0 / (d2 * d2) if half == 2.0 else d2 ** (-half)
                total += src_pow[j] * fades[p, j] * path
            total += far
            out[p] = signal[p] / total if total > 0.0 else np.inf
        return out

    @njit(cache=True)
    def _sensed_any_nb(owner, d2, fades, power, rho, alpha, n):
        out = np.zeros(n, dtype=np.bool_)
        half = 0.5 * alpha
        thr = rho / power
        for e in range(owner.shape[0]):
            # alpha = 4 avoids pow(), which dominates this loop otherwise.
            x = d2[e] * d2[e] if half == 2.0 else d2[e] ** half
            if fades[e] >= thr * x:
                out[owner[e]] = True
        return out

    @njit(cache=True)
    def _timer_losers_nb(i, k, d2, fades, power, rho, alpha, timers, n):
        out = np.zeros(n, dtype=np.bool_)
        half = 0.5 * alpha
        thr = rho / power
        for e in range(i.shape[0]):
            x = d2[e] * d2[e] if half == 2.0 else d2[e] ** half
            if fades[e] >= thr * x:
                a = i[e]
                b = k[e]
                if timers[a] > timers[b] or (timers[a] == timers[b] and a > b):
                    out[a] = True
                else:
                    out[b] = True
        return out

    def interference_nb(rx, signal, src, src_pow, fades, skip, ball_c, ball_r, box, alpha,
                        images=NO_IMAGES):
        return _interference_nb(
            np.ascontiguousarray(rx, dtype=np.float64), np.ascontiguousarray(signal, dtype=np.float64),
            np.ascontiguousarray(src, dtype=np.float64).reshape(-1, 2),
            np.ascontiguousarray(src_pow, dtype=np.float64),
            np.ascontiguousarray(fades, dtype=np.float64).reshape(rx.shape[0], -1),
            np.ascontiguousarray(skip, dtype=np.int64), np.ascontiguousarray(ball_c, dtype=np.float64),
            np.ascontiguousarray(ball_r, dtype=np.float64), float(box), float(alpha),
            np.ascontiguousarray(images, dtype=np.float64))

    def sensed_any_nb(owner, d2, fades, power, rho, alpha, n):
        return _sensed_any_nb(np.asarray(owner, dtype=np.int64), np.asarray(d2, dtype=np.float64),
                              np.asarray(fades, dtype=np.float64), float(power), float(rho),
                              float(alpha), int(n))

    def timer_losers_nb(i, k, d2, fades, power, rho, alpha, timers, n):
        return _timer_losers_nb(np.asarray(i, dtype=np.int64), np.asarray(k, dtype=np.int64),
                                np.asarray(d2, dtype=np.float64), np.asarray(fades, dtype=np.float64),
                                float(power), float(rho), float(alpha),
                                np.asarray(timers, dtype=np.float64), int(n))

    interference = interference_nb
    sensed_any = sensed_any_nb
    timer_losers = timer_losers_nb
else:
    interference_nb = sensed_any_nb = timer_losers_nb = None
    interference = interference_np
    sensed_any = sensed_any_np
    timer_losers = timer_losers_np


def implementations() -> dict:
    """Available back ends, keyed by name, for benchmarking and cross-checks."""
    impls = {"numpy": (interference_np, sensed_any_np, timer_losers_np)}
    if HAVE_NUMBA:
        impls["numba"] = (interference_nb, sensed_any_nb, timer_losers_nb)
    return impls
