"""Special functions and quadrature primitives.

The interference integrals all reduce to the kernel ``1/(1+u^(alpha/2))``.
Its partial integrals have hypergeometric closed forms, which are used
here instead of nested quadrature:

* ``head(x) = int_0^x du / (1 + u^a)      = x 2F1(1, 1/a; 1 + 1/a; -x^a)``
* ``tail(x) = int_x^inf du / (1 + u^a)    = x^(1-a)/(a-1) 2F1(1, b; 1 + b; -x^-a)``

with ``a = alpha/2`` and ``b = 1 - 1/a``. Each form is only used where
its hypergeometric argument lies in [-1, 0], so both converge quickly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy import integrate
from scipy.special import hyp2f1

ArrayLike = Union[float, np.ndarray]
Kappa = Union[float, Callable[[np.ndarray], np.ndarray]]

gamma_fn = math.gamma


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, value: float = math.nan, abserr: float = math.nan):
        super().__init__(f"{message} (partial value {value!r}, error estimate {abserr!r})")
        self.value = value
        self.abserr = abserr


@dataclass(frozen=True)
class QuadratureSettings:
    """Tolerances for :func:`integrate_1d` and :func:`integrate_2d`."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 200
    transform_infinite: bool = True

    def __post_init__(self) -> None:
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


NESTED_SETTINGS = QuadratureSettings(rel_tol=1e-6, abs_tol=1e-10)


def c_alpha(alpha: float) -> float:
    """``C(alpha) = (2 pi/alpha) / sin(2 pi/alpha)``, the full kernel integral."""
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    x = 2.0 * math.pi / alpha
    if x < 1e-6:
        return 1.0 + x * x / 6.0
    return x / math.sin(x)


def kernel_head(x: ArrayLike, alpha: float) -> ArrayLike:
    """``int_0^x du / (1 + u^(alpha/2))`` for ``x >= 0`` (``inf`` allowed)."""
    a = 0.5 * alpha
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 1.0
    xs = x[small]
    out[small] = xs * hyp2f1(1.0, 1.0 / a, 1.0 + 1.0 / a, -(xs**a))
    out[~small] = c_alpha(alpha) - kernel_tail(x[~small], alpha)
    return out if out.ndim else float(out)


def kernel_tail(x: ArrayLike, alpha: float) -> ArrayLike:
    """``int_x^inf du / (1 + u^(alpha/2))`` for ``x >= 0`` (``inf`` gives 0)."""
    a = 0.5 * alpha
    b = 1.0 - 1.0 / a
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > 1.0
    xb = x[big]
    with np.errstate(divide="ignore", over="ignore"):
        out[big] = xb ** (1.0 - a) / (a - 1.0) * hyp2f1(1.0, b, 1.0 + b, -(xb ** (-a)))
    xs = x[~big]
    out[~big] = c_alpha(alpha) - xs * hyp2f1(1.0, 1.0 / a, 1.0 + 1.0 / a, -(xs**a))
    return out if out.ndim else float(out)


def kernel_band(lo: ArrayLike, hi: ArrayLike, alpha: float) -> ArrayLike:
    """``int_lo^hi du / (1 + u^(alpha/2))``, computed without cancellation."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    out = np.where(
        lo >= 1.0,
        kernel_tail(lo, alpha) - kernel_tail(hi, alpha),
        kernel_head(hi, alpha) - kernel_head(lo, alpha),
    )
    return out if out.ndim else float(out)


def delta_fn(beta: ArrayLike, alpha: float) -> ArrayLike:
    """``delta(beta, alpha) = beta^(2/alpha) int_{beta^(-2/alpha)}^inf du/(1+u^(alpha/2))``."""
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ValueError("beta must be non-negative")
    scale = beta ** (2.0 / alpha)
    out = np.zeros_like(beta)
    pos = scale > 0
    out[pos] = scale[pos] * kernel_tail(1.0 / scale[pos], alpha)
    return out if out.ndim else float(out)


def _eval_kappa(kappa: Kappa, theta: np.ndarray) -> np.ndarray:
    if callable(kappa):
        return np.asarray(kappa(theta), dtype=float)
    return np.full_like(theta, float(kappa))


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def z_fn(
    theta_l: float,
    theta_u: float,
    kappa_l: Kappa,
    kappa_u: Kappa,
    s: float,
    q_pow: float,
    alpha: float = 4.0,
    n_theta: int = 64,
) -> float:
    """Angular-radial kernel integral over a (theta, distance) region.

    Computes ``(sQ)^(2/alpha) int_{theta_l}^{theta_u} int_{k_l^2/(sQ)^(2/alpha)}^{k_u^2/(sQ)^(2/alpha)}
    du/(1+u^(alpha/2)) dtheta`` where ``k_l`` and ``k_u`` are distances that
    may depend on theta (pass a callable). Constant limits are evaluated in
    closed form; theta-dependent ones with ``n_theta`` Gauss-Legendre nodes,
    which is accurate for smooth limits. Regions with endpoint singularities
    should be integrated with :func:`ball_exterior_integral` instead.
    """
    if not 0 <= theta_l <= theta_u <= math.pi + 1e-12:
        raise ValueError("angular limits must satisfy 0 <= theta_l <= theta_u <= pi")
    if s < 0 or not q_pow > 0:
        raise ValueError("s must be non-negative and q_pow positive")
    if not callable(kappa_l) and kappa_l < 0:
        raise ValueError("kappa_l must be non-negative")
    if not callable(kappa_l) and not callable(kappa_u) and kappa_u < kappa_l:
        raise ValueError("kappa_u must not be below kappa_l")
    if theta_l == theta_u or s == 0:
        return 0.0
    c = (s * q_pow) ** (2.0 / alpha)
    if not callable(kappa_l) and not callable(kappa_u):
        if kappa_l == kappa_u:
            return 0.0
        return (theta_u - theta_l) * c * kernel_band(kappa_l**2 / c, kappa_u**2 / c, alpha)
    t, w = gauss_legendre(n_theta)
    theta = theta_l + (theta_u - theta_l) * t
    lo = _eval_kappa(kappa_l, theta) ** 2 / c
    hi = _eval_kappa(kappa_u, theta) ** 2 / c
    vals = kernel_band(lo, hi, alpha)
    return float((theta_u - theta_l) * c * np.dot(w, vals))


class Chord(NamedTuple):
    near: ArrayLike
    far: ArrayLike


def chord_lengths(r: float, iota: float, theta: ArrayLike) -> Chord:
    """Distances from the origin to a circle along a ray.

    The circle has radius ``iota`` and its center lies at distance ``r`` on
    the ray ``theta = 0``. Returns the near and far intersection distances
    of the ray at angle ``theta``. When the origin is inside the circle the
    near value is negative (the intersection lies behind the origin).
    """
    theta = np.asarray(theta, dtype=float)
    disc = iota * iota - (r * np.sin(theta)) ** 2
    tol = 1e-12 * max(iota * iota, r * r, 1e-300)
    if np.any(disc < -tol):
        raise ValueError("ray misses the circle: theta exceeds arcsin(iota/r)")
    root = np.sqrt(np.maximum(disc, 0.0))
    along = r * np.cos(theta)
    near, far = along - root, along + root
    if theta.ndim == 0:
        return Chord(float(near), float(far))
    return Chord(near, far)


def _sinh_rule(span: float, eps: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on [0, span] graded toward 0 for a near-singularity at distance eps."""
    t, w = gauss_legendre(n)
    if eps <= 0 or eps >= span:
        return span * t, span * w
    mu = math.asinh(span / eps)
    x = eps * np.sinh(mu * t)
    return x, eps * mu * np.cosh(mu * t) * w


def _sqrt_rule(span: float, eta: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on [0, span] for integrands like sqrt(x (2 eta + x)) near x = 0.

    Uses ``x = 2 eta sinh^2(mu t)``, which makes both the endpoint square root
    and the nearby branch point at ``x = -2 eta`` smooth in ``t``.
    """
    t, w = gauss_legendre(n)
    if eta <= 0:
        return span * t * t, 2.0 * span * t * w
    mu = math.asinh(math.sqrt(span / (2.0 * eta)))
    sh, ch = np.sinh(mu * t), np.cosh(mu * t)
    return 2.0 * eta * sh * sh, 4.0 * eta * mu * sh * ch * w


def ball_exterior_integral(s: float, q_pow: float, iota: float, r: float, alpha: float,
                           n_theta: int = 48) -> float:
    """Integral of ``1/(1 + |z|^alpha/(sQ))`` over the plane minus a disk.

    The disk has radius ``iota`` and its center lies at distance ``r`` from
    the origin. Multiplying by an interferer density gives the Laplace
    exponent of the interference from a Poisson field of transmitters with
    power ``q_pow`` kept outside that disk. The region beyond radius
    ``iota + r`` is handled in closed form; the part inside it is split by
    chords of the disk and integrated over the angle with quadrature rules
    adapted to the square-root behavior of the chord lengths.
    """
    if s == 0 or iota == math.inf:
        return 0.0
    c = (s * q_pow) ** (2.0 / alpha)
    if iota == 0:
        return math.pi * c * c_alpha(alpha)
    outer_r = iota + r
    total = math.pi * outer_r**2 * delta_fn(s * q_pow / outer_r**alpha, alpha)
    hi = outer_r**2 / c

    if r <= iota:
        # Origin inside the disk: the region runs from the far chord point to iota + r.
        # Near theta = pi/2 the chord length varies on the scale of the larger
        # of sqrt(iota^2 - r^2) and the kernel width sqrt(c).
        a = math.sqrt(max(iota * iota - r * r, 0.0))
        eps = max(a, 0.5 * math.sqrt(c)) / r if r > 0 else math.inf
        half = 0.5 * math.pi
        x, w = _sinh_rule(half, eps, n_theta)
        for theta in (half - x, half + x):
            far = chord_lengths(r, iota, theta).far
            total += c * float(np.dot(w, kernel_band(far**2 / c, hi, alpha)))
        return total

    big_theta = math.asin(iota / r)
    eta = 0.5 * math.pi - big_theta
    x, w = _sqrt_rule(big_theta, eta, n_theta)
    theta = big_theta - x
    near, far = chord_lengths(r, iota, theta)
    near = np.maximum(near, 0.0)
    # Segment between origin and the disk, then from the disk to iota + r.
    vals = kernel_head(near**2 / c, alpha) + kernel_band(far**2 / c, hi, alpha)
    total += c * float(np.dot(w, vals))
    # Rays that miss the disk: a plain sector.
    total += (math.pi - big_theta) * c * kernel_head(hi, alpha)
    return total


def _quad(f: Callable[[float], float], a: float, b: float, settings: QuadratureSettings,
          points=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                f, a, b, epsabs=settings.abs_tol, epsrel=settings.rel_tol,
                limit=settings.max_subdivisions, points=points,
            )
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                value, abserr = integrate.quad(
                    f, a, b, epsabs=settings.abs_tol, epsrel=settings.rel_tol,
                    limit=settings.max_subdivisions, points=points,
                )
            raise QuadratureError(f"quadrature did not converge: {exc}", value, abserr) from None
    return value


def integrate_1d(f: Callable[[float], float], a: float, b: float,
                 settings: QuadratureSettings = QuadratureSettings(), scale: float = 1.0) -> float:
    """Adaptive 1-D quadrature of ``f`` over ``[a, b]``; ``b`` may be ``inf``.

    Infinite upper limits are mapped to [0, 1) with ``x = a + scale t/(1-t)``;
    ``scale`` should be of the order of the integrand's decay length.
    """
    if b == a:
        return 0.0
    if b < a:
        return -integrate_1d(f, b, a, settings, scale)
    if math.isinf(b):
        if not settings.transform_infinite:
            return _quad(f, a, b, settings)

        def g(t: float) -> float:
            if t >= 1.0:
                return 0.0
            one_minus = 1.0 - t
            return f(a + scale * t / one_minus) * scale / (one_minus * one_minus)

        return _quad(g, 0.0, 1.0, settings)
    return _quad(f, a, b, settings)


def integrate_2d(f: Callable[[float, float], float], x_range: tuple[float, float],
                 y_range: tuple[Union[float, Callable[[float], float]],
                                Union[float, Callable[[float], float]]],
                 settings: QuadratureSettings = NESTED_SETTINGS) -> float:
    """Nested adaptive quadrature of ``f(x, y)``; y limits may depend on x."""
    y_lo, y_hi = y_range

    def inner(x: float) -> float:
        lo = y_lo(x) if callable(y_lo) else y_lo
        hi = y_hi(x) if callable(y_hi) else y_hi
        return integrate_1d(lambda y: f(x, y), lo, hi, settings)

    return integrate_1d(inner, x_range[0], x_range[1], settings)
