"""SIR measurement at probe receivers of one realization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import kernels
from ..params import NetworkConfig
from .realization import MACRO, SMALL, NetworkRealization, SimSettings, exclusion_radii_for, torus_d2

KINDS = ("m_dl", "m_ul", "s_dl", "s_ul", "d2d")


@dataclass
class ProbeSamples:
    """SIR values of the probes of one kind with their estimator weights.

    UL probes are the served users; each is weighted by its cell load so
    that the weighted average describes a typical UL user.
    """

    sir: np.ndarray
    weight: np.ndarray

    @property
    def size(self) -> int:
        return len(self.sir)


def sir_from_geometry(signal_power: float, signal_distance: float, signal_fade: float,
                      interferer_powers, interferer_distances, interferer_fades,
                      alpha: float) -> float:
    """SIR of one link; ``inf`` when there is no interference."""
    p = np.asarray(interferer_powers, dtype=float)
    d = np.asarray(interferer_distances, dtype=float)
    h = np.asarray(interferer_fades, dtype=float)
    interf = float(np.sum(p * h * d ** (-alpha)))
    if interf == 0:
        return math.inf
    return signal_power * signal_fade * signal_distance ** (-alpha) / interf


def applicable_kinds(cfg: NetworkConfig) -> tuple:
    """Probe kinds that can exist under ``cfg``."""
    out = []
    if cfg.q_dm * cfg.lambda_m > 0:
        out.append("m_dl")
    if (1 - cfg.q_dm) * cfg.lambda_m > 0:
        out.append("m_ul")
    if cfg.q_ds * cfg.lambda_s > 0:
        out.append("s_dl")
    if (1 - cfg.q_ds) * cfg.lambda_s > 0:
        out.append("s_ul")
    if cfg.zeta * cfg.lambda_u > 0 and cfg.rho_s > 0 and cfg.rho_d > 0:
        out.append("d2d")
    return tuple(out)


def _in_region(xy: np.ndarray, real: NetworkRealization) -> np.ndarray:
    if real.torus:
        return np.ones(len(xy), dtype=bool)
    lo, hi = 0.25 * real.window, 0.75 * real.window
    return np.all((xy >= lo) & (xy < hi), axis=1)


def _poisson_ul(real: NetworkRealization, cfg: NetworkConfig, tier: int,
                rng: np.random.Generator) -> np.ndarray:
    from ..analytics import derive

    dq = derive(cfg)
    density = dq.lam_u_m if tier == MACRO else dq.lam_u_s
    n = rng.poisson(density * real.window**2)
    return rng.random((n, 2)) * real.window


class _Sources:
    """Interferer positions, powers, per-source exclusion radii."""

    def __init__(self) -> None:
        self.xy, self.pow, self.radius = [], [], []

    def add(self, xy: np.ndarray, power: float, radius: float = 0.0) -> int:
        offset = sum(len(x) for x in self.xy)
        self.xy.append(np.asarray(xy, dtype=float).reshape(-1, 2))
        self.pow.append(np.full(len(xy), power))
        self.radius.append(np.full(len(xy), radius))
        return offset

    def arrays(self):
        if not self.xy:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
        return np.concatenate(self.xy), np.concatenate(self.pow), np.concatenate(self.radius)


def measure_sir(real: NetworkRealization, cfg: NetworkConfig, kind: str,
                settings: Optional[SimSettings] = None, rng: Optional[np.random.Generator] = None,
                d2d_active: Optional[np.ndarray] = None) -> ProbeSamples:
    """SIR at the probes of one kind.

    Args:
        kind: one of ``m_dl``, ``m_ul``, ``s_dl``, ``s_ul``, ``d2d``.
        d2d_active: overrides the CSMA retention flags (used for ALOHA).
            When given, no exclusion disks are applied.
    """
    settings = settings or SimSettings()
    rng = rng if rng is not None else real.streams.get("measure", np.random.default_rng())
    box, al = real.box, cfg.alpha
    balls = settings.exclusion == "balls" and d2d_active is None
    iota_s, iota_d = exclusion_radii_for(cfg) if balls else (0.0, 0.0)
    active_d2d = real.d2d_retained if d2d_active is None else d2d_active
    d2d_tx = real.d2d_xy[active_d2d] if active_d2d is not None else np.zeros((0, 2))
    tier = MACRO if kind.startswith("m_") else SMALL
    p_dl, p_ul = (cfg.p_m, cfg.q_m) if tier == MACRO else (cfg.p_s, cfg.q_s)

    src = _Sources()
    dl_cells = real.active_dl(tier) if kind != "d2d" else real.active_dl(SMALL)
    ul_users, ul_cells = real.served_ul_users(tier if kind != "d2d" else SMALL)
    ul_xy = real.user_xy[ul_users]
    if settings.ul_interferers == "poisson":
        ul_xy = _poisson_ul(real, cfg, tier if kind != "d2d" else SMALL, rng)

    if kind in ("m_dl", "s_dl"):
        users = np.nonzero((real.user_tier == tier) & ~real.user_tx & ~real.user_d2d)[0]
        cell = real.user_bs[users]
        ok = _in_region(real.user_xy[users], real)
        users, cell = users[ok], cell[ok]
        rx = real.user_xy[users]
        tx = real.bs_xy(tier)[cell]
        sig_pow = p_dl
        weight = np.ones(len(users))
        off_dl = src.add(real.bs_xy(tier)[dl_cells], p_dl)
        src.add(ul_xy, p_ul)
        # Skip the serving base station among the DL interferers.
        pos = np.searchsorted(dl_cells, cell)
        skip = off_dl + pos
        ball_c = tx
        if tier == SMALL:
            src.add(d2d_tx, cfg.q_d, iota_s)
    elif kind in ("m_ul", "s_ul"):
        ok = _in_region(real.bs_xy(tier)[ul_cells], real)
        users, cell = ul_users[ok], ul_cells[ok]
        rx = real.bs_xy(tier)[cell]
        tx = real.user_xy[users]
        sig_pow = p_ul
        weight = real.load(tier)[cell].astype(float)
        src.add(real.bs_xy(tier)[dl_cells], p_dl)
        off_ul = src.add(ul_xy, p_ul)
        skip = off_ul + np.nonzero(ok)[0]
        if settings.ul_interferers == "poisson":
            skip = np.full(len(users), -1)
        ball_c = tx
        if tier == SMALL:
            src.add(d2d_tx, cfg.q_d, iota_s)
    elif kind == "d2d":
        pairs = np.nonzero(active_d2d)[0] if active_d2d is not None else np.zeros(0, dtype=np.int64)
        ok = _in_region(real.d2d_rx_xy[pairs], real)
        pairs = pairs[ok]
        rx = real.d2d_rx_xy[pairs]
        tx = real.d2d_xy[pairs]
        sig_pow = cfg.q_d
        weight = np.ones(len(pairs))
        src.add(real.sap_xy[dl_cells], cfg.p_s, iota_s)
        src.add(ul_xy, cfg.q_s, iota_s)
        off_d = src.add(d2d_tx, cfg.q_d, iota_d)
        skip = off_d + np.nonzero(ok)[0]
        ball_c = tx
    else:
        raise ValueError(f"unknown probe kind {kind!r}")

    k = settings.probes_per_iteration
    if k is not None and len(rx) > k:
        pick = np.sort(rng.choice(len(rx), size=k, replace=False))
        rx, tx, weight, skip, ball_c = rx[pick], tx[pick], weight[pick], skip[pick], ball_c[pick]

    n_probe = len(rx)
    src_xy, src_pow, src_r = src.arrays()
    if n_probe == 0:
        return ProbeSamples(np.zeros(0), np.zeros(0))
    if kind == "d2d":
        d2_sig = np.full(n_probe, cfg.r_d**2)
    else:
        d2_sig = torus_d2(rx, tx, box)
    signal = sig_pow * rng.exponential(size=n_probe) * d2_sig ** (-0.5 * al)
    fades = rng.exponential(size=(n_probe, len(src_xy)))
    far = kernels.image_table(box, al) if settings.images and box > 0 else kernels.NO_IMAGES
    sir = kernels.interference(rx, signal, src_xy, src_pow, fades, skip.astype(np.int64),
                               ball_c, src_r, box, al, far)
    return ProbeSamples(sir, weight)
