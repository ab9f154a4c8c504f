"""Sampling one network snapshot, user association and CSMA contention."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .. import kernels
from ..params import NetworkConfig, exclusion_radius

MACRO, SMALL = 0, 1


@dataclass(frozen=True)
class SimSettings:
    """Monte Carlo settings.

    Attributes:
        iterations: number of independent snapshots.
        window: side of the square observation window in meters.
        seed: master seed; snapshot ``i`` uses the stream ``(seed, i)``.
        workers: worker processes (results do not depend on this).
        torus: wrap-around distances; when off, probes are restricted to
            the central quarter of the window.
        images: on the torus, add the mean interference of the periodic
            copies of the window so the far field of the infinite plane is
            not truncated at half the window side.
        probes_per_iteration: cap on probes of each kind per snapshot
            (``None`` keeps all).
        exclusion: ``"balls"`` removes interferers inside the equivalent
            exclusion disks exactly as the analytic model assumes;
            ``"none"`` keeps every active interferer.
        contention_pool: ``"all"`` lets every potential D2D transmitter
            contend in the timer stage; ``"php"`` only those that passed the
            small-cell sensing stage.
        sensing_tail: sensing links whose detection probability is below
            this value are skipped.
        kinds: probe kinds to measure (``None`` for all applicable).
        ul_interferers: ``"served"`` uses the actually served UL users as
            UL interferers; ``"poisson"`` replaces them, for measurement
            only, by an independent Poisson field with the analytic active
            UL density (a diagnostic that removes the UL coupling).
    """

    iterations: int = 10_000
    window: float = 5000.0
    seed: int = 0
    workers: int = 1
    torus: bool = True
    images: bool = True
    probes_per_iteration: Optional[int] = 256
    exclusion: str = "balls"
    contention_pool: str = "all"
    sensing_tail: float = 1e-12
    kinds: Optional[tuple] = None
    ul_interferers: str = "served"

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.window > 0:
            raise ValueError("window must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.exclusion not in ("balls", "none"):
            raise ValueError("exclusion must be 'balls' or 'none'")
        if self.contention_pool not in ("all", "php"):
            raise ValueError("contention_pool must be 'all' or 'php'")
        if self.ul_interferers not in ("served", "poisson"):
            raise ValueError("ul_interferers must be 'served' or 'poisson'")
        if self.probes_per_iteration is not None and self.probes_per_iteration < 1:
            raise ValueError("probes_per_iteration must be positive")


@dataclass
class NetworkRealization:
    """One snapshot of the network.

    Base stations carry a DL flag; users carry D2D and transmitter flags.
    Association results use ``-1`` for "none": ``user_tier`` is 0 for
    macro and 1 for small cells, ``user_bs`` indexes into the tier's
    base-station arrays. ``*_served`` holds the served user of each cell.
    """

    window: float
    torus: bool
    mbs_xy: np.ndarray
    mbs_dl: np.ndarray
    sap_xy: np.ndarray
    sap_dl: np.ndarray
    user_xy: np.ndarray
    user_d2d: np.ndarray
    user_tx: np.ndarray
    d2d_user: np.ndarray
    d2d_rx_xy: np.ndarray
    d2d_timer: np.ndarray
    d2d_retained: Optional[np.ndarray] = None
    user_tier: Optional[np.ndarray] = None
    user_bs: Optional[np.ndarray] = None
    mbs_load: Optional[np.ndarray] = None
    sap_load: Optional[np.ndarray] = None
    mbs_served: Optional[np.ndarray] = None
    sap_served: Optional[np.ndarray] = None
    streams: dict = field(default_factory=dict, repr=False)

    @property
    def box(self) -> float:
        """Torus side length, or 0 for the Euclidean metric."""
        return self.window if self.torus else 0.0

    @property
    def d2d_xy(self) -> np.ndarray:
        return self.user_xy[self.d2d_user]

    def bs_xy(self, tier: int) -> np.ndarray:
        return self.mbs_xy if tier == MACRO else self.sap_xy

    def bs_dl(self, tier: int) -> np.ndarray:
        return self.mbs_dl if tier == MACRO else self.sap_dl

    def load(self, tier: int) -> np.ndarray:
        return self.mbs_load if tier == MACRO else self.sap_load

    def served(self, tier: int) -> np.ndarray:
        return self.mbs_served if tier == MACRO else self.sap_served

    def active_dl(self, tier: int) -> np.ndarray:
        """Indices of DL base stations of ``tier`` with at least one user."""
        return np.nonzero(self.bs_dl(tier) & (self.load(tier) > 0))[0]

    def served_ul_users(self, tier: int) -> tuple[np.ndarray, np.ndarray]:
        """(user indices, cell indices) of the served UL users of ``tier``."""
        served = self.served(tier)
        cells = np.nonzero(~self.bs_dl(tier) & (served >= 0))[0]
        return served[cells], cells

    def small_transmitters(self) -> np.ndarray:
        """Positions of active DL SAPs and served small-cell UL users."""
        users, _ = self.served_ul_users(SMALL)
        return np.concatenate([self.sap_xy[self.active_dl(SMALL)], self.user_xy[users]])


def iteration_streams(seed: int, index: int) -> dict:
    """Independent generators for each stage of snapshot ``index``."""
    children = np.random.SeedSequence([int(seed), int(index)]).spawn(5)
    names = ("placement", "association", "csma", "measure", "aloha")
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def _ppp(rng: np.random.Generator, density: float, side: float) -> np.ndarray:
    if density < 0 or math.isinf(density):
        raise ValueError("simulated densities must be finite and non-negative")
    n = rng.poisson(density * side * side)
    return np.mod(rng.random((n, 2)) * side, side)


def sample_realization(cfg: NetworkConfig, settings: SimSettings, iteration_index: int
                       ) -> NetworkRealization:
    """Draw base stations, users and potential D2D pairs for one snapshot."""
    streams = iteration_streams(settings.seed, iteration_index)
    rng = streams["placement"]
    side = settings.window
    mbs = _ppp(rng, cfg.lambda_m, side)
    mbs_dl = rng.random(len(mbs)) < cfg.q_dm
    sap = _ppp(rng, cfg.lambda_s, side)
    sap_dl = rng.random(len(sap)) < cfg.q_ds
    users = _ppp(rng, cfg.lambda_u, side)
    is_d2d = rng.random(len(users)) < cfg.zeta
    is_tx = rng.random(len(users)) < cfg.mu
    d2d_user = np.nonzero(is_d2d)[0]
    angle = rng.random(len(d2d_user)) * 2.0 * math.pi
    rx = users[d2d_user] + cfg.r_d * np.column_stack([np.cos(angle), np.sin(angle)])
    if settings.torus:
        rx = np.mod(rx, side)
    timers = rng.random(len(d2d_user))
    return NetworkRealization(
        window=side, torus=settings.torus, mbs_xy=mbs, mbs_dl=mbs_dl, sap_xy=sap, sap_dl=sap_dl,
        user_xy=users, user_d2d=is_d2d, user_tx=is_tx & ~is_d2d, d2d_user=d2d_user,
        d2d_rx_xy=rx, d2d_timer=timers, streams=streams,
    )


def _tree(points: np.ndarray, box: float) -> Optional[cKDTree]:
    if len(points) == 0:
        return None
    return cKDTree(points, boxsize=box if box > 0 else None)


def _nearest(points: np.ndarray, query: np.ndarray, box: float) -> tuple[np.ndarray, np.ndarray]:
    """Distance and index of the nearest point; inf and -1 when there is none."""
    if len(points) == 0 or len(query) == 0:
        return np.full(len(query), np.inf), np.full(len(query), -1, dtype=np.int64)
    d, i = _tree(points, box).query(query)
    return d, i.astype(np.int64)


def torus_d2(a: np.ndarray, b: np.ndarray, box: float) -> np.ndarray:
    """Squared distances between matching rows of ``a`` and ``b``."""
    d = np.abs(a - b)
    if box > 0:
        d = np.minimum(d, box - d)
    return (d * d).sum(axis=-1)


def associate(real: NetworkRealization, cfg: NetworkConfig,
              rng: Optional[np.random.Generator] = None) -> NetworkRealization:
    """Associate cellular users by biased received power and pick served users.

    Receivers compare ``P B d^-alpha`` over the nearest DL macro and small
    base stations; transmitters compare ``Q B d^-alpha`` over UL ones.
    Each cell with users serves one of them chosen uniformly at random.
    """
    rng = rng if rng is not None else real.streams.get("association", np.random.default_rng())
    box = real.box
    n = len(real.user_xy)
    tier = np.full(n, -1, dtype=np.int8)
    bs = np.full(n, -1, dtype=np.int64)
    cellular = ~real.user_d2d
    for is_dl in (True, False):
        sel = np.nonzero(cellular & (real.user_tx != is_dl))[0]
        q = real.user_xy[sel]
        if is_dl:
            gain_m, gain_s = cfg.p_m * cfg.b_dm, cfg.p_s * cfg.b_ds
            m_idx, s_idx = np.nonzero(real.mbs_dl)[0], np.nonzero(real.sap_dl)[0]
        else:
            gain_m, gain_s = cfg.q_m * cfg.b_um, cfg.q_s * cfg.b_us
            m_idx, s_idx = np.nonzero(~real.mbs_dl)[0], np.nonzero(~real.sap_dl)[0]
        dm, im = _nearest(real.mbs_xy[m_idx], q, box)
        ds, is_ = _nearest(real.sap_xy[s_idx], q, box)
        with np.errstate(divide="ignore"):
            score_m = math.log(gain_m) - cfg.alpha * np.log(dm)
            score_s = math.log(gain_s) - cfg.alpha * np.log(ds)
        has_m, has_s = im >= 0, is_ >= 0
        to_small = has_s & (~has_m | (score_s > score_m))
        to_macro = has_m & ~to_small
        tier[sel[to_macro]] = MACRO
        bs[sel[to_macro]] = m_idx[im[to_macro]]
        tier[sel[to_small]] = SMALL
        bs[sel[to_small]] = s_idx[is_[to_small]]

    order = rng.permutation(n)
    loads, served = [], []
    for t, n_bs in ((MACRO, len(real.mbs_xy)), (SMALL, len(real.sap_xy))):
        mine = tier == t
        loads.append(np.bincount(bs[mine], minlength=n_bs).astype(np.int64))
        srv = np.full(n_bs, -1, dtype=np.int64)
        ordered = order[mine[order]]
        cells, first = np.unique(bs[ordered], return_index=True)
        srv[cells] = ordered[first]
        served.append(srv)
    real.user_tier, real.user_bs = tier, bs
    real.mbs_load, real.sap_load = loads
    real.mbs_served, real.sap_served = served
    return real


def sensing_cutoff(power: float, rho: float, alpha: float, tail: float) -> float:
    """Distance beyond which ``power h d^-alpha >= rho`` has probability below ``tail``."""
    if math.isinf(rho):
        return 0.0
    if rho == 0:
        return math.inf
    return (-math.log(tail) * power / rho) ** (1.0 / alpha)


def _close_pairs(a: np.ndarray, b: Optional[np.ndarray], radius: float, box: float
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs within ``radius`` (``b=None`` gives unordered pairs within ``a``)."""
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    if len(a) == 0 or radius <= 0 or (b is not None and len(b) == 0):
        return empty
    ta = _tree(a, box)
    if b is None:
        pairs = ta.query_pairs(radius, output_type="ndarray")
        if len(pairs) == 0:
            return empty
        i, k = pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64)
    else:
        sdm = ta.sparse_distance_matrix(_tree(b, box), radius, output_type="ndarray")
        i, k = sdm["i"].astype(np.int64), sdm["j"].astype(np.int64)
    order = np.lexsort((k, i))
    return i[order], k[order]


def run_csma(real: NetworkRealization, cfg: NetworkConfig, rng: Optional[np.random.Generator] = None,
             settings: Optional[SimSettings] = None) -> NetworkRealization:
    """Decide which potential D2D transmitters stay active.

    A potential transmitter is silenced when it senses any active small-cell
    transmitter at power ``>= rho_s``, or when it senses another potential
    D2D transmitter with an earlier timer at power ``>= rho_d``. Every
    sensing link gets its own exponential fade; links farther than the
    distance where detection probability drops below
    ``settings.sensing_tail`` are skipped.
    """
    settings = settings or SimSettings()
    rng = rng if rng is not None else real.streams.get("csma", np.random.default_rng())
    box = real.box
    d2d = real.d2d_xy
    n = len(d2d)
    if n == 0:
        real.d2d_retained = np.zeros(0, dtype=bool)
        return real
    small = real.small_transmitters()
    al = cfg.alpha

    if cfg.rho_s == 0:
        blocked = np.full(n, len(small) > 0)
    else:
        cut = sensing_cutoff(cfg.q_d, cfg.rho_s, al, settings.sensing_tail)
        i, j = _close_pairs(d2d, small, cut, box)
        fades = rng.exponential(size=len(i))
        d2 = torus_d2(d2d[i], small[j], box)
        blocked = kernels.sensed_any(i, d2, fades, cfg.q_d, cfg.rho_s, al, n)

    if settings.contention_pool == "php":
        pool = np.nonzero(~blocked)[0]
    else:
        pool = np.arange(n)
    lost = np.zeros(n, dtype=bool)
    if cfg.rho_d == 0:
        # Everyone hears everyone: only the earliest timer in the pool survives.
        if len(pool):
            first = pool[np.lexsort((pool, real.d2d_timer[pool]))[0]]
            lost[pool] = True
            lost[first] = False
    elif len(pool) > 1:
        cut = sensing_cutoff(cfg.q_d, cfg.rho_d, al, settings.sensing_tail)
        a, b = _close_pairs(d2d[pool], None, cut, box)
        fades = rng.exponential(size=len(a))
        d2 = torus_d2(d2d[pool][a], d2d[pool][b], box)
        sub_lost = kernels.timer_losers(a, b, d2, fades, cfg.q_d, cfg.rho_d, al,
                                        real.d2d_timer[pool], len(pool))
        lost[pool[sub_lost]] = True
    real.d2d_retained = ~blocked & ~lost
    return real


def build_realization(cfg: NetworkConfig, settings: SimSettings, iteration_index: int
                      ) -> NetworkRealization:
    """Sample, associate and run CSMA for one snapshot."""
    real = sample_realization(cfg, settings, iteration_index)
    associate(real, cfg)
    run_csma(real, cfg, settings=settings)
    return real


def exclusion_radii_for(cfg: NetworkConfig) -> tuple[float, float]:
    return (exclusion_radius(cfg.rho_s, cfg.q_d, cfg.epsilon, cfg.alpha),
            exclusion_radius(cfg.rho_d, cfg.q_d, cfg.epsilon, cfg.alpha))
