"""Disc-hitting asymptotics for planar Brownian motion and their lattice twins.

Closed forms: the hitting-ratio formula log(t/r^2)/log(t/a^2), the window
formula log(t2/t1)/log(t2/a^2) with its a^2/t1 error budget, the modified
Bessel function K0 built from scratch, and the Laplace transform
A(a, r, lam) = K0(r sqrt(2 lam)) / (lam K0(a sqrt(2 lam))).  Monte Carlo:
an adaptive Brownian simulator with bridge-crossing corrections, and the
discrete origin-hitting estimator for the walk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .parallel import block_sizes, map_blocks
from .rng import RngStream
from .walks import as_point, free_window_positions

EULER_GAMMA = 0.5772156649015329
K0_SERIES_CUT = 10.0  # power series below, asymptotic expansion above
K0_DOMAIN = (1e-6, 30.0)


@dataclass(frozen=True)
class HittingQuery:
    """Disc of radius a, start radius r, observation window [t1, t2]."""

    a: float
    r: float
    t1: float
    t2: float
    c0_log: float | None = None  # radius expressed as c0 * log N, when relevant

    def __post_init__(self) -> None:
        if self.a <= 0 or self.r < 0:
            raise DomainError("need a > 0 and r >= 0")
        if not 0 <= self.t1 <= self.t2:
            raise DomainError("need 0 <= t1 <= t2")


@dataclass(frozen=True)
class BesselConfig:
    """Simulation controls for the radial process.

    Refinement triggers automatically whenever a segment is too coarse for
    the one-dimensional crossing law; refinement_radius forces it in
    addition below a fixed distance.
    """

    step: float = 1e-2
    refinement_radius: float | None = None
    crossing_correction: bool = True

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise DomainError("step must be positive")

    @property
    def refine_below(self) -> float:
        return 0.0 if self.refinement_radius is None else self.refinement_radius


def ratio_formula(a: float, r: float, t: float) -> float:
    """Leading term of P_r(disc of radius a hit by time t): log(t/r^2)/log(t/a^2)."""
    if not 0 < a <= r:
        raise DomainError("need 0 < a <= r")
    if t <= r * r:
        raise DomainError("need t > r^2")
    return math.log(t / (r * r)) / math.log(t / (a * a))


@dataclass(frozen=True)
class WindowValue:
    value: float
    error_budget: float  # additive term bounded by a^2/t1


def window_formula(q: HittingQuery) -> WindowValue:
    """Leading term of P_0(disc hit during [t1, t2]) with its error budget."""
    if q.a * q.a >= q.t1:
        raise DomainError("need a^2 < t1")
    value = math.log(q.t2 / q.t1) / math.log(q.t2 / (q.a * q.a))
    return WindowValue(value, q.a * q.a / q.t1)


# -- modified Bessel function K0 ------------------------------------------------

# Asymptotic correction coefficients: prod_{j<=k} (2j-1)^2 / (k! 8^k), signs alternate.
_K0_ASYMPTOTIC = []
_num = 1.0
for _k in range(1, 7):
    _num *= (2 * _k - 1) ** 2
    _K0_ASYMPTOTIC.append(_num / (math.factorial(_k) * 8.0**_k))


def bessel_k0(u: float) -> float:
    """Modified Bessel function of the second kind, order zero.

    Power series (with harmonic-number terms) for u <= 10, six-term
    asymptotic expansion beyond; absolute accuracy ~1e-12 on [1e-6, 30].
    """
    if u <= 0:
        raise DomainError("K0 requires u > 0")
    if u <= K0_SERIES_CUT:
        quarter = 0.25 * u * u
        term = 1.0  # (u^2/4)^k / (k!)^2
        i0 = 1.0
        hsum = 0.0  # sum of H_k (u^2/4)^k / (k!)^2
        h = 0.0
        for k in range(1, 200):
            term *= quarter / (k * k)
            h += 1.0 / k
            i0 += term
            hsum += h * term
            if term * (h + 1.0) < 1e-19 * (i0 + hsum):
                break
        return -(math.log(0.5 * u) + EULER_GAMMA) * i0 + hsum
    corr = 1.0
    sign = -1.0
    for k, c in enumerate(_K0_ASYMPTOTIC, start=1):
        corr += sign * c / u**k
        sign = -sign
    return math.sqrt(math.pi / (2.0 * u)) * math.exp(-u) * corr


def laplace_hitting(a: float, r: float, lam: float) -> float:
    """Laplace transform of the hitting-time law: K0(r sqrt(2 lam)) / (lam K0(a sqrt(2 lam)))."""
    if not 0 < a <= r:
        raise DomainError("need 0 < a <= r")
    if lam <= 0:
        raise DomainError("need lam > 0")
    if a == r:
        return 1.0 / lam
    ua = a * math.sqrt(2.0 * lam)
    ur = r * math.sqrt(2.0 * lam)
    if not (K0_DOMAIN[0] <= ua <= K0_DOMAIN[1] and K0_DOMAIN[0] <= ur <= K0_DOMAIN[1]):
        raise DomainError(f"Bessel arguments {ua:.3g}, {ur:.3g} outside supported range {K0_DOMAIN}")
    return bessel_k0(ur) / (lam * bessel_k0(ua))


# -- Brownian disc-hitting simulation --------------------------------------------


@dataclass(frozen=True)
class DiscHitEstimate:
    probability: float
    std_error: float
    replicates: int
    discretization_bias_flag: bool


def _refine_segments(z1, z2, dt, a, gen, depth_cap=26):
    """Hit indicator for near-disc segments, by bridge bisection.

    Each level samples the Brownian-bridge midpoint, prunes segments whose
    endpoint product makes a crossing negligible, and stops once the substep
    resolves the local distance scale; the leftover crossing probability is
    applied as a Bernoulli using the one-dimensional bridge-minimum law.
    ``dt`` is per-segment.
    """
    n = z1.shape[0]
    hit = np.zeros(n, dtype=bool)
    idx = np.arange(n)
    dt = np.asarray(dt, dtype=float).copy()
    capped = 0
    for _depth in range(depth_cap):
        d1 = np.hypot(z1[:, 0], z1[:, 1]) - a
        d2 = np.hypot(z2[:, 0], z2[:, 1]) - a
        direct = (d1 <= 0) | (d2 <= 0)
        hit[idx[direct]] = True
        keep = ~direct
        # prune: 1D bridge crossing prob exp(-2 d1 d2 / dt) below 1e-13
        dmin = np.minimum(d1, d2)
        cross_exp = 2.0 * d1 * d2 / dt
        near = keep & (cross_exp < 30.0)
        # fine enough once the substep std dev resolves the distance scale
        fine = near & (dt <= (np.maximum(dmin, a) / 4.0) ** 2)
        if fine.any():
            p = np.exp(-cross_exp[fine])
            cross = gen.random(int(fine.sum())) < p
            # idx repeats after splits: accumulate, never overwrite a hit
            np.logical_or.at(hit, idx[fine], cross)
        todo = near & ~fine
        if not todo.any():
            return hit, capped
        z1 = z1[todo]
        z2 = z2[todo]
        idx = idx[todo]
        parent_dt = dt[todo]
        # bridge midpoint over the parent segment: conditional variance dt/4
        mid = 0.5 * (z1 + z2) + gen.normal(size=z1.shape) * np.sqrt(parent_dt / 4.0)[:, None]
        dt = 0.5 * parent_dt
        z1 = np.concatenate([z1, mid])
        z2 = np.concatenate([mid, z2])
        idx = np.concatenate([idx, idx])
        dt = np.concatenate([dt, dt])
    # depth cap reached: apply the 1D correction as-is on what is left
    d1 = np.hypot(z1[:, 0], z1[:, 1]) - a
    d2 = np.hypot(z2[:, 0], z2[:, 1]) - a
    p = np.exp(-np.clip(2.0 * d1 * d2 / dt, 0.0, 50.0))
    crossed = (d1 <= 0) | (d2 <= 0) | (gen.random(d1.size) < p)
    np.logical_or.at(hit, idx, crossed)
    return hit, int(idx.size)


def _disc_hit_block(q: HittingQuery, cfg: BesselConfig, size: int, gen) -> tuple[int, int, int]:
    """(hits, capped_segments, size) for one replicate block.

    Paths carry their own clocks: far from the disc the step grows like
    (distance/8)^2 (capped by the remaining window), near the disc it falls
    back to the configured base step plus bridge refinement, so long windows
    cost roughly O(log) per quiet stretch instead of O(window/step).
    """
    a = q.a
    z = np.zeros((size, 2))
    z[:, 0] = q.r
    if q.t1 > 0:
        z += gen.normal(scale=math.sqrt(q.t1), size=(size, 2))
    alive = np.hypot(z[:, 0], z[:, 1]) > a
    hit_total = int(size - alive.sum())
    capped = 0
    z = z[alive]
    t = np.full(z.shape[0], q.t1)
    while z.shape[0]:
        d1 = np.hypot(z[:, 0], z[:, 1]) - a
        dt = np.minimum(np.maximum((d1 / 8.0) ** 2, cfg.step), q.t2 - t)
        z2 = z + gen.normal(size=z.shape) * np.sqrt(dt)[:, None]
        d2 = np.hypot(z2[:, 0], z2[:, 1]) - a
        hit = d2 <= 0.0
        if cfg.crossing_correction:
            dmin = np.minimum(d1, d2)
            ce = 2.0 * d1 * d2 / dt
            relevant = ~hit & (ce < 30.0)  # else crossing prob < 1e-13
            coarse = dt > (np.maximum(dmin, a) / 4.0) ** 2  # 1D law not valid yet
            near = relevant & (coarse | (dmin < cfg.refine_below))
            if near.any():
                sub_hit, sub_capped = _refine_segments(z[near], z2[near], dt[near], a, gen)
                hit[near] |= sub_hit
                capped += sub_capped
            direct = relevant & ~near
            if direct.any():
                sel = np.flatnonzero(direct)
                hit[sel] |= gen.random(sel.size) < np.exp(-ce[direct])
        hit_total += int(hit.sum())
        t = t + dt
        keep = ~hit & (t < q.t2 - 1e-12)
        z = z2[keep]
        t = t[keep]
    return hit_total, capped, size


def simulate_disc_hit(
    q: HittingQuery,
    cfg: BesselConfig,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> DiscHitEstimate:
    """MC estimate of P(inf_{[t1,t2]} |B_t| <= a) from radius r at time 0.

    The segment before t1 is jumped exactly (Gaussian), so discretization
    error only lives inside the window.  Near the disc, segments are refined
    by bridge bisection with the one-dimensional crossing correction; the
    bias flag reports when the disc is smaller than the base step can
    resolve or the refinement depth capped out.
    """
    if q.t1 > 0 and cfg.step > q.t1 / 100.0:
        raise DomainError("step must be at most t1/100")
    sizes = block_sizes(replicates, 1 << 15)

    def worker(b: int):
        return _disc_hit_block(q, cfg, sizes[b], rng.child(b).generator())

    parts = map_blocks(worker, len(sizes), threads)
    hits = sum(p[0] for p in parts)
    capped = sum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    p = hits / n
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n)
    flag = (q.a * q.a < cfg.step) or (capped > 0.001 * n) or not cfg.crossing_correction
    return DiscHitEstimate(p, se, n, flag)


# -- discrete origin hitting -----------------------------------------------------


@dataclass(frozen=True)
class DiscreteHitEstimate:
    probability: float
    std_error: float
    replicates: int


def discrete_hit_estimate(
    x,
    interval: tuple[int, int],
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> DiscreteHitEstimate:
    """MC probability that the walk from x visits the origin during [n1, n2]."""
    n1, n2 = interval
    if not 0 <= n1 <= n2:
        raise ValueError("need 0 <= n1 <= n2")
    start = as_point(x)
    width = n2 - n1
    sizes = block_sizes(replicates, max(16, (1 << 23) // (width + 1)))

    def worker(b: int) -> tuple[int, int]:
        gen = rng.child(b).generator()
        pos = free_window_positions(start, n1, n2, sizes[b], gen)
        hits = ((pos[..., 0] == 0) & (pos[..., 1] == 0)).any(axis=1)
        return int(hits.sum()), sizes[b]

    parts = map_blocks(worker, len(sizes), threads)
    hits = sum(p[0] for p in parts)
    n = sum(p[1] for p in parts)
    p = hits / n
    return DiscreteHitEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), n)


def le_gall_bound_check(
    z_points,
    l_k: int,
    constant: float,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> list[dict]:
    """Check (log l_k) h(z) <= C (log(l_k / |z|^2))_+ + C 1{|z|^2 >= l_k} pointwise,
    where h(z) is the probability of visiting the origin within l_k steps."""
    out = []
    for i, z in enumerate(z_points):
        z = as_point(z)
        est = discrete_hit_estimate(z, (0, l_k), replicates, rng.phase(i), threads)
        z2 = z.x * z.x + z.y * z.y
        lhs = math.log(l_k) * est.probability
        rhs = constant * max(math.log(l_k / z2), 0.0) if z2 > 0 else math.inf
        rhs += constant * (1.0 if z2 >= l_k else 0.0)
        out.append({"z": [z.x, z.y], "h": est.probability, "lhs": lhs, "rhs": rhs, "ok": lhs <= rhs})
    return out
