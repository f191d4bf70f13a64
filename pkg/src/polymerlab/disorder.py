"""Scalar disorder quantities and moments of the normalized partition function.

The q-th moment of the partition function equals the exponential moment of
the total pairwise intersection count of q independent walks, so no
environment is ever sampled here: the second moment is computed exactly
from the distribution of the return local time, higher moments by direct
Monte Carlo over walk ensembles.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import CapacityError, DomainError, InvalidEndpointError
from .parallel import block_sizes, map_blocks
from .rng import RngStream
from .walks import (
    LOG2,
    _ensure_logfact,
    as_point,
    bridge_window_positions,
    log_transition,
)

EXACT_N_BUDGET = 10**5
MC_BLOCK_TARGET = 1 << 24  # step-array entries per block; fixed, so thread-count-proof


def log_return_masses(n_max: int) -> np.ndarray:
    """log p_{2n}(0) for n = 1..n_max (doubled-walk return weights)."""
    table = _ensure_logfact(2 * n_max)
    n = np.arange(1, n_max + 1)
    # p_{2n}(0) = (C(2n, n) / 4^n)^2
    return 2.0 * (table[2 * n] - 2.0 * table[n] - 2 * n * LOG2)


def expected_pair_intersections(n: int) -> float:
    """R_N = sum_{m<=N} p_{2m}(0), the mean pair intersection count."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    return float(np.sum(np.exp(log_return_masses(n))))


@dataclass(frozen=True)
class DisorderParams:
    """All scalar disorder quantities derived from (beta_hat, N)."""

    beta_hat: float
    N: int
    R_N: float
    beta_N: float
    lambda_sq: float | None  # None when beta_hat >= 1 (limit formulas disabled)


def build_disorder(beta_hat: float, n: int) -> DisorderParams:
    if beta_hat <= 0:
        raise DomainError("beta_hat must be positive")
    if n < 1:
        raise ValueError("horizon must be >= 1")
    r = expected_pair_intersections(n)
    lam = -math.log1p(-beta_hat**2) if beta_hat < 1 else None
    return DisorderParams(beta_hat, n, r, beta_hat / math.sqrt(r), lam)


def lambda_k_sq(params: DisorderParams, l_k: int) -> float:
    """Scale-k disorder variance: -log(1 - beta_hat^2 log(l_k)/log N)."""
    if not 1 <= l_k <= params.N:
        raise ValueError("need 1 <= l_k <= N")
    if params.N < 2:
        raise DomainError("log N vanishes for N < 2")
    arg = 1.0 - params.beta_hat**2 * math.log(l_k) / math.log(params.N)
    if arg <= 0:
        raise DomainError(f"disorder too strong at this scale: 1 - b^2 log(l_k)/log N = {arg}")
    return -math.log(arg)


def subcritical_prediction(params: DisorderParams, q: int) -> float:
    """Limiting moment value exp(lambda^2 * C(q,2)) for beta_hat < 1."""
    if params.lambda_sq is None:
        raise DomainError("limit prediction requires beta_hat < 1")
    return math.exp(params.lambda_sq * math.comb(q, 2))


def qlarge_lower_bound_log(params: DisorderParams, q: int) -> float:
    """Log of the confinement lower bound for large q."""
    if q < 2:
        raise ValueError("q must be >= 2")
    return params.beta_N**2 * (params.N / 2.0) * math.comb(q, 2) - q * (params.N // 2) * math.log(4.0)


# -- local time distribution ---------------------------------------------------


@dataclass(frozen=True)
class LocalTimePMF:
    """Distribution of the return count L_N = sum_{n<=N} 1{S_{2n}=0}."""

    horizon: int
    masses: np.ndarray  # masses[k] = P(L_N = k), truncated
    truncation_tail: float

    def as_pairs(self) -> list[tuple[int, float]]:
        return [(k, float(p)) for k, p in enumerate(self.masses)]

    def mean(self) -> float:
        return float(np.dot(np.arange(self.masses.size), self.masses))


def _conv(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """(a * b) truncated to indices <= n, no sign adjustment."""
    if min(a.size, b.size) <= 256:
        return np.convolve(a, b)[: n + 1]
    return fftconvolve(a, b)[: n + 1]


def _first_return_masses(n: int) -> np.ndarray:
    """f[m-1] = P(first doubled-time return at m), m = 1..n, via 1/G(z).

    G(z) = 1 + sum r_m z^m collects the return weights; the first-return
    series is F = 1 - 1/G.  The reciprocal is computed by Newton doubling,
    which keeps the cost at O(n log n) instead of the O(n^2) recurrence.
    """
    g = np.empty(n + 1)
    g[0] = 1.0
    g[1:] = np.exp(log_return_masses(n))
    inv = np.array([1.0])
    while inv.size <= n:
        m = min(2 * inv.size, n + 1)
        correction = -_conv(g[:m], inv, m - 1)
        correction[0] += 2.0
        inv = _conv(inv, correction, m - 1)
    return np.clip(-inv[1 : n + 1], 0.0, None)


def _pmf_atoms(n: int, stop, f: np.ndarray | None = None) -> tuple[list[float], float]:
    """P(L_N = k) atoms for k = 0, 1, ... until ``stop(k, remaining)`` or k = N.

    ``stop`` receives an upper bound on the remaining mass: the float
    residual 1 - sum(atoms) saturates at roundoff, so it is capped by the
    exact geometric bound P(L >= k) <= p_ret^k.
    """
    if f is None:
        f = _first_return_masses(n)
    p_ret = float(np.sum(f))
    f_full = np.concatenate([[0.0], f])  # indexed by doubled time m = 0..n
    survival = np.clip(1.0 - np.cumsum(f_full), 0.0, 1.0)
    survival_rev = survival[::-1].copy()
    masses = [float(survival[n])]
    mass_left = 1.0 - masses[0]
    u = f_full  # law of the k-th return time, currently k = 1
    k = 1
    while k <= n:
        bound = min(mass_left, p_ret**k) if p_ret < 1.0 else mass_left
        if bound <= 1e-18 or stop(k, bound):
            break
        pk = min(float(np.dot(u, survival_rev[: u.size])), mass_left)
        masses.append(pk)
        mass_left -= pk
        k += 1
        u = _conv(u, f_full, n)
    return masses, max(mass_left, 0.0)


def local_time_pmf(n: int, tail_cut: float = 1e-12) -> LocalTimePMF:
    """Exact (to convolution roundoff) pmf of L_N, truncated below tail_cut."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 < tail_cut <= 1e-6:
        raise ValueError("tail_cut must be in (0, 1e-6]")
    if n > EXACT_N_BUDGET:
        raise CapacityError(f"exact local-time DP budget is N <= {EXACT_N_BUDGET}; use Monte Carlo")
    masses, tail = _pmf_atoms(n, lambda k, mass_left: mass_left < tail_cut)
    return LocalTimePMF(n, np.array(masses), tail)


def exact_second_moment(params: DisorderParams) -> float:
    """E[W_N^2] = E[e^{beta_N^2 L_N}], summed over the exact local-time pmf.

    The exponential tilt amplifies the truncated tail, so atoms are extended
    until the geometric tail bound sum_{j>k} P(L=j) e^{b^2 j} drops below
    1e-12 (absolute; the value is >= 1), or the full support k <= N is
    exhausted when the geometric bound does not contract.
    """
    n, b2 = params.N, params.beta_N**2
    if n > EXACT_N_BUDGET:
        raise CapacityError(f"exact second moment limited to N <= {EXACT_N_BUDGET}; use mc_moment")

    f = _first_return_masses(n)
    p_ret = float(np.sum(f))  # an extra return costs at most one more first-return
    growth = p_ret * math.exp(b2)

    def stop(k: int, mass_left: float) -> bool:
        if growth >= 1.0:
            return False  # no contraction: walk the full support
        return mass_left * math.exp(b2 * (k + 1)) / (1.0 - growth) < 1e-12

    masses, _ = _pmf_atoms(n, stop, f=f)
    k = np.arange(len(masses))
    return float(np.dot(masses, np.exp(b2 * k)))


# -- Monte Carlo moments -------------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    q: int
    estimate: float
    std_error: float
    replicates: int
    seed: int
    wall_time: float


def _reduce_weights(partials: list[tuple[float, float, int]], q: int, seed: int, t0: float) -> MomentEstimate:
    total = math.fsum(p[0] for p in partials)
    total_sq = math.fsum(p[1] for p in partials)
    count = sum(p[2] for p in partials)
    mean = total / count
    var = max(total_sq - count * mean * mean, 0.0) / (count - 1) if count > 1 else 0.0
    return MomentEstimate(q, mean, math.sqrt(var / count), count, seed, time.perf_counter() - t0)


def _pair_block(params: DisorderParams, rng: RngStream, block: int, size: int) -> tuple[float, float, int]:
    """q = 2 block: the pair coincidence count equals the return count of one
    doubled difference walk, so a single walk per replicate suffices."""
    gen = rng.child(block).generator()
    n2 = 2 * params.N
    b2 = params.beta_N**2
    u = np.cumsum((gen.integers(0, 2, size=(size, n2), dtype=np.int8) << 1) - 1, axis=1, dtype=np.int32)
    v = np.cumsum((gen.integers(0, 2, size=(size, n2), dtype=np.int8) << 1) - 1, axis=1, dtype=np.int32)
    hits = ((u[:, 1::2] == 0) & (v[:, 1::2] == 0)).sum(axis=1)
    w = np.exp(b2 * hits)
    return float(np.sum(w)), float(np.dot(w, w)), size


def _ensemble_block(params: DisorderParams, q: int, rng: RngStream, block: int, size: int) -> tuple[float, float, int]:
    """q >= 3 block: q independent walks, pairwise coincidences counted directly.

    Differences against a reference walk are not independent walks, so no
    reduction applies beyond q = 2.
    """
    gen = rng.child(block).generator()
    n = params.N
    b2 = params.beta_N**2
    u = np.cumsum((gen.integers(0, 2, size=(size, q, n), dtype=np.int8) << 1) - 1, axis=2, dtype=np.int32)
    v = np.cumsum((gen.integers(0, 2, size=(size, q, n), dtype=np.int8) << 1) - 1, axis=2, dtype=np.int32)
    counts = np.zeros(size, dtype=np.int64)
    for i in range(q - 1):
        for j in range(i + 1, q):
            counts += ((u[:, i, :] == u[:, j, :]) & (v[:, i, :] == v[:, j, :])).sum(axis=1)
    w = np.exp(b2 * counts)
    return float(np.sum(w)), float(np.dot(w, w)), size


def mc_moment(
    params: DisorderParams,
    q: int,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> MomentEstimate:
    """Unbiased MC estimate of E[W_N^q] over independent q-walk ensembles.

    Deterministic in (seed, replicates): work is split into fixed-size blocks
    with per-block streams and reduced in block order, so the thread count
    never changes the result.
    """
    t0 = time.perf_counter()
    if q < 1:
        raise ValueError("q must be >= 1")
    if q == 1:
        return MomentEstimate(1, 1.0, 0.0, replicates, rng.seed, time.perf_counter() - t0)
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    walks = 1 if q == 2 else q
    sizes = block_sizes(replicates, max(16, MC_BLOCK_TARGET // (2 * walks * params.N)))
    if q == 2:
        worker = lambda b: _pair_block(params, rng, b, sizes[b])
    else:
        worker = lambda b: _ensemble_block(params, q, rng, b, sizes[b])
    partials = map_blocks(worker, len(sizes), threads)
    return _reduce_weights(partials, q, rng.seed, t0)


def estimate_pair_exp_moment(
    l: int,
    horizon: int,
    meet_point,
    end1,
    end2,
    beta_sq: float,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> MomentEstimate:
    """Conditioned two-walk exponential moment over the first l steps.

    Both walks start at meet_point and are bridged to their endpoints at
    ``horizon``; the weight is exp(beta_sq * #{coincidences at n = 1..l}).
    """
    t0 = time.perf_counter()
    if not 0 <= l <= horizon:
        raise ValueError("need 0 <= l <= horizon")
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    meet, e1, e2 = as_point(meet_point), as_point(end1), as_point(end2)
    for e in (e1, e2):
        if log_transition(horizon, e - meet) == -math.inf:
            raise InvalidEndpointError(f"{tuple(e)} unreachable from {tuple(meet)} in {horizon} steps")
    sizes = block_sizes(replicates, max(16, MC_BLOCK_TARGET // (4 * max(l, 1))))

    def worker(b: int) -> tuple[float, float, int]:
        gen = rng.child(b).generator()
        size = sizes[b]
        p1 = bridge_window_positions(horizon, meet, e1, 0, l, size, gen)
        p2 = bridge_window_positions(horizon, meet, e2, 0, l, size, gen)
        eq = (p1[:, 1:, 0] == p2[:, 1:, 0]) & (p1[:, 1:, 1] == p2[:, 1:, 1])
        w = np.exp(beta_sq * eq.sum(axis=1))
        return float(np.sum(w)), float(np.dot(w, w)), size

    partials = map_blocks(worker, len(sizes), threads)
    return _reduce_weights(partials, 2, rng.seed, t0)
