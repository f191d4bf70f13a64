"""Window intersection statistics for ensembles of conditioned walks.

Inside an observation window, each walk carries a ball-exit time sigma and
each pair (i, j) a guarded first-meeting time tau: the first instant the two
walks coincide before either has left the ball.  From these come the greedy
count R of index-disjoint meeting pairs, the all-pairs count R~, the
Poisson-approximation quantities (mu, e1, e2) with their total-variation
check, and confinement statistics over the full horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, IncompleteInputError
from .parallel import block_sizes, map_blocks
from .rng import RngStream
from .schedule import IntervalTk, Schedule
from .walks import WalkPath, as_point, bridge_window_positions, endpoint_positions, free_window_positions

INFINITE = math.inf
_BLOCK_CELL_TARGET = 1 << 23  # window-position cells per replicate block


@dataclass(frozen=True)
class EnsembleWindow:
    """q0 equally long paths, an observation interval and the exit ball."""

    paths: list[WalkPath]
    interval: IntervalTk
    ball_radius: float

    def __post_init__(self) -> None:
        if not self.paths:
            raise ValueError("need at least one path")
        n = self.paths[0].length
        if any(p.length != n for p in self.paths):
            raise ValueError("all paths must share the same length")
        if not 0 <= self.interval.start <= self.interval.end <= n:
            raise ValueError("interval must fit inside the paths")
        if self.ball_radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def pair_set(self) -> list[tuple[int, int]]:
        q = len(self.paths)
        return [(i, j) for i in range(q) for j in range(i + 1, q)]


@dataclass(frozen=True)
class IntersectionReport:
    sigma: list[float]  # absolute exit time per walk, inf if none
    tau_pairs: dict[tuple[int, int], float]  # guarded first meeting, inf if none
    greedy: list[tuple[int, int, int]]  # (time, i, j) in extraction order
    R_k: int
    R_tilde_k: int


def _meeting_times(positions: np.ndarray, radius: float, n0: int):
    """Exit indices and guarded meeting-time lists from (q, W+1, 2) positions."""
    q, w1, _ = positions.shape
    pos = positions.astype(np.int64, copy=False)
    r2 = pos[..., 0] ** 2 + pos[..., 1] ** 2
    outside = r2 > radius * radius
    sigma_idx = np.where(outside.any(axis=1), outside.argmax(axis=1), w1)
    meetings: dict[tuple[int, int], np.ndarray] = {}
    for i in range(q):
        for j in range(i + 1, q):
            horizon = min(sigma_idx[i], sigma_idx[j])  # strictly before either exit
            eq = (pos[i, :horizon, 0] == pos[j, :horizon, 0]) & (pos[i, :horizon, 1] == pos[j, :horizon, 1])
            meetings[(i, j)] = np.flatnonzero(eq) + n0
    return sigma_idx, meetings


def _greedy_extract(meetings: Mapping[tuple[int, int], np.ndarray]) -> list[tuple[int, int, int]]:
    """Chronological extraction of index-disjoint meeting pairs.

    Each round picks the earliest meeting time strictly after the previous
    pick among pairs disjoint from every particle already used (ties broken
    by pair order); this follows the recursive definition literally rather
    than maximizing.
    """
    chosen: list[tuple[int, int, int]] = []
    used: set[int] = set()
    t_prev = -np.inf
    while True:
        best: tuple[int, int, int] | None = None
        for (i, j), times in sorted(meetings.items()):
            if i in used or j in used:
                continue
            later = times[np.searchsorted(times, t_prev, side="right") :]
            if later.size and (best is None or int(later[0]) < best[0]):
                best = (int(later[0]), i, j)
        if best is None:
            return chosen
        chosen.append(best)
        used.update(best[1:])
        t_prev = best[0]


def analyze_window(w: EnsembleWindow) -> IntersectionReport:
    """Exit times, guarded pair meetings, greedy and all-pair counts."""
    a, b = w.interval.start, w.interval.end
    positions = np.stack([p.positions()[a : b + 1] for p in w.paths])
    return _report_from_positions(positions, w.ball_radius, a)


def _report_from_positions(positions: np.ndarray, radius: float, n0: int) -> IntersectionReport:
    sigma_idx, meetings = _meeting_times(positions, radius, n0)
    w1 = positions.shape[1]
    sigma = [float(n0 + s) if s < w1 else INFINITE for s in sigma_idx]
    tau = {p: (float(t[0]) if t.size else INFINITE) for p, t in meetings.items()}
    greedy = _greedy_extract(meetings)
    r_tilde = sum(1 for t in tau.values() if t < INFINITE)
    return IntersectionReport(sigma, tau, greedy, len(greedy), r_tilde)


def max_disjoint_oracle(w: EnsembleWindow) -> int:
    """Exhaustive maximum length of a time-increasing disjoint meeting sequence.

    Brute force over ordered sequences of index-disjoint pairs with strictly
    increasing, realizable meeting times; exists to measure how far the
    greedy extraction can fall short.
    """
    if len(w.paths) > 12:
        raise CapacityError("oracle search budget is q0 <= 12")
    a = w.interval.start
    positions = np.stack([p.positions()[a : w.interval.end + 1] for p in w.paths])
    _, meetings = _meeting_times(positions, w.ball_radius, a)
    pairs = [(p, t) for p, t in meetings.items() if t.size]
    q = len(w.paths)

    best = 0

    def extend(used: int, t_prev: float, depth: int) -> None:
        nonlocal best
        best = max(best, depth)
        free = q - bin(used).count("1")
        if depth + free // 2 <= best:
            return
        for (i, j), times in pairs:
            if used & (1 << i) or used & (1 << j):
                continue
            nxt = times[np.searchsorted(times, t_prev, side="right") :]
            if nxt.size:
                extend(used | (1 << i) | (1 << j), float(nxt[0]), depth + 1)

    extend(0, -np.inf, 0)
    return best


# -- Poisson approximation machinery ------------------------------------------


@dataclass(frozen=True)
class PoissonFragment:
    mu: float
    e1: float
    e2: float
    chen_stein_bound: float


def chen_stein_bound(
    pair_probs: Mapping[tuple[int, int], float],
    joint_probs: Mapping[tuple[tuple[int, int], tuple[int, int]], float],
) -> PoissonFragment:
    """Assemble mu, e1, e2 and the bound 2(e1 + e2) from probability tables.

    The dependence neighborhood of a pair is every pair sharing one of its
    indices, itself included for e1 and excluded for e2.  Joint keys may be
    given in either order.
    """
    pairs = sorted(pair_probs)

    def joint(a: tuple[int, int], b: tuple[int, int]) -> float:
        v = joint_probs.get((a, b), joint_probs.get((b, a)))
        if v is None:
            raise IncompleteInputError(f"missing joint probability for {(a, b)}")
        return v

    mu = e1 = e2 = 0.0
    for a in pairs:
        mu += pair_probs[a]
        for b in pairs:
            if set(a) & set(b):
                e1 += pair_probs[a] * pair_probs[b]
                if a != b:
                    e2 += joint(a, b)
    return PoissonFragment(mu, e1, e2, 2.0 * (e1 + e2))


def poisson_pmf(mu: float, k_max: int) -> np.ndarray:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        out = np.zeros(k_max + 1)
        out[0] = 1.0
        return out
    k = np.arange(k_max + 1)
    return np.exp(k * math.log(mu) - mu - gammaln(k + 1))


def tv_to_poisson(counts, mu: float) -> float:
    """Total variation between an empirical count histogram and Poisson(mu).

    Mass of the reference above the observed maximum enters at weight 1/2,
    exactly as if the empirical pmf were zero there.
    """
    if isinstance(counts, Mapping):
        k_max = max(counts)
        hist = np.zeros(k_max + 1)
        for k, c in counts.items():
            hist[k] = c
    else:
        hist = np.asarray(counts, dtype=float)
        k_max = hist.size - 1
    total = hist.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    emp = hist / total
    ref = poisson_pmf(mu, k_max)
    tail = max(0.0, 1.0 - float(ref.sum()))
    return 0.5 * float(np.abs(emp - ref).sum()) + 0.5 * tail


# -- windowed ensemble experiments ---------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    """Standalone observation window: the closed interval [t1, t1 + l] inside
    a horizon of t1 + 2l + nu2*l steps, exit ball of radius M sqrt(l).

    l = 0 gives a singleton window {t1}; pass horizon_override when the
    enclosing horizon does not follow the schedule shape.
    """

    l: int
    t1: int
    nu2: int = 10
    M: float = 8.0
    horizon_override: int | None = None

    def __post_init__(self) -> None:
        if self.l < 0 or self.t1 < 0 or self.nu2 < 1 or self.M <= 0:
            raise ValueError("invalid window")
        if self.horizon_override is not None and self.horizon_override < self.t2:
            raise ValueError("horizon must reach the window end")

    @property
    def t2(self) -> int:
        return self.t1 + self.l

    @property
    def horizon(self) -> int:
        if self.horizon_override is not None:
            return self.horizon_override
        return self.t1 + 2 * self.l + self.nu2 * self.l

    @property
    def radius(self) -> float:
        return self.M * math.sqrt(max(self.l, 1))

    @classmethod
    def from_schedule(cls, s: Schedule, k: int, nu2: int, m_ball: float) -> "WindowSpec":
        iv = s.interval(k)
        return cls(l=iv.length, t1=iv.start, nu2=nu2, M=m_ball)


@dataclass(frozen=True)
class ProbabilityEstimate:
    value: float
    std_error: float


def _bernoulli(hits: float, n: int) -> ProbabilityEstimate:
    p = hits / n
    return ProbabilityEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / n))


def _window_block_positions(
    spec: WindowSpec,
    starts: Sequence,
    ends: Sequence | None,
    count: int,
    gen: np.random.Generator,
) -> np.ndarray:
    """(count, q, W+1, 2) window positions; bridges when ends given, else free."""
    cols = []
    for w, s in enumerate(starts):
        if ends is None:
            cols.append(free_window_positions(s, spec.t1, spec.t2, count, gen))
        else:
            cols.append(bridge_window_positions(spec.horizon, s, ends[w], spec.t1, spec.t2, count, gen))
    return np.stack(cols, axis=1)


def _guarded_meet_indicators(positions: np.ndarray, radius: float, guarded: bool = True) -> np.ndarray:
    """(count, P) booleans: pair (i, j) met inside the window (before exits)."""
    count, q, w1, _ = positions.shape
    pos = positions.astype(np.int64, copy=False)
    if guarded:
        r2 = pos[..., 0] ** 2 + pos[..., 1] ** 2
        outside = r2 > radius * radius
        sigma_idx = np.where(outside.any(axis=2), outside.argmax(axis=2), w1)  # (count, q)
    idx = np.arange(w1)
    out = np.empty((count, q * (q - 1) // 2), dtype=bool)
    p = 0
    for i in range(q):
        for j in range(i + 1, q):
            eq = (pos[:, i, :, 0] == pos[:, j, :, 0]) & (pos[:, i, :, 1] == pos[:, j, :, 1])
            if guarded:
                eq &= idx[None, :] < np.minimum(sigma_idx[:, i], sigma_idx[:, j])[:, None]
            out[:, p] = eq.any(axis=1)
            p += 1
    return out


def _window_blocks(total: int, spec: WindowSpec, q: int) -> list[int]:
    per_replicate = max(q * (spec.l + 1), 1)
    return block_sizes(total, max(8, _BLOCK_CELL_TARGET // per_replicate))


@dataclass(frozen=True)
class PairProbabilityReport:
    """Three estimators of the guarded pair-meeting probability."""

    conditioned: ProbabilityEstimate  # bridge endpoints, exit guard on
    unconditioned: ProbabilityEstimate  # free walks, exit guard on
    unguarded: ProbabilityEstimate  # free walks, no exit guard
    replicates: int


def estimate_pair_probability(
    spec: WindowSpec,
    x: Sequence,
    y: Sequence,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> PairProbabilityReport:
    """P(guarded meeting in the window) for two bridged walks, plus the
    unconditioned and unguarded companions estimated from free walks."""
    starts = [as_point(p) for p in x]
    ends = [as_point(p) for p in y]
    sizes = _window_blocks(replicates, spec, 2)

    def bridge_block(b: int) -> np.ndarray:
        gen = rng.phase(0).child(b).generator()
        pos = _window_block_positions(spec, starts, ends, sizes[b], gen)
        return _guarded_meet_indicators(pos, spec.radius)[:, 0]

    def free_block(b: int) -> tuple[np.ndarray, np.ndarray]:
        gen = rng.phase(1).child(b).generator()
        pos = _window_block_positions(spec, starts, None, sizes[b], gen)
        return (
            _guarded_meet_indicators(pos, spec.radius)[:, 0],
            _guarded_meet_indicators(pos, spec.radius, guarded=False)[:, 0],
        )

    cond = np.concatenate(map_blocks(bridge_block, len(sizes), threads))
    free = map_blocks(free_block, len(sizes), threads)
    guard = np.concatenate([f[0] for f in free])
    loose = np.concatenate([f[1] for f in free])
    n = cond.size
    return PairProbabilityReport(
        _bernoulli(float(cond.sum()), n),
        _bernoulli(float(guard.sum()), n),
        _bernoulli(float(loose.sum()), n),
        n,
    )


@dataclass(frozen=True)
class TripleProbabilityReport:
    both: ProbabilityEstimate  # pairs (1,2) and (1,3) both meet
    p_12: ProbabilityEstimate
    p_13: ProbabilityEstimate
    replicates: int


def estimate_triple_probability(
    spec: WindowSpec,
    x: Sequence,
    y: Sequence,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> TripleProbabilityReport:
    """Joint guarded meeting probability of two pairs sharing walk 1."""
    starts = [as_point(p) for p in x]
    ends = [as_point(p) for p in y]
    sizes = _window_blocks(replicates, spec, 3)

    def block(b: int) -> np.ndarray:
        gen = rng.phase(0).child(b).generator()
        pos = _window_block_positions(spec, starts, ends, sizes[b], gen)
        return _guarded_meet_indicators(pos, spec.radius)  # pair order: (0,1), (0,2), (1,2)

    ind = np.vstack(map_blocks(block, len(sizes), threads))
    n = ind.shape[0]
    return TripleProbabilityReport(
        _bernoulli(float((ind[:, 0] & ind[:, 1]).sum()), n),
        _bernoulli(float(ind[:, 0].sum()), n),
        _bernoulli(float(ind[:, 1].sum()), n),
        n,
    )


@dataclass(frozen=True)
class PoissonReport:
    mu: float
    e1: float
    e2: float
    chen_stein_bound: float
    empirical_tv: float
    replicates: int
    mu_std_error: float
    e1_std_error: float
    e2_std_error: float
    tv_sampling_error: float
    propagated_error: float
    histogram_r_tilde: dict[int, int]
    histogram_r: dict[int, int]
    pair_probabilities: list[float]

    def passes_bound(self, slack: float = 5.0) -> bool:
        return self.empirical_tv <= self.chen_stein_bound + slack * self.propagated_error


def _neighbor_mask(q: int) -> np.ndarray:
    pairs = [(i, j) for i in range(q) for j in range(i + 1, q)]
    m = np.zeros((len(pairs), len(pairs)), dtype=bool)
    for a, pa in enumerate(pairs):
        for b, pb in enumerate(pairs):
            m[a, b] = bool(set(pa) & set(pb))
    return m


def poisson_window_experiment(
    q0: int,
    spec: WindowSpec,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
    endpoints=None,
) -> PoissonReport:
    """Bridge an ensemble of q0 walks through the window, observe all guarded
    pair meetings, and compare the law of the all-pairs count to Poisson(mu).

    e1 comes from per-pair meeting frequencies (delta method error), e2 from
    the per-replicate sum of joint neighbor indicators, the total-variation
    distance from the empirical histogram of the all-pairs count against
    Poisson at the measured mean.
    """
    if q0 < 2:
        raise ValueError("need q0 >= 2")
    starts = [as_point(p) for p in (endpoints[0] if endpoints else [(0, 0)] * q0)]
    ends = [as_point(p) for p in (endpoints[1] if endpoints else [(0, 0)] * q0)]
    sizes = _window_blocks(replicates, spec, q0)

    def block(b: int):
        gen = rng.phase(0).child(b).generator()
        pos = _window_block_positions(spec, starts, ends, sizes[b], gen)
        ind = _guarded_meet_indicators(pos, spec.radius)
        r_tilde = ind.sum(axis=1)
        r_greedy = r_tilde.copy()
        for r in np.flatnonzero(r_tilde >= 2):  # greedy differs only on index-sharing multi-pair windows
            rep = _report_from_positions(pos[r], spec.radius, spec.t1)
            r_greedy[r] = rep.R_k
        return ind, r_tilde, r_greedy

    parts = map_blocks(block, len(sizes), threads)
    ind = np.vstack([p[0] for p in parts])
    r_tilde = np.concatenate([p[1] for p in parts])
    r_greedy = np.concatenate([p[2] for p in parts])
    n = ind.shape[0]

    p_hat = ind.mean(axis=0)
    mu = float(p_hat.sum())  # equals mean(r_tilde)
    mu_se = float(r_tilde.std(ddof=1) / math.sqrt(n))

    nb = _neighbor_mask(q0)
    joint = (ind.astype(np.float64).T @ ind.astype(np.float64)) / n
    e1 = float((nb * np.outer(p_hat, p_hat)).sum())
    grad = 2.0 * (nb @ p_hat)
    cov = joint - np.outer(p_hat, p_hat)
    e1_se = float(math.sqrt(max(grad @ cov @ grad, 0.0) / n))
    off = nb & ~np.eye(nb.shape[0], dtype=bool)
    per_rep_e2 = np.einsum("ra,rb,ab->r", ind.astype(np.float64), ind.astype(np.float64), off.astype(np.float64))
    e2 = float(per_rep_e2.mean())
    e2_se = float(per_rep_e2.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    k_max = int(r_tilde.max())
    hist = np.bincount(r_tilde, minlength=k_max + 1).astype(float)
    tv = tv_to_poisson(hist, mu)
    emp = hist / n
    tv_se = float(0.5 * np.sqrt(emp * (1.0 - emp) / n).sum())
    propagated = math.sqrt(tv_se**2 + mu_se**2 + 4.0 * e1_se**2 + 4.0 * e2_se**2)

    return PoissonReport(
        mu=mu,
        e1=e1,
        e2=e2,
        chen_stein_bound=2.0 * (e1 + e2),
        empirical_tv=tv,
        replicates=n,
        mu_std_error=mu_se,
        e1_std_error=e1_se,
        e2_std_error=e2_se,
        tv_sampling_error=tv_se,
        propagated_error=propagated,
        histogram_r_tilde={int(k): int(c) for k, c in enumerate(np.bincount(r_tilde)) if c},
        histogram_r={int(k): int(c) for k, c in enumerate(np.bincount(r_greedy)) if c},
        pair_probabilities=[float(v) for v in p_hat],
    )


# -- confinement over the full horizon -----------------------------------------


@dataclass(frozen=True)
class ConfinementStats:
    checkpoint_times: list[int]
    g_mean: list[float]  # mean |G_k| per block k = 1..K
    a_rate: list[float]  # empirical P(A_k)
    d_estimate: float  # empirical P(all A_k)
    d_std_error: float
    replicates: int
    q: int


def confinement_stats(
    q: int,
    schedule: Schedule,
    delta: float,
    epsilon0: float,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
) -> ConfinementStats:
    """Ball-membership statistics of q free walks at the block boundaries.

    Walk positions at the checkpoint times are sampled exactly through
    rotated binomial increments, so the cost per replicate is O(q K) and
    independent of the horizon.
    """
    if schedule.K < 1:
        raise ValueError("need a schedule with K >= 1")
    if not 0 < delta < 1 or not 0 < epsilon0 < 1:
        raise ValueError("delta and epsilon0 must lie in (0,1)")
    kk = schedule.K
    times = [schedule.L[k] for k in range(1, kk + 2)]
    radii_sq = np.array([(math.sqrt(t) / delta) ** 2 for t in times])
    need = (1.0 - epsilon0) * q
    sizes = block_sizes(replicates, max(8, _BLOCK_CELL_TARGET // (q * (kk + 1))))

    def block(b: int):
        gen = rng.child(b).generator()
        pos = endpoint_positions((0, 0), times, sizes[b] * q, gen).reshape(sizes[b], q, kk + 1, 2)
        r2 = pos[..., 0] ** 2 + pos[..., 1] ** 2
        inside = r2 <= radii_sq[None, None, :]
        g = (inside[:, :, :-1] & inside[:, :, 1:]).sum(axis=1)  # (B, K) counts |G_k|
        a = g >= need
        return g.sum(axis=0), a.sum(axis=0), a.all(axis=1).sum(), sizes[b]

    parts = map_blocks(block, len(sizes), threads)
    g_tot = np.sum([p[0] for p in parts], axis=0)
    a_tot = np.sum([p[1] for p in parts], axis=0)
    d_hits = sum(p[2] for p in parts)
    n = sum(p[3] for p in parts)
    d = _bernoulli(float(d_hits), n)
    return ConfinementStats(
        checkpoint_times=times,
        g_mean=[float(v) / n for v in g_tot],
        a_rate=[float(v) / n for v in a_tot],
        d_estimate=d.value,
        d_std_error=d.std_error,
        replicates=n,
        q=q,
    )
