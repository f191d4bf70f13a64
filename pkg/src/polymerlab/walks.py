"""Exact kernels and samplers for the simple random walk on the 2D lattice.

The walk factorizes in rotated coordinates: with u = x + y and v = x - y,
the two components of an n-step walk are independent 1D +/-1 walks.  All
exact transition weights, bridge samplers and window samplers below exploit
that factorization; probabilities are assembled in log space from a lazily
grown log-factorial table so that horizons up to 2*10^7 steps neither
overflow nor underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapacityError, InvalidEndpointError

LOG_FACT_CAP = 2 * 10**7
LOG2 = math.log(2.0)

_STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int8)


class LatticePoint(NamedTuple):
    x: int
    y: int

    def __add__(self, other):  # type: ignore[override]
        return LatticePoint(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return LatticePoint(self.x - other[0], self.y - other[1])


def as_point(p: Sequence[int]) -> LatticePoint:
    return p if isinstance(p, LatticePoint) else LatticePoint(int(p[0]), int(p[1]))


def reachable(n: int, p: Sequence[int]) -> bool:
    """Whether a site is n-reachable: parity match and inside the diamond."""
    x, y = int(p[0]), int(p[1])
    return (x + y - n) % 2 == 0 and abs(x) + abs(y) <= n


# -- log-factorial table ----------------------------------------------------

_logfact = np.zeros(1)
_logfact_last_ld = np.longdouble(0.0)


def _ensure_logfact(n: int) -> np.ndarray:
    """Grow the cached table of log(k!) to cover k <= n."""
    global _logfact, _logfact_last_ld
    if n >= LOG_FACT_CAP:
        raise CapacityError(f"log-factorial table capped at {LOG_FACT_CAP}, got {n}")
    if n < _logfact.size:
        return _logfact
    new_size = min(LOG_FACT_CAP, max(n + 1, 2 * _logfact.size, 1024))
    # Accumulate the new segment in 80-bit floats, so the cumulative sum stays
    # accurate to ~1 ulp of float64 even at the table cap.
    seg = np.log(np.arange(_logfact.size, new_size, dtype=np.longdouble))
    seg = np.cumsum(seg) + _logfact_last_ld
    _logfact_last_ld = seg[-1]
    _logfact = np.concatenate([_logfact, seg.astype(np.float64)])
    return _logfact


def log_factorial(n: int) -> float:
    return float(_ensure_logfact(n)[n])


def log_half_mass(n: int, k: int) -> float:
    """log P(1D +/-1 walk of n steps ends at k); -inf when unreachable."""
    if abs(k) > n or (n + k) % 2:
        return -math.inf
    table = _ensure_logfact(n)
    m = (n + k) // 2
    return float(table[n] - table[m] - table[n - m]) - n * LOG2


# -- exact transition kernel -------------------------------------------------


@dataclass(frozen=True)
class KernelValue:
    probability: float
    log_probability: float

    @classmethod
    def from_log(cls, logp: float) -> "KernelValue":
        return cls(math.exp(logp) if logp > -math.inf else 0.0, logp)


def log_transition(n: int, p: Sequence[int]) -> float:
    """log p_n(x) via the rotated 1D factorization."""
    if n < 0:
        raise ValueError("time must be nonnegative")
    x, y = int(p[0]), int(p[1])
    return log_half_mass(n, x + y) + log_half_mass(n, x - y)


def exact_transition(n: int, p: Sequence[int]) -> KernelValue:
    """Exact n-step transition weight of the 2D walk to site p."""
    return KernelValue.from_log(log_transition(n, p))


def lclt_approx(t: int, p: Sequence[int]) -> float:
    """Leading local-CLT term for parity-matching sites: (2/(pi t)) e^{-|x|^2/t}."""
    if t < 1:
        raise ValueError("time must be >= 1")
    x, y = float(p[0]), float(p[1])
    return 2.0 / (math.pi * t) * math.exp(-(x * x + y * y) / t)


def kernel_sup_bound_check(n: int) -> tuple[float, float]:
    """(max_x p_n(x), n * max); the max sits at 0 or a neighbor per parity."""
    if n < 1:
        raise ValueError("time must be >= 1")
    site = (0, 0) if n % 2 == 0 else (1, 0)
    m = exact_transition(n, site).probability
    return m, n * m


# -- paths -------------------------------------------------------------------


@dataclass
class WalkPath:
    """An n-step trajectory: start site plus the ordered unit moves."""

    start: LatticePoint
    steps: np.ndarray  # (n, 2) int8, each row a unit move

    def __post_init__(self) -> None:
        self.steps = np.asarray(self.steps, dtype=np.int8).reshape(-1, 2)

    @property
    def length(self) -> int:
        return self.steps.shape[0]

    def positions(self) -> np.ndarray:
        """(n+1, 2) int64 array of sites, positions()[0] == start."""
        out = np.empty((self.length + 1, 2), dtype=np.int64)
        out[0] = (self.start.x, self.start.y)
        np.cumsum(self.steps, axis=0, dtype=np.int64, out=out[1:])
        out[1:] += out[0]
        return out

    def position(self, n: int) -> LatticePoint:
        if n == 0:
            return self.start
        s = self.steps[:n].sum(axis=0, dtype=np.int64)
        return LatticePoint(self.start.x + int(s[0]), self.start.y + int(s[1]))

    def end(self) -> LatticePoint:
        return self.position(self.length)


def sample_path(n: int, start: Sequence[int], rng) -> WalkPath:
    """Uniform n-step path; each move i.i.d. over the 4 unit steps."""
    if n < 0:
        raise ValueError("length must be nonnegative")
    gen = rng.generator()
    idx = gen.integers(0, 4, size=n)
    return WalkPath(as_point(start), _STEPS[idx])


def sample_bridge(n: int, start: Sequence[int], end: Sequence[int], rng) -> WalkPath:
    """Walk conditioned on position(n) == end, sampled stepwise.

    Step e is chosen with probability (1/4) p_{n-m-1}(end-pos-e) / p_{n-m}(end-pos);
    the running denominator is the previously chosen numerator, so each step
    costs four kernel evaluations.
    """
    start = as_point(start)
    end = as_point(end)
    delta = end - start
    log_parent = log_transition(n, delta)
    if log_parent == -math.inf:
        raise InvalidEndpointError(f"{tuple(end)} unreachable from {tuple(start)} in {n} steps")
    gen = rng.generator()
    steps = np.empty((n, 2), dtype=np.int8)
    dx, dy = delta
    for m in range(n):
        rem = n - m - 1
        logs = [
            log_half_mass(rem, dx - ex + dy - ey) + log_half_mass(rem, dx - ex - dy + ey)
            for ex, ey in ((1, 0), (-1, 0), (0, 1), (0, -1))
        ]
        w = np.exp(np.asarray(logs) - log_parent)
        w /= w.sum()  # sums to 4/1 before normalization; exact weights are w/4
        choice = int(gen.choice(4, p=w))
        steps[m] = _STEPS[choice]
        dx -= int(_STEPS[choice, 0])
        dy -= int(_STEPS[choice, 1])
        log_parent = logs[choice]
    path = WalkPath(start, steps)
    if path.end() != end:
        raise AssertionError("bridge failed to land on its endpoint")
    return path


def _split_displacement(n: int, start: LatticePoint, end: LatticePoint) -> tuple[int, int]:
    """Plus-step counts of the two rotated 1D bridges; validates reachability."""
    du = (end.x + end.y) - (start.x + start.y)
    dv = (end.x - end.y) - (start.x - start.y)
    if abs(du) > n or abs(dv) > n or (n + du) % 2 or (n + dv) % 2:
        raise InvalidEndpointError(f"{tuple(end)} unreachable from {tuple(start)} in {n} steps")
    return (n + du) // 2, (n + dv) // 2


def sample_bridge_fast(n: int, start: Sequence[int], end: Sequence[int], rng) -> WalkPath:
    """Same law as :func:`sample_bridge`, via the rotated factorization.

    Conditioned on its endpoint, each rotated 1D component is a uniformly
    random arrangement of a fixed multiset of +/-1 steps, so a bridge is two
    independent shuffles.
    """
    start, end = as_point(start), as_point(end)
    pu, pv = _split_displacement(n, start, end)
    gen = rng.generator()
    su = np.where(np.arange(n) < pu, 1, -1).astype(np.int8)
    sv = np.where(np.arange(n) < pv, 1, -1).astype(np.int8)
    gen.shuffle(su)
    gen.shuffle(sv)
    steps = np.empty((n, 2), dtype=np.int8)
    steps[:, 0] = (su + sv) >> 1
    steps[:, 1] = (su - sv) >> 1
    return WalkPath(start, steps)


# -- vectorized window samplers ----------------------------------------------
#
# The intersection and moment drivers only look at walk positions inside a
# time window [t0, t1] of a longer horizon n.  The rotated 1D components let
# us jump to t0 exactly (hypergeometric plus-counts for bridges, binomial for
# free walks) and then lay down only the W = t1 - t0 window steps, so cost is
# O(W) per walk regardless of the horizon.


def _signs_from_counts(counts: np.ndarray, width: int, gen: np.random.Generator) -> np.ndarray:
    """(B, width) int8 rows, row i a uniform shuffle of counts[i] plus steps."""
    signs = np.where(np.arange(width) < counts[:, None], 1, -1).astype(np.int8)
    return gen.permuted(signs, axis=1)


def _window_xy(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Stack rotated coordinates back to lattice (B, T, 2) positions."""
    out = np.empty(u.shape + (2,), dtype=np.int32)
    out[..., 0] = (u + v) >> 1
    out[..., 1] = (u - v) >> 1
    return out


def bridge_window_positions(
    n: int,
    start: Sequence[int],
    end: Sequence[int],
    t0: int,
    t1: int,
    count: int,
    gen: np.random.Generator,
) -> np.ndarray:
    """Positions over [t0, t1] of ``count`` i.i.d. n-step bridges start->end.

    Returns (count, t1 - t0 + 1, 2) int32; [:, 0] is the (random) position at
    time t0.  Exact window marginal of the bridge law.
    """
    if not (0 <= t0 <= t1 <= n):
        raise ValueError("need 0 <= t0 <= t1 <= horizon")
    start, end = as_point(start), as_point(end)
    pu, pv = _split_displacement(n, start, end)
    width = t1 - t0
    out_u = np.empty((count, width + 1), dtype=np.int32)
    out_v = np.empty((count, width + 1), dtype=np.int32)
    for plus_total, base, out in ((pu, start.x + start.y, out_u), (pv, start.x - start.y, out_v)):
        h0 = gen.hypergeometric(plus_total, n - plus_total, t0, size=count) if t0 else np.zeros(count, dtype=np.int64)
        h1 = gen.hypergeometric(plus_total - h0, (n - plus_total) - (t0 - h0), width) if width else np.zeros(count, dtype=np.int64)
        out[:, 0] = base + 2 * h0 - t0
        if width:
            signs = _signs_from_counts(h1, width, gen)
            np.cumsum(signs, axis=1, dtype=np.int32, out=out[:, 1:])
            out[:, 1:] += out[:, :1]
    return _window_xy(out_u, out_v)


def free_window_positions(
    start: Sequence[int],
    t0: int,
    t1: int,
    count: int,
    gen: np.random.Generator,
) -> np.ndarray:
    """Positions over [t0, t1] of ``count`` free walks from start; see above."""
    if not (0 <= t0 <= t1):
        raise ValueError("need 0 <= t0 <= t1")
    start = as_point(start)
    width = t1 - t0
    out_u = np.empty((count, width + 1), dtype=np.int32)
    out_v = np.empty((count, width + 1), dtype=np.int32)
    for base, out in ((start.x + start.y, out_u), (start.x - start.y, out_v)):
        h0 = gen.binomial(t0, 0.5, size=count) if t0 else np.zeros(count, dtype=np.int64)
        out[:, 0] = base + 2 * h0 - t0
        if width:
            signs = (gen.integers(0, 2, size=(count, width), dtype=np.int8) << 1) - 1
            np.cumsum(signs, axis=1, dtype=np.int32, out=out[:, 1:])
            out[:, 1:] += out[:, :1]
    return _window_xy(out_u, out_v)


def endpoint_positions(
    start: Sequence[int],
    times: Sequence[int],
    count: int,
    gen: np.random.Generator,
) -> np.ndarray:
    """Exact joint law of a free walk at increasing checkpoint times.

    Returns (count, len(times), 2) int64.  Increments between checkpoints
    are sampled as rotated binomial sums, so cost is O(len(times)).
    """
    start = as_point(start)
    times = list(times)
    if any(t1 > t2 for t1, t2 in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("checkpoint times must be nondecreasing and nonnegative")
    u = np.full(count, start.x + start.y, dtype=np.int64)
    v = np.full(count, start.x - start.y, dtype=np.int64)
    out = np.empty((count, len(times), 2), dtype=np.int64)
    prev = 0
    for j, t in enumerate(times):
        m = t - prev
        if m:
            u = u + 2 * gen.binomial(m, 0.5, size=count) - m
            v = v + 2 * gen.binomial(m, 0.5, size=count) - m
        out[:, j, 0] = (u + v) >> 1
        out[:, j, 1] = (u - v) >> 1
        prev = t
    return out
