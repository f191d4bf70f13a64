"""Multi-scale time decomposition of the horizon.

A parameter tuple (gamma, epsilon0, delta, M, nu1, nu2, alpha, N, q) induces
geometrically growing block lengths l_k = ceil(N^{gamma f_k}) with
f_k = e^{k alpha_bar}, padding o_k = nu1 l_{k-1} + 2 l_k + nu2 l_k, block
starts L_k, and the count K of full blocks fitting in N.  Everything is
computed with verified integer ceilings (mpmath), so the same code validates
schedules far beyond the simulatable range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import mpmath as mp

from .errors import CapacityError, DomainError

INT64_MAX = 2**63 - 1
MAX_BLOCKS = 10_000

Mode = Literal["log_N", "binom_q"]


@dataclass(frozen=True)
class ParameterTuple:
    gamma: float
    epsilon0: float
    delta: float
    M: int
    nu1: int
    nu2: int
    alpha: int
    N: int
    q: int = 2

    def __post_init__(self) -> None:
        if not (0 < self.gamma < 1 and 0 < self.epsilon0 < 1 and 0 < self.delta < 1):
            raise DomainError("gamma, epsilon0, delta must lie in (0,1)")
        if min(self.M, self.nu1, self.nu2, self.alpha) < 1 or self.N < 1 or self.q < 1:
            raise DomainError("M, nu1, nu2, alpha, N, q must be positive integers")

    @property
    def q0(self) -> int:
        return math.floor((1.0 - self.epsilon0) * self.q)


@dataclass(frozen=True)
class IntervalTk:
    """Observation window inside block k: [nu1 l_{k-1}, nu1 l_{k-1} + l_k]."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def half_end(self) -> int:
        return self.start + self.length // 2


@dataclass(frozen=True)
class Schedule:
    alpha_bar: float
    f: list[float]  # f[k] = e^{k alpha_bar}, k = 0..K+1 (f[0] = 1)
    l: list[int]  # l[k], k = 0..K+1 (l[0] = 0)
    o: list[int]  # o[k], k = 1..K, padded with o[0] = 0
    L: list[int]  # L[k], k = 1..K+1, padded with L[0] = 0 (L[1] = 0)
    K: int
    mode: Mode
    N: int

    def interval(self, k: int) -> IntervalTk:
        if not 1 <= k <= self.K:
            raise ValueError(f"k must be in 1..{self.K}")
        start = self.l[k - 1] * self._nu1
        return IntervalTk(start, start + self.l[k])

    # nu1 is needed to rebuild intervals; stored by build_schedule.
    _nu1: int = 100

    def to_dict(self) -> dict:
        return {
            "alpha_bar": self.alpha_bar,
            "f": self.f,
            "l": self.l,
            "o": self.o,
            "L": self.L,
            "K": self.K,
            "mode": self.mode,
            "N": self.N,
        }


def _alpha_denominator(p: ParameterTuple, mode: Mode, log_n: mp.mpf) -> mp.mpf:
    return log_n if mode == "log_N" else mp.mpf(math.comb(p.q, 2))


CEIL_BITS_CAP = 1 << 21  # exact integer ceilings up to ~600k digits


def rough_log_block_length(p: ParameterTuple, k: int, mode: Mode = "log_N") -> float:
    """log l_k up to ceiling slack, from a cheap 96-bit pass."""
    with mp.workprec(96):
        log_n = mp.log(mp.mpf(p.N))
        ab = mp.mpf(p.alpha) / _alpha_denominator(p, mode, log_n)
        return float(mp.mpf(p.gamma) * mp.e ** (k * ab) * log_n)


def block_length(p: ParameterTuple, k: int, mode: Mode = "log_N") -> int:
    """l_k = ceil(N^{gamma e^{k alpha_bar}}), with a verified integer ceiling.

    A low-precision pass sizes the exponent, everything is then recomputed
    at working precision covering the integer part, and the candidate from
    ceil() is audited against its -1 neighbor by exact log comparison, so
    the rounding decision is reproducible at any magnitude.
    """
    rough = rough_log_block_length(p, k, mode)
    bits = max(128, int(rough / math.log(2.0)) + 96)
    if bits > CEIL_BITS_CAP:
        raise CapacityError(f"l_{k} needs ~{bits} bits; beyond the exact-ceiling budget")
    with mp.workprec(bits):
        log_n = mp.log(mp.mpf(p.N))
        ab = mp.mpf(p.alpha) / _alpha_denominator(p, mode, log_n)
        target = mp.mpf(p.gamma) * mp.e ** (k * ab) * log_n
        cand = max(1, int(mp.ceil(mp.e**target)))
        # audit: settle on the smallest integer c with log c >= target
        while cand > 1 and mp.log(cand - 1) >= target:
            cand -= 1
        while mp.log(cand) < target:
            cand += 1
    return cand


def build_schedule(p: ParameterTuple, mode: Mode = "log_N", allow_big: bool = False) -> Schedule:
    """All block quantities; K = 0 gives an empty (but valid) schedule.

    With allow_big=False, any l_k beyond 2^63 raises CapacityError naming k:
    such schedules validate fine but cannot be simulated.
    """
    if p.N < 2:
        raise DomainError("need N >= 2")
    if mode not in ("log_N", "binom_q"):
        raise DomainError(f"unknown schedule mode {mode!r}")
    if mode == "binom_q" and p.q < 2:
        raise DomainError("binom_q mode needs q >= 2")
    with mp.workprec(96):
        alpha_bar = float(mp.mpf(p.alpha) / _alpha_denominator(p, mode, mp.log(mp.mpf(p.N))))

    f = [1.0]
    l = [0]
    o = [0]
    L = [0, 0]  # L[1] = 0
    log_n_float = float(mp.log(mp.mpf(p.N)))
    k = 1
    while k <= MAX_BLOCKS:
        rough = rough_log_block_length(p, k, mode)
        if rough > log_n_float + 2.0:
            # l_k alone dwarfs the horizon: the block cannot fit, and the
            # exact (possibly astronomical) ceiling is only recorded for the
            # ratio validators when it is affordable
            if int(rough / math.log(2.0)) + 96 <= CEIL_BITS_CAP:
                f.append(math.exp(k * alpha_bar))
                l.append(block_length(p, k, mode))
            break
        lk = block_length(p, k, mode)
        ok = p.nu1 * l[k - 1] + 2 * lk + p.nu2 * lk
        fits = L[k] + ok <= p.N
        if fits and lk > INT64_MAX and not allow_big:
            # only simulatable blocks are capacity-gated; l_{K+1} may be huge
            raise CapacityError(f"l_{k} exceeds 2^63; use allow_big for validation-only schedules")
        f.append(math.exp(k * alpha_bar))
        l.append(lk)
        if not fits:
            # block k no longer fits; l_k is still recorded for ratio validators
            break
        o.append(ok)
        L.append(L[k] + ok)
        k += 1
    else:
        raise CapacityError(f"schedule exceeded {MAX_BLOCKS} blocks")
    K = len(o) - 1
    return Schedule(alpha_bar, f, l, o, L, K, mode, p.N, _nu1=p.nu1)


# -- parameter constraints -----------------------------------------------------


@dataclass(frozen=True)
class ClauseCheck:
    name: str
    description: str
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed}


@dataclass(frozen=True)
class ConstraintReport:
    clauses: list[ClauseCheck]
    minimums_ok: bool
    all_pass: bool

    def to_dict(self) -> dict:
        return {"clauses": [c.to_dict() for c in self.clauses], "minimums_ok": self.minimums_ok, "all_pass": self.all_pass}


def check_parameters(p: ParameterTuple) -> ConstraintReport:
    """Evaluate the strict-mode constraints; reports, never rejects.

    Desk-scale tuples legitimately violate clause (v) (it forces N > e^{2 alpha}),
    so callers decide what to do with failures.
    """
    ga = p.gamma * p.alpha
    log_n = float(mp.log(mp.mpf(p.N)))

    def fin(x: float) -> float:
        return x if math.isfinite(x) else math.inf

    c1 = p.delta**-2 * math.exp(-0.5 * ga) if ga < 1400 else 0.0
    c2 = math.log(4 * p.nu1) / ga
    c3 = p.nu2 / (p.nu1 * p.delta**2)
    c4 = p.nu2 * math.exp(-0.5 * ga) * p.M**-2 if ga < 1400 else 0.0
    rhs5 = max(math.log(4 * p.nu2), 2.0 * p.alpha)
    clauses = [
        ClauseCheck("i", "delta^-2 e^{-gamma alpha/2} <= 1", fin(c1), 1.0, c1 <= 1.0),
        ClauseCheck("ii", "log(4 nu1)/(alpha gamma) < 1/4", fin(c2), 0.25, c2 < 0.25),
        ClauseCheck("iii", "nu2/(nu1 delta^2) <= 2^-5", fin(c3), 2.0**-5, c3 <= 2.0**-5),
        ClauseCheck("iv", "nu2 e^{-gamma alpha/2} M^-2 <= 2^-4", fin(c4), 2.0**-4, c4 <= 2.0**-4),
        ClauseCheck("v", "log N > max(log 4 nu2, 2 alpha)", log_n, rhs5, log_n > rhs5),
    ]
    minimums = min(p.N, p.nu1, p.nu2, p.M, p.alpha) >= 100 and p.epsilon0 <= 0.01 and p.delta <= 0.01
    return ConstraintReport(clauses, minimums, minimums and all(c.passed for c in clauses))


# -- schedule validators ---------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    vacuous: bool
    ratio_lower_ok: bool
    ratio_upper_ok: bool
    block_bound_ok: bool
    warmup_ok: bool
    k_bracket: tuple[float, float]
    k_upper_ok: bool
    k_lower_literal_ok: bool  # lower bound tested against K itself
    k_lower_started_ok: bool  # lower bound tested against K + 1 (started blocks)
    failures: list[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        """Every relation in its numerically sound form (started-block lower bound)."""
        return self.vacuous or (
            self.ratio_lower_ok
            and self.ratio_upper_ok
            and self.block_bound_ok
            and self.warmup_ok
            and self.k_upper_ok
            and self.k_lower_started_ok
        )

    def to_dict(self) -> dict:
        return {
            "vacuous": self.vacuous,
            "ratio_lower_ok": self.ratio_lower_ok,
            "ratio_upper_ok": self.ratio_upper_ok,
            "block_bound_ok": self.block_bound_ok,
            "warmup_ok": self.warmup_ok,
            "k_bracket": list(self.k_bracket),
            "k_upper_ok": self.k_upper_ok,
            "k_lower_literal_ok": self.k_lower_literal_ok,
            "k_lower_started_ok": self.k_lower_started_ok,
            "all_ok": self.all_ok,
            "failures": self.failures,
        }


def validate_lemma_2_1(s: Schedule, p: ParameterTuple) -> ValidationReport:
    """Numerically check the block-length relations on a built schedule.

    For every k <= K: e^{gamma alpha/2} <= l_{k+1}/l_k <= e^{e alpha},
    L_{k+1} <= 4 nu2 l_k, nu1 l_{k-1} <= l_k, and the two-sided bracket on K.
    Ratio comparisons are done in log space via mpmath so astronomically
    large l_k validate exactly.

    The bracket's lower bound is recorded in two forms.  Its derivation
    (N < L_{K+2} <= 4 nu2 l_{K+1}) constrains the number of *started* blocks
    K + 1; tested against K itself it fails on almost every valid tuple,
    because the bracket width log(4 nu2)/alpha is far below 1.  ``all_ok``
    uses the started-block form; the literal form is reported alongside.
    """
    if s.K < 1:
        return ValidationReport(True, True, True, True, True, (0.0, 0.0), True, True, True)
    lo_exp = mp.mpf(p.gamma) * p.alpha / 2
    hi_exp = mp.e * p.alpha
    ratio_lower = ratio_upper = block_bound = warmup = True
    failures: list[str] = []
    for k in range(1, s.K + 1):
        if k + 1 < len(s.l):
            log_next = mp.log(mp.mpf(s.l[k + 1]))
        else:
            # l_{K+1} was too large to materialize; its log is known to
            # ceiling slack, which is far below the comparison margins
            log_next = mp.mpf(rough_log_block_length(p, k + 1, s.mode))
        log_ratio = log_next - mp.log(mp.mpf(s.l[k]))
        if log_ratio < lo_exp:
            ratio_lower = False
            failures.append(f"l_{k + 1}/l_{k} below e^(gamma alpha/2)")
        if log_ratio > hi_exp:
            ratio_upper = False
            failures.append(f"l_{k + 1}/l_{k} above e^(e alpha)")
        if s.L[k + 1] > 4 * p.nu2 * s.l[k]:
            block_bound = False
            failures.append(f"L_{k + 1} > 4 nu2 l_{k}")
        if p.nu1 * s.l[k - 1] > s.l[k]:
            warmup = False
            failures.append(f"nu1 l_{k - 1} > l_{k}")
    log_n = mp.log(mp.mpf(p.N))
    alpha_bar = mp.mpf(p.alpha) / (log_n if s.mode == "log_N" else mp.mpf(math.comb(p.q, 2)))
    upper = mp.log(1 / mp.mpf(p.gamma)) / alpha_bar
    inner = 1 - mp.log(4 * mp.mpf(p.nu2)) / log_n
    lower = (mp.log(1 / mp.mpf(p.gamma)) + (mp.log(inner) if inner > 0 else mp.mpf("-inf"))) / alpha_bar
    k_upper = bool(s.K <= upper)
    k_lower_literal = bool(lower <= s.K)
    k_lower_started = bool(lower <= s.K + 1)
    if not k_upper:
        failures.append(f"K = {s.K} above {float(upper):.3f}")
    if not k_lower_started:
        failures.append(f"K + 1 = {s.K + 1} below {float(lower):.3f}")
    return ValidationReport(
        False,
        ratio_lower,
        ratio_upper,
        block_bound,
        warmup,
        (float(lower), float(upper)),
        k_upper,
        k_lower_literal,
        k_lower_started,
        failures=failures,
    )


def random_strict_tuple(rng, paper_scale: bool = True) -> ParameterTuple:
    """Random tuple satisfying the strict-mode constraints.

    Clause (v) forces N > e^{2 alpha}, far beyond 2^63, so strict tuples are
    only usable with build_schedule(allow_big=True).
    """
    u = rng.uniform
    gamma = u(0.1, 0.8)
    delta = 10.0 ** -u(2.0, 3.0)
    nu2 = int(10 ** u(2.0, 3.5))
    m_ball = int(10 ** u(2.0, 3.0))
    nu1 = int(32 * nu2 / delta**2 * 10 ** u(0.05, 1.0)) + 1
    ga_req = max(
        4.0 * math.log(1.0 / delta),  # (i)
        4.0 * math.log(4.0 * nu1) * 1.01,  # (ii)
        2.0 * math.log(max(16.0 * nu2 / m_ball**2, 1e-9)),  # (iv)
        1.0,
    )
    ga = ga_req * (1.0 + u(0.05, 0.8))
    alpha = max(100, int(math.ceil(ga / gamma)))
    log_n = max(2.0 * alpha, math.log(4 * nu2)) * (1.0 + u(0.05, 0.5)) if paper_scale else math.log(10**6)
    with mp.workprec(int(log_n / math.log(2)) + 64):
        n = int(mp.ceil(mp.e ** mp.mpf(log_n))) + 1
    q = max(3, int(math.sqrt(log_n)))
    return ParameterTuple(gamma, 0.01, delta, m_ball, nu1, nu2, alpha, n, q)
