import json
import math

import numpy as np
import pytest

from polymerlab.errors import CapacityError, DomainError
from polymerlab.schedule import (
    ParameterTuple,
    build_schedule,
    check_parameters,
    random_strict_tuple,
    validate_lemma_2_1,
)

DESK = ParameterTuple(gamma=0.2, epsilon0=0.01, delta=0.01, M=100, nu1=10, nu2=10, alpha=5, N=10**6, q=4)


def test_build_schedule_desk_example():
    s = build_schedule(DESK)
    assert s.alpha_bar == pytest.approx(5 / math.log(10**6), rel=1e-12)
    assert s.l[1] == 53
    assert s.o[1] == 636  # nu1*l_0 = 0, (2 + nu2) * 53
    assert s.L[1] == 0 and s.L[2] == 636
    assert s.K == 3
    assert s.L[s.K + 1] <= DESK.N
    iv = s.interval(1)
    assert iv.start == 0 and iv.end == 53 and iv.length == 53


def test_schedule_l_strictly_increasing():
    s = build_schedule(DESK)
    for k in range(1, s.K + 1):
        assert s.l[k] < s.l[k + 1]
    assert s.l[0] == 0


def test_schedule_pure_function():
    a = build_schedule(DESK).to_dict()
    b = build_schedule(DESK).to_dict()
    assert a == b
    json.dumps(a)  # serializable, including big ints


def test_schedule_k_zero():
    p = ParameterTuple(0.5, 0.01, 0.01, 100, 100, 100, 100, N=1000, q=3)
    s = build_schedule(p)
    assert s.K == 0
    assert validate_lemma_2_1(s, p).vacuous


def test_schedule_interval_bounds():
    s = build_schedule(DESK)
    with pytest.raises(ValueError):
        s.interval(0)
    with pytest.raises(ValueError):
        s.interval(s.K + 1)


def test_schedule_modes():
    p = ParameterTuple(gamma=0.2, epsilon0=0.01, delta=0.01, M=100, nu1=10, nu2=10, alpha=5, N=10**6, q=3)
    slog = build_schedule(p, "log_N")
    sbin = build_schedule(p, "binom_q")
    # q^2 below log log N scale: fewer, longer blocks in binom_q mode
    assert sbin.alpha_bar > slog.alpha_bar
    assert sbin.K <= slog.K
    with pytest.raises(DomainError):
        build_schedule(p, "bogus")


def test_schedule_capacity_error_names_k():
    # slow growth with a huge horizon: the first block fits but l_1 > 2^63
    p = ParameterTuple(0.9, 0.01, 0.01, 100, 1, 1, 1, N=10**21, q=3)
    with pytest.raises(CapacityError, match="l_1"):
        build_schedule(p)
    s = build_schedule(p, allow_big=True)
    assert s.K >= 1 and s.l[1] > 2**63


def test_check_parameters_clause_examples():
    # clause (i) example: delta^-2 e^{-gamma alpha / 2} well below 1
    r = check_parameters(ParameterTuple(0.5, 0.005, 0.01, 1000, 1000, 100, 400, 10**6, 4))
    c = {x.name: x for x in r.clauses}
    assert c["i"].passed and c["i"].lhs == pytest.approx(1e4 * math.exp(-100), rel=1e-9)
    # clause (iii) failure: nu2 / (nu1 delta^2) = 100 > 2^-5
    r2 = check_parameters(ParameterTuple(0.5, 0.005, 0.1, 1000, 100, 100, 400, 10**6, 4))
    c2 = {x.name: x for x in r2.clauses}
    assert not c2["iii"].passed and c2["iii"].lhs == pytest.approx(100.0)
    # clause (v) failure: e^{2 alpha} dwarfs N = 10^6 at alpha = 100
    r3 = check_parameters(ParameterTuple(0.5, 0.005, 0.01, 1000, 1000, 100, 100, 10**6, 4))
    c3 = {x.name: x for x in r3.clauses}
    assert not c3["v"].passed
    assert not r3.all_pass


def test_check_parameters_never_raises_on_desk_tuples():
    r = check_parameters(DESK)
    assert isinstance(r.to_dict()["clauses"], list)
    assert not r.all_pass  # desk scale legitimately violates strict mode


def test_validate_reports_desk_violations():
    s = build_schedule(DESK)
    v = validate_lemma_2_1(s, DESK)
    assert not v.vacuous
    assert v.k_upper_ok
    # nu1 l_1 > l_2 at this toy tuple; the report must say so
    assert not v.warmup_ok
    assert any("nu1" in f for f in v.failures)


def test_randomized_strict_tuples_satisfy_relations():
    gen = np.random.default_rng(2024)
    literal_hits = 0
    for _ in range(25):
        p = random_strict_tuple(gen)
        assert check_parameters(p).all_pass
        s = build_schedule(p, allow_big=True)
        v = validate_lemma_2_1(s, p)
        assert v.all_ok, v.failures
        literal_hits += v.k_lower_literal_ok
    # the literal K lower bound (rather than K+1) holds only when K lands
    # inside the narrow bracket; it must not be treated as guaranteed
    assert literal_hits < 25


def test_strict_tuple_ceilings_are_audited():
    # the recorded l_1 is the smallest integer at or above the exact power
    import mpmath as mp

    gen = np.random.default_rng(5)
    p = random_strict_tuple(gen)
    s = build_schedule(p, allow_big=True)
    bits = s.l[1].bit_length() + 192
    with mp.workprec(bits):
        log_n = mp.log(mp.mpf(p.N))
        target = mp.mpf(p.gamma) * mp.e ** (mp.mpf(p.alpha) / log_n) * log_n
        assert mp.log(s.l[1]) >= target
        assert mp.log(s.l[1] - 1) < target
