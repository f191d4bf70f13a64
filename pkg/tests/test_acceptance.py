"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
[DERIVED] baselines frozen at first build are marked inline; the decisions
ledger documents the two places where a criterion is implemented in a
corrected form (the K-bracket lower bound and the small-disc normalization).
"""

import itertools
import json
import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from polymerlab.disorder import (
    build_disorder,
    exact_second_moment,
    local_time_pmf,
    mc_moment,
    qlarge_lower_bound_log,
)
from polymerlab.experiments import get_preset, run_config, window_formula_for_pair_window
from polymerlab.hitting import BesselConfig, HittingQuery, bessel_k0, laplace_hitting, simulate_disc_hit
from polymerlab.intersections import (
    EnsembleWindow,
    WindowSpec,
    analyze_window,
    estimate_pair_probability,
    max_disjoint_oracle,
    poisson_window_experiment,
)
from polymerlab.rng import RngStream
from polymerlab.schedule import IntervalTk, build_schedule, check_parameters, random_strict_tuple, validate_lemma_2_1
from polymerlab.walks import exact_transition, sample_path

STEPS = [(1, 0), (-1, 0), (0, 1), (0, -1)]
FINDINGS_DIR = Path(__file__).resolve().parents[1] / "findings"
THREADS = 2


def report(n: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}")
    assert ok, f"criterion {n}: {detail}"


def enumerate_local_time(n):
    """pmf of the doubled-walk return count and the exact tilted moment,
    by walking all 4^(2n) paths."""
    counts = {}
    for moves in itertools.product(range(4), repeat=2 * n):
        x = y = 0
        hits = 0
        for i, m in enumerate(moves):
            x += STEPS[m][0]
            y += STEPS[m][1]
            if i % 2 == 1 and x == 0 and y == 0:
                hits += 1
        counts[hits] = counts.get(hits, 0) + 1
    total = 4 ** (2 * n)
    return {k: v / total for k, v in counts.items()}


def test_criterion_01_exact_enumeration():
    t0 = time.perf_counter()
    ok = True
    # transition kernel vs full path enumeration (2N <= 6 steps)
    for steps in (1, 2, 3, 4, 5, 6):
        pmf = {}
        for moves in itertools.product(range(4), repeat=steps):
            x = y = 0
            for m in moves:
                x += STEPS[m][0]
                y += STEPS[m][1]
            pmf[(x, y)] = pmf.get((x, y), 0) + 1
        for site, c in pmf.items():
            ok &= abs(exact_transition(steps, site).probability - c / 4**steps) < 1e-12
    # local-time pmf and tilted second moment vs enumeration, N <= 3
    for n in (1, 2, 3):
        law = enumerate_local_time(n)
        pmf = local_time_pmf(n)
        for k, p in law.items():
            ok &= abs(pmf.masses[k] - p) < 1e-12
        d = build_disorder(0.5, n)
        direct = sum(p * math.exp(d.beta_N**2 * k) for k, p in law.items())
        ok &= abs(exact_second_moment(d) - direct) < 1e-12
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    report(1, ok, f"enumeration equivalence to 1e-12, {elapsed:.2f}s")


def test_criterion_02_mc_vs_exact():
    t0 = time.perf_counter()
    d = build_disorder(0.5, 1000)
    est = mc_moment(d, 2, 100_000, RngStream(20_02), threads=THREADS)
    exact = exact_second_moment(d)
    elapsed = time.perf_counter() - t0
    ok = abs(est.estimate - exact) < 3 * est.std_error and elapsed < 60.0
    report(2, ok, f"mc {est.estimate:.5f} +- {est.std_error:.5f} vs exact {exact:.5f}, {elapsed:.1f}s")


def test_criterion_03_weak_disorder_trend():
    limit = 4.0 / 3.0
    gaps = []
    for n in (100, 1000, 10_000, 100_000):
        gaps.append(abs(exact_second_moment(build_disorder(0.5, n)) - limit))
    decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
    # regression baseline [DERIVED at first build]: final gap 0.01352735
    baseline_ok = abs(gaps[-1] - 0.01352735) < 1e-5
    report(
        3,
        decreasing and baseline_ok,
        f"|gap| {gaps[0]:.6f} -> {gaps[-1]:.6f} strictly decreasing (approach is from above); baseline held",
    )


def test_criterion_04_q3_trend():
    lam2 = -math.log(1.0 - 0.09)
    vals = {}
    for n, reps in ((1000, 120_000), (10_000, 80_000)):
        d = build_disorder(0.3, n)
        est = mc_moment(d, 3, reps, RngStream(2026), threads=THREADS)
        vals[n] = (math.log(est.estimate) / 3.0, est.std_error / est.estimate / 3.0)
    gap_small = abs(vals[1000][0] - lam2)
    gap_large = abs(vals[10_000][0] - lam2)
    joint = math.hypot(vals[1000][1], vals[10_000][1])
    # movement toward the limit, allowing MC noise; both sit above the limit
    # at these horizons [DERIVED baselines: 0.0968 and 0.0963]
    ok = gap_large < gap_small + 1.0 * joint
    ok &= vals[10_000][0] > lam2 - 3 * vals[10_000][1]
    report(
        4,
        ok,
        f"log(m)/3: {vals[1000][0]:.5f} -> {vals[10_000][0]:.5f} toward {lam2:.5f} (joint se {joint:.5f})",
    )


def test_criterion_05_chen_stein_suite():
    spec = WindowSpec(l=10_000, t1=250_000, nu2=10, M=8.0)
    passes = 0
    runs = 0
    for q0 in (6, 10):
        for seed in range(20):
            rep = poisson_window_experiment(q0, spec, 1200, RngStream(9000 + seed, q0), threads=THREADS)
            passes += rep.passes_bound(slack=5.0)
            runs += 1
    preset = poisson_window_experiment(10, spec, 2500, RngStream(424242), threads=THREADS)
    # [DERIVED baseline at first build: preset TV 0.0054]
    ok = passes >= math.ceil(0.95 * runs) and preset.empirical_tv <= 0.08
    report(
        5,
        ok,
        f"TV<=2(e1+e2)+5err in {passes}/{runs} runs; preset TV {preset.empirical_tv:.4f} <= 0.08",
    )


def test_criterion_06_pair_probability_asymptotics():
    params = get_preset("desk-large")["pair-prob"]
    spec = WindowSpec(l=params["l"], t1=params["t1"], nu2=params["nu2"], M=params["M"])
    rep = estimate_pair_probability(spec, [(0, 0), (0, 0)], [(0, 0), (0, 0)], params["replicates"], RngStream(606), threads=THREADS)
    pred = window_formula_for_pair_window(spec.t1, spec.t2)
    ratio = rep.conditioned.value / pred
    pairwise = [
        abs(rep.conditioned.value - rep.unconditioned.value) / rep.conditioned.value,
        abs(rep.conditioned.value - rep.unguarded.value) / rep.conditioned.value,
        abs(rep.unconditioned.value - rep.unguarded.value) / max(rep.unconditioned.value, 1e-12),
    ]
    ok = abs(ratio - 1.0) <= 0.20 and all(d <= 0.20 for d in pairwise)
    report(
        6,
        ok,
        f"p_hat/prediction = {ratio:.4f} (within 20%); estimator spreads {max(pairwise):.4f} <= 0.20",
    )


def test_criterion_07_spitzer_limit():
    r_disc, t = 1e-3, 10.0
    est = simulate_disc_hit(
        HittingQuery(a=r_disc, r=0.0, t1=1.0, t2=t),
        BesselConfig(step=1e-2, crossing_correction=True),
        1_000_000,
        RngStream(777),
        threads=THREADS,
    )
    # finite-r form of the cited limit: P ~ log t / log(t/r^2); the literal
    # (log r^-2) P / log t normalization cannot reach 10% at r = 1e-3 even
    # for the idealized P (see decisions ledger) and is reported alongside
    ratio_finite = est.probability * math.log(t / r_disc**2) / math.log(t)
    ratio_literal = est.probability * math.log(r_disc**-2) / math.log(t)
    ok = abs(ratio_finite - 1.0) <= 0.10
    report(
        7,
        ok,
        f"P_hat {est.probability:.5f}; finite-r ratio {ratio_finite:.4f} (within 10%); literal ratio {ratio_literal:.4f}",
    )


def test_criterion_08_k0_and_laplace():
    grid = np.exp(np.linspace(math.log(1e-6), math.log(30.0), 50))
    worst = max(abs(bessel_k0(float(u)) - float(mpmath.besselk(0, mpmath.mpf(float(u))))) for u in grid)
    equal_radius = laplace_hitting(2.0, 2.0, 0.3) == 1 / 0.3  # exact, not approximate
    small_lam = laplace_hitting(1.0, 10.0, 1e-8)
    target = 1e8 * math.log(1e-6) / math.log(1e-8)
    small_ok = abs(small_lam / target - 1.0) < 0.05
    ok = worst < 1e-10 and equal_radius and small_ok
    report(8, ok, f"K0 grid max err {worst:.2e}; A(a,a)=1/lam exact; small-lam off by {abs(small_lam / target - 1):.4f}")


def test_criterion_09_lclt_decay():
    rec = run_config("lclt", {"times": [100, 1000]})
    factor = rec.metrics["decay_factor"].value
    ok = 5.0 <= factor <= 20.0
    report(9, ok, f"max rel error decay factor {factor:.2f} in [5, 20]")


def test_criterion_10_schedule_lemma_suite():
    gen = np.random.default_rng(314159)
    sound = literal = 0
    for _ in range(100):
        p = random_strict_tuple(gen)
        assert check_parameters(p).all_pass
        v = validate_lemma_2_1(build_schedule(p, allow_big=True), p)
        sound += v.all_ok
        literal += v.k_lower_literal_ok
    # the bracket's lower bound holds for the started-block count K+1 (the
    # object its derivation controls); the literal K form fails on most
    # tuples by construction -- see the decisions ledger
    ok = sound == 100
    report(10, ok, f"all relations hold on {sound}/100 strict tuples (literal K lower bound: {literal}/100)")


def test_criterion_11_qlarge_inequality():
    ok = True
    details = []
    for n, q in ((2, 3), (4, 4)):
        d = build_disorder(0.5, n)
        est = mc_moment(d, q, 100_000, RngStream(5150 + q), threads=THREADS)
        bound = math.exp(qlarge_lower_bound_log(d, q))
        ok &= est.estimate >= bound - 3 * est.std_error
        details.append(f"(N={n},q={q}): {est.estimate:.4f} >= {bound:.4f}")
    report(11, ok, "; ".join(details))


def test_criterion_12_greedy_maximality_probe():
    gaps = []
    agree = 0
    total = 1000
    for i in range(total):
        q0 = 6 if i % 2 == 0 else 8
        length = 14
        paths = [sample_path(length, ((w % 3) * 2, (w // 3) * 2), RngStream(120_000 + i, w)) for w in range(q0)]
        w = EnsembleWindow(paths, IntervalTk(0, length), ball_radius=25.0)
        rep = analyze_window(w)
        oracle = max_disjoint_oracle(w)
        assert rep.R_k <= oracle
        if rep.R_k == oracle:
            agree += 1
        else:
            gaps.append({"window": i, "q0": q0, "greedy": rep.R_k, "oracle": oracle})
    FINDINGS_DIR.mkdir(exist_ok=True)
    out = FINDINGS_DIR / "greedy_maximality_gaps.json"
    out.write_text(json.dumps({"windows": total, "agreement": agree, "gaps": gaps}, indent=2))
    # reported, never asserted as equality; strict gaps are the finding
    report(
        12,
        True,
        f"greedy agrees with the exhaustive oracle on {agree}/{total} windows; {len(gaps)} strict gaps archived to {out.name}",
    )
