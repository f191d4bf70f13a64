"""Experiment runners: one function per command, all returning a ResultRecord.

The CLI and the HTTP service are thin shells around ``run_request``; a
record embeds its full config (plus a digest), so any run can be replayed
bit-for-bit later.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from typing import Any

import numpy as np

from . import __version__
from .disorder import (
    EXACT_N_BUDGET,
    build_disorder,
    exact_second_moment,
    mc_moment,
    qlarge_lower_bound_log,
    subcritical_prediction,
)
from .errors import ConfigError, DomainError, VersionMismatchError
from .hitting import BesselConfig, HittingQuery, ratio_formula, simulate_disc_hit, window_formula
from .intersections import WindowSpec, confinement_stats, estimate_pair_probability, poisson_window_experiment
from .models import (
    REQUEST_MODELS,
    ConfinementRequest,
    HittingRequest,
    LcltRequest,
    Metric,
    MomentsRequest,
    PairProbRequest,
    PoissonRequest,
    QlargeRequest,
    RequestBase,
    ResultRecord,
    ScheduleRequest,
    SecondMomentScanRequest,
    Series,
)
from .parallel import default_threads
from .rng import RngStream
from .schedule import ParameterTuple, build_schedule, check_parameters, validate_lemma_2_1
from .walks import _ensure_logfact, lclt_approx

# Effective disc radius of the origin for the pair-difference walk, in the
# Brownian window picture (pair window [t1, t2] maps to the same Brownian
# time window).  Calibrated by solving the window formula against
# high-precision hit estimates at two scales (a_eff 0.2424 at t1=10^3,
# 0.2585 at t1=4*10^3; one constant reproduces both probabilities within
# 1%); plays the role of the coupling radius whose constant the theory
# leaves unspecified.
LATTICE_DISC_RADIUS = 0.25


def _threads(req: RequestBase) -> int:
    return req.threads if req.threads > 0 else default_threads()


def _record(command: str, req: RequestBase, metrics: dict[str, Metric], summary: str, t0: float, series=None, tables=None) -> ResultRecord:
    return ResultRecord(
        command=command,
        version=__version__,
        config=json.loads(req.model_dump_json()),
        metrics=metrics,
        series=series,
        tables=tables or {},
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )


def run_moments(req: MomentsRequest) -> ResultRecord:
    t0 = time.perf_counter()
    params = build_disorder(req.beta_hat, req.N)
    est = mc_moment(params, req.q, req.replicates, RngStream(req.seed), _threads(req))
    metrics = {
        "estimate": Metric(value=est.estimate, std_error=est.std_error),
        "R_N": Metric(value=params.R_N),
        "beta_N": Metric(value=params.beta_N),
    }
    if params.lambda_sq is not None:
        metrics["lambda_sq"] = Metric(value=params.lambda_sq)
        metrics["limit_prediction"] = Metric(value=subcritical_prediction(params, req.q))
    if req.q == 2 and req.N <= EXACT_N_BUDGET:
        metrics["exact"] = Metric(value=exact_second_moment(params))
    if req.q >= 2:
        metrics["qlarge_bound_log"] = Metric(value=qlarge_lower_bound_log(params, req.q))
    summary = f"E[W^{req.q}] ~ {est.estimate:.6g} +- {est.std_error:.2g} (N={req.N}, beta_hat={req.beta_hat})"
    return _record("moments", req, metrics, summary, t0)


def run_second_moment_scan(req: SecondMomentScanRequest) -> ResultRecord:
    t0 = time.perf_counter()
    limit = 1.0 / (1.0 - req.beta_hat**2)
    rows = []
    for n in req.N_values:
        value = exact_second_moment(build_disorder(req.beta_hat, n))
        rows.append([float(n), value, limit - value, abs(limit - value)])
    series = Series(header=["N", "exact_second_moment", "gap_to_limit", "abs_gap"], rows=rows)
    metrics = {
        "limit": Metric(value=limit),
        "final_abs_gap": Metric(value=rows[-1][3]),
        "gaps_strictly_decreasing": Metric(value=float(all(a[3] > b[3] for a, b in zip(rows, rows[1:])))),
    }
    summary = f"E[W^2] scan over {len(rows)} horizons; final |gap| = {rows[-1][3]:.3g}"
    return _record("second-moment-scan", req, metrics, summary, t0, series=series)


def run_schedule(req: ScheduleRequest) -> ResultRecord:
    t0 = time.perf_counter()
    p = ParameterTuple(req.gamma, req.epsilon0, req.delta, req.M, req.nu1, req.nu2, req.alpha, req.N, req.q)
    constraints = check_parameters(p)
    s = build_schedule(p, req.mode, allow_big=req.allow_big)
    validation = validate_lemma_2_1(s, p)
    metrics = {
        "K": Metric(value=float(s.K)),
        "alpha_bar": Metric(value=s.alpha_bar),
        "constraints_all_pass": Metric(value=float(constraints.all_pass)),
        "relations_all_ok": Metric(value=float(validation.all_ok)),
    }
    tables = {
        "schedule": s.to_dict(),
        "constraints": constraints.to_dict(),
        "validation": validation.to_dict(),
    }
    summary = f"schedule K={s.K}, alpha_bar={s.alpha_bar:.6g}, relations {'ok' if validation.all_ok else 'violated'}"
    return _record("schedule", req, metrics, summary, t0, tables=tables)


def run_poisson(req: PoissonRequest) -> ResultRecord:
    t0 = time.perf_counter()
    spec = WindowSpec(l=req.l, t1=req.t1, nu2=req.nu2, M=req.M)
    rep = poisson_window_experiment(req.q0, spec, req.replicates, RngStream(req.seed), _threads(req))
    metrics = {
        "mu": Metric(value=rep.mu, std_error=rep.mu_std_error),
        "e1": Metric(value=rep.e1, std_error=rep.e1_std_error),
        "e2": Metric(value=rep.e2, std_error=rep.e2_std_error),
        "chen_stein_bound": Metric(value=rep.chen_stein_bound),
        "empirical_tv": Metric(value=rep.empirical_tv, std_error=rep.tv_sampling_error),
        "propagated_error": Metric(value=rep.propagated_error),
        "bound_satisfied": Metric(value=float(rep.passes_bound())),
    }
    rows = [[float(k), float(c)] for k, c in sorted(rep.histogram_r_tilde.items())]
    series = Series(header=["k", "count"], rows=rows)
    tables = {
        "histogram_r_tilde": {str(k): v for k, v in rep.histogram_r_tilde.items()},
        "histogram_r": {str(k): v for k, v in rep.histogram_r.items()},
        "pair_probabilities": {str(i): v for i, v in enumerate(rep.pair_probabilities)},
    }
    summary = f"TV = {rep.empirical_tv:.4f} vs bound 2(e1+e2) = {rep.chen_stein_bound:.4f} (mu = {rep.mu:.4f})"
    return _record("poisson", req, metrics, summary, t0, series=series, tables=tables)


def run_pair_prob(req: PairProbRequest) -> ResultRecord:
    t0 = time.perf_counter()
    spec = WindowSpec(l=req.l, t1=req.t1, nu2=req.nu2, M=req.M)
    rep = estimate_pair_probability(spec, req.x, req.y, req.replicates, RngStream(req.seed), _threads(req))
    metrics = {
        "conditioned": Metric(value=rep.conditioned.value, std_error=rep.conditioned.std_error),
        "unconditioned": Metric(value=rep.unconditioned.value, std_error=rep.unconditioned.std_error),
        "unguarded": Metric(value=rep.unguarded.value, std_error=rep.unguarded.std_error),
    }
    if req.t1 > LATTICE_DISC_RADIUS**2 and req.l > 0:
        pred = window_formula_for_pair_window(req.t1, req.t1 + req.l)
        metrics["prediction"] = Metric(value=pred)
        if pred > 0:
            metrics["ratio_to_prediction"] = Metric(value=rep.conditioned.value / pred)
    summary = (
        f"pair meeting p: conditioned {rep.conditioned.value:.5f}, free {rep.unconditioned.value:.5f}, "
        f"unguarded {rep.unguarded.value:.5f}"
    )
    return _record("pair-prob", req, metrics, summary, t0)


def window_formula_for_pair_window(t1: int, t2: int) -> float:
    """Continuum prediction of the guarded pair-meeting probability.

    The difference of two walks over pair window [t1, t2] behaves like a
    standard planar Brownian motion on the same time window; the origin acts
    as a disc of radius LATTICE_DISC_RADIUS.
    """
    return window_formula(HittingQuery(a=LATTICE_DISC_RADIUS, r=0.0, t1=float(t1), t2=float(t2))).value


def run_hitting(req: HittingRequest) -> ResultRecord:
    t0 = time.perf_counter()
    query = HittingQuery(a=req.a, r=req.r, t1=req.t1, t2=req.t2)
    cfg = BesselConfig(step=req.step, refinement_radius=req.refinement_radius, crossing_correction=req.crossing_correction)
    est = simulate_disc_hit(query, cfg, req.replicates, RngStream(req.seed), _threads(req))
    metrics = {
        "probability": Metric(value=est.probability, std_error=est.std_error),
        "bias_flag": Metric(value=float(est.discretization_bias_flag)),
    }
    pred = None
    if req.t1 > req.a**2:
        pred = window_formula(query).value
    elif req.r > req.a and req.t2 > req.r**2:
        pred = ratio_formula(req.a, req.r, req.t2)
    if pred:
        metrics["prediction"] = Metric(value=pred)
        metrics["ratio_to_prediction"] = Metric(value=est.probability / pred)
    summary = f"P(hit disc {req.a} in [{req.t1}, {req.t2}]) ~ {est.probability:.5f} +- {est.std_error:.2g}"
    return _record("hitting", req, metrics, summary, t0)


def _lclt_max_rel_error(t: int, radius_multiple: float) -> float:
    """Max of |p_t(x)/lclt(t,x) - 1| over parity-matching |x| <= mult*sqrt(t)."""
    from .walks import log_half_mass

    r = int(radius_multiple * math.sqrt(t))
    _ensure_logfact(t)
    lhm = np.array([log_half_mass(t, k) for k in range(-2 * r, 2 * r + 1)])
    worst = 0.0
    for x in range(-r, r + 1):
        for y in range(-r, r + 1):
            if (x + y + t) % 2 or x * x + y * y > r * r:
                continue
            logp = lhm[x + y + 2 * r] + lhm[x - y + 2 * r]
            rel = abs(math.exp(logp) / lclt_approx(t, (x, y)) - 1.0)
            worst = max(worst, rel)
    return worst


def run_lclt(req: LcltRequest) -> ResultRecord:
    t0 = time.perf_counter()
    rows = []
    for t in sorted(req.times):
        err = _lclt_max_rel_error(t, req.radius_multiple)
        rows.append([float(t), err, err * t])
    series = Series(header=["t", "max_rel_error", "fitted_constant"], rows=rows)
    metrics = {
        "fitted_constant": Metric(value=max(r[2] for r in rows)),
        "first_error": Metric(value=rows[0][1]),
        "last_error": Metric(value=rows[-1][1]),
    }
    if len(rows) > 1 and rows[-1][1] > 0:
        metrics["decay_factor"] = Metric(value=rows[0][1] / rows[-1][1])
    summary = f"LCLT max rel error: {rows[0][1]:.3g} at t={int(rows[0][0])} -> {rows[-1][1]:.3g} at t={int(rows[-1][0])}"
    return _record("lclt", req, metrics, summary, t0, series=series)


def run_qlarge(req: QlargeRequest) -> ResultRecord:
    t0 = time.perf_counter()
    params = build_disorder(req.beta_hat, req.N)
    est = mc_moment(params, req.q, req.replicates, RngStream(req.seed), _threads(req))
    blog = qlarge_lower_bound_log(params, req.q)
    bound = math.exp(blog)
    metrics = {
        "estimate": Metric(value=est.estimate, std_error=est.std_error),
        "bound_log": Metric(value=blog),
        "bound": Metric(value=bound),
        "satisfied": Metric(value=float(est.estimate >= bound - 3.0 * est.std_error)),
    }
    summary = f"E[W^{req.q}] ~ {est.estimate:.5g} vs confinement bound {bound:.3g}"
    return _record("qlarge", req, metrics, summary, t0)


def run_confinement(req: ConfinementRequest) -> ResultRecord:
    t0 = time.perf_counter()
    p = ParameterTuple(req.gamma, req.epsilon0, req.delta, 100, req.nu1, req.nu2, req.alpha, req.N, max(req.q, 2))
    s = build_schedule(p, req.mode)
    if s.K < 1:
        raise DomainError("schedule has K = 0 blocks; confinement needs K >= 1")
    stats = confinement_stats(req.q, s, req.delta, req.epsilon0, req.replicates, RngStream(req.seed), _threads(req))
    rows = [[float(k + 1), stats.g_mean[k], stats.a_rate[k]] for k in range(len(stats.g_mean))]
    series = Series(header=["k", "mean_G_size", "A_rate"], rows=rows)
    metrics = {
        "d_estimate": Metric(value=stats.d_estimate, std_error=stats.d_std_error),
        "K": Metric(value=float(s.K)),
    }
    tables = {"checkpoints": {str(i + 1): t for i, t in enumerate(stats.checkpoint_times)}}
    summary = f"P(all blocks confined) ~ {stats.d_estimate:.4f} +- {stats.d_std_error:.2g} over K={s.K} blocks"
    return _record("confinement", req, metrics, summary, t0, series=series, tables=tables)


RUNNERS = {
    "moments": run_moments,
    "second-moment-scan": run_second_moment_scan,
    "schedule": run_schedule,
    "poisson": run_poisson,
    "pair-prob": run_pair_prob,
    "hitting": run_hitting,
    "lclt": run_lclt,
    "qlarge": run_qlarge,
    "confinement": run_confinement,
}


def build_request(command: str, params: dict[str, Any]) -> RequestBase:
    model = REQUEST_MODELS.get(command)
    if model is None:
        raise ConfigError(f"unknown command {command!r}; choose from {sorted(REQUEST_MODELS)}")
    try:
        return model(**params)
    except Exception as exc:  # pydantic ValidationError and friends
        raise ConfigError(f"invalid parameters for {command}: {exc}") from exc


def run_request(command: str, req: RequestBase) -> ResultRecord:
    runner = RUNNERS.get(command)
    if runner is None:
        raise ConfigError(f"unknown command {command!r}")
    return runner(req)


def run_config(command: str, params: dict[str, Any]) -> ResultRecord:
    return run_request(command, build_request(command, params))


# -- replay ---------------------------------------------------------------------


def config_digest(command: str, version: str, config: dict) -> str:
    blob = json.dumps({"command": command, "version": version, "config": config}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def attach_digest(record: ResultRecord) -> dict:
    """Serialize a record with its config digest appended."""
    payload = json.loads(record.model_dump_json())
    payload["config_digest"] = config_digest(record.command, record.version, payload["config"])
    return payload


def replay(payload: dict) -> tuple[ResultRecord, dict[str, float], bool]:
    """Re-run a serialized record and compare metrics.

    Exact quantities must match bit-for-bit, floating accumulations within
    1e-12 relative.  A record whose config no longer matches its digest is
    refused as a different-config edit rather than reported as drift; a
    version mismatch is refused outright.
    """
    payload = dict(payload)
    stored_digest = payload.pop("config_digest", None)
    record = ResultRecord(**payload)
    if record.version != __version__:
        raise VersionMismatchError(f"record version {record.version} != current {__version__}")
    if stored_digest is not None:
        fresh = config_digest(record.command, record.version, record.config)
        if fresh != stored_digest:
            raise ConfigError("record config was modified after writing (digest mismatch): different config, not drift")
    req = build_request(record.command, record.config)
    new = run_request(record.command, req)
    drift: dict[str, float] = {}
    for name, metric in record.metrics.items():
        newval = new.metrics[name].value
        ref = max(abs(metric.value), 1.0)
        drift[name] = abs(newval - metric.value) / ref
    ok = all(v <= 1e-12 for v in drift.values())
    return new, drift, ok


# -- presets ----------------------------------------------------------------------


def get_preset(name: str) -> dict[str, dict]:
    """Named parameter bundles per command; see README for the regime split."""
    if name == "desk-small":
        return {
            "moments": {"beta_hat": 0.5, "N": 1000, "q": 2, "replicates": 100_000},
            "second-moment-scan": {"beta_hat": 0.5, "N_values": [100, 1000, 10_000]},
            "schedule": {"gamma": 0.3, "alpha": 4, "nu1": 4, "nu2": 4, "N": 1000, "q": 3},
            "poisson": {"q0": 6, "l": 1000, "t1": 25_000, "nu2": 4, "M": 8.0, "replicates": 2000},
            "pair-prob": {"l": 1000, "t1": 1000, "nu2": 4, "M": 8.0, "replicates": 20_000},
            "hitting": {"a": 0.5, "r": 0.0, "t1": 100.0, "t2": 100_000.0, "step": 1.0, "replicates": 20_000},
            "lclt": {"times": [100, 1000]},
            "qlarge": {"beta_hat": 0.5, "N": 2, "q": 3, "replicates": 100_000},
            "confinement": {
                "q": 8,
                "delta": 0.2,
                "gamma": 0.2,
                "alpha": 5,
                "nu1": 10,
                "nu2": 10,
                "N": 1000,
                "replicates": 4000,
            },
        }
    if name == "desk-large":
        return {
            "moments": {"beta_hat": 0.5, "N": 1_000_000, "q": 2, "replicates": 2000},
            "second-moment-scan": {"beta_hat": 0.5, "N_values": [100, 1000, 10_000, 100_000]},
            "schedule": {"gamma": 0.2, "alpha": 5, "nu1": 10, "nu2": 10, "N": 1_000_000, "q": 4},
            "poisson": {"q0": 10, "l": 10_000, "t1": 250_000, "nu2": 10, "M": 8.0, "replicates": 2500},
            "pair-prob": {"l": 10_000, "t1": 1000, "nu2": 10, "M": 8.0, "replicates": 20_000},
            "hitting": {"a": 1e-3, "r": 0.0, "t1": 1.0, "t2": 10.0, "step": 0.01, "replicates": 1_000_000},
            "lclt": {"times": [100, 1000]},
            "qlarge": {"beta_hat": 0.5, "N": 4, "q": 4, "replicates": 100_000},
            "confinement": {
                "q": 16,
                "delta": 0.1,
                "gamma": 0.2,
                "alpha": 5,
                "nu1": 10,
                "nu2": 10,
                "N": 1_000_000,
                "replicates": 4000,
            },
        }
    if name == "paper-scale-validate":
        import mpmath as mp

        alpha = 303
        with mp.workprec(2048):
            big_n = int(mp.ceil(mp.e ** mp.mpf(2 * alpha * 1.2))) + 1
        return {
            "schedule": {
                "gamma": 0.3,
                "epsilon0": 0.01,
                "delta": 0.01,
                "M": 1000,
                "nu1": 40_000_000,
                "nu2": 100,
                "alpha": alpha,
                "N": big_n,
                "q": 27,
                "allow_big": True,
            }
        }
    raise ConfigError(f"unknown preset {name!r}; choose desk-small, desk-large or paper-scale-validate")
