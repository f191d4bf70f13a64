import json
import math
import subprocess
import sys

import pytest

from polymerlab.errors import ConfigError, VersionMismatchError
from polymerlab.experiments import (
    LATTICE_DISC_RADIUS,
    attach_digest,
    build_request,
    get_preset,
    replay,
    run_config,
    window_formula_for_pair_window,
)

# golden output schema: JSON field names and CSV headers are a contract
RECORD_FIELDS = {"command", "version", "config", "metrics", "series", "tables", "summary", "wall_time_s", "config_digest"}
SERIES_HEADERS = {
    "second-moment-scan": ["N", "exact_second_moment", "gap_to_limit", "abs_gap"],
    "lclt": ["t", "max_rel_error", "fitted_constant"],
    "poisson": ["k", "count"],
    "confinement": ["k", "mean_G_size", "A_rate"],
}


def test_moments_q1_trivial():
    rec = run_config("moments", {"beta_hat": 0.5, "N": 10, "q": 1, "replicates": 50})
    assert rec.metrics["estimate"].value == 1.0
    assert rec.metrics["estimate"].std_error == 0.0


def test_moments_q2_has_exact_companion():
    rec = run_config("moments", {"beta_hat": 0.5, "N": 100, "q": 2, "replicates": 5000, "seed": 3})
    assert abs(rec.metrics["estimate"].value - rec.metrics["exact"].value) < 4 * rec.metrics["estimate"].std_error
    assert rec.metrics["limit_prediction"].value == pytest.approx(4 / 3)


def test_second_moment_scan_series():
    rec = run_config("second-moment-scan", {"beta_hat": 0.5, "N_values": [100, 1000]})
    assert rec.series.header == SERIES_HEADERS["second-moment-scan"]
    assert rec.metrics["gaps_strictly_decreasing"].value == 1.0


def test_schedule_record_golden():
    rec = run_config("schedule", get_preset("desk-large")["schedule"])
    assert rec.metrics["K"].value == 3.0
    assert rec.tables["schedule"]["l"][1] == 53
    assert rec.tables["schedule"]["o"][1] == 636
    json.dumps(rec.tables["schedule"])  # JSON-safe


def test_schedule_paper_scale_preset():
    rec = run_config("schedule", get_preset("paper-scale-validate")["schedule"])
    assert rec.metrics["constraints_all_pass"].value == 1.0
    assert rec.metrics["relations_all_ok"].value == 1.0
    assert rec.metrics["K"].value >= 1


def test_pair_prob_record_and_prediction():
    rec = run_config(
        "pair-prob", {"l": 400, "t1": 400, "nu2": 4, "M": 8.0, "replicates": 8000, "seed": 5}
    )
    m = rec.metrics
    assert 0 < m["conditioned"].value < 1
    assert "prediction" in m and "ratio_to_prediction" in m
    pred = window_formula_for_pair_window(400, 800)
    assert m["prediction"].value == pytest.approx(pred, rel=1e-12)
    assert pred == pytest.approx(math.log(2.0) / math.log(800 / LATTICE_DISC_RADIUS**2), rel=1e-12)


def test_lclt_record():
    rec = run_config("lclt", {"times": [100, 400]})
    assert rec.series.header == SERIES_HEADERS["lclt"]
    assert rec.metrics["decay_factor"].value > 1.0


def test_qlarge_record():
    rec = run_config("qlarge", {"beta_hat": 0.5, "N": 2, "q": 3, "replicates": 20_000, "seed": 1})
    assert rec.metrics["satisfied"].value == 1.0


def test_poisson_record():
    rec = run_config("poisson", {"q0": 4, "l": 200, "t1": 2000, "nu2": 4, "replicates": 400, "seed": 2})
    assert rec.series.header == SERIES_HEADERS["poisson"]
    assert rec.metrics["chen_stein_bound"].value == pytest.approx(
        2 * (rec.metrics["e1"].value + rec.metrics["e2"].value)
    )


def test_confinement_record():
    rec = run_config(
        "confinement",
        {"q": 4, "delta": 0.3, "gamma": 0.2, "alpha": 5, "nu1": 10, "nu2": 10, "N": 1000, "replicates": 500, "seed": 4},
    )
    assert rec.series.header == SERIES_HEADERS["confinement"]
    assert 0 <= rec.metrics["d_estimate"].value <= 1


def test_unknown_command_and_bad_params():
    with pytest.raises(ConfigError):
        run_config("nope", {})
    with pytest.raises(ConfigError):
        build_request("moments", {"beta_hat": -1, "N": 10, "q": 2})
    with pytest.raises(ConfigError):
        build_request("moments", {"beta_hat": 0.5, "N": 10, "q": 2, "bogus": 1})


def test_threads_do_not_change_results():
    base = {"beta_hat": 0.5, "N": 200, "q": 2, "replicates": 20_000, "seed": 9}
    a = run_config("moments", dict(base, threads=1))
    b = run_config("moments", dict(base, threads=8))
    assert a.metrics["estimate"].value == b.metrics["estimate"].value


def test_replay_roundtrip_no_drift():
    rec = run_config("moments", {"beta_hat": 0.5, "N": 50, "q": 2, "replicates": 4000, "seed": 11})
    payload = attach_digest(rec)
    blob = json.loads(json.dumps(payload))  # full serialization round trip
    new, drift, ok = replay(blob)
    assert ok and max(drift.values()) == 0.0


def test_replay_flags_modified_config():
    rec = run_config("moments", {"beta_hat": 0.5, "N": 50, "q": 2, "replicates": 4000, "seed": 11})
    payload = attach_digest(rec)
    payload["config"]["seed"] = 12  # edited after writing
    with pytest.raises(ConfigError, match="different config"):
        replay(payload)


def test_replay_version_mismatch():
    rec = run_config("moments", {"beta_hat": 0.5, "N": 50, "q": 2, "replicates": 4000, "seed": 11})
    payload = attach_digest(rec)
    payload["version"] = "0.0.0"
    with pytest.raises(VersionMismatchError):
        replay(payload)


def test_record_json_fields_golden(tmp_path):
    rec = run_config("second-moment-scan", {"beta_hat": 0.5, "N_values": [100]})
    payload = attach_digest(rec)
    assert set(payload) == RECORD_FIELDS
    assert set(payload["metrics"]["limit"]) == {"value", "std_error"}


def test_presets_exist_and_validate():
    for name in ("desk-small", "desk-large"):
        preset = get_preset(name)
        for command, params in preset.items():
            build_request(command, params)  # validates against the models
    with pytest.raises(ConfigError):
        get_preset("desk-medium")


# -- CLI ---------------------------------------------------------------------


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "polymerlab.cli", *args], capture_output=True, text=True)


def test_cli_moments_and_replay(tmp_path):
    out = tmp_path / "m.json"
    r = run_cli("moments", "--set", "beta_hat=0.5", "--set", "N=50", "--set", "q=2", "--replicates", "3000", "--seed", "7", "--out", str(out))
    assert r.returncode == 0, r.stderr
    payload = json.loads(out.read_text())
    assert payload["command"] == "moments"
    r2 = run_cli("replay", str(out), "--out", str(tmp_path / "r.json"))
    assert r2.returncode == 0, r2.stderr
    replayed = json.loads((tmp_path / "r.json").read_text())
    assert replayed["replay"]["ok"] is True


def test_cli_csv_output(tmp_path):
    out = tmp_path / "scan.json"
    r = run_cli("second-moment-scan", "--set", "beta_hat=0.5", "--set", "N_values=[100,1000]", "--out", str(out))
    assert r.returncode == 0, r.stderr
    csv_text = (tmp_path / "scan.csv").read_text().splitlines()
    assert csv_text[0] == ",".join(SERIES_HEADERS["second-moment-scan"])
    assert len(csv_text) == 3


def test_cli_exit_codes(tmp_path):
    assert run_cli("moments", "--set", "nope=1").returncode == 2  # config
    r = run_cli("moments", "--set", "beta_hat=0.5", "--set", "N=200000", "--set", "q=2", "--set", "replicates=10")
    assert r.returncode == 0  # MC path has no DP budget
    r2 = run_cli("second-moment-scan", "--set", "beta_hat=0.5", "--set", "N_values=[200000]")
    assert r2.returncode == 4  # capacity error from the exact DP budget
    r3 = run_cli("hitting", "--set", "a=2", "--set", "r=1", "--set", "t1=100", "--set", "t2=50", "--set", "replicates=10")
    assert r3.returncode == 3  # domain error: t2 < t1


def test_cli_preset_config(tmp_path):
    out = tmp_path / "sched.json"
    r = run_cli("schedule", "--config", "desk-large", "--out", str(out))
    assert r.returncode == 0, r.stderr
    assert json.loads(out.read_text())["metrics"]["K"]["value"] == 3.0


def test_cli_config_file_flat_and_sectioned(tmp_path):
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps({"beta_hat": 0.5, "N": 50, "q": 1, "replicates": 10}))
    assert run_cli("moments", "--config", str(flat), "--out", str(tmp_path / "a.json")).returncode == 0
    sectioned = tmp_path / "sect.json"
    sectioned.write_text(json.dumps({"moments": {"beta_hat": 0.5, "N": 50, "q": 1, "replicates": 10}}))
    assert run_cli("moments", "--config", str(sectioned), "--out", str(tmp_path / "b.json")).returncode == 0


def test_cli_invalid_endpoint_exit_code(tmp_path):
    r = run_cli(
        "pair-prob",
        "--set", "l=2", "--set", "t1=0", "--set", "nu2=1",
        "--set", "x=[[0,0],[0,0]]", "--set", "y=[[1,0],[0,0]]",
        "--set", "replicates=10",
    )
    assert r.returncode == 5
    assert "invalid-endpoint" in r.stderr
