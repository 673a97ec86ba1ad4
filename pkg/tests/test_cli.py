import json
import subprocess
import sys

import numpy as np
import pytest

from hazdiff import ScenarioSpec, fit, generate_scenario, load_csv, write_csv
from hazdiff.cli import main


@pytest.fixture(scope="module")
def s1_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "s1.csv"
    sample, _ = generate_scenario(ScenarioSpec(1, 1000, seed=42))
    write_csv(sample, path)
    return path, sample


@pytest.fixture(scope="module")
def s5_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "s5.csv"
    sample, _ = generate_scenario(ScenarioSpec(5, 300, seed=3))
    write_csv(sample, path)
    return path, sample


def _fit_json(tmp_path, argv, name="out.json"):
    out = tmp_path / name
    assert main(["fit", *map(str, argv), "--out", str(out)]) == 0
    return out


def test_fit_reports_one_se_per_cause(tmp_path, s5_csv):
    path, _ = s5_csv
    out = _fit_json(tmp_path, [path, "--score", "1", "--ps", "logistic", "--censor", "cox", "--variance", "model"])
    doc = json.loads(out.read_text())
    assert doc["method"] == "score1"
    assert len(doc["beta"]) == len(doc["se"]) == len(doc["ci95"]) == 2
    assert np.array(doc["covariance"]).shape == (2, 2)
    assert doc["nuisance"]["censoring"]["kind"] == "cox"
    assert set(doc["nuisance"]) >= {"propensity", "censoring", "gamma"}
    manifest = doc["manifest"]
    assert manifest["command"] == "fit" and manifest["seed"] == 0
    assert len(manifest["input"]["sha256"]) == 64
    run = json.loads((tmp_path / "out.json.run.json").read_text())
    assert run["duration_seconds"] >= 0 and run["jobs"] == 1


def test_bootstrap_fit_is_byte_identical(tmp_path, s5_csv):
    path, _ = s5_csv
    argv = [path, "--score", "2", "--variance", "bootstrap", "--boot-b", 20, "--seed", 7]
    a = _fit_json(tmp_path, argv, "a.json").read_bytes()
    b = _fit_json(tmp_path, argv, "b.json").read_bytes()
    c = _fit_json(tmp_path, argv + ["--jobs", 2], "c.json").read_bytes()
    assert a == b == c


def test_cli_matches_library(tmp_path, s1_csv):
    path, sample = s1_csv
    doc = json.loads(_fit_json(tmp_path, [path, "--score", "1s", "--ps-spec", "z1,z2"]).read_text())
    est = fit(sample, "score1s", ps_spec="z1,z2")
    assert np.allclose(doc["beta"], est.beta, atol=1e-12, rtol=0)
    assert np.allclose(doc["se"], est.se, atol=1e-12, rtol=0)
    # the CSV round trip itself is exact
    assert np.array_equal(load_csv(path).time, sample.time)


def test_external_nuisance_files(tmp_path, s5_csv):
    path, sample = s5_csv
    pi = np.clip(0.3 + 0.4 * sample.covariates[:, 0], 0.05, 0.95)
    (tmp_path / "pi.csv").write_text("row_id,pi_hat\n" + "".join(f"{i + 1},{float(p)!r}\n" for i, p in enumerate(pi)))
    lines = ["row_id,time,sc_value"] + [f"{i + 1},{t!r},{v!r}" for i in range(sample.n)
                                         for t, v in ((0.5, 0.9), (1.5, 0.7))]
    (tmp_path / "sc.csv").write_text("\n".join(lines) + "\n")
    doc = json.loads(_fit_json(tmp_path, [path, "--score", "1", "--ps", "external", "--pi-file", tmp_path / "pi.csv",
                                          "--censor", "external", "--sc-file", tmp_path / "sc.csv"]).read_text())
    from hazdiff import inject_external_nuisance

    steps = (np.array([0.5, 1.5]), np.array([0.9, 0.7]))
    external = inject_external_nuisance(pi, [steps] * sample.n)
    est = fit(load_csv(path), "score1", censor="external", external=external)
    assert np.allclose(doc["beta"], est.beta, atol=1e-12, rtol=0)
    assert doc["manifest"]["input"].keys() >= {"pi_sha256", "sc_sha256"}


@pytest.mark.parametrize("argv, message", [
    (["fit", "missing.csv"], "missing.csv"),
    (["fit", "{s5}", "--score", "2s", "--censor", "cox"], "simplified score"),
    (["fit", "{s5}", "--ps", "external"], "--pi-file"),
    (["fit", "{s5}", "--ps-spec", "z9"], "unknown covariate"),
    (["simulate", "--scenario", "9", "--reps", "1"], "valid ids are 1, 2, 3, 4, 5, 6, 7, 8"),
    (["simulate", "--scenario", "1", "--reps", "0"], "at least 1"),
    (["simulate", "--reps", "1"], "--scenario is required"),
])
def test_input_errors_exit_2(capsys, s5_csv, argv, message):
    argv = [a.replace("{s5}", str(s5_csv[0])) for a in argv]
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert message in err and err.startswith("hazdiff: input error [")


def test_bad_injection_file_exits_2(tmp_path, capsys, s5_csv):
    (tmp_path / "pi.csv").write_text("row_id,pi_hat\n1,abc\n")
    assert main(["fit", str(s5_csv[0]), "--ps", "external", "--pi-file", str(tmp_path / "pi.csv")]) == 2
    assert "row 1: non-numeric" in capsys.readouterr().err


def test_bad_csv_exits_2(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("time,status,treatment,z1\n1,0,1,0\n-2,1,0,0\n")
    assert main(["fit", str(tmp_path / "bad.csv")]) == 2
    assert "[data]" in capsys.readouterr().err


def test_estimation_failure_exits_3(tmp_path, capsys):
    rows = "".join(f"{i + 1},{i % 3},1,{i / 10}\n" for i in range(12))
    (tmp_path / "onearm.csv").write_text("time,status,treatment,z1\n" + rows)
    assert main(["fit", str(tmp_path / "onearm.csv")]) == 3
    assert "estimation failed [nuisance]: one-arm" in capsys.readouterr().err


def test_module_entry_point_exit_code():
    proc = subprocess.run([sys.executable, "-m", "hazdiff", "simulate", "--scenario", "9"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "valid ids" in proc.stderr


def test_simulate_quick_run(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["simulate", "--scenario", "1", "--n", "200", "--reps", "5", "--seed", "1",
            "--methods", "score1s,score2s,regression", "--out-dir", str(out)]
    assert main(argv) == 0
    table = capsys.readouterr().out
    assert table == (out / "table.txt").read_text()
    summary = json.loads((out / "summary.json").read_text())
    assert {r["reps"] for r in summary["rows"]} == {5}
    assert len(summary["rows"]) == 6
    assert (out / "summary.csv").read_text().startswith("method,component,bias,sd,se,cp,median_se")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["reps"] == 5 and "duration_seconds" in manifest


def test_simulate_config_precedence_and_env_jobs(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "study.toml"
    cfg.write_text('scenario = 2\nn = 150\nreps = 4\nseed = 3\nmethods = ["score1s", "regression"]\n')
    monkeypatch.setenv("HAZDIFF_JOBS", "2")
    assert main(["simulate", "--config", str(cfg), "--reps", "3", "--out-dir", str(tmp_path / "a")]) == 0
    monkeypatch.delenv("HAZDIFF_JOBS")
    assert main(["simulate", "--config", str(cfg), "--reps", "3", "--jobs", "1", "--out-dir", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert a["jobs"] == 2
    assert a["config"]["reps"] == 3 and a["config"]["scenario"] == 2
    assert a["config"]["methods"] == "score1s,regression"
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_json_config_and_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps({"scenario": 1, "n": 100, "reps": 2, "methods": "score1s"}))
    assert main(["simulate", "--config", str(cfg)]) == 0
    cfg.write_text(json.dumps({"scenario": 1, "replicates": 2}))
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "unknown config keys: replicates" in capsys.readouterr().err
