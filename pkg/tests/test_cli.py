import csv
import json
import subprocess
import sys

import pytest

from markedgof import __version__, cli


def run(argv, capsys=None):
    code = cli.main(argv)
    if capsys is None:
        return code
    out, err = capsys.readouterr()
    return code, out, err


def test_happy_path_config():
    cfg, echo = cli.parse_config(["test-ts", "--model", "ar1", "--rho", "0.5", "--n", "10000",
                                  "--alpha", "0.05", "--seed", "42"])
    assert (cfg.command, cfg.model, cfg.rho, cfg.n, cfg.alpha, cfg.seed) == ("test-ts", "ar1", 0.5, 10000, 0.05, 42)
    assert cfg.model_params() == {"rho": 0.5}
    assert echo == {"config_file": None, "overridden_by_flags": []}


def test_alpha_out_of_range(capsys):
    code, _, err = run(["test-ts", "--alpha", "1.5"], capsys)
    assert code == 1
    assert "alpha" in err and "(0, 1)" in err


@pytest.mark.parametrize("argv,key", [
    (["simulate", "--model", "gbm"], "model"),
    (["simulate", "--theta", "-1"], "theta"),
    (["test-ts", "--rho", "1.2"], "rho"),
    (["simulate", "--n", "abc"], "n"),
    (["simulate", "--beta", "0.4"], "beta"),
    (["test-ts", "--noise", "laplace"], "noise"),
    (["test-diffusion", "--model", "ar1"], "model"),
    (["power-study"], "ladder"),
    (["size-study", "--n-grid", "100,50"], "n_grid"),
])
def test_validation_names_key(capsys, argv, key):
    code, _, err = run(argv, capsys)
    assert code == 1
    assert key in err


def test_config_file_precedence(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": "ar1", "rho": 0.3, "n": 500, "alpha": 0.1}))
    code, out, _ = run(["test-ts", "--config", str(path), "--rho", "0.6", "--print-effective-config"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["config"]["rho"] == 0.6
    assert payload["config"]["n"] == 500 and payload["config"]["alpha"] == 0.1
    assert payload["echo"]["overridden_by_flags"] == ["rho"]
    assert payload["echo"]["config_file"] == str(path)


@pytest.mark.parametrize("content,fragment", [
    ("{not json", "malformed"),
    ("[1, 2]", "malformed"),
    (json.dumps({"colour": "red"}), "colour"),
    (json.dumps({"alpha": "high"}), "alpha"),
])
def test_bad_config_files(tmp_path, capsys, content, fragment):
    path = tmp_path / "c.json"
    path.write_text(content)
    code, _, err = run(["simulate", "--config", str(path)], capsys)
    assert code == 1 and fragment in err


def test_limits_single_row(tmp_path, capsys):
    out = tmp_path / "cv.csv"
    code, stdout, _ = run(["limits", "--functional", "ad", "--alpha", "0.05", "--n-paths", "2000", "--K", "128",
                           "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1
    assert rows[0]["functional"] == "AD" and float(rows[0]["alpha"]) == 0.05
    assert 2.0 < float(rows[0]["critical_value"]) < 4.0
    assert json.loads(out.with_suffix(".json").read_text())["config"]["seed"] == cli.DEFAULT_ROOT_SEED


def test_simulate_row_count(tmp_path, capsys):
    out = tmp_path / "ou.csv"
    code, _, _ = run(["simulate", "--model", "ou", "--theta", "1", "--n", "1000", "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,X" and len(lines) == 1002
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["config"]["n"] == 1000


def test_simulate_series_and_test_roundtrip(tmp_path, capsys):
    data = tmp_path / "ar.csv"
    assert run(["simulate", "--model", "ar1", "--n", "300", "--out", str(data)], capsys)[0] == 0
    lines = data.read_text().splitlines()
    assert lines[0] == "X" and len(lines) == 302
    res = tmp_path / "res.json"
    code, _, _ = run(["test-ts", "--data", str(data), "--n-paths", "500", "--K", "64", "--out", str(res)], capsys)
    assert code == 0
    payload = json.loads(res.read_text())
    assert payload["metadata"]["n"] == 300
    assert {"statistic", "critical_value", "p_value", "reject", "alpha", "config", "echo"} <= set(payload)


def test_test_diffusion_decision_not_in_exit_code(tmp_path, capsys):
    data = tmp_path / "ou.csv"
    run(["simulate", "--model", "ou", "--n", "2000", "--out", str(data)], capsys)
    codes = set()
    for shift in ("0", "3"):
        code, out, _ = run(["test-diffusion", "--data", str(data), "--null-shift", shift,
                            "--n-paths", "500", "--K", "64"], capsys)
        codes.add(code)
        assert "reject" in json.loads(out)
    assert codes == {0}


def test_missing_column(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,Y\n0,1\n1,2\n")
    code, _, err = run(["test-diffusion", "--data", str(bad)], capsys)
    assert code == 1 and "X" in err


def test_non_increasing_times(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,X\n0,1\n0,2\n")
    code, _, err = run(["test-diffusion", "--data", str(bad)], capsys)
    assert code == 1 and "increasing" in err


def test_missing_file(tmp_path, capsys):
    path = tmp_path / "nope.csv"
    code, _, err = run(["test-ts", "--data", str(path)], capsys)
    assert code == 2 and str(path) in err


def test_sidecar_rerun_reproduces_bytes(tmp_path, capsys):
    first = tmp_path / "size.csv"
    argv = ["size-study", "--model", "ar1", "--n-grid", "100,200", "--replications", "300",
            "--n-paths", "1000", "--K", "64", "--out", str(first)]
    assert run(argv, capsys)[0] == 0
    second = tmp_path / "again.csv"
    code, _, _ = run(["size-study", "--config", str(first.with_suffix(".json")), "--workers", "2",
                      "--out", str(second)], capsys)
    assert code == 0
    assert second.read_bytes() == first.read_bytes()
    side = json.loads(second.with_suffix(".json").read_text())
    assert side["echo"]["overridden_by_flags"] == ["out", "workers"]
    assert side["spec"]["root_seed"] == cli.DEFAULT_ROOT_SEED


def test_version_and_module_entry():
    proc = subprocess.run([sys.executable, "-m", "markedgof", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout


def test_golden_csv_schema():
    from importlib import resources

    text = resources.files("markedgof").joinpath("data/golden_critical_values.csv").read_text()
    header, *rows = text.splitlines()
    assert header == "functional,alpha,K,n_paths,root_seed,critical_value"
    assert len(rows) == 6
    for row in rows:
        value = row.split(",")[-1]
        assert len(value.replace(".", "").lstrip("0")) >= 16
