import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from qsemimarkov.cli import deviation_in_se, main

T_ZERO = 4 * math.pi / (3 * math.sqrt(3))


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {h: np.array([float(r[i]) if r[i] else np.nan for r in rows[1:]]) for i, h in enumerate(header)}
    return header, cols


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_evolve_two_level(tmp_path, capsys):
    code, _, _ = run(["evolve", "--preset", "two-level", "--initial", "+", "--steps", "1500",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    header, cols = read_csv(tmp_path / "evolve.csv")
    assert header == ["t", "P_0", "P_1", "rho_01_re", "rho_01_im", "trace", "min_eig_rho"]
    assert abs(cols["P_0"][1000] - 0.82227) < 1e-5
    assert np.abs(cols["trace"] - 1).max() < 1e-10


def test_evolve_zero_kernel_is_constant(tmp_path, capsys):
    spec = tmp_path / "zero.json"
    spec.write_text(json.dumps({"dimension": 2, "grid": {"h": 0.1, "steps": 20}}))
    rho = [[[0.7, 0], [0.1, 0.2]], [[0.1, -0.2], [0.3, 0]]]
    code, _, _ = run(["evolve", "--spec", str(spec), "--initial", json.dumps(rho), "--out", str(tmp_path)], capsys)
    assert code == 0
    header, cols = read_csv(tmp_path / "evolve.csv")
    assert len(cols["t"]) == 21
    for h in header[1:]:
        assert np.all(cols[h] == cols[h][0])
    assert cols["rho_01_im"][0] == 0.2


def test_evolve_oscillator_loses_positivity(tmp_path, capsys):
    code, _, _ = run(["evolve", "--preset", "oscillator-violating", "--initial", "1", "--steps", "3000",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    _, cols = read_csv(tmp_path / "evolve.csv")
    first = cols["t"][np.argmax(cols["min_eig_rho"] < -1e-12)]
    assert abs(first - T_ZERO) < 2e-3


def test_certify_exit_codes_and_outputs(tmp_path, capsys):
    code, out, _ = run(["certify", "--preset", "qsm3", "--out", str(tmp_path / "a")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["cond2"]["verdict"] == doc["choi"]["verdict"] == "pass"
    header, cols = read_csv(tmp_path / "a" / "eigenvalues.csv")
    assert header == ["t", "min_eig_G", "min_eig_Gtilde", "min_eig_choi"]
    assert json.loads((tmp_path / "a" / "report.json").read_text()) == doc

    code, out, _ = run(["certify", "--preset", "oscillator-violating", "--choi", "off", "--steps", "3000",
                        "--out", str(tmp_path / "b")], capsys)
    assert code == 1
    doc = json.loads(out)
    assert doc["cond1"]["verdict"] == "fail"
    assert abs(doc["diagonal_violation_times"][1] - T_ZERO) < 2e-3
    assert doc["choi"]["verdict"] == "skipped"
    assert (tmp_path / "b" / "eigenvalues.csv").exists()


def test_certify_markov_limit_reports_failure(tmp_path, capsys):
    code, out, _ = run(["certify", "--preset", "two-level-markov", "--steps", "1000", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(out)["cond1"]["earliest_violation_time"] < 0.01


def test_tolerance_override_is_recorded(tmp_path, capsys):
    _, out, _ = run(["certify", "--preset", "qsm3", "--tol-psd", "1e-6", "--choi", "sampled",
                     "--out", str(tmp_path)], capsys)
    doc = json.loads(out)
    assert doc["tolerances"]["psd_rtol"] == 1e-6
    assert doc["tolerances"]["choi_mode"] == "sampled"


def test_invalid_spec_and_grid_guard(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dimension": 2, "channels": [
        {"matrix": [[[1, 0], [1, 0]], [[0, 0], [0, 0]]], "profile": {"type": "constant", "value": 1}}]}))
    code, _, err = run(["certify", "--spec", str(bad), "--out", str(tmp_path)], capsys)
    assert code == 2 and "off-diagonal" in err
    (tmp_path / "broken.json").write_text("{")
    assert run(["evolve", "--spec", str(tmp_path / "broken.json")], capsys)[0] == 2
    code, _, err = run(["evolve", "--preset", "two-level-markov", "--h", "0.01", "--steps", "10",
                        "--out", str(tmp_path)], capsys)
    assert code == 3 and "exceeds" in err
    assert run(["evolve", "--preset", "no-such-model"], capsys)[0] == 2


def test_sample_requires_valid_classical_law(tmp_path, capsys):
    code, _, err = run(["sample", "--preset", "two-level-oscillating", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "3.628" in err
    spec = tmp_path / "plain.json"
    spec.write_text(json.dumps({"dimension": 2, "grid": {"h": 0.1, "steps": 10}}))
    code, _, err = run(["sample", "--spec", str(spec), "--out", str(tmp_path)], capsys)
    assert code == 2 and "classical annotation" in err


def test_sample_is_byte_identical(tmp_path, capsys):
    args = ["sample", "--preset", "transport", "--trajectories", "3000", "--seed", "42", "--steps", "2000"]
    assert run(args + ["--out", str(tmp_path / "a")], capsys)[0] == 0
    assert run(args + ["--out", str(tmp_path / "b")], capsys)[0] == 0
    for name in ("trajectories.csv", "populations.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_compare_two_level(tmp_path, capsys):
    code, out, _ = run(["compare", "--preset", "two-level", "--trajectories", "20000", "--seed", "0",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["fraction_within_3se"] >= 0.99
    assert np.isfinite(doc["max_deviation_se"])
    header, _ = read_csv(tmp_path / "compare.csv")
    assert header[:3] == ["t", "P_mc_0", "P_mc_1"]


def test_deviation_in_se_edge_cases():
    z = deviation_in_se(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.1, 0.0]), np.array([0.0, 0.6, 1.0 - 1e-6]), 100)
    assert z[0] == 0.0 and abs(z[1] - 1.0) < 1e-12 and z[2] < 1


def test_zoo_export_round_trip(tmp_path, capsys):
    code, out, _ = run(["zoo", "--preset", "qsm3-violating", "--out", str(tmp_path)], capsys)
    assert code == 0
    path = out.strip()
    run(["certify", "--spec", path, "--out", str(tmp_path / "s")], capsys)
    run(["certify", "--preset", "qsm3-violating", "--out", str(tmp_path / "p")], capsys)
    for name in ("report.json", "eigenvalues.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_zoo_listing_and_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "qsemimarkov", "zoo"], capture_output=True, text=True, check=True)
    assert "oscillator-violating" in out.stdout
    with pytest.raises(SystemExit):
        main(["certify"])
