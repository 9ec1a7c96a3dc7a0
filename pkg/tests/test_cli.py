import json
import subprocess
import sys

import numpy as np
import pytest

from kpp_lab.cli import main
from kpp_lab.scenarios import BUILTIN, COUNTEREXAMPLE, dump_scenario


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def report(path):
    return json.loads(path.read_text())


def test_eigen(tmp_path, capsys):
    p = tmp_path / "e.json"
    code, out, _ = run(["eigen", "--json", str(p), "--no-timestamp"], capsys)
    assert code == 0
    r = report(p)
    assert r["schema_version"] == 1 and "generated_at" not in r
    assert r["lambda1"] == pytest.approx(-1.0, abs=1e-10)


def test_eigen_scalar_and_sweep(tmp_path, capsys):
    csv = tmp_path / "sweep.csv"
    code, out, _ = run(["eigen", "--scenario", "scalar-logistic", "--sweep", "0,0.5,2",
                        "--csv", str(csv)], capsys)
    assert code == 0
    rows = [line.split(",") for line in csv.read_text().splitlines()]
    assert rows[0] == ["shift", "lambda1"]
    np.testing.assert_allclose([float(r[1]) for r in rows[1:]], [-1.0, -0.5, 1.0], atol=1e-10)


def test_eigen_exit_codes(capsys, tmp_path):
    # asymmetric A: the Perron vector is not constant, so one iteration cannot converge
    bad = tmp_path / "t.toml"
    bad.write_text(dump_scenario(BUILTIN[COUNTEREXAMPLE]).replace("[[0.8, 0.2], [0.2, 0.8]]",
                                                                  "[[0.8, 0.3], [0.2, 0.8]]"))
    assert run(["eigen", "--scenario", str(bad), "--max-iters", "1"], capsys)[0] == 2
    assert run(["eigen", "--scenario", str(bad)], capsys)[0] == 0
    assert run(["eigen", "--scenario", "missing"], capsys)[0] == 1
    assert run(["eigen", "--grid-cells", "0"], capsys)[0] == 1


def test_eigen_invalid_spec_is_config_error(tmp_path, capsys):
    p = tmp_path / "z.toml"
    p.write_text(dump_scenario(BUILTIN[COUNTEREXAMPLE]).replace("[[0.8, 0.2], [0.2, 0.8]]",
                                                                "[[0.8, 0.0], [0.2, 0.8]]"))
    code, _, err = run(["eigen", "--scenario", str(p)], capsys)
    assert code == 1 and "a[1,2]" in err


def test_steady(tmp_path, capsys):
    p = tmp_path / "s.json"
    d = tmp_path / "states"
    code, out, _ = run(["steady", "--json", str(p), "--out-dir", str(d), "--no-timestamp"], capsys)
    assert code == 0
    r = report(p)
    assert len(r["positive_ids"]) == 3
    rel = r["comparability"]["relations"]
    assert all(rel[i][j] == "Incomparable" for i in range(3) for j in range(3) if i != j)
    assert sorted(f.name for f in d.glob("*.csv")) == ["S0.csv", "S1.csv", "S2.csv", "S3.csv"]
    stab = {s["id"]: s["stability"]["classification"] for s in r["states"]}
    assert stab == {"S0": "Unstable", "S1": "Stable", "S2": "Unstable", "S3": "Stable"}


@pytest.mark.parametrize("name, count", [("hei2004-extinct", 0), ("cooperative-regime", 1)])
def test_steady_other_scenarios(tmp_path, capsys, name, count):
    p = tmp_path / "s.json"
    assert run(["steady", "--scenario", name, "--json", str(p)], capsys)[0] == 0
    assert len(report(p)["positive_ids"]) == count


def test_coop_check(tmp_path, capsys):
    p = tmp_path / "c.json"
    code, out, _ = run(["coop-check", "--json", str(p)], capsys)
    assert code == 0
    ce = report(p)["monotonicity_counterexample"]
    assert ce["value"] == pytest.approx(-0.45, abs=1e-15) and ce["independent_of_M"]
    code, out, _ = run(["coop-check", "--box", repr(2 / 9), "--json", str(p)], capsys)
    assert report(p)["cooperativity"]["verdict"] == "cooperative-on-box"
    code, out, _ = run(["coop-check", "--scenario", "scalar-logistic", "--json", str(p)], capsys)
    assert code == 0 and report(p)["monotonicity_counterexample"] is None
    assert run(["coop-check", "--lower", "0"], capsys)[0] == 1


def test_simulate(tmp_path, capsys):
    p, traj = tmp_path / "m.json", tmp_path / "t.csv"
    code, out, _ = run(["simulate", "--u0", "0.2,6", "--json", str(p), "--csv", str(traj)], capsys)
    assert code == 0
    o = report(p)["outcome"]
    assert o["tag"] == "ConvergedTo"
    np.testing.assert_allclose(o["state"]["value"], [3 - np.sqrt(7.5), 3 + np.sqrt(7.5)], atol=1e-9)
    assert traj.read_text().startswith("t,max_u1")
    assert run(["simulate", "--u0", "0.2,6", "--t-max", "1"], capsys)[0] == 3
    code, out, _ = run(["simulate", "--scenario", "hei2004-extinct"], capsys)
    assert code == 0 and out.startswith("Extinction")
    assert run(["simulate", "--u0", "1,2,3"], capsys)[0] == 1
    assert run(["simulate", "--dt", "50", "--u0", "30"], capsys)[0] == 1


def test_simulate_perturbation_is_seeded(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["simulate", "--u0", "1", "--perturb", "1e-3", "--seed", "42", "--no-timestamp"]
    assert run(args + ["--json", str(a)], capsys)[0] == 0
    assert run(args + ["--json", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert report(a)["outcome"]["tag"] == "ConvergedTo"


def test_verify_paper(tmp_path, capsys):
    p = tmp_path / "v.json"
    code, out, _ = run(["verify-paper", "--json", str(p), "--no-timestamp"], capsys)
    assert code == 0
    assert out.count("[PASS]") == 8 and "[FAIL]" not in out and "WARNING" not in out
    assert report(p)["passed"]


def test_verify_paper_tampered_competition(tmp_path, capsys):
    f = tmp_path / "tampered.toml"
    f.write_text(dump_scenario(BUILTIN[COUNTEREXAMPLE]).replace("[[0.1, 0.9], [0.9, 0.1]]",
                                                                "[[0.1, 0.8], [0.9, 0.1]]"))
    p = tmp_path / "v.json"
    code, out, _ = run(["verify-paper", "--scenario", str(f), "--json", str(p)], capsys)
    assert code != 0
    checks = {c["claim"]: c["passed"] for c in report(p)["checks"]}
    assert not checks["listed constant states solve the elliptic system"]
    assert "WARNING" in out


def test_verify_paper_tampered_symmetry(tmp_path, capsys):
    f = tmp_path / "asym.toml"
    f.write_text(dump_scenario(BUILTIN[COUNTEREXAMPLE]).replace("[[0.8, 0.2], [0.2, 0.8]]",
                                                                "[[0.8, 0.25], [0.2, 0.8]]"))
    p = tmp_path / "v.json"
    code, out, _ = run(["verify-paper", "--scenario", str(f), "--json", str(p)], capsys)
    checks = {c["claim"]: c["passed"] for c in report(p)["checks"]}
    assert checks["listed states are pairwise incomparable"]
    assert report(p)["provenance_warning"]
    assert code != 0


def test_module_entry_point(tmp_path):
    p = tmp_path / "e.json"
    res = subprocess.run([sys.executable, "-m", "kpp_lab", "eigen", "--json", str(p)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and p.exists()
