import json
import math
import subprocess
import sys

import pytest

from fbms.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_solve_three(capsys):
    code, out, _ = run(["config-solve", "--k", "3", "--sigma", "zero"], capsys)
    assert code == 0
    doc = json.loads(out)
    bh = doc["configuration"]["beta_hat"]
    assert math.pi / 4 < bh < 2 * math.pi / 7
    assert doc["params"]["delta_sigma"] == 0.01
    assert set(doc["params"]["tol"]) == {"shoot", "separation", "richardson"}


def test_sigma_forms_agree(tmp_path, capsys):
    f = tmp_path / "sigma.json"
    f.write_text("[0.002, -0.001]")
    outs = []
    for form in ("[0.002, -0.001]", str(f)):
        code, out, _ = run(["config-solve", "--k", "5", "--sigma", form], capsys)
        assert code == 0
        outs.append(json.loads(out)["configuration"])
    assert outs[0] == outs[1]
    _, zero, _ = run(["config-solve", "--k", "5", "--sigma", "zero"], capsys)
    assert json.loads(zero)["configuration"]["beta_hat"] != outs[0]["beta_hat"]


@pytest.mark.parametrize("argv", [
    ["config-solve", "--k", "2"],
    ["config-solve", "--k", "3", "--sigma", "[0.5]"],
    ["config-solve", "--k", "3", "--sigma", "not-json"],
    ["config-solve", "--k", "3", "--tol.shoot", "-1"],
    ["config-family", "--k-min", "5", "--k-max", "4"],
    ["spectrum", "--grid", "16"],
    ["spectrum", "--table", "2:5"],
    ["verify", "--mesh", "/nonexistent.obj"],
    ["mesh-desing", "--alpha-plus", "0.6", "--beta", "1.0", "--tau", "0.03", "--out", "/tmp/x.obj"],
])
def test_input_errors_exit_two(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 2
    assert out == "" and "invalid input" in err


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["config-solve"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_numerical_failure_exit_three(capsys):
    code, _, err = run(["config-solve", "--k", "5", "--sigma", "[-2.0]", "--delta-sigma", "10"], capsys)
    assert code == 3 and "BracketFailure" in err


def test_params_file_unknown_keys(tmp_path, capsys):
    bad = tmp_path / "p.json"
    bad.write_text(json.dumps({"k": 3, "m": 20, "colour": "red"}))
    code, _, err = run(["mesh-initial", "--params", str(bad), "--out", str(tmp_path / "m.obj")], capsys)
    assert code == 2 and "colour" in err
    bad.write_text(json.dumps({"k": 3, "m": 20, "resolution": {"z_per_period": 16, "extra": 1}}))
    code, _, err = run(["mesh-initial", "--params", str(bad), "--out", str(tmp_path / "m.obj")], capsys)
    assert code == 2 and "extra" in err
    assert not (tmp_path / "m.obj").exists()


def test_mesh_initial_rejects_non_antisymmetric_sigma(tmp_path, capsys):
    code, _, _ = run(["mesh-initial", "--k", "4", "--m", "20", "--sigma", "[0.001, 0, 0, 0.001]",
                      "--out", str(tmp_path / "m.obj")], capsys)
    assert code == 2


def test_config_family_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(["config-family", "--k-min", "3", "--k-max", "8", "--out", str(path)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_bytes().decode()
    assert "\r\n" in text
    assert "# max_one_minus_r_nonincreasing: True" in text
    assert len([l for l in text.splitlines() if l and not l.startswith("#")]) == 1 + 6


def test_spectrum_k11_all_positive(capsys):
    code, out, _ = run(["spectrum", "--k", "11"], capsys)
    assert code == 0
    doc = json.loads(out)
    margins = [p["margin"] for p in doc["pieces"].values()]
    assert len(margins) == 12 and min(margins) > 0
    assert doc["certificate"]["valid"] is True


def test_spectrum_table(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert run(["spectrum", "--table", "7:9", "--out", str(out)], capsys)[0] == 0
    rows = [l for l in out.read_text().splitlines() if l and not l.startswith("#")]
    assert rows[0].startswith("k,global_margin") and len(rows) == 4


def test_mesh_desing_summary(tmp_path, capsys):
    obj = tmp_path / "d.obj"
    code, out, _ = run(["mesh-desing", "--alpha-plus", "0.6", "--beta", "1.0", "--tau", "0.05",
                        "--periods", "2", "--out", str(obj)], capsys)
    assert code == 0
    doc = json.loads(out)
    p = doc["params"]
    assert p["alpha_minus"] == 0.6 and p["a"] == 3.0 and p["delta_theta"] > 0 and p["eps_d"] > 0
    assert obj.exists() and (tmp_path / "d.obj.json").exists()


def test_mesh_initial_then_verify(tmp_path, capsys):
    obj = tmp_path / "s.obj"
    summary = tmp_path / "s.json"
    code, _, _ = run(["mesh-initial", "--k", "3", "--m", "20", "--out", str(obj),
                      "--json", str(summary)], capsys)
    assert code == 0
    doc = json.loads(summary.read_text())
    assert doc["boundary_components"] == 60
    resolved = doc["params"]
    for key in ("a", "delta_s", "eps_d", "delta_theta", "eps_prime", "resolution"):
        assert key in resolved
    rep_path = tmp_path / "r.json"
    code, _, _ = run(["verify", "--mesh", str(obj), "--samples", "2000", "--out", str(rep_path)],
                     capsys)
    assert code == 0
    rep = json.loads(rep_path.read_text())["report"]
    assert rep["boundary_components"] == 60 and rep["genus"] == 0
    assert rep["boundary_sphericity"] < 1e-8
    # the sidecar next to the OBJ is not clobbered by the summary
    assert json.loads((tmp_path / "s.obj.json").read_text())["meta"]["k"] == 3
    code, _, _ = run(["verify", "--mesh", str(obj), "--samples", "10"], capsys)
    assert code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fbms", "config-solve", "--k", "4"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["configuration"]["parity"] == "even"
