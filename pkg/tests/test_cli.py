import json
import math
import subprocess
import sys

import numpy as np
import pytest
from jsonschema import Draft202012Validator

from flowlab.cli import run
from flowlab.report import dumps, load_schema, make_report, read_curve_csv

NON_EULER = """name = "wavy"

[field]
stream = "x2 + 0.2*sin(x1)"

[box]
x1 = [-3.0, 3.0]
x2 = [-3.0, 3.0]
"""


def run_json(capsys, argv):
    code = run(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def validate(report):
    Draft202012Validator(load_schema()).validate(report)


def test_constants_command(capsys):
    code, out = run_json(capsys, ["constants", "--eta", "1.0"])
    assert code == 0
    assert out["C1"] >= 1305.33
    assert all(out["inequalities"].values())
    assert out["partition"]["m_dyadic"] == 2 and out["partition"]["N"] == 3


def test_trace_gradient_on_cosh_axis(tmp_path, capsys):
    path = tmp_path / "axis.csv"
    assert run(["--quiet", "trace", "--field", "cosh", "--kind", "gradient", "--from", "0,0",
                "--tspan", "-5,5", "--out", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,v1,v2,u"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:] if not line.startswith("#")])
    assert np.max(np.abs(rows[:, 5] - rows[:, 0])) <= 1e-8
    assert any(line.startswith("# event,") for line in lines)
    # the same CSV is printed when no output path is given
    capsys.readouterr()
    assert run(["--quiet", "trace", "--field", "cosh", "--kind", "gradient", "--from", "0,0",
                "--tspan", "-5,5"]) == 0
    assert capsys.readouterr().out == path.read_text()


def test_arcs_on_traced_csv(tmp_path, capsys):
    path = tmp_path / "line.csv"
    assert run(["--quiet", "trace", "--field", "cosh", "--from", "0,1", "--tspan", "-1.5,1.5",
                "--out", str(path)]) == 0
    t, pts, tang = read_curve_csv(path)
    assert tang is not None and len(t) == len(pts)
    code, out = run_json(capsys, ["arcs", "--curve", str(path), "--brute"])
    assert code == 0
    assert out["bound_ok"]
    assert out["brute"] == [out["N_l"], out["N_r"], out["N_d"], out["N_middle"], out["N_exterior"]]
    code, sub = run_json(capsys, ["arcs", "--curve", str(path), "--a", "-1.0", "--b", "1.0"])
    assert code == 0 and sub["length"] < out["length"]


def test_osc_and_field_check(capsys):
    code, out = run_json(capsys, ["osc", "--field", "shear", "--radius", "2"])
    assert code == 0 and out["osc"] <= 1e-12
    code, out = run_json(capsys, ["field", "check", "cosh"])
    assert code == 0
    assert out["euler_residual"] <= 1e-10 and out["divergence_max"] <= 1e-12


def test_growth_command(capsys):
    code, out = run_json(capsys, ["growth", "--field", "shear", "--radii", "2,4"])
    assert code == 0
    assert [r["status"] for r in out] == ["pass", "pass"]


def test_verify_report_validates(tmp_path, capsys):
    path = tmp_path / "report.json"
    code = run(["--quiet", "verify", "--field", "shear", "--suite", "elliptic", "--out", str(path)])
    capsys.readouterr()
    assert code == 0
    report = json.loads(path.read_text())
    validate(report)
    assert report["exit_code"] == 0
    assert all(r["anchor"] and r["suite"] == "elliptic" for r in report["records"])


def test_verify_exit_codes(tmp_path, capsys):
    wavy = tmp_path / "wavy.toml"
    wavy.write_text(NON_EULER)
    assert run(["--quiet", "verify", "--field", str(wavy), "--suite", "elliptic"]) == 1
    report = json.loads(capsys.readouterr().out)
    validate(report)
    assert any(r["status"] == "fail" for r in report["records"])
    assert run(["--quiet", "verify", "--field", "cellular", "--suite", "elliptic"]) == 2
    report = json.loads(capsys.readouterr().out)
    assert any(r["status"] == "error" and "stagnation" in r["note"] for r in report["records"])


def test_demo_is_deterministic_and_valid(tmp_path, capsys):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["--quiet", "demo", "--seed", "42", "--out", str(first)]) == 0
    assert run(["--quiet", "demo", "--seed", "42", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    report = json.loads(first.read_text())
    validate(report)
    verdicts = {r["field"]: r["measured"]["verdict"] for r in report["records"] if r["name"] == "shear-verdict"}
    assert verdicts == {"cellular": "hypothesis-violated", "cosh": "non-shear", "shear": "shear"}
    assert first.read_bytes().endswith(b"\n") and b"\r" not in first.read_bytes()


def test_thread_count_does_not_change_output(tmp_path, monkeypatch, capsys):
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("FLOWLAB_THREADS", threads)
        path = tmp_path / f"t{threads}.json"
        assert run(["--quiet", "verify", "--field", "shear", "--suite", "all", "--radii", "2",
                    "--out", str(path)]) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
    monkeypatch.setenv("FLOWLAB_THREADS", "zero")
    assert run(["--quiet", "verify", "--field", "shear", "--suite", "constants"]) == 2
    assert "FLOWLAB_THREADS" in capsys.readouterr().err


def test_bad_field_file_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\n\n[field]\nv1 = "1+"\nv2 = "x1"\n')
    assert run(["field", "check", str(bad)]) == 2
    assert f"{bad}:4:" in capsys.readouterr().err


def test_bad_curve_file_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x1,x2,v1,v2,u\n0,0,0,1,0,0\n1,oops,0,1,0,0\n")
    assert run(["arcs", "--curve", str(bad)]) == 2
    assert f"{bad}:3:" in capsys.readouterr().err


def test_usage_errors_exit_two(tmp_path, capsys):
    assert run(["trace", "--field", "no-such-field"]) == 2
    assert run(["nonsense"]) == 2
    assert run(["trace", "--field", "cosh", "--from", "1"]) == 2
    assert run(["constants", "--eta", "2"]) == 2
    assert run(["demo", "--out", str(tmp_path / "missing" / "x.json")]) == 2
    capsys.readouterr()


def test_json_float_round_trip():
    values = [0.1, 1 / 3, math.pi, 1e-300, 123456789.123456789]
    text = dumps({"v": values, "b": None})
    assert json.loads(text)["v"] == values
    assert text.index('"b"') < text.index('"v"')


def test_report_exit_code_rules():
    def rec(status):
        return {"name": "x", "anchor": "a", "inputs": {}, "measured": None, "bound": None,
                "pass": status == "pass", "status": status}
    assert make_report("t", {}, [rec("pass"), rec("hypothesis-failed")])["exit_code"] == 0
    assert make_report("t", {}, [rec("pass"), rec("fail")])["exit_code"] == 1
    assert make_report("t", {}, [rec("fail"), rec("error")])["exit_code"] == 2


def test_schema_rejects_missing_anchor():
    from jsonschema import ValidationError

    report = make_report("t", {}, [{"name": "x", "anchor": "a", "inputs": {}, "measured": 1.0,
                                    "bound": 2.0, "pass": True, "status": "pass"}])
    validate(json.loads(dumps(report)))
    report["records"][0]["anchor"] = ""
    with pytest.raises(ValidationError):
        validate(json.loads(dumps(report)))


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "flowlab.cli", "constants", "--eta", "0.5"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["eta"] == 0.5
