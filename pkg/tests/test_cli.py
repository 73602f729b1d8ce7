from __future__ import annotations

import json
import subprocess
import sys

import pytest

from bcplab import build_plan, read_instance
from bcplab.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_plan_json(capsys):
    code, out, _ = run(["plan", "--delta", "0.5", "--T", "4", "--m", "16", "--n", "1024",
                        "--j1", "0.3", "--j2", "0.05", "--json"], capsys)
    assert code == 0
    raw = json.loads(out)
    assert raw["i"] == 1 and abs(raw["stage_thresholds"]["j1d"] - 0.625) < 1e-12


def test_plan_text_warns_on_override(capsys):
    code, out, _ = run(["plan", "--delta", "0.5", "--T", "2", "--m", "8", "--n", "64",
                        "--j1", "0.2", "--j2", "0.05", "--gamma", "0.1"], capsys)
    assert code == 0 and "(override)" in out and "warning:" in out


def test_plan_invalid_exits_2(capsys):
    code, _, err = run(["plan", "--delta", "0.5", "--T", "2", "--m", "8", "--n", "64",
                        "--j1", "0.6", "--j2", "0.05"], capsys)
    assert code == 2 and err.startswith("error:")


def test_generate_and_solve_exit_codes(tmp_path, capsys):
    spec = write_json(tmp_path / "spec.json",
                      {"kind": "planted", "n": 16, "seed": 1,
                       "params": {"d": 200, "size": 10, "overlap": 7}})
    inst = str(tmp_path / "inst.json")
    code, out, _ = run(["generate", "--spec", spec, "--out", inst], capsys)
    assert code == 0 and json.loads(out)["planted"] is not None
    for algo in ("brute", "lsh"):
        code, out, _ = run(["solve", "--in", inst, "--j1", "0.5", "--j2", "0.2", "--algo", algo],
                           capsys)
        assert code == 0 and json.loads(out)["found"] is not None
    disjoint = write_json(tmp_path / "d.json",
                          {"universe": 4, "red": [[0], [1]], "blue": [[2], [3]]})
    code, out, _ = run(["solve", "--in", disjoint, "--j1", "0.5", "--j2", "0.2",
                        "--algo", "brute"], capsys)
    assert code == 1 and json.loads(out)["found"] is None


def test_solve_errors_exit_2(tmp_path, capsys):
    bad = write_json(tmp_path / "bad.json", {"universe": 4, "red": [[3, 1]], "blue": [[0]]})
    assert run(["solve", "--in", bad, "--j1", "0.5", "--j2", "0.2", "--algo", "brute"],
               capsys)[0] == 2
    assert run(["solve", "--in", str(tmp_path / "missing.json"), "--j1", "0.5", "--j2", "0.2",
                "--algo", "brute"], capsys)[0] == 2


def test_reduce_writes_instance_and_trace(tmp_path, capsys):
    plan = build_plan(0.5, 2, 4, 8, 0.45, 0.05, gamma=0.02)
    plan_path = write_json(tmp_path / "plan.json", plan.to_dict())
    spec = write_json(tmp_path / "spec.json", {"kind": "rubinstein_shape", "n": 8, "seed": 2,
                                               "params": {"T": 2, "m": 4, "plant": True}})
    base = str(tmp_path / "base.txt")
    assert run(["generate", "--spec", spec, "--out", base], capsys)[0] == 0
    out, trace = tmp_path / "hard.json", tmp_path / "trace.json"
    code, _, _ = run(["reduce", "--in", base, "--plan", plan_path, "--seed", "3",
                      "--out", str(out), "--trace", str(trace)], capsys)
    assert code == 0
    t = json.loads(trace.read_text())
    assert [s["op_name"] for s in t["stages"]] == ["add_common", "square_and_sample", "add_red"]
    assert read_instance(out).universe_size == t["stages"][-1]["universe_after"]


def test_verify_collisions_csv(capsys):
    code, out, _ = run(["verify", "collisions", "--trials", "2000", "--seed", "1",
                        "--j-values", "0,1", "--k", "2", "--csv"], capsys)
    assert code == 0 and out.splitlines()[0] == "experiment,metric,value"


def test_verify_needs_plan(capsys):
    assert run(["verify", "envelope", "--trials", "1", "--seed", "0"], capsys)[0] == 2


def test_verify_envelope_from_plan_file(tmp_path, capsys):
    plan = build_plan(0.5, 2, 8, 64, 0.2, 0.05, gamma=0.1)
    path = write_json(tmp_path / "plan.json", plan.to_dict())
    code, out, _ = run(["verify", "envelope", "--plan", path, "--n", "8", "--trials", "2",
                        "--seed", "0"], capsys)
    assert code == 0 and json.loads(out)["pass"] is True


def test_bad_list_argument_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--algo", "brute", "--sizes", "1,x", "--j1", "0.5", "--j2", "0.2",
              "--seed", "0"])
    assert exc.value.code == 2


def test_console_module_entry():
    res = subprocess.run([sys.executable, "-m", "bcplab.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "generate" in res.stdout


def test_reduce_over_budget_exits_2(tmp_path, capsys, monkeypatch):
    import bcplab.reductions as red

    monkeypatch.setattr(red, "MATERIALIZE_BUDGET", 1000)
    plan = build_plan(0.5, 2, 4, 8, 0.45, 0.05, gamma=0.02)
    plan_path = write_json(tmp_path / "plan.json", plan.to_dict())
    spec = write_json(tmp_path / "spec.json", {"kind": "rubinstein_shape", "n": 8, "seed": 2,
                                               "params": {"T": 2, "m": 4}})
    base = str(tmp_path / "base.json")
    run(["generate", "--spec", spec, "--out", base], capsys)
    code, _, err = run(["reduce", "--in", base, "--plan", plan_path, "--seed", "3",
                        "--out", str(tmp_path / "h.json"), "--trace", str(tmp_path / "t.json")],
                       capsys)
    assert code == 2 and "budget" in err
    assert not (tmp_path / "h.json").exists()
