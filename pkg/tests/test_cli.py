import json
from pathlib import Path

import pytest

from gwldp.cli import build_parser, main, parse_sizes

SNAPSHOT = Path(__file__).parent / "snapshots" / "help.txt"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def top_help(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    return build_parser().format_help()


def test_help_snapshot(monkeypatch):
    assert top_help(monkeypatch) == SNAPSHOT.read_text(encoding="utf-8")


def test_help_lists_every_flag(monkeypatch):
    text = top_help(monkeypatch)
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        assert name in text
        for action in p._actions:
            for flag in action.option_strings:
                if flag.startswith("--") and flag != "--help":
                    assert flag in text, (name, flag)


def test_parse_sizes():
    assert parse_sizes("5,9,13,...,101") == list(range(5, 102, 4))
    assert parse_sizes("3,1,2") == [1, 2, 3]
    for bad in ("5,...,9", "x", "0,1", "9,5,...,1"):
        with pytest.raises(Exception):
            parse_sizes(bad)


def test_analyze(capsys, model_path):
    code, out, _ = run(capsys, "analyze", "--model", model_path("binary"))
    assert code == 0
    rep = json.loads(out)
    assert list(rep) == ["eigenvalue", "eigenvector", "irreducible", "classification", "residual"]
    assert rep["eigenvalue"] == 1.0 and rep["classification"] == "Critical"


def test_rate_product(capsys, model_path):
    code, out, _ = run(capsys, "rate", "--model", model_path("binary"), "--rho", "product")
    assert code == 0
    rep = json.loads(out)
    assert rep["value"] == 0.0 and rep["reason"] == "AbsContinuous"


def test_rate_and_dual_from_file(capsys, tmp_path, model_path):
    rho = write(tmp_path, "rho.json", {"(a|)": 0.6, "(a|a,a)": 0.4})
    code, out, _ = run(capsys, "rate", "--model", model_path("binary"), "--rho", rho)
    assert code == 0 and json.loads(out) == {
        "value": "inf", "reason": "NotShiftInvariant", "defect": pytest.approx(0.2), "marginal_gap": 0.0, "unit": "nats",
    }
    code, out, _ = run(capsys, "dual", "--model", model_path("binary"), "--rho", rho, "--bits")
    rep = json.loads(out)
    assert code == 0 and rep["unit"] == "bits"
    assert rep["dual"]["value"] == pytest.approx(0.020136 / 0.693147, abs=1e-5)
    assert rep["relative_entropy"] == pytest.approx(rep["dual"]["value"], abs=1e-9)


def test_dual_diverging_is_computational(capsys, tmp_path, model_path):
    rho = write(tmp_path, "rho.json", {"(a|)": 0.5, "(a|a)": 0.5})
    code, _, err = run(capsys, "dual", "--model", model_path("binary"), "--rho", rho)
    assert code == 2 and json.loads(err)["error"] == "diverging"


def test_validation_errors(capsys, tmp_path, model_path):
    code, _, err = run(capsys, "analyze", "--model", tmp_path / "missing.json")
    assert code == 1 and json.loads(err)["error"] == "model_not_found"
    bad = write(tmp_path, "bad.json", {"alphabet": ["a"], "root_law": [1], "kernel": {"a": [{"children": [], "p": 0.4}]}})
    code, _, err = run(capsys, "analyze", "--model", bad)
    assert code == 1 and json.loads(err)["error"] == "non_stochastic_kernel"
    code, _, err = run(capsys, "sample", "--model", model_path("binary"), "--count", 3)
    assert code == 1 and json.loads(err)["error"] == "usage"  # seed is mandatory
    code, _, err = run(capsys, "count", "--model", model_path("binary"), "--n-max", 0)
    assert code == 1
    code, _, err = run(capsys, "sample", "--model", model_path("binary"), "--n", 4, "--count", 1, "--seed", 0)
    assert code == 1 and json.loads(err)["error"] == "impossible_size"
    code, _, err = run(capsys, "verify-mcmillan", "--model", model_path("unary"))
    assert code == 1 and json.loads(err)["error"] == "not_critical"
    code, _, err = run(capsys, "rate", "--model", model_path("binary"), "--rho", tmp_path / "nope.json")
    assert code == 1


def test_budget_env(capsys, monkeypatch, model_path):
    monkeypatch.setenv("GWLDP_BUDGET", "5")
    code, _, err = run(capsys, "enumerate", "--model", model_path("binary"), "--n", 9)
    assert code == 2 and json.loads(err) == {"error": "budget_exceeded", "detail": "census of 14 trees exceeds budget 5"}
    monkeypatch.setenv("GWLDP_BUDGET", "14")
    code, out, _ = run(capsys, "enumerate", "--model", model_path("binary"), "--n", 9)
    assert code == 0 and len(out.splitlines()) == 14


def test_enumerate_and_count(capsys, tmp_path, model_path):
    out = tmp_path / "census.jsonl"
    assert run(capsys, "enumerate", "--model", model_path("binary"), "--n", 7, "--out", out)[0] == 0
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(lines) == 5
    assert list(lines[0]) == ["tree", "probability", "measure"]
    assert sum(x["probability"] for x in lines) == pytest.approx(5 / 128)
    out = tmp_path / "counts.csv"
    assert run(capsys, "count", "--model", model_path("binary"), "--n-max", 9, "--out", out)[0] == 0
    rows = out.read_bytes().split(b"\n")
    assert rows[0] == b"n,count,q_n" and rows[9] == b"9,14,0.02734375"
    assert b"\r" not in out.read_bytes()


def test_sample_and_tilt_sample(capsys, tmp_path, model_path):
    out = tmp_path / "trees.jsonl"
    args = ["sample", "--model", model_path("mixed"), "--n", 9, "--count", 20, "--seed", 42, "--out", out]
    assert run(capsys, *args)[0] == 0
    first = out.read_bytes()
    lines = [json.loads(x) for x in first.decode().splitlines()]
    assert len(lines) == 20 and all(x["size"] == 9 for x in lines)
    assert run(capsys, *args)[0] == 0
    assert out.read_bytes() == first

    g = write(tmp_path, "g.json", {"(a|)": 0.69})
    out2 = tmp_path / "tilted.jsonl"
    code, _, _ = run(capsys, "tilt-sample", "--model", model_path("binary"), "--g", g, "--count", 30, "--seed", 1,
                     "--cap", 50, "--out", out2)
    assert code == 0
    lines = [json.loads(x) for x in out2.read_text().splitlines()]
    assert len(lines) == 30 and all("log_weight" in x for x in lines)


def test_verify_commands_write_json_and_csv(capsys, tmp_path, model_path):
    out = tmp_path / "mc.csv"
    assert run(capsys, "verify-mcmillan", "--model", model_path("binary"), "--n-max", 25, "--out", out)[0] == 0
    rep = json.loads(out.with_suffix(".json").read_text())
    assert rep["monotone"] and rep["relative_deviation"] < 0.1
    assert out.read_text().splitlines()[0] == "n,count,log_count,slope,deviation"

    out = tmp_path / "dual.json"
    assert run(capsys, "verify-duality", "--model", model_path("two_type"), "--trials", 10, "--seed", 0,
               "--gradient-points", 2, "--out", out)[0] == 0
    assert json.loads(out.read_text())["max_gap"] <= 1e-6
    assert out.with_suffix(".csv").exists()

    out = tmp_path / "lldp.json"
    assert run(capsys, "verify-lldp", "--model", model_path("binary"), "--rho", "product", "--ball", "l1:0.2",
               "--sizes", "5,9,...,25", "--seed", 7, "--draws", 200, "--out", out)[0] == 0
    rep = json.loads(out.read_text())
    assert [r["n"] for r in rep["rows"]] == [5, 9, 13, 17, 21, 25]
    assert list(rep["rows"][0]) == ["n", "method", "probability", "std_error", "log_rate", "J", "gap", "fitted", "residual"]

    cells = write(tmp_path, "cells.json", [{"kind": "l1", "center": "product", "radius": 0.2},
                                           {"kind": "l1", "center": {"(a|)": 1.0}, "radius": 0.05}])
    out = tmp_path / "ldp.json"
    assert run(capsys, "verify-ldp", "--model", model_path("binary"), "--cells", cells, "--sizes", "9,19",
               "--seed", 0, "--out", out)[0] == 0
    rep = json.loads(out.read_text())
    assert rep["inf_J"] == 0.0 and all(r["upper_ok"] for r in rep["rows"])


def test_bad_cells(capsys, tmp_path, model_path):
    cells = write(tmp_path, "cells.json", [{"kind": "sphere"}])
    code, _, err = run(capsys, "verify-ldp", "--model", model_path("binary"), "--cells", cells, "--sizes", "9",
                       "--seed", 0)
    assert code == 1 and json.loads(err)["error"] == "invalid_input"


def test_module_entry_point(model_path):
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "gwldp", "analyze", "--model", model_path("two_type")],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["eigenvector"] == pytest.approx([2 / 3, 1 / 3])
