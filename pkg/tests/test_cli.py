import json
import shutil
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from conftest import planted_function, random_function
from gowerslab import cli
from gowerslab.abelian import GroupSpec
from gowerslab.files import write_values


@pytest.fixture
def noise64(tmp_path):
    g = GroupSpec((64,))
    path = tmp_path / "f.csv"
    write_values(path, random_function(g, np.random.default_rng(0)).values)
    return str(path)


@pytest.fixture
def planted27(tmp_path):
    g, ph, f = planted_function(27, 5)
    path = tmp_path / "q.csv"
    write_values(path, f.values)
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_norm_report_and_cross_check(noise64, tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, out, _ = run(["norm", "--group", "Z/64", "--d", "2", "--mode", "fast", noise64, "--output", str(rep)],
                       capsys)
    assert code == 0
    data = json.loads(rep.read_text())
    assert data["command"] == "norm"
    assert data["config"]["params"]["d"] == 2
    assert data["config"]["group"] == "Z/64"
    assert data["result"]["cross_check"]["mode"] == "naive"
    assert data["result"]["cross_check"]["difference"] <= 1e-9
    assert json.loads(out) == data["headline"]


def test_norm_naive_matches_fast(noise64, capsys):
    _, fast, _ = run(["norm", "--group", "Z/64", "--d", "3", noise64], capsys)
    _, naive, _ = run(["norm", "--group", "Z/64", "--d", "3", "--mode", "naive", noise64], capsys)
    a, b = json.loads(fast)["headline"]["norm"], json.loads(naive)["headline"]["norm"]
    assert abs(a - b) <= 1e-9


def test_reports_byte_identical(noise64, tmp_path, capsys):
    p = tmp_path / "r.json"
    runs = []
    for _ in range(2):
        assert run(["norm", "--group", "Z/64", "--d", "2", noise64, "--output", str(p), "--threads", "1"],
                   capsys)[0] == 0
        runs.append(p.read_bytes())
    assert runs[0] == runs[1]


def test_u3_inverse_reports_byte_identical(planted27, tmp_path, capsys):
    p = tmp_path / "r.json"
    runs = []
    for _ in range(2):
        run(["u3-inverse", "--group", "Z/27", "--eta", "0.9", planted27, "--output", str(p)], capsys)
        runs.append(p.read_bytes())
    assert runs[0] == runs[1]


def test_verify_confirms(noise64, tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(["norm", "--group", "Z/64", "--d", "2", noise64, "--output", str(rep)], capsys)
    code, out, _ = run(["norm", "--verify", str(rep)], capsys)
    assert code == 0
    assert json.loads(out)["verified"] is True


def test_verify_detects_tampering(noise64, tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(["norm", "--group", "Z/64", "--d", "2", noise64, "--output", str(rep)], capsys)
    data = json.loads(rep.read_text())
    data["headline"]["norm"] += 1e-3
    rep.write_text(json.dumps(data))
    code, out, err = run(["norm", "--verify", str(rep)], capsys)
    assert code == 1
    assert "norm" in err


def test_empty_file_exit_1(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, _, err = run(["norm", "--group", "Z/8", str(empty)], capsys)
    assert code == 1
    assert "input" in err and "empty" in err


def test_wrong_length_names_field(tmp_path, capsys):
    p = tmp_path / "f.csv"
    write_values(p, np.ones(5))
    code, _, err = run(["norm", "--group", "Z/8", str(p)], capsys)
    assert code == 1 and "values" in err


def test_bad_group_and_missing_flags(noise64, capsys):
    assert run(["norm", "--group", "Z/zero", noise64], capsys)[0] == 1
    code, _, err = run(["norm", noise64], capsys)
    assert code == 1 and "group" in err
    assert run(["nonsense"], capsys)[0] == 1
    assert run(["norm", "--group", "Z/64", "--threads", "0", noise64], capsys)[0] == 1


def test_dft_csv(noise64, capsys):
    code, out, _ = run(["dft", "--group", "Z/64", "--format", "csv", noise64], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "re,im" and len(lines) == 65


def test_u2_inverse(planted27, capsys):
    code, out, _ = run(["u2-inverse", "--group", "Z/27", "--eta", "0.5", planted27], capsys)
    # a quadratic phase has every Fourier coefficient of size 27^-1/2 < 0.25
    assert code == 2
    assert json.loads(out)["flagged"] is True


def test_bohr(capsys):
    code, out, _ = run(["bohr", "--group", "Z/20", "--freqs", "1", "--rho", "1/5"], capsys)
    data = json.loads(out)
    assert data["headline"]["cardinality"] == 7
    assert code == (2 if data["headline"]["regular"] is False else 0)
    code, out, _ = run(["bohr", "--group", "Z/20", "--freqs", "1", "--find", "1/16,1/8"], capsys)
    assert code == 0 and json.loads(out)["headline"]["regular"] is True


def test_lift_and_integrate(capsys):
    code, out, _ = run(["lift", "--group", "Z/10", "--freqs", "1", "--rho", "1/4"], capsys)
    assert code == 0 and json.loads(out)["headline"]["dim"] == 1
    code, out, _ = run(["integrate", "--group", "Z/6xZ/4", "--beta", "1/6,1/2;1/2,1/4"], capsys)
    assert code == 0 and json.loads(out)["headline"]["failures"] == 0
    code, out, _ = run(["integrate", "--group", "Z/20", "--beta", "1/20", "--freqs", "1", "--rho", "1/5"], capsys)
    assert code == 0 and json.loads(out)["headline"]["mode"] == "local"
    code, _, err = run(["integrate", "--group", "Z/6", "--beta", "1/6,1"], capsys)
    assert code == 1 and "beta" in err


def test_u3_inverse_and_nilseq(planted27, tmp_path, capsys):
    nil = tmp_path / "nil.json"
    rep = tmp_path / "r.json"
    code, _, _ = run(["u3-inverse", "--group", "Z/27", "--eta", "0.9", planted27, "--nilseq", str(nil),
                      "--output", str(rep)], capsys)
    assert code == 0
    data = json.loads(rep.read_text())
    assert data["headline"]["correlation"] >= 0.99
    code, out, _ = run(["nilseq-eval", "--spec", str(nil), planted27], capsys)
    assert code == 0
    head = json.loads(out)["headline"]
    assert abs(head["correlation"] - data["headline"]["nilsequence_correlation"]) <= 1e-9
    code, out, _ = run(["nilseq-eval", "--spec", str(nil), "--x", "3"], capsys)
    assert code == 0 and json.loads(out)["headline"]["points"] == 1
    assert run(["u3-inverse", "--verify", str(rep)], capsys)[0] == 0


def test_u3_inverse_flagged_at_high_floor(planted27, tmp_path, capsys):
    g = GroupSpec((27,))
    rng = np.random.default_rng(4)
    noise = random_function(g, rng, unimodular=True).values
    _, ph, f = planted_function(27, 5)
    p = tmp_path / "noisy.csv"
    write_values(p, 0.5 * f.values + 0.5 * noise)
    code, out, _ = run(["u3-inverse", "--group", "Z/27", "--eta", "0.3", "--floor", "0.99", str(p)], capsys)
    assert code == 2
    assert json.loads(out)["headline"]["below_threshold"] is True


def test_u3_inverse_gate_is_error(noise64, capsys):
    code, _, err = run(["u3-inverse", "--group", "Z/64", "--eta", "0.9", noise64], capsys)
    assert code == 1 and "eta" in err


def test_hk(capsys):
    code, out, _ = run(["hk", "--group", "Z/2", "--k", "2"], capsys)
    assert code == 0 and json.loads(out)["headline"]["size"] == 8
    code, out, _ = run(["hk", "--heisenberg", "2", "--k", "1"], capsys)
    assert code == 0 and json.loads(out)["headline"]["size"] == 64


def test_polycheck(tmp_path, capsys):
    g, ph, f = planted_function(8, 3)
    p = tmp_path / "phase.txt"
    p.write_text("\n".join(str(v) for v in ph))
    code, out, _ = run(["polycheck", "--group", "Z/8", "--degree", "2", str(p)], capsys)
    assert code == 0 and json.loads(out)["headline"]["polynomial"] is True
    cubic = [Fraction(x**3, 8) for x in range(8)]
    p.write_text("\n".join(str(v) for v in cubic))
    code, out, _ = run(["polycheck", "--group", "Z/8", "--degree", "1", str(p)], capsys)
    assert code == 2 and json.loads(out)["headline"]["witness"] is not None


def test_repair(tmp_path, capsys):
    rows = [(3 * x) % 10 for x in range(100)]
    rows[17] = (rows[17] + 4) % 10
    p = tmp_path / "hom.csv"
    p.write_text("\n".join(str(v) for v in rows))
    code, out, _ = run(["repair", "--group", "Z/100", "--target", "Z/10", str(p)], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["headline"] == {"defect": 0.0, "disagreements": 1}
    assert data["result"]["values"][17] == [1]


def test_cocycle(tmp_path, capsys):
    n = 12
    f0 = np.random.default_rng(0).normal(size=n)
    vals = [[f0[(h + k) % n] - f0[h] - f0[k] for k in range(n)] for h in range(n)]
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"E": [[x] for x in range(n)], "values": vals}))
    code, out, _ = run(["cocycle", "--group", "Z/12", str(p)], capsys)
    assert code == 0
    head = json.loads(out)["headline"]
    assert head["converged"] and head["residual"] <= 1e-8
    p.write_text(json.dumps({"E": [[0]]}))
    code, _, err = run(["cocycle", "--group", "Z/12", str(p)], capsys)
    assert code == 1 and "values" in err


def test_sim_csv_and_verify(tmp_path, capsys):
    rep = tmp_path / "sim.json"
    code, out, _ = run(["sim", "--group", "Z/31", "--J", "4", "--seeds", "3", "--n", "2,3", "--bc-n-max", "8",
                        "--format", "csv", "--output", str(rep)], capsys)
    assert code in (0, 2)
    assert out.startswith("n,median_gap")
    assert run(["sim", "--verify", str(rep)], capsys)[0] == 0


def test_budget_env(noise64, monkeypatch, capsys):
    monkeypatch.setenv("GOWERSLAB_BUDGET", "100")
    code, _, err = run(["norm", "--group", "Z/64", "--d", "3", "--mode", "naive", noise64], capsys)
    assert code == 1 and "cap" in err
    monkeypatch.setenv("GOWERSLAB_BUDGET", "lots")
    assert run(["norm", "--group", "Z/64", noise64], capsys)[0] == 1


def test_console_script(noise64):
    exe = shutil.which("gowerslab")
    cmd = [exe] if exe else [sys.executable, "-m", "gowerslab.cli"]
    res = subprocess.run(cmd + ["norm", "--group", "Z/64", "--d", "2", noise64], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["command"] == "norm"
