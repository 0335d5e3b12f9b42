import json
import subprocess
import sys

import pytest

from wexp.cli import main, read_config


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _manifest(text):
    last = text.strip().splitlines()[-1]
    assert last.startswith("# manifest: ")
    return json.loads(last[len("# manifest: "):])


def test_coeff_table(capsys):
    code, out, _ = run(capsys, "coeff", "--max-q", "6")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "q1,q2,q3,nu,c"
    assert "2,2,2,3,8" in lines
    assert _manifest(out)["config"]["max_q"] == 6


def test_exponent_command(capsys):
    code, out, _ = run(capsys, "exponent", "--alpha", "-1", "--orders", "1,1")
    assert code == 0
    assert "exponent,,-1" in out.splitlines()


def test_unknown_weight_names_catalog(capsys):
    code, _, err = run(capsys, "simulate", "--weight", "bogus", "--reps", "2")
    assert code == 2
    assert "bogus" in err


def test_compare_short_grid_rejected(capsys):
    code, _, _ = run(capsys, "compare", "--n-grid", "64", "--reps", "10")
    assert code == 2


def test_compare_zero_reps_empty_table(capsys):
    code, out, _ = run(capsys, "compare", "--n-grid", "16,32,64", "--reps", "0")
    assert code == 2
    lines = out.splitlines()
    assert lines[0].startswith("n,f,target")
    assert len(lines) == 2 and lines[1].startswith("# manifest")


def test_numerical_failure_exit_code(capsys):
    code, _, err = run(capsys, "expand", "--weight", "const:0", "--reps", "10", "--limit-m", "16", "--n", "16")
    assert code == 3
    assert "degenerate" in err


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 256\nreps = 7\nlambda = 0.05\nphi = one\n")
    code, out, _ = run(capsys, "robustvol", "--config", str(cfg), "--reps", "5")
    assert code == 0
    m = _manifest(out)["config"]
    assert m["reps"] == 5 and m["n"] == 256 and m["lam"] == 0.05 and m["phi"] == "one"
    rows = [l for l in out.splitlines() if l and not l.startswith("#")]
    assert rows[0] == "rep,u_n,v_robust,v_target,z_n,g_inf"
    assert len(rows) == 6
    for r in rows[1:]:
        _, u, v, *_ = r.split(",")
        assert u == v


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "coeff", "--config", str(cfg))
    assert code == 2 and "colour" in err


def test_read_config_rejects_garbage(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("just words\n")
    with pytest.raises(ValueError):
        read_config(p)


def test_seventeen_digit_output(capsys):
    code, out, _ = run(capsys, "simulate", "--n", "16", "--reps", "2", "--weight", "sin2")
    assert code == 0
    row = out.splitlines()[1].split(",")
    assert len(row) == 8
    assert float(row[2]) == float("%.17g" % float(row[2]))


def test_robustvol_summary(tmp_path, capsys):
    summ = tmp_path / "s.json"
    code, _, _ = run(capsys, "robustvol", "--n", "256", "--reps", "40", "--lambda", "0.05", "--summary", str(summ))
    assert code == 0
    s = json.loads(summ.read_text())["summary"]
    assert {"u_n", "v_robust", "pass_band_fraction"} <= set(s)
    assert set(s["u_n"]) == {"bias", "se", "rmse"}


def test_path_dump(tmp_path, capsys):
    dump = tmp_path / "p.csv"
    code, _, _ = run(capsys, "simulate", "--model", "sde", "--n", "8", "--refine", "2", "--reps", "1", "--dump-paths", str(dump))
    assert code == 0
    lines = dump.read_text().splitlines()
    assert lines[0] == "t,w,x" and len(lines) == 1 + 17 + 1


def test_symbol_dump(tmp_path, capsys):
    dump = tmp_path / "s.csv"
    code, out, _ = run(capsys, "expand", "--weight", "const:1", "--reps", "3", "--limit-m", "16", "--n", "16", "--dump-symbols", str(dump))
    assert code == 0
    lines = dump.read_text().splitlines()
    assert lines[0] == "rep,a,b,coef"
    assert "0,3,0,1.3333333333333333" in lines


def test_selftest_deterministic_across_workers(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["selftest", "--outdir", str(a), "--seed", "5", "--workers", "1"]) == 0
    assert main(["selftest", "--outdir", str(b), "--seed", "5", "--workers", "4"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert "checks.csv" in names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "wexp", "coeff", "--max-q", "1"], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith("q1,q2,q3,nu,c")
