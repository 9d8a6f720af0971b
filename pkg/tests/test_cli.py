import subprocess
import sys

import pytest

from cmjtrees.cli import main
from cmjtrees.config import EXPERIMENT_KEYS, FAMILY_KEYS
from cmjtrees.families import PRESETS, Kind

CONFIG = """\
[family]
kind = bst

[experiment]
regime = super
c = 1
n_values = 100, 1000
replicates = 5
master_seed = 3
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_alpha_text_and_csv(capsys):
    code, out, _ = run(capsys, "alpha", "--family", "rrt", "--regime", "super", "--c", "1")
    assert code == 0
    assert "alpha" in out and "0.367879" in out
    code, out, _ = run(capsys, "alpha", "--family", "m-ary-search", "--set", "m=3", "--csv")
    assert code == 0
    header, row = out.strip().split("\n")
    assert len(header.split(",")) == len(row.split(","))


def test_alpha_assumptions(capsys):
    code, out, _ = run(capsys, "alpha", "--family", "binary-pyramid", "--assumptions")
    assert code == 0 and "theta" in out.lower()


def test_alpha_domain_and_usage_errors(capsys):
    assert run(capsys, "alpha", "--family", "bst", "--p", "0.4")[0] == 2
    assert run(capsys, "alpha", "--family", "GeneralPA", "--set", "weights=1")[0] == 2
    assert run(capsys, "alpha", "--family", "nope")[0] == 1
    assert run(capsys, "alpha", "--set", "novalue")[0] == 1
    with pytest.raises(SystemExit) as info:
        main(["alpha", "--bogus"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["verify", "--tier", "medium"])
    assert info.value.code == 1


def test_simulate_writes_reproducible_files(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG)
    out = tmp_path / "out"
    code, stdout, _ = run(capsys, "simulate", str(cfg), "--out", str(out))
    assert code == 0 and "10 rows" in stdout
    raw = (out / "raw.csv").read_bytes()
    assert len(raw.decode().strip().split("\n")) == 11
    assert (out / "aggregate.csv").exists()
    run(capsys, "simulate", str(cfg), "--out", str(out))
    assert (out / "raw.csv").read_bytes() == raw


def test_simulate_seed_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG)

    def seeds(*extra):
        out = tmp_path / "o"
        assert run(capsys, "simulate", str(cfg), "--out", str(out), *extra)[0] == 0
        return (out / "raw.csv").read_text()

    from_file = seeds()
    monkeypatch.setenv("CMJ_SEED", "3")
    assert seeds() == from_file
    monkeypatch.setenv("CMJ_SEED", "4")
    from_env = seeds()
    assert from_env != from_file
    assert seeds("--seed", "3") == from_file


def test_simulate_bad_config_reports_line(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG.replace("c = 1", "c = 50"))
    code, _, err = run(capsys, "simulate", str(cfg), "--out", str(tmp_path))
    assert code == 1 and "line 6" in err
    code, _, err = run(capsys, "simulate", str(tmp_path / "missing.ini"), "--out", str(tmp_path))
    assert code == 1


def test_simulate_failures_exit_3(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG + "cap = 200\n")
    code, _, err = run(capsys, "simulate", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 3
    assert (tmp_path / "o" / "failures.csv").exists()


def test_renewal(capsys):
    code, out, _ = run(capsys, "renewal", "--family", "rrt", "--T", "1", "--h", "0.1")
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "t,mean" and len(lines) == 12
    assert run(capsys, "renewal", "--T", "1", "--h", "0.3")[0] == 1


def test_export(tmp_path, capsys):
    dest = tmp_path / "tree.csv"
    assert run(capsys, "export", "--family", "bst", "--n", "50", "--seed", "5", "--out", str(dest))[0] == 0
    text = dest.read_text()
    assert text.startswith("child_id,parent_id,sigma,is_clone\n0,,")
    run(capsys, "export", "--family", "bst", "--n", "50", "--seed", "5", "--out", str(dest))
    assert dest.read_text() == text


def test_verify_fast(capsys):
    code, out, _ = run(capsys, "verify", "--only", "1", "--only", "2")
    assert code == 0
    assert "PASS  criterion  1:" in out and "2/2 criteria passed" in out


def test_help_lists_kinds_and_keys():
    res = subprocess.run([sys.executable, "-m", "cmjtrees", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in [k.value for k in Kind] + list(PRESETS) + list(FAMILY_KEYS) + list(EXPERIMENT_KEYS):
        assert name in res.stdout
    res = subprocess.run([sys.executable, "-m", "cmjtrees", "simulate", "--help"], capture_output=True, text=True)
    assert "n_values" in res.stdout and "--seed" in res.stdout
