import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rootembed.cli import main
from rootembed.config import load_config, parse_config
from rootembed.errors import InvalidConstant, MissingField, ParseError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[nu]
atom 0 1
[mu]
atom 1 1
[sigma]
constant 1
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def numeric_csv(path):
    rows = path.read_text().splitlines()
    body = [r for r in rows if not r.startswith("#")][1:]
    return np.array([[float(v) for v in r.split(",")] for r in body])


def test_minimal_config_resolves_c_star(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL))
    assert cfg.C == 1.0 and cfg.c_star == 1.0 and cfg.C_policy == "c_star"
    assert cfg.dx == 0.02 and cfg.t_max == 2.0
    assert cfg.t_cap in cfg.checkpoints


def test_constant_below_c_star(tmp_path):
    with pytest.raises(InvalidConstant):
        load_config(write(tmp_path, MINIMAL + "[problem]\nC = 0.5\n"))


def test_explicit_constant(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL + "[problem]\nC = 1.5\n"))
    assert cfg.C == 1.5 and cfg.C_policy == "value"


def test_missing_sigma(tmp_path):
    with pytest.raises(MissingField):
        load_config(write(tmp_path, "[nu]\natom 0 1\n[mu]\natom 1 1\n"))


@pytest.mark.parametrize("extra", [
    "[grid]\ndx = 0.1\nnx = 50\n",
    "[grid]\nfoo = 1\n",
    "[bogus]\n",
    "[tol]\nks = -1\n",
    "[sim]\nn_paths = 2.5\n",
    "[optimality]\npayoff = square\n",
    "[problem]\nC = lots\n",
])
def test_bad_configs(tmp_path, extra):
    with pytest.raises(ParseError):
        parse_config(MINIMAL + extra)


def test_bad_measure_line():
    with pytest.raises(ParseError):
        parse_config("[nu]\natom 0\n[mu]\natom 1 1\n[sigma]\nconstant 1\n")
    with pytest.raises(ParseError):
        parse_config("[nu]\natom 0 0.5\n[mu]\natom 1 1\n[sigma]\nconstant 1\n")


def test_sigma_table_config():
    cfg = parse_config("[nu]\nuniform -1 1 1\n[mu]\nuniform -2 2 1\n[sigma]\n-2 0.8\n0 1.2\n2 0.8\nK = 2\n")
    assert cfg.sigma.kind == "table" and cfg.sigma(0.0) == 1.2 and cfg.c_star == 0.0


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.cfg")):
        cfg = load_config(p)
        assert cfg.C >= cfg.c_star


@pytest.fixture(scope="module")
def example1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex1")
    code = main(["full", "--config", str(CONFIGS / "example1.cfg"), "--out-dir", str(out)])
    return code, out


def test_full_example1(example1_run):
    code, out = example1_run
    assert code == 0
    for name in ("barrier.csv", "surface.csv", "snapshots.csv", "report.json", "optimality.json",
                 "summary.json"):
        assert (out / name).is_file()
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdict"] == "minimal"
    assert rep["passed"] and rep["optimality_passed"]
    for key in ("config_sha256", "seed", "grid", "tolerances", "C", "c_star"):
        assert key in rep
    assert rep["C"] == 1.0 and rep["c_star"] == 1.0
    opt = json.loads((out / "optimality.json").read_text())
    assert opt["pathwise"]["passed"] and opt["martingale"]["stopped_ok"]


def test_output_csvs_are_numeric(example1_run):
    _, out = example1_run
    b = numeric_csv(out / "barrier.csv")
    assert b.shape[1] == 2 and np.isinf(b[:, 1]).any()
    s = numeric_csv(out / "surface.csv")
    assert s.shape[1] == 3 and np.isfinite(s).all()
    snap = numeric_csv(out / "snapshots.csv")
    assert snap.shape[1] == 8


def test_verify_wrong_target_fails(tmp_path, example1_run, capsys):
    _, out = example1_run
    text = (CONFIGS / "example1.cfg").read_text().replace("[mu]\natom 1 1", "[mu]\natom 2 1")
    cfg = write(tmp_path, text)
    code = main(["verify", "--config", str(cfg), "--barrier", str(out / "barrier.csv"),
                 "--out-dir", str(tmp_path / "o"), "--paths", "4000"])
    assert code == 2
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["embedding"]["ks_pass"] is False


def test_unknown_subcommand(tmp_path, capsys):
    code = main(["launch", "--config", str(write(tmp_path, MINIMAL))])
    assert code == 1
    assert "usage" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rootembed", "launch", "--config", "x.cfg"],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "usage" in r.stderr


def test_input_error_names_the_module(tmp_path, capsys):
    code = main(["solve", "--config", str(write(tmp_path, "[nu]\natom 0 1\n[mu]\natom 1 1\n"))])
    assert code == 1
    err = capsys.readouterr().err
    assert "rootembed.config" in err and "MissingField" in err


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, MINIMAL + "[sim]\nn_paths = 200\nt_cap = 1\nseed = 4\n")
    monkeypatch.setenv("ROOTEMBED_SEED", "9")
    main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--seed", "3"])
    assert json.loads((tmp_path / "a" / "report.json").read_text())["seed"] == 9
    assert json.loads((tmp_path / "b" / "report.json").read_text())["seed"] == 3


def test_raw_output(tmp_path):
    cfg = write(tmp_path, MINIMAL + "[sim]\nn_paths = 100\nt_cap = 1\n")
    main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path), "--raw"])
    raw = numeric_csv(tmp_path / "raw.csv")
    assert raw.shape == (100, 4)


def test_all_censored_is_a_check_failure(tmp_path):
    # a solve window far too short for any contact near the start
    cfg = write(tmp_path, MINIMAL.replace("atom 1 1", "atom 5 1")
                + "[grid]\ndx = 0.1\nt_max = 0.01\n[sim]\nn_paths = 50\nt_cap = 0.5\n")
    code = main(["verify", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert not rep["passed"] and rep["caveats"]
