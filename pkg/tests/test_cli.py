import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from augphase.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, ConfigError, main, parse_config, read_control_csv,
                          read_curve_csv, read_manifest, write_curve_csv)


def test_defaults_filled():
    cfg = parse_config("model = hopf\na = 1\n")
    assert cfg.params == {"a": 1.0, "b": 1.0, "c": -1.0, "d": 0.0}
    assert cfg.command == "orbit"
    assert cfg.provenance["a"] == "file" and cfg.provenance["b"] == "default"


def test_comments_and_blank_lines():
    cfg = parse_config("# a comment\n\nmodel = vdp   # trailing\nmu = 0.01\n")
    assert cfg.model == "vdp" and cfg.params["mu"] == 0.01


@pytest.mark.parametrize("text, word", [
    ("model = hopf\nfoo = 1\n", "foo"),
    ("a = 1\n", "model"),
    ("model = hopf\nn = ten\n", "n"),
    ("model = nope\n", "nope"),
    ("model = hopf\ncommand = plot\n", "plot"),
    ("model = hopf\nn = 4\n", "n"),
    ("model = hopf\nirc_v = 0,0\n", "irc_v"),
    ("model = hopf\na = -1\n", "stable"),
    ("model = hopf\njunk line\n", "junk"),
])
def test_config_errors(text, word):
    with pytest.raises(ConfigError, match=word):
        parse_config(text)


def test_flag_overrides_file():
    cfg = parse_config("model = hopf\na = 1\nn = 64\n", ["a=2", "n=128"])
    assert cfg.params["a"] == 2.0 and cfg.n == 128
    assert cfg.provenance["a"] == "flag" and cfg.provenance["n"] == "flag"
    assert cfg.provenance["b"] == "default"


@pytest.mark.parametrize("text", [
    "model = hopf\nd = 1\ncommand = irc\nn = 256\nrtol = 1e-11\n",
    "model = lambda_omega\nG = 0, 2, 0, -1\n",
    "model = sandstede\ncommand = validate\ndelta = 0.03\nextended = true\n",
    "model = vdp\nmu = 0.05\ncommand = sweep\nsweep_param = mu\nsweep_values = 0.1, 0.05\njobs = 2\n",
    "model = hopf\ncommand = reduce-sim\ncontrol = u.csv\ntheta0 = 0.5\nirc_v = -1, 0\n",
])
def test_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.to_text() == cfg.to_text()


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(-5.0, 5.0), st.integers(8, 5000))
def test_round_trip_random(a, d, n):
    cfg = parse_config(f"model = hopf\na = {a!r}\nd = {d!r}\nn = {n}\n")
    assert parse_config(cfg.to_text()) == cfg


def test_control_csv_forms(tmp_path):
    p = tmp_path / "u.csv"
    p.write_text("t,u1,u2\n0,0.1,0\n1.5,0,0.2\n")
    u = read_control_csv(p, 2)
    assert u.kind == "piecewise" and np.array_equal(u(2.0), [0, 0.2])
    p.write_text("#impulses\nt,dx1,dx2\n0,0,1e-3\n2,1e-3,0\n")
    u = read_control_csv(p, 2)
    assert u.kind == "impulses" and u.times.tolist() == [0.0, 2.0]
    p.write_text("t,u1,u2\n")
    assert read_control_csv(p, 2).is_zero


@pytest.mark.parametrize("body", ["t,u1,u2\n1,0,0\n0,0,0\n", "t,u1,u2\n0,1\n", "t,u1\n0,1\n",
                                  "x,u1,u2\n0,1,2\n", "t,u1,u2\n0,a,1\n", ""])
def test_control_csv_errors(tmp_path, body):
    p = tmp_path / "u.csv"
    p.write_text(body)
    with pytest.raises(ConfigError):
        read_control_csv(p, 2)


def test_curve_csv_format(tmp_path):
    th = 2 * math.pi * np.arange(8) / 8
    vals = np.c_[np.cos(th), np.sin(th)]
    p = tmp_path / "c.csv"
    write_curve_csv(p, th, vals)
    lines = p.read_text().splitlines()
    assert lines[0] == "theta,c1,c2" and len(lines) == 10
    t2, v2 = read_curve_csv(p)
    assert np.array_equal(t2[:-1], th) and np.array_equal(v2[:-1], vals)
    assert t2[-1] == 2 * math.pi and np.array_equal(v2[-1], vals[0])


def test_irc_command(tmp_path):
    out = tmp_path / "irc"
    rc = main(["irc", "-m", "hopf", "-o", str(out), "-s", "n=256", "-s", "irc_v=-1,0"])
    assert rc == EXIT_OK
    th, I = read_curve_csv(out / "irc.csv")
    assert th.size == 257 and np.allclose(I[0], [-1.0, 0.0], atol=1e-5)
    assert np.max(np.abs(I[-1] - I[0])) < 1e-6
    man = read_manifest(out / "manifest.txt")
    assert abs(float(man["T"]) - 2 * math.pi) < 1e-8
    assert man["provenance.irc_v"] == "flag" and man["status"] == "0"
    for f in ("prc.csv", "orbit.csv", "irc.svg", "config.txt"):
        assert (out / f).exists()
    assert (out / "irc.svg").read_text().lstrip().startswith("<svg")


def test_irc_default_orientation(tmp_path):
    assert main(["irc", "-m", "hopf", "-o", str(tmp_path), "-s", "n=128"]) == EXIT_OK
    _, I = read_curve_csv(tmp_path / "irc.csv")
    assert np.allclose(I[0], [1.0, 0.0], atol=1e-5)


def test_csv_bytes_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["prc", "-m", "vdp", "-o", str(tmp_path / d), "-s", "n=200"]) == EXIT_OK
    assert (tmp_path / "a" / "prc.csv").read_bytes() == (tmp_path / "b" / "prc.csv").read_bytes()
    assert (tmp_path / "a" / "orbit.csv").read_bytes() == (tmp_path / "b" / "orbit.csv").read_bytes()


def test_reduce_sim_impulse(tmp_path):
    ctl = tmp_path / "u.csv"
    ctl.write_text("#impulses\nt,dx1,dx2\n0,0,1e-3\n")
    out = tmp_path / "r"
    assert main(["reduce-sim", "-m", "hopf", "-o", str(out), "-s", f"control={ctl}", "-s", "n=256"]) == EXIT_OK
    man = read_manifest(out / "manifest.txt")
    assert man["jumps"] == "1"
    assert abs(float(man["jump0.dtheta"]) - 1e-3) < 1e-8
    assert abs(float(man["jump0.dpsi"])) < 1e-8
    data = np.loadtxt(out / "reduced.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 3 and data[0, 0] == 0.0


def test_reduce_sim_two_impulses(tmp_path):
    ctl = tmp_path / "u.csv"
    ctl.write_text("#impulses\nt,dx1,dx2\n0.5,2e-3,-1e-3\n1.7,-5e-4,3e-3\n")
    out = tmp_path / "r"
    assert main(["reduce-sim", "-m", "hopf", "-o", str(out), "-s", f"control={ctl}", "-s", "n=256",
                 "-s", "t_end=3"]) == EXIT_OK
    man = read_manifest(out / "manifest.txt")
    assert man["jumps"] == "2" and float(man["jump1.t"]) == 1.7


def test_exit_codes(tmp_path, capsys):
    cfgfile = tmp_path / "c.txt"
    cfgfile.write_text("model = hopf\nfoo = 1\n")
    assert main([str(cfgfile)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "code=2" in err and "foo" in err
    assert main([str(tmp_path / "missing.txt")]) == EXIT_CONFIG
    # a control file of the wrong width is a config problem
    ctl = tmp_path / "u.csv"
    ctl.write_text("t,u1\n0,1\n")
    assert main(["reduce-sim", "-m", "hopf", "-o", str(tmp_path / "o"), "-s", f"control={ctl}",
                 "-s", "n=64"]) == EXIT_CONFIG
    # at loose tolerances the near-homoclinic orbit is lost in the saddle
    assert main(["orbit", "-m", "sandstede", "-o", str(tmp_path / "o2"), "-s", "rtol=1e-3",
                 "-s", "atol=1e-6", "-s", "extended=false"]) == EXIT_SOLVER
    assert "code=3 kind=solver" in capsys.readouterr().err


def test_validate_full_phase(tmp_path):
    out = tmp_path / "v"
    assert main(["validate", "-m", "sniper", "-o", str(out), "-s", "n=512"]) == EXIT_OK
    man = read_manifest(out / "manifest.txt")
    assert man["validate.failed"] == "none"
    assert man["check.k_rel_err.pass"] == "true"


def test_sweep(tmp_path):
    out = tmp_path / "s"
    rc = main(["sweep", "-m", "hopf", "-o", str(out), "-s", "sweep_param=a", "-s", "sweep_values=0.5,2",
               "-s", "sweep_command=floquet", "-s", "n=128"])
    assert rc == EXIT_OK
    man = read_manifest(out / "manifest.txt")
    ks = []
    for i in range(2):
        assert man[f"run.{i}.status"] == "0"
        sub = read_manifest(out / man[f"run.{i}.dir"] / "manifest.txt")
        ks.append(float(sub["k_divergence"]))
    assert np.allclose(ks, [-1.0, -4.0], atol=1e-8)
