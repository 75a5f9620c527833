"""Config parsing and end-to-end runs of the experiment front end."""

import json
import re

import pytest

from narrowtube.cli import ConfigError, main, parse_config

HEADER_RE = re.compile(r"^# narrowtube v0\.1\.0 config=[0-9a-f]{12}$")


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_defaults(tmp_path, monkeypatch):
    monkeypatch.delenv("NARROWTUBE_SEED", raising=False)
    cfg = parse_config(_write(tmp_path, "min.ini", "[family]\n"))
    assert cfg.v1 == (1.0,)
    assert cfg.beta == 0.0 and cfg.mu == 0.0
    assert cfg.eps_list == (0.04, 0.02, 0.01)
    assert cfg.dt_policy == "auto"
    assert cfg.dt_for(0.002) == pytest.approx(1.6e-7)
    assert cfg.dt_for(0.05) == 1e-6
    assert cfg.seed == 0
    assert cfg.sigma_fail == 5.0


def test_seed_priority(tmp_path, monkeypatch):
    path = _write(tmp_path, "s.ini", "[run]\nseed = 11\n")
    monkeypatch.setenv("NARROWTUBE_SEED", "99")
    assert parse_config(path).seed == 11
    assert parse_config(path, seed_override=5).seed == 5
    bare = _write(tmp_path, "bare.ini", "[run]\nn_paths = 10\n")
    assert parse_config(bare).seed == 99
    monkeypatch.delenv("NARROWTUBE_SEED")
    assert parse_config(bare).seed == 0


def test_v1_forms(tmp_path):
    cfg = parse_config(_write(tmp_path, "a.ini",
                              "[family]\nv1 = poly:1.0, 0.0, 0.5\n"))
    assert cfg.v1 == (1.0, 0.0, 0.5)
    cfg = parse_config(_write(tmp_path, "b.ini", "[family]\nv1 = const:2.5\n"))
    assert cfg.v1 == (2.5,)
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "c.ini", "[family]\nv1 = spline:1\n"))
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "d.ini", "[family]\nv1 = poly:\n"))


def test_validation_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "e.ini",
                            "[run]\neps_list = 0.01, 0.02\n"))
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "f.ini",
                            "[run]\nkappa = 0.1\nkappa0 = 0.2\n"))
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "g.ini", "[run]\nn_paths = 1\n"))
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "h.ini", "[run]\ndt = sometimes\n"))
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, "i.ini",
                            "[family]\nv1 = const:-1.0\n"))
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "missing.ini"))


def test_config_hash_scope(tmp_path):
    path = _write(tmp_path, "j.ini", "[run]\nseed = 3\nworkers = 1\n")
    base = parse_config(path).config_hash()
    assert parse_config(path, workers_override=4).config_hash() == base
    assert parse_config(path, out_override="elsewhere").config_hash() == base
    assert parse_config(path, seed_override=4).config_hash() != base


def test_main_missing_config(tmp_path, capsys):
    assert main(["exit-prob", "--config", str(tmp_path / "nope.ini")]) == 4
    assert "config error" in capsys.readouterr().err


FLAT_RUN = """
[family]
v1 = const:1.0

[run]
eps_list = 0.05
kappa = 0.1
n_paths = 200
seed = 7
grid_nodes = 501
"""


def test_exit_prob_end_to_end(tmp_path):
    cfg_path = _write(tmp_path, "run.ini", FLAT_RUN)
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert main(["exit-prob", "--config", cfg_path, "--out", str(out1)]) == 0
    assert main(["exit-prob", "--config", cfg_path, "--out", str(out2)]) == 0

    lines = (out1 / "exit_prob.csv").read_text().splitlines()
    assert HEADER_RE.match(lines[0])
    assert lines[1] == "eps,p_hat,stderr,p_plus_target,z_score"
    # one row per eps plus the limit-solve row
    assert len(lines) == 4
    summary = json.loads((out1 / "exit_prob_summary.json").read_text())
    assert summary["within_band"] is True
    assert summary["p_plus_target"] == pytest.approx(0.5)
    assert abs(summary["limit_solve_value"] - 0.5) < 1e-9

    # reruns are byte-identical
    for name in ("exit_prob.csv", "exit_prob_summary.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


# at eps = 0.05 the junction needle is taller than a unit and single
# excursions into it outlast the default horizon; 0.01 is the regime the
# sticky checks are designed for
STICKY_RUN = """
[family]
v1 = const:1.0
mu = 0.5

[run]
eps_list = 0.01
kappa = 0.1
kappa_list = 0.2, 0.1, 0.05
n_paths = 200
seed = 9
grid_nodes = 1001
"""


def test_exit_time_end_to_end(tmp_path):
    cfg_path = _write(tmp_path, "sticky.ini", STICKY_RUN)
    out = tmp_path / "out"
    assert main(["exit-time", "--config", cfg_path, "--out", str(out)]) == 0
    summary = json.loads((out / "exit_time_summary.json").read_text())
    assert summary["green_oracle_value"] == pytest.approx(0.06, rel=1e-9)
    assert summary["theta"] == pytest.approx(0.5, rel=1e-12)
    assert summary["theta_hat"] == pytest.approx(0.5, rel=0.01)
    assert summary["limit_solve_value"] == pytest.approx(0.06, rel=1e-6)
    lines = (out / "exit_time.csv").read_text().splitlines()
    assert HEADER_RE.match(lines[0])
    assert len(lines) == 4


MARGINAL_RUN = """
[family]
v1 = const:1.0

[run]
eps_list = 0.05
T = 0.01
n_paths = 300
seed = 13
grid_nodes = 501

[tolerances]
ks_max = 0.2
"""


def test_marginal_end_to_end(tmp_path):
    cfg_path = _write(tmp_path, "marg.ini", MARGINAL_RUN)
    out = tmp_path / "out"
    assert main(["marginal", "--config", cfg_path, "--out", str(out)]) == 0
    summary = json.loads((out / "marginal_summary.json").read_text())
    assert summary["within_band"] is True
    assert 0.0 <= summary["smallest_eps_ks"] <= 0.2


RESOLVENT_RUN = """
[family]
v1 = const:1.0

[run]
eps_list = 0.05
lambda = 20.0
n_paths = 100
n_test_functions = 2
seed = 17
grid_nodes = 401

[tolerances]
sigma_pass = 4.0
"""


def test_resolvent_end_to_end(tmp_path):
    cfg_path = _write(tmp_path, "res.ini", RESOLVENT_RUN)
    out = tmp_path / "out"
    assert main(["resolvent", "--config", cfg_path, "--out", str(out)]) == 0
    lines = (out / "resolvent.csv").read_text().splitlines()
    assert HEADER_RE.match(lines[0])
    # two chain rows plus one 2d row
    assert len(lines) == 5
    summary = json.loads((out / "resolvent_summary.json").read_text())
    assert summary["within_band"] is True
    assert len(summary["rows"]) == 3


CHECK_OK = """
[family]
v1 = const:1.0
beta = 1.0
mu = 0.3
delta_exponent = 0.3

[run]
eps_list = 0.04, 0.02, 0.01
"""

CHECK_BAD = CHECK_OK.replace("delta_exponent = 0.3", "delta_exponent = 0.5")


def test_check_assumptions_exit_codes(tmp_path):
    ok_path = _write(tmp_path, "ok.ini", CHECK_OK)
    bad_path = _write(tmp_path, "bad.ini", CHECK_BAD)
    out_ok = tmp_path / "ok"
    out_bad = tmp_path / "bad"
    assert main(["check-assumptions", "--config", ok_path,
                 "--out", str(out_ok)]) == 0
    assert main(["check-assumptions", "--config", bad_path,
                 "--out", str(out_bad)]) == 2

    rows_ok = json.loads(
        (out_ok / "check_assumptions_summary.json").read_text())["rows"]
    xi_ok = [r["xi_eps"] for r in rows_ok]
    assert xi_ok[0] > xi_ok[1] > xi_ok[2]
    rows_bad = json.loads(
        (out_bad / "check_assumptions_summary.json").read_text())["rows"]
    xi_bad = [r["xi_eps"] for r in rows_bad]
    assert xi_bad[0] < xi_bad[1] < xi_bad[2]
    assert not all(r["passed"] for r in rows_bad)
