import dataclasses

import numpy as np
import pytest

from oscistrip.errors import ConfigError
from oscistrip.harness import (Check, ExperimentConfig, RunReport, load_config,
                               parse_config, run_suite, shipped_config)
from oscistrip.harness.cli import main
from oscistrip.harness.suites import Lab, operator_gap_estimate, random_trig


@pytest.fixture(scope="module")
def smoke():
    return shipped_config("smoke")


def test_default_config_ladder():
    cfg = shipped_config("default")
    assert cfg.epsilons == (0.2, 0.1, 0.05, 0.025)
    assert cfg.mesh.h_boundary <= min(cfg.epsilons) / 4
    assert cfg.scenario.lam is None and cfg.scenario.profile.name == "cosine"


def test_echo_round_trip(smoke):
    again = parse_config(smoke.echo(), source="echo")
    assert dataclasses.replace(again, source=smoke.source) == smoke


def test_ascending_ladder_rejected():
    with pytest.raises(ConfigError, match="epsilon ladder must descend"):
        parse_config("[ladder]\nepsilons = 0.1, 0.2\n[mesh]\nh_boundary = 0.01\n")


def test_unresolved_strip_rejected():
    text = "[ladder]\nepsilons = 0.2, 0.1\n[mesh]\nh_boundary = 0.05\n"
    with pytest.raises(ConfigError, match="strip not resolved"):
        parse_config(text)


def test_eps_above_eps0_rejected():
    with pytest.raises(ConfigError, match="eps0"):
        parse_config("[ladder]\nepsilons = 0.9, 0.1\n[mesh]\nh_boundary = 0.02\n")


def test_parse_errors_carry_source():
    with pytest.raises(ConfigError, match="cfg.ini: parse error"):
        parse_config("[mesh\nh = 1\n", source="cfg.ini")
    with pytest.raises(ConfigError, match="mesh.h_boundary: expected a number"):
        parse_config("[mesh]\nh_boundary = fine\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[meshes]\nh = 1\n")


@pytest.mark.parametrize("section", ["curve", "profile", "potential", "nonlinearity"])
def test_unknown_preset_is_config_error(section):
    with pytest.raises(ConfigError, match="unknown"):
        parse_config(f"[{section}]\nname = nope\n")


def test_bad_preset_parameter():
    with pytest.raises(ConfigError, match="preset"):
        parse_config("[curve]\nname = circle\nwobble = 2\n")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.ini")


def test_validate_defaults():
    assert ExperimentConfig().validate() is not None
    with pytest.raises(ConfigError, match="threads"):
        dataclasses.replace(ExperimentConfig(), threads=0).validate()


def test_report_bookkeeping(tmp_path):
    rep = RunReport("x", "", tmp_path)
    rep.checks += [Check("a", True, "", 1), Check("b", False, "", 1), Check("c", False)]
    assert rep.criteria() == {1: False} and not rep.ok
    rep.checks.pop(1)
    assert rep.ok  # ungated checks never fail a run
    assert rep.write().read_text().startswith("suite: x\nstatus: PASS")


def test_random_trig_deterministic():
    a = random_trig(np.random.default_rng(3))
    b = random_trig(np.random.default_rng(3))
    p = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    assert np.array_equal(a(p), b(p))


def test_operator_gap_zero_for_identical(default_pair):
    fem = default_pair[0]
    u = fem.base.interpolate(lambda p: 1.0 + p[:, 0])
    assert operator_gap_estimate(fem, fem, [u]) == 0.0


def test_cli_mu_suite(tmp_path, capsys):
    code = main(["mu", "--config", "smoke", "--out", str(tmp_path)])
    assert code == 0
    assert "status: PASS" in capsys.readouterr().out
    assert (tmp_path / "mu.csv").exists() and (tmp_path / "config.ini").exists()


def test_cli_bad_env_threads(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OSCISTRIP_THREADS", "many")
    assert main(["mu", "--config", "smoke", "--out", str(tmp_path)]) == 2
    assert "OSCISTRIP_THREADS" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[ladder]\nepsilons = 0.05, 0.1\n")
    assert main(["mu", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "must descend" in capsys.readouterr().err


def test_unknown_suite(smoke, tmp_path):
    with pytest.raises(ConfigError, match="unknown suite"):
        run_suite(smoke, "everything", out=tmp_path)


def test_csv_outputs_reproducible(smoke, tmp_path):
    names = ("conc_convergence.csv", "mc_oracle.csv")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        rep = run_suite(smoke, "conc", out=out)
        assert rep.criteria().get(2) is True
        outs.append([(out / n).read_bytes() for n in names])
    assert outs[0] == outs[1]


def test_threads_do_not_change_results(smoke, tmp_path):
    a = run_suite(smoke, "coercivity", out=tmp_path / "a", threads=1)
    b = run_suite(smoke, "coercivity", out=tmp_path / "b", threads=2)
    assert a.criteria() == b.criteria() == {3: True}
    assert (tmp_path / "a" / "coercivity.csv").read_bytes() == \
        (tmp_path / "b" / "coercivity.csv").read_bytes()


def test_lab_caches_systems(smoke, tmp_path):
    lab = Lab(smoke, tmp_path, 1)
    assert lab.base is lab.base
    systems, limit = lab.operator_ladder
    assert [s.epsilon for s in systems] == list(smoke.epsilons) and limit.epsilon == 0.0
