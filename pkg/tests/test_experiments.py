import dataclasses
import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from epictl.cli import main
from epictl.errors import ConfigError, ParamValidationError, ValidationError
from epictl.experiments import (build_config, config_to_dict, dump_config_yaml, load_config, preset_table1,
                                preset_uk2021, run_experiment)
from epictl.model import validate_params


def small(cfg, **kw):
    kw.setdefault("n_replicates", 5)
    kw.setdefault("n_steps", 100)
    cfg.sim = dataclasses.replace(cfg.sim, **kw)
    return cfg


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


# -------------------------------------------------------------------- presets

def test_table1_preset_values(table1_cfg):
    p = table1_cfg.params
    assert p.kappa == 0.2 and p.rho == 0.5 and p.eta == 0.001 and p.mu == 0.3 and p.zeta == 0.001
    assert (p.beta0, p.beta1, p.beta2) == (0.0, 0.2, 0.2)
    assert (p.theta1, p.theta2, p.m_pm, p.q_mod) == (2.0, 2.0, 12.5, 0.5)
    assert all(a == 1 / 3 for row in p.alpha for a in row)
    assert table1_cfg.x0.as_array().tolist() == [1.0, 99.8, 0.1, 0.1]
    assert (table1_cfg.sim.fixed_controls.e_lock, table1_cfg.sim.fixed_controls.v_vacc) == (1.0, 0.674)
    assert p.r_disc == 0.05 and p.sigma[3] == 0.05
    validate_params(p)


def test_uk_preset_values(uk_cfg):
    x0 = uk_cfg.x0
    assert x0.i_pop == 1.89 and x0.s_pop == 84.19
    assert x0.r_pop == 100 - x0.s_pop - x0.i_pop
    p = uk_cfg.params
    assert (p.kappa, p.eta, p.beta1, p.beta2, p.zeta) == (0.01, 0.0558, 0.536, 0.536, 0.000152)
    assert p.sigma[:3] == (0.05, 0.08557, 0.12)
    assert (uk_cfg.sim.fixed_controls.e_lock, uk_cfg.sim.fixed_controls.v_vacc) == (0.75, 0.00557)
    assert uk_cfg.metadata["population_millions"] == 67.22
    validate_params(p)


# ------------------------------------------------------------------- loading

def test_override_sigma2(tmp_path):
    cfg = load_config(write_yaml(tmp_path / "c.yaml", {"experiment_kind": "sir_ensemble", "preset": "table1",
                                                        "params": {"sigma2": 0.07}}))
    ref = preset_table1()
    assert cfg.params.sigma == (0.1, 0.07, 0.12, 0.05)
    assert cfg.params.replace(sigma=ref.params.sigma) == ref.params


def test_string_numbers_coerced(tmp_path):
    cfg = load_config(write_yaml(tmp_path / "c.yaml", {"experiment_kind": "sir_ensemble", "preset": "table1",
                                                        "sim": {"state_floor": "1e-9"}}))
    assert cfg.sim.state_floor == 1e-9


def test_rho_violation_surfaces(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"experiment_kind": "sir_ensemble", "preset": "table1",
                                            "params": {"rho": 1.5}})
    with pytest.raises(ParamValidationError, match="rho"):
        load_config(path)


def test_empty_file(tmp_path):
    (tmp_path / "e.yaml").write_text("")
    with pytest.raises(ConfigError, match="experiment_kind required"):
        load_config(tmp_path / "e.yaml")


def test_unknown_key_with_line(tmp_path):
    (tmp_path / "u.yaml").write_text("experiment_kind: sir_ensemble\npreset: table1\nparams:\n  sigmaa: 1\n")
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "u.yaml")
    assert "sigmaa" in str(info.value)
    assert info.value.line == 4


def test_parse_error_line(tmp_path):
    (tmp_path / "p.yaml").write_text("experiment_kind: sir_ensemble\nparams: {a: [1,\n")
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "p.yaml")
    assert info.value.line is not None


def test_json_parse_error_line(tmp_path):
    (tmp_path / "p.json").write_text('{\n "experiment_kind": "sir_ensemble",\n oops\n}')
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "p.json")
    assert info.value.line == 3


def test_missing_fields_without_preset():
    with pytest.raises(ConfigError, match="missing params"):
        build_config({"experiment_kind": "sir_ensemble", "params": {"eta": 0.1}})


def test_explicit_anchor_kept():
    cfg = build_config({"experiment_kind": "steady_state", "preset": "table1",
                        "params": {"x_star": {"beta": 1, "S": 90, "I": 1, "R": 1}}})
    assert cfg.params.x_star.as_array().tolist() == [1.0, 90.0, 1.0, 1.0]


def test_dump_reload_identity():
    cfg = preset_uk2021()
    again = build_config(yaml.safe_load(dump_config_yaml(cfg)))
    assert config_to_dict(again) == config_to_dict(cfg)


# ----------------------------------------------------------------- running

def test_sir_ensemble_outputs(tmp_path):
    cfg = small(preset_table1())
    cfg.write_replicates = True
    m = run_experiment(cfg, out_dir=tmp_path)
    means = np.genfromtxt(tmp_path / "means.csv", delimiter=",", names=True)
    assert means.dtype.names == ("time", "beta", "S", "I", "R")
    assert means.size == cfg.sim.n_steps + 1
    assert len(list((tmp_path / "replicates").iterdir())) == 5
    assert json.loads((tmp_path / "manifest.json").read_text())["manifest"]["seed"] == cfg.sim.seed
    assert np.isfinite(m["manifest"]["summary"]["sup_moment"])


def test_uk_day_column(tmp_path):
    run_experiment(small(preset_uk2021()), out_dir=tmp_path)
    means = np.genfromtxt(tmp_path / "means.csv", delimiter=",", names=True)
    np.testing.assert_allclose(means["day"], 100 * means["time"])


def test_control_curves_in_unit_interval(tmp_path):
    run_experiment(small(preset_table1("control_curves"), n_replicates=3), out_dir=tmp_path)
    means = np.genfromtxt(tmp_path / "means.csv", delimiter=",", names=True)
    assert {"e_opt", "v_opt"} <= set(means.dtype.names)
    for name in ("e_opt", "v_opt"):
        assert means[name].min() >= 0 and means[name].max() <= 1


def test_network_trace_rows(tmp_path):
    cfg = build_config({"experiment_kind": "network_trace", "preset": "table1", "network": {"updates": 50}})
    run_experiment(cfg, out_dir=tmp_path)
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "update,removed,added,modularity,density"
    assert len(lines) == 51


def test_tv_report_identical_arms(tmp_path):
    cfg = small(build_config({"experiment_kind": "tv_report", "preset": "table1"}), n_replicates=30)
    run_experiment(cfg, out_dir=tmp_path)
    tv = json.loads((tmp_path / "tv.json").read_text())
    assert tv["tv_sup"] == tv["tv_coupling"] == tv["tv_partition"] == 0.0


def test_fk_check_experiment(tmp_path):
    cfg = build_config({"experiment_kind": "fk_check", "preset": "table1", "fk": {"n_paths": 500}})
    run_experiment(cfg, out_dir=tmp_path)
    fk = json.loads((tmp_path / "fk.json").read_text())
    assert fk["z"] < 4


def test_steady_state_experiment(tmp_path):
    run_experiment(preset_table1("steady_state"), out_dir=tmp_path)
    ss = json.loads((tmp_path / "steady_state.json").read_text())
    assert ss["residual"] < 1e-8


def test_manifest_roundtrip_byte_identical(tmp_path):
    cfg = small(preset_table1())
    cfg.write_replicates = True
    run_experiment(cfg, out_dir=tmp_path / "a")
    again = load_config(tmp_path / "a" / "manifest.json")
    run_experiment(again, out_dir=tmp_path / "b")
    for f in (tmp_path / "a").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_writes_stay_inside_output_dir(tmp_path):
    out = tmp_path / "out"
    before = set(tmp_path.parent.iterdir())
    run_experiment(small(preset_table1()), out_dir=out)
    assert set(tmp_path.parent.iterdir()) == before
    assert all(p.resolve().is_relative_to(out.resolve()) for p in out.rglob("*"))


# ---------------------------------------------------------------------- CLI

def test_cli_preset_print(capsys):
    assert main(["preset", "uk2021", "--print"]) == 0
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["x0"]["I"] == 1.89


def test_cli_run_and_seed(tmp_path):
    cfg_path = write_yaml(tmp_path / "c.yaml", {"experiment_kind": "sir_ensemble", "preset": "table1",
                                                "sim": {"n_replicates": 2, "n_steps": 20}})
    assert main(["run", "--config", str(cfg_path), "--seed", "5", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["sim"]["seed"] == 5


def test_cli_validation_exit_code(tmp_path):
    cfg_path = write_yaml(tmp_path / "c.yaml", {"experiment_kind": "sir_ensemble", "preset": "table1",
                                                "params": {"rho": 1.5}})
    assert main(["run", "--config", str(cfg_path)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["bogus"]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_runtime_exit_code(tmp_path):
    cfg_path = write_yaml(tmp_path / "c.yaml", {"experiment_kind": "sir_ensemble", "preset": "table1",
                                                "params": {"eta": 10.0, "n_pop": 1e308},
                                                "sim": {"n_replicates": 1, "n_steps": 50}})
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2


def test_cli_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EPICTL_OUT", str(tmp_path / "env"))
    assert main(["network", "--updates", "10", "--seed", "2"]) == 0
    assert (tmp_path / "env" / "trace.csv").exists()


def test_cli_network_levels(tmp_path):
    assert main(["network", "--nodes", "30", "--prob", "0.2", "--updates", "5", "--homophily", "0.5",
                 "--seed", "1", "--levels", "6,6,6,6,6", "--out", str(tmp_path)]) == 0
    assert main(["network", "--nodes", "30", "--out", str(tmp_path)]) == 1


def test_cli_tv(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("prob\n0.5\n0.5\n")
    (tmp_path / "b.csv").write_text("prob\n1\n0\n")
    assert main(["tv", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv")]) == 0
    assert json.loads(capsys.readouterr().out) == {"tv_sup": 0.5, "tv_coupling": 0.5, "tv_partition": 0.5}


def test_cli_tv_samples(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("x\n1\n2\n3\n")
    (tmp_path / "b.csv").write_text("x\n1\n2\n3\n")
    assert main(["tv", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["tv_sup"] == 0.0
