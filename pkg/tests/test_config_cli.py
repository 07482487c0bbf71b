import csv
import logging

import numpy as np
import pytest
import yaml

from nashadapt.cli import emit_plot_data, main
from nashadapt.config import (PRESET_NAMES, RunConfig, apply_overrides, build_scenarios,
                              dump_config, load_scenario, load_scenarios, preset_config)
from nashadapt.errors import UnknownFigure, ValidationError
from nashadapt.generator import GradientMode
from nashadapt.sim import integrate


def test_example1_preset_equilibrium():
    s = load_scenario(RunConfig("example1"))
    np.testing.assert_allclose(s.nash(), [2.5 - i / 10 for i in range(1, 11)], atol=1e-10)
    assert s.generator.alpha == 4.0 and s.dt == 1e-3 and s.t_end == 200.0
    assert [(e.t_start, e.t_end) for e in s.events] == [(100.0, 150.0)]
    assert s.gains[0].k.tolist() == [-4.0]


def test_example3_preset_equilibrium():
    s = load_scenario(RunConfig("example3"))
    np.testing.assert_array_equal(np.round(s.nash(), 2), [2.42, 3.47, 4.53, 5.58])
    assert s.generator.mode is GradientMode.REAL_TIME
    assert s.gains[0].epsilon == 0.8
    np.testing.assert_array_equal(s.gains[0].Lambda, 5 * np.eye(4))
    # theta = (a, b, A1, A2) with A1 = 2(1 + mu1), A2 = 2 mu2
    np.testing.assert_allclose(s.agents[2].theta_true, [1.0, 1.0, 2.2, -0.2])
    assert s.agents[2].frequency == 3.0


def test_example2_preset():
    for s in load_scenarios(RunConfig("example2")):
        assert s.agents[0].terms == ("one", "sin", "cos")
        assert s.generator.alpha == pytest.approx(2 * s.meta["alpha_min"])
        np.testing.assert_array_equal(s.gains[0].Lambda, 5 * np.eye(3))


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_preset_round_trip(name, tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(dump_config(preset_config(name)))
    a = load_scenarios(RunConfig(name))
    b = load_scenarios(RunConfig(str(path)))
    assert [s.fingerprint() for s in a] == [s.fingerprint() for s in b]


def test_missing_alpha_defaults_with_notice(caplog):
    cfg = preset_config("example3")
    del cfg["generator"]["alpha"]
    with caplog.at_level(logging.INFO, logger="nashadapt"):
        s = build_scenarios(cfg)[0]
    assert s.generator.alpha == pytest.approx(2 * s.meta["alpha_min"])
    assert "2 x alpha_min" in caplog.text


def test_below_bound_alpha_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="nashadapt"):
        load_scenario(RunConfig("example1"))
    assert "not above the sufficient bound" in caplog.text


@pytest.mark.parametrize("mutate, key", [
    (lambda c: c["agents"][0].update(k=[4.0]), "agents[0].k"),
    (lambda c: c["agents"][1]["exosystem"].update(mu=[0.9, 0.0]), "agents[1].exosystem.mu"),
    (lambda c: c.update(graph={"n": 4, "edges": [[1, 2], [2, 3], [3, 4]]}), "graph"),
    (lambda c: c.update(bogus=1), "bogus"),
    (lambda c: c["agents"][0].update(theta_true=[1.0]), "agents[0]"),
    (lambda c: c["agents"].pop(), "agents"),
    (lambda c: c.update(dt=-1.0), "dt"),
    (lambda c: c["generator"].update(gradient_mode="sideways"), "generator.gradient_mode"),
])
def test_validation_errors_name_the_key(mutate, key):
    cfg = preset_config("example3")
    mutate(cfg)
    with pytest.raises(ValidationError) as exc:
        build_scenarios(cfg)
    assert key in str(exc.value)
    assert str(exc.value).startswith("[config]")


def test_overrides():
    cfg = apply_overrides(preset_config("example2"), {"gradient_mode": "realtime",
                                                      "generator.alpha": "50"})
    s = build_scenarios(cfg)[0]
    assert s.generator.mode is GradientMode.REAL_TIME and s.generator.alpha == 50.0
    with pytest.raises(ValidationError, match="matches 0"):
        apply_overrides(preset_config("example1"), {"nope": 1})
    with pytest.raises(ValidationError, match="order"):
        apply_overrides(preset_config("example1"), {"order": 2})  # ten matches


def test_adaptation_off_is_whole_horizon_freeze():
    s = load_scenario(RunConfig("example2", overrides={"adaptation": "off"}))
    assert not s.adaptation_on(0.0) and not s.adaptation_on(s.t_end)


def test_small_epsilon_defaults_to_finer_step():
    cfg = preset_config("example3")
    del cfg["dt"]
    for a in cfg["agents"]:
        a["epsilon"] = 0.5
    assert build_scenarios(cfg)[0].dt == 1e-4


def test_emit_plot_data(tmp_path):
    s = load_scenario(RunConfig("example1", overrides={"t_end": 1.0}))
    tr = integrate(s)
    path = emit_plot_data([tr], "outputs", tmp_path)
    header = next(csv.reader(open(path)))
    assert header == ["t"] + [f"y_{i}" for i in range(1, 11)]
    with pytest.raises(UnknownFigure):
        emit_plot_data([tr], "plane", tmp_path)
    with pytest.raises(UnknownFigure):
        emit_plot_data([tr], "histogram", tmp_path)


def test_cli_example3_short_run(tmp_path, capsys):
    out = tmp_path / "ex3"
    code = main(["--scenario", "example3", "--t-end", "2", "--out", str(out), "--report",
                 "--emit-plots", "parameters", "outputs"])
    assert code == 2  # two seconds is not enough to converge
    assert (out / "trajectory.csv").is_file() and (out / "config.yaml").is_file()
    header = next(csv.reader(open(out / "plot_parameters.csv")))
    assert len(header) == 1 + 16
    meta = dict(line.split(" = ", 1) for line in (out / "meta.txt").read_text().splitlines())
    assert meta["seed"] == "0" and meta["dt"] == "0.001" and len(meta["config_hash"]) == 16
    assert "scenario = example3" in capsys.readouterr().out


def test_cli_converged_run_exits_zero(tmp_path):
    assert main(["--scenario", "generator-only", "--t-end", "150", "--out", str(tmp_path)]) == 0


def test_cli_plane_for_two_coordinates(tmp_path):
    out = tmp_path / "ex2"
    code = main(["--scenario", "example2", "--t-end", "1", "--out", str(out),
                 "--emit-plots", "plane"])
    assert code == 2
    header = next(csv.reader(open(out / "plot_plane.csv")))
    assert header[:3] == ["t", "y_1_x", "y_1_y"]
    assert (out / "trajectory_c1.csv").is_file() and (out / "trajectory_c2.csv").is_file()


def test_cli_errors(tmp_path, capsys):
    assert main(["--scenario", "example1", "--override", "agents.0.k=[4]",
                 "--out", str(tmp_path)]) == 1
    assert "non-Hurwitz gains" in capsys.readouterr().err
    assert main(["--scenario", "example1", "--override", "novalue", "--out", str(tmp_path)]) == 1
    assert main(["--scenario", "example1", "--t-end", "1", "--emit-plots", "plane",
                 "--out", str(tmp_path)]) == 1
    assert main(["--config", str(tmp_path / "missing.yaml")]) == 1
    assert "neither a preset" in capsys.readouterr().err


def test_cli_dump_config(capsys):
    assert main(["--scenario", "example2", "--dump-config"]) == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["coordinates"] == 2 and len(cfg["agents"]) == 5


def test_cli_seed_batch(tmp_path, capsys):
    code = main(["--scenario", "example3", "--t-end", "0.5", "--seeds", "0..1", "--workers", "1",
                 "--out", str(tmp_path)])
    assert code == 2
    assert (tmp_path / "seed_0" / "trajectory.csv").is_file()
    assert (tmp_path / "seed_1" / "meta.txt").read_text().count("seed = 1") == 1
    assert "seed 1: exit 2" in capsys.readouterr().out
