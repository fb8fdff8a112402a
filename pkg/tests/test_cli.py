"""Exit codes and outputs of the command-line entry point."""

import pytest

from conftest import make_params
from sirflock import (
    ExplicitInit,
    ScenarioSpec,
    SimulationConfig,
    write_scenario,
)
from sirflock.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main, run_command

OUTPUT_FILES = ("trajectory.csv", "diagnostics.csv", "decay.csv", "report.txt")


def test_run_preset_ok(tmp_path, capsys):
    out = tmp_path / "run"
    code = run_command(
        ["run", "--preset", "fig1", "--out", str(out), "--t-end", "0.05"]
    )
    assert code == EXIT_OK
    for name in OUTPUT_FILES:
        assert (out / name).is_file()
    assert "ok" in capsys.readouterr().out


def test_run_scenario_file(tmp_path):
    from sirflock import preset_scenario, with_overrides

    spec = with_overrides(preset_scenario("fig3"), t_end=0.05)
    path = tmp_path / "fig3.ini"
    write_scenario(spec, path)
    out = tmp_path / "run"
    assert run_command(["run", "--scenario", str(path), "--out", str(out)]) == EXIT_OK
    assert (out / "report.txt").is_file()


def test_unknown_preset_is_usage_error(tmp_path, capsys):
    code = run_command(["run", "--preset", "fig9", "--out", str(tmp_path / "x")])
    assert code == EXIT_USAGE
    err = capsys.readouterr().err
    assert "fig1, fig2, fig3, fig4" in err


def test_missing_source_is_usage_error(tmp_path, capsys):
    assert run_command(["run", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_bad_scenario_file_is_usage_error(tmp_path, capsys):
    path = tmp_path / "broken.ini"
    path.write_text("[scenario]\nformat_version = 1\n")
    assert run_command(["run", "--scenario", str(path), "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert "missing" in capsys.readouterr().err


def test_aborted_run_exits_failed(tmp_path, capsys):
    # kappa2 = kappa3 drives a healthy pair to separation 1/6, crossing the
    # deliberately large collision tolerance mid-run
    params = make_params(n=2, kappa2=1.0, kappa3=1.0)
    init = ExplicitInit(
        states=((1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
        positions=((0.0, 0.0), (1.0, 0.0)),
    )
    sim = SimulationConfig(dt=1e-3, t_end=5.0, collision_tol=0.5)
    path = tmp_path / "collapse.ini"
    write_scenario(ScenarioSpec(params=params, sim=sim, init=init), path)
    code = run_command(["run", "--scenario", str(path), "--out", str(tmp_path / "x")])
    assert code == EXIT_FAILED
    assert "aborted" in capsys.readouterr().out


def test_sweep_writes_summary_and_subdirs(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = run_command(
        [
            "run", "--preset", "fig1", "--out", str(out),
            "--t-end", "0.02", "--kappa3", "1,5",
        ]
    )
    assert code == EXIT_OK
    for sub in ("k3_1", "k3_5"):
        for name in OUTPUT_FILES:
            assert (out / sub / name).is_file()
    summary = (out / "sweep_summary.csv").read_text().splitlines()
    assert summary[0] == "kappa3,kappa2,ratio,peak_mean_I,ok"
    assert len(summary) == 3
    assert "peak_mean_I" in capsys.readouterr().out


def test_sweep_parallel_workers(tmp_path):
    out = tmp_path / "sweep"
    code = run_command(
        [
            "run", "--preset", "fig1", "--out", str(out),
            "--t-end", "0.02", "--kappa3", "1,5", "--workers", "2",
        ]
    )
    assert code == EXIT_OK
    assert (out / "sweep_summary.csv").is_file()


def test_single_value_kappa3_is_plain_run(tmp_path):
    out = tmp_path / "run"
    code = run_command(
        [
            "run", "--preset", "fig1", "--out", str(out),
            "--t-end", "0.02", "--kappa3", "2.5",
        ]
    )
    assert code == EXIT_OK
    assert (out / "trajectory.csv").is_file()
    assert not (out / "sweep_summary.csv").exists()


def test_bad_kappa3_list(tmp_path, capsys):
    code = run_command(
        ["run", "--preset", "fig1", "--out", str(tmp_path / "x"), "--kappa3", "1,abc"]
    )
    assert code == EXIT_USAGE
    assert "kappa3" in capsys.readouterr().err


def test_seed_override_on_explicit_scenario_is_usage_error(tmp_path, capsys):
    params = make_params(n=1, d=2)
    init = ExplicitInit(states=((1.0, 0.0, 0.0),), positions=((0.0, 0.0),))
    path = tmp_path / "single.ini"
    write_scenario(ScenarioSpec(params=params, sim=SimulationConfig(t_end=0.01), init=init), path)
    code = run_command(
        ["run", "--scenario", str(path), "--out", str(tmp_path / "x"), "--seed", "3"]
    )
    assert code == EXIT_USAGE
    assert "generator" in capsys.readouterr().err


def test_main_matches_run_command(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--preset", "fig1", "--out", str(out), "--t-end", "0.01"]) == EXIT_OK
