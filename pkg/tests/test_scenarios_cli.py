import json

import numpy as np
import pytest
import yaml

from guided_vi import cli
from guided_vi.controller import CombinedControl, ControllerMode, StepRecord
from guided_vi.plant import winch_forces
from guided_vi.scenarios import (
    TELEMETRY_COLUMNS,
    ConfigError,
    ScenarioName,
    ScenarioSpec,
    compute_metrics,
    default_spec,
    dump_config,
    export_telemetry,
    load_config,
    read_telemetry,
    records_to_columns,
    run_scenario,
)
from guided_vi.signals import ErrorVector, PitchState


def make_record(t, ref, meas, u=0.1):
    err = ErrorVector(meas - ref, 0.0, 0.0, 0.0, 0.0, 0.0)
    fore, aft = winch_forces(u)
    return StepRecord(t, ref, meas, err, PitchState(meas, 0.0, 0.0), CombinedControl(u, 0.0, u),
                      fore, aft, 0.25, 1.0 / 3.0)


def columns(ref, meas, dt=0.05):
    ref, meas = np.asarray(ref, dtype=float), np.asarray(meas, dtype=float)
    cols = {c: np.zeros(ref.size) for c in TELEMETRY_COLUMNS}
    cols.update(t=dt * np.arange(ref.size), theta_ref=ref, theta_meas=meas)
    return cols


def short_spec(name="nominal_learning", seconds=10.0, **kw):
    spec = default_spec(name)
    spec.duration = seconds
    for key, val in kw.items():
        setattr(spec, key, val)
    return spec


# --- metrics ---------------------------------------------------------------


def test_metrics_examples():
    ref = 5.0 * np.sin(np.linspace(0, 10, 200))
    assert compute_metrics(columns(ref, ref), warmup=0.0).abs_avg_error == 0.0
    assert compute_metrics(columns(ref, ref + 1.0), warmup=0.0).abs_avg_error == pytest.approx(1.0)
    alt = np.where(np.arange(200) % 2 == 0, 2.0, -2.0)
    assert compute_metrics(columns(np.zeros(200), alt), warmup=0.0).abs_avg_error == pytest.approx(2.0)


def test_metrics_exclude_warmup_and_non_finite():
    meas = np.zeros(100)
    meas[:40] = 50.0
    meas[60] = np.nan
    s = compute_metrics(columns(np.zeros(100), meas), warmup=2.0)
    assert s.abs_avg_error == 0.0 and s.max_abs_error == 0.0


def test_metrics_reject_empty():
    with pytest.raises(ValueError):
        compute_metrics(columns([], []))


def test_metrics_convergence_time():
    meas = np.concatenate([np.full(300, 5.0), np.zeros(300)])
    s = compute_metrics(columns(np.zeros(600), meas), warmup=0.0, window=100, tol=1.0)
    assert s.converged and 15.0 <= s.convergence_time <= 20.0
    s = compute_metrics(columns(np.zeros(600), np.full(600, 5.0)), warmup=0.0, window=100, tol=1.0)
    assert not s.converged and s.convergence_time is None


# --- telemetry -------------------------------------------------------------


def test_export_three_records_gives_four_lines(tmp_path):
    path = export_telemetry([make_record(0.05 * k, 1.0, 1.5) for k in range(3)], tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == ",".join(TELEMETRY_COLUMNS)
    assert lines[0] == "t,theta_ref,theta_meas,e,e_v,e_s,theta_v,theta_a,u_e,u_x,u_f,f_fore,f_aft,V_E,V_X"


def test_telemetry_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    recs = [make_record(0.05 * k, *rng.standard_normal(2), u=float(rng.uniform(-1, 1))) for k in range(50)]
    back = read_telemetry(export_telemetry(recs, tmp_path / "t.csv"))
    mem = records_to_columns(recs)
    for c in TELEMETRY_COLUMNS:
        assert np.array_equal(back[c], mem[c])


def test_telemetry_reader_checks_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_telemetry(path)


def test_export_failure_names_the_path(tmp_path):
    target = tmp_path / "missing" / "t.csv"
    with pytest.raises(OSError, match="missing"):
        export_telemetry([make_record(0.0, 0.0, 0.0)], target)


# --- configuration ---------------------------------------------------------


@pytest.mark.parametrize("name", [s.value for s in ScenarioName])
def test_config_round_trip(tmp_path, name):
    spec = default_spec(name)
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(spec))
    assert load_config(path).to_dict() == spec.to_dict()


def test_partial_config_takes_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 9, "plant": {"damping": 4.0}, "tracking": {"Q": np.eye(6).tolist()}}))
    spec = load_config(path)
    assert spec.seed == 9 and spec.plant.damping == 4.0 and spec.plant.stiffness == 2.0
    np.testing.assert_array_equal(spec.tracking.Q, np.eye(6))
    assert spec.tracking.R == 1e-7


@pytest.mark.parametrize(
    "text",
    [
        "bogus_key: 1\n",
        "plant: {inertia: -1}\n",
        "tracking: {R: -1}\n",
        "mode_schedule: [[0, sideways]]\n",
        "- just a list\n",
        "plant: {inertia: [unclosed\n",
    ],
)
def test_invalid_configs_raise_config_error(tmp_path, text):
    path = tmp_path / "c.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")


def test_scenario_invariants_enforced_before_simulation(tmp_path):
    with pytest.raises(ConfigError, match="snapshot"):
        run_scenario(default_spec("frozen_policy"))
    spec = default_spec("frozen_policy")
    spec.snapshot = str(tmp_path / "nope.txt")
    with pytest.raises(ConfigError, match="not found"):
        run_scenario(spec)
    spec = default_spec("disturbance_rejection")
    spec.disturbance = default_spec("nominal_learning").disturbance
    with pytest.raises(ConfigError, match="disturbance"):
        run_scenario(spec)


def test_mode_schedule_lookup():
    spec = ScenarioSpec(mode_schedule=[(0.0, ControllerMode.LEARNING), (5.0, ControllerMode.FULLY_FROZEN)])
    assert spec.mode_at(4.95) is ControllerMode.LEARNING
    assert spec.mode_at(5.0) is ControllerMode.FULLY_FROZEN


# --- runs ------------------------------------------------------------------


def test_short_run_writes_artifacts(tmp_path):
    result = run_scenario(short_spec(), tmp_path, gnuplot=True)
    for name in ("telemetry.csv", "summary.json", "weights.txt", "config.yaml", "plot.gp"):
        assert (tmp_path / name).is_file()
    lines = (tmp_path / "telemetry.csv").read_text().splitlines()
    assert len(lines) == 1 + 200 == 1 + result.summary.n_steps
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["abs_avg_error"] == result.summary.abs_avg_error
    assert "2 s" in summary["note"]


def test_metrics_from_csv_match_memory(tmp_path):
    result = run_scenario(short_spec(seconds=20.0), tmp_path)
    recomputed = compute_metrics(read_telemetry(tmp_path / "telemetry.csv"), warmup=result.spec.warmup)
    assert recomputed.abs_avg_error == result.summary.abs_avg_error
    assert recomputed.max_abs_error == result.summary.max_abs_error
    assert np.array_equal(recomputed.value_series_e, result.summary.value_series_e)


def test_runs_are_seed_dependent(tmp_path):
    a = run_scenario(short_spec(seed=1), tmp_path / "a")
    b = run_scenario(short_spec(seed=2), tmp_path / "b")
    assert (tmp_path / "a" / "telemetry.csv").read_bytes() != (tmp_path / "b" / "telemetry.csv").read_bytes()
    assert a.summary.abs_avg_error != b.summary.abs_avg_error


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_nominal_tracking_holds_across_seeds(seed):
    result = run_scenario(short_spec(seconds=150.0, seed=seed))
    assert result.summary.weights_finite
    assert result.summary.abs_avg_error <= 1.0


def test_frozen_snapshot_reused(tmp_path):
    run_scenario(short_spec(seconds=30.0), tmp_path / "learn")
    spec = short_spec("frozen_policy", seconds=10.0, snapshot=str(tmp_path / "learn" / "weights.txt"))
    result = run_scenario(spec)
    final = result.summary.final_weights
    learned = json.loads((tmp_path / "learn" / "summary.json").read_text())["final_weights"]
    assert final == learned


# --- command line ----------------------------------------------------------


def test_cli_run_and_metrics(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "nominal_learning", "--duration", "10", "--seed", "4", "--out", str(out)]) == 0
    assert "abs avg error" in capsys.readouterr().out
    assert cli.main(["metrics", str(out / "telemetry.csv")]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["abs_avg_error"] == json.loads((out / "summary.json").read_text())["abs_avg_error"]


def test_cli_frozen_modes(tmp_path, capsys):
    learn = tmp_path / "learn"
    cli.main(["run", "nominal_learning", "--duration", "10", "--out", str(learn)])
    snap = str(learn / "weights.txt")
    args = ["run", "frozen_policy", "--duration", "5", "--snapshot", snap]
    assert cli.main(args + ["--out", str(tmp_path / "f1"), "--gnuplot"]) == 0
    assert (tmp_path / "f1" / "plot.gp").is_file()
    assert cli.main(args + ["--out", str(tmp_path / "f2"), "--mode", "actor-frozen"]) == 0
    assert yaml.safe_load((tmp_path / "f2" / "config.yaml").read_text())["mode_schedule"] == [[0.0, "actor_only_frozen"]]
    capsys.readouterr()


def test_cli_reports_config_errors(tmp_path, capsys):
    assert cli.main(["run", "frozen_policy", "--out", str(tmp_path)]) == 2
    assert "snapshot" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("nope: 1\n")
    assert cli.main(["run", "nominal_learning", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["metrics", str(tmp_path / "absent.csv")]) == 2


def test_cli_dump_default_config(tmp_path, capsys):
    assert cli.main(["--dump-default-config", "disturbance_rejection"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "c.yaml"
    path.write_text(text)
    spec = load_config(path)
    assert spec.name is ScenarioName.DISTURBANCE_REJECTION and spec.disturbance.active
    assert cli.main(["--dump-default-config"]) == 0
    assert "nominal_learning" in capsys.readouterr().out


def test_cli_config_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("duration: 3\nseed: 5\n")
    out = tmp_path / "run"
    assert cli.main(["run", "nominal_learning", "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "telemetry.csv").read_text().splitlines()) == 61
    capsys.readouterr()


def test_cli_check_passes(capsys):
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 6


def test_cli_without_command_prints_help(capsys):
    assert cli.main([]) == 1
    assert "usage" in capsys.readouterr().out
