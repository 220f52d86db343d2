"""Closed-loop scenario runner, telemetry export and run metrics."""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .controller import ControllerMode, GuidedController, StepRecord, convergence_check
from .learner import LearnerConfig, LearnerState, load_snapshot, save_snapshot, stabilizing_config, tracking_config
from .plant import DisturbanceProfile, PlantParams, Sensor, SensorParams, Waveform, disturbance_torque, plant_step
from .signals import ReferenceSignal, reference_at

TELEMETRY_COLUMNS = (
    "t", "theta_ref", "theta_meas", "e", "e_v", "e_s", "theta_v", "theta_a",
    "u_e", "u_x", "u_f", "f_fore", "f_aft", "V_E", "V_X",
)


class ScenarioName(str, Enum):
    NOMINAL_LEARNING = "nominal_learning"
    DISTURBANCE_REJECTION = "disturbance_rejection"
    FROZEN_POLICY = "frozen_policy"


class ConfigError(ValueError):
    pass


@dataclass
class ControllerSettings:
    dt: float = 0.05
    window: int = 20
    initial_critic_scale: float = 1e-3
    state_scale: float = math.pi / 180.0
    max_jump_deg: float = 2.0
    holdoff: int = 10
    convergence_window: int = 200
    convergence_tol: float = 1.0
    convergence_step_tol: float = 1e-4


def _learner_defaults(cfg: LearnerConfig) -> dict[str, Any]:
    Q = cfg.Q
    q = np.diag(Q).tolist() if np.array_equal(Q, np.diag(np.diag(Q))) else Q.tolist()
    return {"Q": q, "R": cfg.R, "P": cfg.P.tolist(), "alpha_c": cfg.alpha_c,
            "alpha_a": cfg.alpha_a, "normalized": True}


def _learner_from_dict(d: Mapping[str, Any], name: str) -> LearnerConfig:
    try:
        q = np.asarray(d["Q"], dtype=float)
        return LearnerConfig(
            Q=np.diag(q) if q.ndim == 1 else q,
            R=d["R"], P=d["P"], alpha_c=d["alpha_c"], alpha_a=d["alpha_a"],
            normalized=bool(d.get("normalized", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' learner settings: {exc}") from exc


@dataclass
class ScenarioSpec:
    name: ScenarioName = ScenarioName.NOMINAL_LEARNING
    duration: float = 150.0
    seed: int = 0
    warmup: float = 2.0
    snapshot: str | None = None
    mode_schedule: list[tuple[float, ControllerMode]] = field(
        default_factory=lambda: [(0.0, ControllerMode.LEARNING)]
    )
    reference: ReferenceSignal = field(default_factory=ReferenceSignal)
    controller: ControllerSettings = field(default_factory=ControllerSettings)
    tracking: LearnerConfig = field(default_factory=lambda: tracking_config(normalized=True))
    stabilizing: LearnerConfig = field(default_factory=lambda: stabilizing_config(normalized=True))
    plant: PlantParams = field(default_factory=PlantParams)
    sensor: SensorParams = field(default_factory=SensorParams)
    disturbance: DisturbanceProfile = field(default_factory=DisturbanceProfile)

    def validate(self) -> None:
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not 0 <= self.warmup < self.duration:
            raise ConfigError("warmup must lie in [0, duration)")
        if not self.mode_schedule or self.mode_schedule[0][0] > 0:
            raise ConfigError("mode schedule must start at t = 0")
        times = [t for t, _ in self.mode_schedule]
        if times != sorted(times):
            raise ConfigError("mode schedule times must be non-decreasing")
        if abs(self.sensor.dt - self.controller.dt) > 1e-12:
            raise ConfigError("sensor sample rate must match the control period")
        if self.name is ScenarioName.FROZEN_POLICY and not self.snapshot:
            raise ConfigError("frozen_policy requires a weight snapshot (--snapshot)")
        if self.name is ScenarioName.DISTURBANCE_REJECTION and not self.disturbance.active:
            raise ConfigError("disturbance_rejection requires an active disturbance profile")
        if self.snapshot and not Path(self.snapshot).is_file():
            raise ConfigError(f"snapshot file not found: {self.snapshot}")

    def mode_at(self, t: float) -> ControllerMode:
        mode = self.mode_schedule[0][1]
        for start, m in self.mode_schedule:
            if t + 1e-9 >= start:
                mode = m
        return mode

    def to_dict(self) -> dict[str, Any]:
        ref = dataclasses.asdict(self.reference)
        ref["kind"] = self.reference.kind.value
        dist = dataclasses.asdict(self.disturbance)
        dist["waveform"] = self.disturbance.waveform.value
        return {
            "scenario": self.name.value,
            "duration": self.duration,
            "seed": self.seed,
            "warmup": self.warmup,
            "snapshot": self.snapshot,
            "mode_schedule": [[t, m.value] for t, m in self.mode_schedule],
            "reference": ref,
            "controller": dataclasses.asdict(self.controller),
            "tracking": _learner_defaults(self.tracking) | {"normalized": self.tracking.normalized},
            "stabilizing": _learner_defaults(self.stabilizing) | {"normalized": self.stabilizing.normalized},
            "plant": dataclasses.asdict(self.plant),
            "sensor": dataclasses.asdict(self.sensor),
            "disturbance": dist,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioSpec":
        known = {"scenario", "duration", "seed", "warmup", "snapshot", "mode_schedule", "reference",
                 "controller", "tracking", "stabilizing", "plant", "sensor", "disturbance"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        name = ScenarioName(data.get("scenario", "nominal_learning"))
        base = default_spec(name).to_dict()
        for key, val in data.items():
            if isinstance(val, Mapping) and isinstance(base.get(key), dict):
                base[key].update(val)
            else:
                base[key] = val

        def build(kind, section):
            try:
                return kind(**base[section])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid '{section}' settings: {exc}") from exc

        try:
            schedule = [(float(t), ControllerMode.parse(m)) for t, m in base["mode_schedule"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid mode_schedule: {exc}") from exc
        return cls(
            name=name,
            duration=float(base["duration"]),
            seed=int(base["seed"]),
            warmup=float(base["warmup"]),
            snapshot=base["snapshot"],
            mode_schedule=schedule,
            reference=build(ReferenceSignal, "reference"),
            controller=build(ControllerSettings, "controller"),
            tracking=_learner_from_dict(base["tracking"], "tracking"),
            stabilizing=_learner_from_dict(base["stabilizing"], "stabilizing"),
            plant=build(PlantParams, "plant"),
            sensor=build(SensorParams, "sensor"),
            disturbance=build(DisturbanceProfile, "disturbance"),
        )


def default_spec(name: ScenarioName | str = ScenarioName.NOMINAL_LEARNING) -> ScenarioSpec:
    name = ScenarioName(name)
    spec = ScenarioSpec(name=name)
    if name is ScenarioName.DISTURBANCE_REJECTION:
        spec.disturbance = DisturbanceProfile(start=120.0, duration=10.0, amplitude=8.0, waveform=Waveform.RANDOM_JERK)
    elif name is ScenarioName.FROZEN_POLICY:
        spec.mode_schedule = [(0.0, ControllerMode.FULLY_FROZEN)]
    return spec


def dump_config(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False, default_flow_style=None)


def load_config(path: str | Path) -> ScenarioSpec:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ScenarioSpec.from_dict(data)


@dataclass
class RunSummary:
    abs_avg_error: float
    max_abs_error: float
    warmup: float
    n_steps: int
    converged: bool = False
    convergence_time: float | None = None
    value_series_e: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    value_series_x: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    final_weights: dict[str, dict[str, list]] = field(default_factory=dict, repr=False)
    n_faults: int = 0
    spike_count: int = 0
    weights_finite: bool = True
    max_symmetry_drift: float = 0.0
    max_abs_u_f: float = 0.0

    def to_json(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out.pop("value_series_e")
        out.pop("value_series_x")
        out["final_value_e"] = float(self.value_series_e[-1]) if self.value_series_e.size else None
        out["final_value_x"] = float(self.value_series_x[-1]) if self.value_series_x.size else None
        out["note"] = f"error metrics exclude the first {self.warmup:g} s"
        return out


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    summary: RunSummary
    records: list[StepRecord]
    controller: GuidedController
    critic_steps: np.ndarray
    wall_time: float = 0.0
    telemetry_path: Path | None = None


def records_to_columns(records: Sequence[StepRecord]) -> dict[str, np.ndarray]:
    rows = [_row(r) for r in records]
    return {c: np.array([row[i] for row in rows], dtype=float) for i, c in enumerate(TELEMETRY_COLUMNS)}


def _row(r: StepRecord) -> tuple[float, ...]:
    return (
        r.t, r.theta_ref, r.theta_meas, r.error.e, r.error.e_v, r.error.e_s,
        r.pitch.theta_v, r.pitch.theta_a, r.control.u_e, r.control.u_x, r.control.u_f,
        r.f_fore, r.f_aft, r.v_e, r.v_x,
    )


def export_telemetry(records: Iterable[StepRecord], path: str | Path) -> Path:
    """Write one CSV row per control step; floats use ``repr`` so they round-trip exactly."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TELEMETRY_COLUMNS)
            for r in records:
                w.writerow([repr(float(x)) for x in _row(r)])
    except OSError as exc:
        raise OSError(f"cannot write telemetry to {path}: {exc}") from exc
    return path


def read_telemetry(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TELEMETRY_COLUMNS:
            raise ValueError(f"{path}: unexpected telemetry header {header}")
        rows = [[float(x) for x in row] for row in reader]
    if not rows:
        return {c: np.zeros(0) for c in TELEMETRY_COLUMNS}
    arr = np.array(rows)
    return {c: arr[:, i] for i, c in enumerate(TELEMETRY_COLUMNS)}


def compute_metrics(
    telemetry: Mapping[str, np.ndarray] | Sequence[StepRecord],
    warmup: float = 2.0,
    critic_steps: Sequence[float] | None = None,
    window: int = 200,
    tol: float = 1.0,
    step_tol: float = 1e-4,
) -> RunSummary:
    """Error and value metrics of a run.

    Samples before ``warmup`` seconds and non-finite measurements are left
    out of the error statistics. Convergence is the first time
    :func:`convergence_check` holds over a trailing ``window``; without
    ``critic_steps`` only the error criterion is used.
    """
    cols = telemetry if isinstance(telemetry, Mapping) else records_to_columns(telemetry)
    t = np.asarray(cols["t"], dtype=float)
    if t.size == 0:
        raise ValueError("telemetry is empty")
    err = np.asarray(cols["theta_ref"], dtype=float) - np.asarray(cols["theta_meas"], dtype=float)
    keep = (t >= warmup - 1e-9) & np.isfinite(err)
    if not keep.any():
        raise ValueError("no finite samples after the warm-up period")
    abs_err = np.abs(err[keep])
    steps = np.zeros_like(t) if critic_steps is None else np.asarray(critic_steps, dtype=float)
    conv_time = None
    errs = np.where(np.isfinite(err), err, np.inf)
    for k in range(window, t.size + 1, max(1, window // 10)):
        if t[k - 1] < warmup:
            continue
        if convergence_check(errs[k - window:k], steps[k - window:k], window, tol, step_tol):
            conv_time = float(t[k - 1])
            break
    u_f = np.asarray(cols["u_f"], dtype=float)
    return RunSummary(
        abs_avg_error=float(abs_err.mean()),
        max_abs_error=float(abs_err.max()),
        warmup=warmup,
        n_steps=int(t.size),
        converged=conv_time is not None,
        convergence_time=conv_time,
        value_series_e=np.asarray(cols["V_E"], dtype=float),
        value_series_x=np.asarray(cols["V_X"], dtype=float),
        max_abs_u_f=float(np.nanmax(np.abs(u_f))),
    )


def _initial_learners(spec: ScenarioSpec) -> tuple[LearnerState, LearnerState]:
    scale = spec.controller.initial_critic_scale
    tracking = LearnerState.initial(spec.tracking, scale)
    stabilizing = LearnerState.initial(spec.stabilizing, scale)
    if spec.snapshot:
        snap = load_snapshot(spec.snapshot)
        for name, st in (("tracking", tracking), ("stabilizing", stabilizing)):
            if name not in snap:
                raise ConfigError(f"snapshot {spec.snapshot} lacks the '{name}' learner")
            critic, actor = snap[name]
            if critic.omega_c.shape != (st.config.d, st.config.d):
                raise ConfigError(f"snapshot '{name}' weights have the wrong dimension")
            st.critic, st.actor = critic, actor
    return tracking, stabilizing


GNUPLOT_TEMPLATE = """\
set datafile separator ','
set key autotitle columnhead
set multiplot layout 3,1
set ylabel 'pitch (deg)'
plot '{csv}' using 1:2 with lines, '' using 1:3 with lines
set ylabel 'normalized force'
plot '{csv}' using 1:12 with lines, '' using 1:13 with lines
set ylabel 'value'
set xlabel 't (s)'
plot '{csv}' using 1:14 with lines, '' using 1:15 with lines
unset multiplot
"""


def run_scenario(spec: ScenarioSpec, out_dir: str | Path | None = None, gnuplot: bool = False) -> ScenarioResult:
    """Simulate one scenario; writes telemetry.csv, summary.json and weights.txt into ``out_dir``."""
    spec.validate()
    started = time.perf_counter()
    cs = spec.controller
    tracking, stabilizing = _initial_learners(spec)
    ctrl = GuidedController(
        tracking, stabilizing, spec.reference, dt=cs.dt, window=cs.window,
        mode=spec.mode_at(0.0), state_scale=cs.state_scale,
        max_jump_deg=cs.max_jump_deg, holdoff=cs.holdoff,
    )
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    sensor = Sensor(dataclasses.replace(spec.sensor, seed=spec.seed), np.random.default_rng(seeds[0]))
    dist_rng = np.random.default_rng(seeds[1])
    n = int(round(spec.duration / cs.dt))
    state = (spec.plant.trim_deg, 0.0)
    records: list[StepRecord] = []
    steps = np.zeros(n)
    sym_drift = 0.0
    finite = True
    for k in range(n):
        t = k * cs.dt
        ctrl.set_mode(spec.mode_at(t))
        before = (ctrl.tracking.critic.omega_c, ctrl.stabilizing.critic.omega_c)
        control, rec = ctrl.step(sensor.sense(state[0]))
        records.append(rec)
        wc_e, wc_x = ctrl.tracking.critic.omega_c, ctrl.stabilizing.critic.omega_c
        steps[k] = max(np.linalg.norm(wc_e - before[0]), np.linalg.norm(wc_x - before[1]))
        sym_drift = max(sym_drift, np.abs(wc_e - wc_e.T).max(), np.abs(wc_x - wc_x.T).max())
        finite = finite and all(
            np.all(np.isfinite(w)) for w in (wc_e, wc_x, ctrl.tracking.actor.omega_a, ctrl.stabilizing.actor.omega_a)
        )
        state = plant_step(spec.plant, state, control.u_f, disturbance_torque(spec.disturbance, t, dist_rng), cs.dt)

    summary = compute_metrics(
        records_to_columns(records), spec.warmup, steps,
        cs.convergence_window, cs.convergence_tol, cs.convergence_step_tol,
    )
    summary.n_faults = ctrl.faults
    summary.spike_count = sensor.spike_count
    summary.weights_finite = bool(finite)
    summary.max_symmetry_drift = float(sym_drift)
    summary.final_weights = {
        name: {"critic": st.critic.omega_c.tolist(), "actor": st.actor.omega_a.tolist()}
        for name, st in (("tracking", ctrl.tracking), ("stabilizing", ctrl.stabilizing))
    }
    result = ScenarioResult(spec, summary, records, ctrl, steps, time.perf_counter() - started)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.telemetry_path = export_telemetry(records, out / "telemetry.csv")
        (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2) + "\n", encoding="utf-8")
        save_snapshot(out / "weights.txt", {"tracking": ctrl.tracking, "stabilizing": ctrl.stabilizing})
        (out / "config.yaml").write_text(dump_config(spec), encoding="utf-8")
        if gnuplot:
            (out / "plot.gp").write_text(GNUPLOT_TEMPLATE.format(csv="telemetry.csv"), encoding="utf-8")
    return result
