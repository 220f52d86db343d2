"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the
"acceptance criteria" section of the pytest summary.
"""

import numpy as np
import pytest

from guided_vi import checks
from guided_vi.scenarios import default_spec, read_telemetry, run_scenario

DT = 0.05
MA_SAMPLES = int(round(10.0 / DT))


@pytest.fixture(scope="module")
def nominal(tmp_path_factory):
    out = tmp_path_factory.mktemp("nominal")
    return run_scenario(default_spec("nominal_learning"), out)


@pytest.fixture(scope="module")
def frozen(nominal, tmp_path_factory):
    spec = default_spec("frozen_policy")
    spec.snapshot = str(nominal.telemetry_path.parent / "weights.txt")
    return run_scenario(spec, tmp_path_factory.mktemp("frozen"))


@pytest.fixture(scope="module")
def disturbed(tmp_path_factory):
    return run_scenario(default_spec("disturbance_rejection"), tmp_path_factory.mktemp("disturbed"))


def trailing_mean_abs_error(result):
    cols = read_telemetry(result.telemetry_path)
    err = np.abs(cols["theta_ref"] - cols["theta_meas"])
    err = np.where(np.isfinite(err), err, 0.0)
    kernel = np.ones(MA_SAMPLES) / MA_SAMPLES
    ma = np.convolve(err, kernel, mode="full")[: err.size]
    ma[: MA_SAMPLES - 1] = np.nan
    return cols["t"], ma


def test_c1_nominal_tracking(nominal, report):
    s = nominal.summary
    ok = s.abs_avg_error <= 1.0 and nominal.wall_time < 60.0 and s.weights_finite
    assert report(
        "C1 nominal tracking",
        ok,
        f"abs avg error {s.abs_avg_error:.3f} deg (bound 1.0), wall time {nominal.wall_time:.2f} s (bound 60)",
    )


def test_c1_nominal_converges(nominal, report):
    s = nominal.summary
    detail = f"converged at {s.convergence_time:.2f} s" if s.converged else "no convergence"
    assert report("C1 convergence check within the episode", s.converged, detail)


def test_c2_frozen_policy(nominal, frozen, report):
    ratio = frozen.summary.abs_avg_error / nominal.summary.abs_avg_error
    ok = ratio <= 2.5 and frozen.wall_time < 60.0
    assert report(
        "C2 frozen policy",
        ok,
        f"frozen {frozen.summary.abs_avg_error:.3f} deg vs nominal {nominal.summary.abs_avg_error:.3f} deg, "
        f"ratio {ratio:.2f} (bound 2.5)",
    )


def test_c3_disturbance_rejection(nominal, disturbed, report):
    spec = disturbed.spec.disturbance
    end = spec.start + spec.duration
    t, ma = trailing_mean_abs_error(disturbed)
    t_nom, ma_nom = trailing_mean_abs_error(nominal)
    band = np.nanmax(ma_nom[t_nom >= 20.0])
    peak = np.nanmax(ma[(t >= spec.start) & (t <= end + 10.0)])
    below = np.flatnonzero((t >= end) & (ma < 1.0))
    recovery = t[below[0]] - end if below.size else np.inf
    ok = disturbed.summary.weights_finite and peak > band and recovery <= 15.0 and disturbed.wall_time < 60.0
    assert report(
        "C3 disturbance rejection",
        ok,
        f"10 s moving average peaks at {peak:.2f} deg (nominal band {band:.2f}), "
        f"back below 1 deg {recovery:.2f} s after the disturbance (bound 15), "
        f"weights finite: {disturbed.summary.weights_finite}",
    )


def test_c4_monotone_bounded_values(report):
    inc, iters, bound = checks.monotone_vi(iterations=10_000)
    ok = inc >= -1e-9 and iters < 10_000
    assert report(
        "C4 monotone bounded values",
        ok,
        f"smallest increment {inc:.2e} (slack -1e-9), step below 1e-8 after {iters} iterations, limit {bound:.4f}",
    )


def test_c5_oracle_equivalence(report):
    gap = checks.learner_vs_oracle()
    assert report("C5 oracle equivalence", gap < 0.05, f"max elementwise relative gap {gap:.2e} (bound 0.05)")


def test_c6_gradient_checks(report):
    gc, ga = checks.gradient_check(points=100)
    ok = gc < 1e-6 and ga < 1e-6
    assert report(
        "C6 gradient checks",
        ok,
        f"critic {gc:.2e} (against twice the central difference, see README), actor {ga:.2e}, "
        "100 points each (bound 1e-6)",
    )


def test_c7_structural_invariants(nominal, frozen, disturbed, report):
    runs = (nominal, frozen, disturbed)
    drift = max(r.summary.max_symmetry_drift for r in runs)
    cols = [read_telemetry(r.telemetry_path) for r in runs]
    max_u = max(float(np.max(np.abs(c["u_f"]))) for c in cols)
    worst_product = max(float(np.max(np.abs(c["f_fore"] * c["f_aft"]))) for c in cols)
    fixed = checks.actor_fixed_point()
    ok = drift < 1e-12 and max_u <= 1.0 and worst_product == 0.0 and fixed == 0.0
    assert report(
        "C7 structural invariants",
        ok,
        f"symmetry drift {drift:.1e}, max |u_f| {max_u:.3f}, max f_fore*f_aft {worst_product:g}, "
        f"actor fixed-point change {fixed:g}",
    )


@pytest.mark.parametrize("name", ["nominal_learning", "disturbance_rejection"])
def test_c8_determinism(name, nominal, disturbed, tmp_path, report):
    first = {"nominal_learning": nominal, "disturbance_rejection": disturbed}[name]
    again = run_scenario(default_spec(name), tmp_path)
    same = first.telemetry_path.read_bytes() == again.telemetry_path.read_bytes()
    assert report(f"C8 determinism ({name})", same, "telemetry byte-identical" if same else "telemetry differs")


def test_c9_integrator_order(report):
    order = checks.rk4_order()
    assert report("C9 integrator order", order >= 3.5, f"observed RK4 order {order:.2f} (bound 3.5)")
