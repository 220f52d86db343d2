"""Surrogate wing-pitch dynamics, IMU-like sensor and disturbance injection.

The controller never sees any of this; it only receives filtered attitude
samples. State is ``(theta, theta_dot)`` in degrees and degrees per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class PlantError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PlantParams:
    """Damped restoring dynamics about a trim angle.

    ``J * theta'' = -c * theta' - k * g(theta - trim) + torque_gain * arm * u + d``
    evaluated in radians, with ``g = sin`` unless ``linear`` is set.
    """

    inertia: float = 0.5
    damping: float = 6.0
    stiffness: float = 2.0
    trim_deg: float = 0.0
    torque_gain: float = 2.0
    arm: float = 1.0
    linear: bool = False
    substeps: int = 10

    def __post_init__(self) -> None:
        if not self.inertia > 0:
            raise ValueError("inertia must be positive")
        if self.damping < 0 or self.stiffness < 0:
            raise ValueError("damping and stiffness must be non-negative")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


def _accel(p: PlantParams, theta: float, omega: float, torque: float) -> float:
    # radians inside, callers convert
    dev = theta - math.radians(p.trim_deg)
    restoring = dev if p.linear else math.sin(dev)
    return (-p.damping * omega - p.stiffness * restoring + torque) / p.inertia


def rk4_step(p: PlantParams, theta: float, omega: float, torque: float, h: float) -> tuple[float, float]:
    """One classical Runge-Kutta step in radians with torque held constant."""
    k1t, k1w = omega, _accel(p, theta, omega, torque)
    k2t, k2w = omega + 0.5 * h * k1w, _accel(p, theta + 0.5 * h * k1t, omega + 0.5 * h * k1w, torque)
    k3t, k3w = omega + 0.5 * h * k2w, _accel(p, theta + 0.5 * h * k2t, omega + 0.5 * h * k2w, torque)
    k4t, k4w = omega + h * k3w, _accel(p, theta + h * k3t, omega + h * k3w, torque)
    return (
        theta + h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t),
        omega + h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w),
    )


def plant_step(
    params: PlantParams,
    state: tuple[float, float],
    u_f: float,
    disturbance: float,
    dt: float,
) -> tuple[float, float]:
    """Advance ``(theta_deg, theta_dot_deg_s)`` by ``dt`` using ``params.substeps`` RK4 steps.

    ``u_f`` and ``disturbance`` (N*m) are held over the interval.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    theta, omega = state
    if not all(math.isfinite(x) for x in (theta, omega, u_f, disturbance)):
        raise PlantError(f"non-finite plant input: state={state}, u={u_f}, d={disturbance}")
    torque = params.torque_gain * params.arm * u_f + disturbance
    th, w = math.radians(theta), math.radians(omega)
    h = dt / params.substeps
    for _ in range(params.substeps):
        th, w = rk4_step(params, th, w, torque, h)
    if not (math.isfinite(th) and math.isfinite(w)):
        raise PlantError("plant state diverged")
    return math.degrees(th), math.degrees(w)


def winch_forces(u_f: float) -> tuple[float, float]:
    """Pull-only split of the combined command into (fore, aft) winch forces."""
    return max(u_f, 0.0), max(-u_f, 0.0)


@dataclass(frozen=True)
class SensorParams:
    sample_rate: float = 20.0
    gyro_rms: float = 0.1
    attitude_noise_std: float = 0.05
    spike_probability: float = 0.002
    spike_min_deg: float = 5.0
    spike_max_deg: float = 15.0
    cutoff_hz: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.spike_probability < 0.01:
            raise ValueError("spike probability must lie in [0, 0.01)")
        if not 0.0 < self.cutoff_hz < self.sample_rate / 2:
            raise ValueError("cutoff must lie below the Nyquist frequency")
        if self.attitude_noise_std < 0 or self.gyro_rms < 0:
            raise ValueError("noise levels must be non-negative")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate


class Sensor:
    """Noisy, spiky attitude channel followed by a first-order IIR low-pass.

    Each sample adds white attitude noise plus the attitude error that a
    gyro with ``gyro_rms`` deg/s noise accumulates over one period, and with
    probability ``spike_probability`` an outlier of random sign.
    """

    def __init__(
        self,
        params: SensorParams,
        rng: np.random.Generator | None = None,
        initial: float | None = None,
    ):
        self.params = params
        self.rng = rng if rng is not None else np.random.default_rng(params.seed)
        rc = 1.0 / (2.0 * math.pi * params.cutoff_hz)
        self.alpha = params.dt / (rc + params.dt)
        # None: the first raw sample seeds the filter state
        self._initial = initial
        self._y = initial
        self.spike_count = 0

    @property
    def time_constant(self) -> float:
        """Time constant (s) of the discrete filter: ``(1 - alpha)**k = exp(-k dt / tau)``."""
        return -self.params.dt / math.log(1.0 - self.alpha)

    def reset(self) -> None:
        self._y = self._initial
        self.spike_count = 0

    def raw(self, true_theta: float) -> float:
        p = self.params
        sigma = math.hypot(p.attitude_noise_std, p.gyro_rms * p.dt)
        x = true_theta + (sigma * self.rng.standard_normal() if sigma > 0 else 0.0)
        if p.spike_probability > 0 and self.rng.random() < p.spike_probability:
            mag = self.rng.uniform(p.spike_min_deg, p.spike_max_deg)
            x += mag if self.rng.random() < 0.5 else -mag
            self.spike_count += 1
        return x

    def filter(self, x: float) -> float:
        self._y = x if self._y is None else self._y + self.alpha * (x - self._y)
        return self._y

    def sense(self, true_theta: float) -> float:
        return self.filter(self.raw(true_theta))


def sense(sensor: Sensor, true_theta: float) -> float:
    return sensor.sense(true_theta)


class Waveform(str, Enum):
    RANDOM_JERK = "random_jerk"
    PULSE = "pulse"
    NONE = "none"


@dataclass(frozen=True)
class DisturbanceProfile:
    start: float = 120.0
    duration: float = 10.0
    amplitude: float = 8.0
    waveform: Waveform = Waveform.NONE

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("disturbance duration must be non-negative")
        object.__setattr__(self, "waveform", Waveform(self.waveform))

    @property
    def active(self) -> bool:
        return self.waveform is not Waveform.NONE and self.duration > 0 and self.amplitude != 0

    def in_window(self, t: float) -> bool:
        return self.start <= t <= self.start + self.duration


def disturbance_torque(profile: DisturbanceProfile, t: float, rng: np.random.Generator) -> float:
    """External torque (N*m) at time ``t``; zero outside the active window."""
    if not profile.active or not profile.in_window(t):
        return 0.0
    if profile.waveform is Waveform.PULSE:
        return profile.amplitude
    return profile.amplitude * rng.uniform(-1.0, 1.0)
