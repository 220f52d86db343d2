"""Online guided value-iteration loop coupling the tracking and stabilizing learners."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .learner import (
    LearnerState,
    actor_update,
    control_signal,
    critic_update,
    stabilizing_config,
    tracking_config,
    value,
)
from .plant import winch_forces
from .signals import (
    ErrorHistory,
    ErrorVector,
    PitchState,
    ReferenceSignal,
    build_error_vector,
    build_pitch_state,
    reference_at,
)

log = logging.getLogger(__name__)


class ControllerMode(str, Enum):
    LEARNING = "learning"
    ACTOR_ONLY_FROZEN = "actor_only_frozen"
    FULLY_FROZEN = "fully_frozen"

    @classmethod
    def parse(cls, text: "str | ControllerMode") -> "ControllerMode":
        aliases = {"actor-frozen": cls.ACTOR_ONLY_FROZEN, "frozen": cls.FULLY_FROZEN}
        if isinstance(text, cls):
            return text
        return aliases.get(text) or cls(text)


@dataclass(frozen=True)
class CombinedControl:
    u_e: float
    u_x: float
    u_f: float


def combine(u_e: float, u_x: float) -> CombinedControl:
    """Sum both policy outputs and saturate to the normalized actuator range."""
    return CombinedControl(u_e, u_x, min(1.0, max(-1.0, u_e + u_x)))


@dataclass(frozen=True)
class StepRecord:
    t: float
    theta_ref: float
    theta_meas: float
    error: ErrorVector
    pitch: PitchState
    control: CombinedControl
    f_fore: float
    f_aft: float
    v_e: float
    v_x: float
    fault: bool = False
    critic_e: np.ndarray | None = None
    critic_x: np.ndarray | None = None
    actor_e: np.ndarray | None = None
    actor_x: np.ndarray | None = None


def learning_update(state: LearnerState, z_now, u_now: float, z_next, mode: ControllerMode) -> LearnerState:
    """Evaluate the value (critic step) and then extract the improved policy
    (actor step towards ``-P Wc`` with the new critic), as ``mode`` allows."""
    if mode is ControllerMode.FULLY_FROZEN:
        return state
    state.critic = critic_update(state, z_now, u_now, z_next)
    if mode is ControllerMode.LEARNING:
        state.actor = actor_update(state, z_now)
    return state


class GuidedController:
    """Runs one iteration of the online value-iteration loop per sample.

    Updates for the transition ``l -> l+1`` are applied when sample ``l+1``
    arrives, before the new controls are computed from the improved actors.
    """

    def __init__(
        self,
        tracking: LearnerState | None = None,
        stabilizing: LearnerState | None = None,
        reference: ReferenceSignal | None = None,
        dt: float = 0.05,
        window: int = 20,
        mode: ControllerMode = ControllerMode.LEARNING,
        snapshot_every: int = 0,
        state_scale: float = math.pi / 180.0,
        max_jump_deg: float = 2.0,
        holdoff: int = 10,
    ):
        self.tracking = tracking or LearnerState.initial(tracking_config(normalized=True))
        self.stabilizing = stabilizing or LearnerState.initial(stabilizing_config(normalized=True))
        if self.tracking.config.d != 6 or self.stabilizing.config.d != 3:
            raise ValueError("tracking learner needs 6 features and stabilizing learner 3")
        self.reference = reference if reference is not None else ReferenceSignal()
        self.dt = dt
        self.mode = ControllerMode.parse(mode)
        self.snapshot_every = snapshot_every
        self.state_scale = state_scale
        self.max_jump_deg = max_jump_deg
        self.holdoff = holdoff
        self._quiet = 0
        self._prev_meas: float | None = None
        self.history = ErrorHistory(dt=dt, window=window)
        self._thetas: deque[float] = deque(maxlen=3)
        self._pending: tuple[np.ndarray, float, np.ndarray, float] | None = None
        self._last = CombinedControl(0.0, 0.0, 0.0)
        self.index = 0
        self.faults = 0

    def set_mode(self, mode: ControllerMode | str) -> "GuidedController":
        self.mode = ControllerMode.parse(mode)
        return self

    @property
    def time(self) -> float:
        return self.index * self.dt

    def _features(self, theta: float) -> tuple[ErrorVector, PitchState]:
        self._thetas.append(theta)
        samples = list(self._thetas)
        samples = [samples[0]] * (3 - len(samples)) + samples
        return build_error_vector(self.history), build_pitch_state(samples, self.dt)

    def _learn(self, e_now: np.ndarray, x_now: np.ndarray) -> None:
        if self._pending is None or self.mode is ControllerMode.FULLY_FROZEN:
            return
        e_prev, ue_prev, x_prev, ux_prev = self._pending
        learning_update(self.tracking, e_prev, ue_prev, e_now, self.mode)
        learning_update(self.stabilizing, x_prev, ux_prev, x_now, self.mode)

    def step(self, measurement: float) -> tuple[CombinedControl, StepRecord]:
        t = self.time
        theta_ref = reference_at(self.reference, t)
        self.index += 1
        prev, self._prev_meas = self._prev_meas, measurement
        jump = prev is not None and abs(measurement - prev) > self.max_jump_deg
        if not math.isfinite(measurement) or jump:
            self.faults += 1
            self._pending = None
            self._quiet = self.holdoff
            log.debug("rejected measurement %r at t=%.3f s, holding previous control", measurement, t)
            return self._last, self._record(t, theta_ref, measurement, None, None, self._last, fault=True)

        self.history.push(measurement - theta_ref)
        err, pitch = self._features(measurement)
        e_vec, x_vec = err.as_array(), self.state_scale * pitch.as_array()
        if self._quiet > 0:
            self._quiet -= 1
        else:
            self._learn(e_vec, x_vec)

        ctrl = combine(control_signal(self.tracking.actor, e_vec), control_signal(self.stabilizing.actor, x_vec))
        self._pending = (e_vec, ctrl.u_e, x_vec, ctrl.u_x)
        self._last = ctrl
        return ctrl, self._record(t, theta_ref, measurement, err, pitch, ctrl)

    def _record(self, t, theta_ref, theta_meas, err, pitch, ctrl, fault=False) -> StepRecord:
        nan = float("nan")
        if err is None:
            err = ErrorVector(nan, nan, nan, nan, nan, nan)
            pitch = PitchState(nan, nan, nan)
            v_e = v_x = nan
        else:
            v_e = value(self.tracking.critic, err.as_array())
            v_x = value(self.stabilizing.critic, self.state_scale * pitch.as_array())
            self.tracking.last_value, self.stabilizing.last_value = v_e, v_x
        snap = {}
        if self.snapshot_every and (self.index - 1) % self.snapshot_every == 0:
            snap = dict(
                critic_e=self.tracking.critic.omega_c.copy(),
                critic_x=self.stabilizing.critic.omega_c.copy(),
                actor_e=self.tracking.actor.omega_a.copy(),
                actor_x=self.stabilizing.actor.omega_a.copy(),
            )
        f_fore, f_aft = winch_forces(ctrl.u_f)
        return StepRecord(t, theta_ref, theta_meas, err, pitch, ctrl, f_fore, f_aft, v_e, v_x, fault, **snap)


def convergence_check(
    errors: Sequence[float],
    critic_steps: Sequence[float],
    window: int,
    tol: float,
    step_tol: float = 1e-3,
) -> bool:
    """True when the mean |error| and the critic step norms over the last
    ``window`` samples are both below their tolerances."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(errors) < window:
        return False
    recent = np.abs(np.asarray(errors[-window:], dtype=float))
    if not np.all(np.isfinite(recent)) or recent.mean() >= tol:
        return False
    steps = np.asarray(critic_steps[-window:], dtype=float)
    return bool(np.all(np.isfinite(steps)) and (steps.size == 0 or steps.max() < step_tol))
