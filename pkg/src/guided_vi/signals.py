"""Reference trajectories and feature construction for the pitch loop.

All angles are in degrees and all rates in degrees per second.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

DEFAULT_AMPLITUDE_DEG = 20.0
DEFAULT_ANGULAR_RATE = 0.132 * math.pi


class ReferenceKind(str, Enum):
    SINUSOID = "sinusoid"
    STEP = "step"
    CONSTANT = "constant"


@dataclass(frozen=True)
class ReferenceSignal:
    """Desired pitch trajectory.

    ``sinusoid`` evaluates ``amplitude * sin(angular_rate * t)``; ``step``
    jumps from 0 to ``amplitude`` at ``step_time``; ``constant`` returns
    ``amplitude`` everywhere.
    """

    amplitude: float = DEFAULT_AMPLITUDE_DEG
    angular_rate: float = DEFAULT_ANGULAR_RATE
    kind: ReferenceKind = ReferenceKind.SINUSOID
    step_time: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.amplitude) or not math.isfinite(self.angular_rate):
            raise ValueError("reference amplitude and rate must be finite")
        object.__setattr__(self, "kind", ReferenceKind(self.kind))


def reference_at(ref: ReferenceSignal, t: float) -> float:
    """Desired pitch angle in degrees at time ``t`` seconds."""
    if ref.kind is ReferenceKind.SINUSOID:
        return ref.amplitude * math.sin(ref.angular_rate * t)
    if ref.kind is ReferenceKind.STEP:
        return ref.amplitude if t >= ref.step_time else 0.0
    return ref.amplitude


@dataclass(frozen=True)
class ErrorVector:
    e: float
    e_prev: float
    e_v: float
    e_v_prev: float
    e_s: float
    e_s_prev: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.e, self.e_prev, self.e_v, self.e_v_prev, self.e_s, self.e_s_prev]
        )


@dataclass(frozen=True)
class PitchState:
    theta: float
    theta_v: float
    theta_a: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.theta_v, self.theta_a])


@dataclass
class ErrorHistory:
    """Ring buffer of the most recent ``window + 2`` raw tracking errors.

    ``window + 1`` samples feed one moving average and one more is needed
    for the previous average.
    """

    dt: float = 0.05
    window: int = 20
    _errors: deque = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"sample period must be positive, got {self.dt}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        self._errors = deque(maxlen=self.window + 2)

    @property
    def capacity(self) -> int:
        return self.window + 2

    def __len__(self) -> int:
        return len(self._errors)

    def values(self) -> list[float]:
        """Stored errors, oldest first."""
        return list(self._errors)

    def push(self, e_raw: float) -> "ErrorHistory":
        if not math.isfinite(e_raw):
            raise ValueError(f"raw error must be finite, got {e_raw}")
        self._errors.append(float(e_raw))
        return self

    def clear(self) -> None:
        self._errors.clear()


def push_measurement(hist: ErrorHistory, e_raw: float) -> ErrorHistory:
    return hist.push(e_raw)


def build_error_vector(hist: ErrorHistory) -> ErrorVector:
    """Assemble the six tracking-error features from the stored errors.

    Moving averages sum ``window + 1`` samples and divide by ``window``.
    Until the buffer is full the oldest stored sample is repeated backwards
    in time, so a fresh history yields zero rates.
    """
    if len(hist) == 0:
        raise ValueError("error history is empty")
    stored = hist.values()
    pad = hist.capacity - len(stored)
    seq = [stored[0]] * pad + stored
    n = hist.window
    e, e_prev, e_prev2 = seq[-1], seq[-2], seq[-3]
    e_s = math.fsum(seq[-(n + 1):]) / n
    e_s_prev = math.fsum(seq[-(n + 2):-1]) / n
    return ErrorVector(
        e=e,
        e_prev=e_prev,
        e_v=(e - e_prev) / hist.dt,
        e_v_prev=(e_prev - e_prev2) / hist.dt,
        e_s=e_s,
        e_s_prev=e_s_prev,
    )


def build_pitch_state(theta_samples: Sequence[float], dt: float) -> PitchState:
    """Attitude, rate and acceleration from the last three filtered samples.

    ``theta_samples`` is ordered oldest first.
    """
    if len(theta_samples) != 3:
        raise ValueError(f"need exactly 3 samples, got {len(theta_samples)}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    a, b, c = (float(x) for x in theta_samples)
    if not all(math.isfinite(x) for x in (a, b, c)):
        raise ValueError("attitude samples must be finite")
    return PitchState(theta=c, theta_v=(c - b) / dt, theta_a=(c - 2.0 * b + a) / dt**2)
