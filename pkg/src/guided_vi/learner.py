"""Adaptive-critic learner for one guided value-iteration process.

Each learner holds a quadratic critic ``V(z) = 0.5 * z' Wc z`` and a linear
actor ``u = Wa z``. The actor is trained towards the guided policy
``-P Wc z`` and the critic towards the one-step Bellman target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INITIAL_CRITIC_SCALE = 1e-3


@dataclass
class LearnerConfig:
    Q: np.ndarray
    R: float
    P: np.ndarray
    alpha_c: float
    alpha_a: float
    normalized: bool = False

    def __post_init__(self) -> None:
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.P = np.asarray(self.P, dtype=float).reshape(-1)
        self.R = float(self.R)
        d = self.Q.shape[0]
        if self.Q.shape != (d, d):
            raise ValueError(f"Q must be square, got shape {self.Q.shape}")
        if not np.allclose(self.Q, self.Q.T, rtol=0.0, atol=1e-15):
            raise ValueError("Q must be symmetric")
        if np.any(np.linalg.eigvalsh(self.Q) < 0.0):
            raise ValueError("Q must be positive semi-definite")
        if self.P.shape != (d,):
            raise ValueError(f"P must have {d} entries, got {self.P.shape[0]}")
        if not self.R > 0:
            raise ValueError("R must be positive")
        for name in ("alpha_c", "alpha_a"):
            a = getattr(self, name)
            if not 0.0 < a < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {a}")

    @property
    def d(self) -> int:
        return self.Q.shape[0]


def tracking_config(normalized: bool = False) -> LearnerConfig:
    """Weights of the tracking-error learner used on the ground rig."""
    return LearnerConfig(
        Q=np.diag([25e-4, 25e-4, 0.25e-4, 0.25e-4, 25e-4, 25e-4]),
        R=1e-7,
        P=np.array([200.0, 50.0, 10.0, 5.0, 10.0, 5.0]),
        alpha_c=0.01,
        alpha_a=0.01,
        normalized=normalized,
    )


def stabilizing_config(normalized: bool = False) -> LearnerConfig:
    """Weights of the pitch-state learner used on the ground rig."""
    return LearnerConfig(
        Q=np.diag([25e-6, 25e-6, 0.0025e-6]),
        R=10.0,
        P=np.array([10.0, 10.0, 5.0]),
        alpha_c=0.01,
        alpha_a=0.05,
        normalized=normalized,
    )


@dataclass
class CriticWeights:
    omega_c: np.ndarray

    def __post_init__(self) -> None:
        self.omega_c = np.atleast_2d(np.asarray(self.omega_c, dtype=float))


@dataclass
class ActorWeights:
    omega_a: np.ndarray

    def __post_init__(self) -> None:
        self.omega_a = np.asarray(self.omega_a, dtype=float).reshape(-1)


@dataclass
class LearnerState:
    config: LearnerConfig
    critic: CriticWeights
    actor: ActorWeights
    last_value: float = 0.0

    def __post_init__(self) -> None:
        d = self.config.d
        if self.critic.omega_c.shape != (d, d) or self.actor.omega_a.shape != (d,):
            raise ValueError(f"weight shapes inconsistent with feature dimension {d}")

    @classmethod
    def initial(cls, config: LearnerConfig, scale: float = INITIAL_CRITIC_SCALE) -> "LearnerState":
        """Positive-definite critic ``scale * I`` with the actor at its guided policy."""
        critic = CriticWeights(scale * np.eye(config.d))
        actor = ActorWeights(extract_policy(config, critic))
        return cls(config, critic, actor)

    def copy(self) -> "LearnerState":
        return LearnerState(
            self.config,
            CriticWeights(self.critic.omega_c.copy()),
            ActorWeights(self.actor.omega_a.copy()),
            self.last_value,
        )


def _vec(z, d: int) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape != (d,):
        raise ValueError(f"expected a {d}-vector, got {z.shape[0]} entries")
    return z


def stage_cost(cfg: LearnerConfig, z, u: float) -> float:
    z = _vec(z, cfg.d)
    return 0.5 * (float(z @ cfg.Q @ z) + cfg.R * float(u) ** 2)


def value(critic: CriticWeights, z) -> float:
    z = _vec(z, critic.omega_c.shape[0])
    return 0.5 * float(z @ critic.omega_c @ z)


def extract_policy(cfg: LearnerConfig, critic: CriticWeights) -> np.ndarray:
    """Guided policy row ``-P Wc``."""
    if critic.omega_c.shape != (cfg.d, cfg.d):
        raise ValueError("critic shape does not match config")
    return -cfg.P @ critic.omega_c


def control_signal(actor: ActorWeights, z) -> float:
    z = _vec(z, actor.omega_a.shape[0])
    return float(actor.omega_a @ z)


def bellman_target(cfg: LearnerConfig, critic: CriticWeights, z_now, u_now: float, z_next) -> float:
    return stage_cost(cfg, z_now, u_now) + value(critic, z_next)


def critic_gradient(critic: CriticWeights, z, target: float) -> np.ndarray:
    """Critic descent direction ``(V(z) - target) * z z'`` with the target held fixed.

    Because ``V = 0.5 z' Wc z`` this is twice the elementwise derivative of
    ``0.5 * (V(z) - target)**2``; the factor is absorbed in ``alpha_c``.
    """
    z = _vec(z, critic.omega_c.shape[0])
    return (value(critic, z) - target) * np.outer(z, z)


def actor_gradient(actor: ActorWeights, z, u_target: float) -> np.ndarray:
    """Gradient of ``0.5 * (Wa z - u_target)**2`` w.r.t. the actor, target held fixed."""
    z = _vec(z, actor.omega_a.shape[0])
    return (control_signal(actor, z) - u_target) * z


def critic_update(state: LearnerState, z_now, u_now: float, z_next) -> CriticWeights:
    cfg = state.config
    z_now = _vec(z_now, cfg.d)
    target = bellman_target(cfg, state.critic, z_now, u_now, z_next)
    grad = critic_gradient(state.critic, z_now, target)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite temporal-difference error")
    step = cfg.alpha_c
    if cfg.normalized:
        step /= (1.0 + float(np.dot(z_now, z_now))) ** 2
    w = state.critic.omega_c - step * grad
    return CriticWeights(0.5 * (w + w.T))


def actor_update(state: LearnerState, z_now) -> ActorWeights:
    cfg = state.config
    z = _vec(z_now, cfg.d)
    u_target = float(extract_policy(cfg, state.critic) @ z)
    grad = actor_gradient(state.actor, z, u_target)
    step = cfg.alpha_a
    if cfg.normalized:
        step /= 1.0 + float(z @ z)
    return ActorWeights(state.actor.omega_a - step * grad)


def value_metric(state: LearnerState, z) -> float:
    v = value(state.critic, z)
    state.last_value = v
    return v


def is_positive_definite(critic: CriticWeights) -> bool:
    return bool(np.all(np.linalg.eigvalsh(critic.omega_c) > 0.0))


# Snapshot files: '#'-prefixed header lines, then one line per learner holding
# d, the d*d critic entries (row-major) and the d actor entries.
SNAPSHOT_HEADER = "guided_vi weight snapshot v1"


def save_snapshot(path: str | Path, learners: dict[str, LearnerState]) -> None:
    lines = [
        f"# {SNAPSHOT_HEADER}",
        "# columns: name d critic[0,0] .. critic[d-1,d-1] (row-major) actor[0] .. actor[d-1]",
    ]
    for name, st in learners.items():
        d = st.config.d
        nums = [repr(float(x)) for x in st.critic.omega_c.reshape(-1)]
        nums += [repr(float(x)) for x in st.actor.omega_a]
        lines.append(" ".join([name, str(d)] + nums))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_snapshot(path: str | Path) -> dict[str, tuple[CriticWeights, ActorWeights]]:
    text = Path(path).read_text(encoding="utf-8")
    out = {}
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("#"):
            header_seen = header_seen or SNAPSHOT_HEADER in line
            continue
        if not line.strip():
            continue
        parts = line.split()
        name, d = parts[0], int(parts[1])
        nums = [float(x) for x in parts[2:]]
        if len(nums) != d * d + d:
            raise ValueError(f"{path}:{lineno}: expected {d * d + d} numbers, got {len(nums)}")
        if not all(math.isfinite(x) for x in nums):
            raise ValueError(f"{path}:{lineno}: non-finite weight")
        out[name] = (
            CriticWeights(np.array(nums[: d * d]).reshape(d, d)),
            ActorWeights(np.array(nums[d * d:])),
        )
    if not header_seen:
        raise ValueError(f"{path}: missing snapshot header")
    return out
