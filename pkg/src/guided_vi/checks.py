"""Self-check suite run by ``guided-vi check``.

Each check compares the learner or integrator against an independent
reference from :mod:`guided_vi.oracle` and returns a :class:`CheckResult`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracle
from .learner import (
    ActorWeights,
    CriticWeights,
    LearnerConfig,
    LearnerState,
    actor_gradient,
    actor_update,
    control_signal,
    critic_gradient,
    critic_update,
    extract_policy,
)
from .plant import PlantParams, plant_step

# Stabilizable 2-state plant on which guided VI converges monotonically.
DEMO_PLANT = oracle.LinearPlant(A=[[1.0, 0.1], [0.0, 0.9]], B=[0.0, 0.1])


def demo_config(normalized: bool = False) -> LearnerConfig:
    return LearnerConfig(Q=np.eye(2), R=0.1, P=[0.1, 0.2], alpha_c=0.05, alpha_a=0.1, normalized=normalized)


DEMO_PROBE = np.array([1.0, -0.5])


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def gradient_check(points: int = 100, seed: int = 0, h: float = 1e-5) -> tuple[float, float]:
    """Worst relative error of critic and actor descent directions vs central differences."""
    rng = np.random.default_rng(seed)
    worst_c = worst_a = 0.0
    for _ in range(points):
        d = int(rng.integers(2, 7))
        m = rng.standard_normal((d, d))
        critic = CriticWeights(0.5 * (m + m.T))
        actor = ActorWeights(rng.standard_normal(d))
        z = rng.standard_normal(d)
        target, u_target = rng.standard_normal(2)
        fd_c = oracle.finite_diff_gradient(lambda w: oracle.critic_loss(w, z, target), critic.omega_c, h)
        worst_c = max(worst_c, _rel(critic_gradient(critic, z, target), 2.0 * fd_c))
        fd_a = oracle.finite_diff_gradient(lambda w: oracle.actor_loss(w, z, u_target), actor.omega_a, h)
        worst_a = max(worst_a, _rel(actor_gradient(actor, z, u_target), fd_a))
    return worst_c, worst_a


def monotone_vi(iterations: int = 10_000) -> tuple[float, int, float]:
    """Smallest value increment at the probe, iterations to converge, and the value bound."""
    res = oracle.exact_guided_vi(DEMO_PLANT, demo_config(), iterations, S0=1e-3 * np.eye(2), tol=1e-8)
    vals = res.values_at(DEMO_PROBE)
    return float(np.min(np.diff(vals))), len(res.S) - 1, float(vals[-1])


def learner_vs_oracle(steps: int = 20_000, seed: int = 0, normalized: bool = False) -> float:
    """Max elementwise relative gap between the online critic and the exact fixed point."""
    cfg = demo_config(normalized)
    exact = oracle.exact_guided_vi(DEMO_PLANT, cfg, 10_000, S0=1e-3 * np.eye(2), tol=1e-12).fixed_point
    st = LearnerState.initial(cfg)
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        z = rng.standard_normal(2)
        u = control_signal(st.actor, z)
        z_next = DEMO_PLANT.A @ z + DEMO_PLANT.B * u
        st.critic = critic_update(st, z, u, z_next)
        st.actor = actor_update(st, z)
    return float(np.max(np.abs(st.critic.omega_c - exact) / (1.0 + np.abs(exact))))


def actor_fixed_point(trials: int = 100, seed: int = 1) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, 7))
        m = rng.standard_normal((d, d))
        cfg = LearnerConfig(Q=np.eye(d), R=1.0, P=rng.standard_normal(d), alpha_c=0.1, alpha_a=0.5)
        critic = CriticWeights(m + m.T)
        st = LearnerState(cfg, critic, ActorWeights(extract_policy(cfg, critic)))
        new = actor_update(st, rng.standard_normal(d))
        worst = max(worst, float(np.max(np.abs(new.omega_a - st.actor.omega_a))))
    return worst


def rk4_order(params: PlantParams | None = None, horizon: float = 10.0) -> float:
    """Observed convergence order from three step sizes on the open-loop surrogate."""
    params = params or PlantParams()

    def final(dt: float) -> np.ndarray:
        p = PlantParams(**{**params.__dict__, "substeps": 1})
        state = (30.0, 0.0)
        for _ in range(int(round(horizon / dt))):
            state = plant_step(p, state, 0.3, 0.0, dt)
        return np.array(state)

    a, b, c = final(0.1), final(0.05), final(0.025)
    return float(math.log2(np.linalg.norm(a - b) / np.linalg.norm(b - c)))


def run_all() -> list[CheckResult]:
    out = []
    gc, ga = gradient_check()
    out.append(CheckResult("critic gradient", gc < 1e-6, f"max rel err {gc:.2e} over 100 points"))
    out.append(CheckResult("actor gradient", ga < 1e-6, f"max rel err {ga:.2e} over 100 points"))
    inc, iters, bound = monotone_vi()
    out.append(CheckResult("monotone guided VI", inc >= -1e-9 and iters < 10_000,
                           f"min increment {inc:.2e}, converged in {iters} iterations, bound {bound:.4f}"))
    gap = learner_vs_oracle()
    out.append(CheckResult("adaptive critic vs exact VI", gap < 0.05, f"max rel gap {gap:.2e}"))
    fp = actor_fixed_point()
    out.append(CheckResult("actor fixed point", fp == 0.0, f"max change {fp:.2e}"))
    order = rk4_order()
    out.append(CheckResult("RK4 order", order >= 3.5, f"observed order {order:.2f}"))
    return out


CHECKS: dict[str, Callable[[], object]] = {"all": run_all}
