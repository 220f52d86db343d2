"""Brute-force references for testing the learner.

Nothing here is used by the controller. On a linear plant
``z' = A z + B u`` the guided policy ``u = -P S z`` turns the Bellman
equation into an exact matrix recursion, which gives a reference the
adaptive critics can be checked against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .learner import LearnerConfig

DIVERGENCE_NORM = 1e12


class DivergenceError(ArithmeticError):
    def __init__(self, iteration: int, norm: float):
        super().__init__(f"guided value iteration diverged at iteration {iteration} (|S| = {norm:.3g})")
        self.iteration = iteration
        self.norm = norm


@dataclass
class LinearPlant:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(-1)
        d = self.A.shape[0]
        if self.A.shape != (d, d) or self.B.shape != (d,):
            raise ValueError("A must be d x d and B a d-vector")

    def closed_loop(self, policy: np.ndarray) -> np.ndarray:
        return self.A + np.outer(self.B, policy)

    def is_stabilized_by(self, policy: np.ndarray) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.closed_loop(policy)))) < 1.0)


@dataclass
class GuidedVIResult:
    S: list[np.ndarray]
    policies: list[np.ndarray]

    @property
    def fixed_point(self) -> np.ndarray:
        return self.S[-1]

    def values_at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.array([0.5 * z @ s @ z for s in self.S])

    def step_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(b - a) for a, b in zip(self.S, self.S[1:])])


def guided_vi_step(plant: LinearPlant, cfg: LearnerConfig, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One exact iteration; returns ``(S_next, policy)`` with ``policy = -P S``."""
    pi = -cfg.P @ S
    a_cl = plant.closed_loop(pi)
    s_next = cfg.Q + cfg.R * np.outer(pi, pi) + a_cl.T @ S @ a_cl
    return 0.5 * (s_next + s_next.T), pi


def exact_guided_vi(
    plant: LinearPlant,
    cfg: LearnerConfig,
    iterations: int,
    S0: np.ndarray | None = None,
    tol: float | None = None,
) -> GuidedVIResult:
    """Iterate ``S <- Q + pi' R pi + (A + B pi)' S (A + B pi)``, ``pi = -P S``.

    Returns all iterates ``S[0..n]`` and the policies extracted from them.
    Stops early once the Frobenius step falls below ``tol``.
    """
    d = cfg.d
    if plant.A.shape[0] != d:
        raise ValueError(f"plant has {plant.A.shape[0]} states, config expects {d}")
    S = np.zeros((d, d)) if S0 is None else np.array(S0, dtype=float)
    seq, pols = [S], []
    for t in range(iterations):
        S_next, pi = guided_vi_step(plant, cfg, S)
        pols.append(pi)
        norm = np.linalg.norm(S_next)
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise DivergenceError(t + 1, norm)
        seq.append(S_next)
        if tol is not None and np.linalg.norm(S_next - S) < tol:
            break
        S = S_next
    pols.append(-cfg.P @ seq[-1])
    return GuidedVIResult(seq, pols)


def bellman_residual(plant: LinearPlant, cfg: LearnerConfig, S: np.ndarray) -> float:
    S_next, _ = guided_vi_step(plant, cfg, S)
    return float(np.max(np.abs(S_next - S)))


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array of any shape."""
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def critic_loss(omega_c: np.ndarray, z: np.ndarray, target: float) -> float:
    """``0.5 * (0.5 z' Wc z - target)**2`` written out independently of the learner."""
    v = 0.5 * sum(z[i] * omega_c[i, j] * z[j] for i in range(len(z)) for j in range(len(z)))
    return 0.5 * (v - target) ** 2


def actor_loss(omega_a: np.ndarray, z: np.ndarray, u_target: float) -> float:
    u = sum(w * zi for w, zi in zip(omega_a, z))
    return 0.5 * (u - u_target) ** 2
