"""Stochastic reconfiguration, Adam, cosine annealing and block schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .hybrid import BLOCKS

SR_EPS = 1e-3
ADAM_EPS = 1e-8


class NonFiniteError(FloatingPointError):
    """Raised when an optimizer receives NaN/inf inputs."""


def _check_finite(name, *arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite entries in {name}")


def sr_solve(F, S=None, eps: float = SR_EPS, factor=None) -> np.ndarray:
    """Solve ``(S + eps I) x = F``.

    Either the dense ``S`` or a real factor ``Y`` with ``S = Y^T Y`` may be
    given.  With a factor that has fewer rows than columns the solve goes
    through the smaller ``(eps I + Y Y^T)`` system (push-through identity),
    which is exact in exact arithmetic and much cheaper for large ``P``.
    The dense path uses a Cholesky factorization and falls back to a
    least-squares pseudo-solve if that fails.
    """
    F = np.asarray(F, dtype=float)
    _check_finite("F", F)
    if factor is not None:
        Y = np.asarray(factor, dtype=float)
        _check_finite("S", Y)
        if Y.shape[0] < Y.shape[1] and eps > 0:
            yf = Y @ F
            K = Y @ Y.T
            K[np.diag_indices_from(K)] += eps
            try:
                z = scipy.linalg.cho_solve(scipy.linalg.cho_factor(K), yf)
            except np.linalg.LinAlgError:
                z = np.linalg.lstsq(K, yf, rcond=None)[0]
            return (F - Y.T @ z) / eps
        S = Y.T @ Y
    S = np.asarray(S, dtype=float)
    _check_finite("S", S)
    A = S + eps * np.eye(len(F))
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), F)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, F, rcond=None)[0]


def sr_step(params, F, S=None, eta: float = 1e-2, eps: float = SR_EPS, factor=None) -> np.ndarray:
    """``W <- W - eta (S + eps I)^{-1} F``."""
    return np.asarray(params, dtype=float) - eta * sr_solve(F, S, eps, factor)


@dataclass
class Adam:
    """Bias-corrected Adam on a flat real parameter vector."""

    n_params: int
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = ADAM_EPS
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    t: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)

    def step(self, params, grad, eta: float) -> np.ndarray:
        grad = np.asarray(grad, dtype=float)
        _check_finite("gradient", grad)
        if grad.shape != self.m.shape:
            raise ValueError("gradient shape does not match the optimizer state")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return np.asarray(params, dtype=float) - eta * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t,
                "beta1": self.beta1, "beta2": self.beta2}

    def load_state_dict(self, d: dict) -> None:
        if np.shape(d["m"]) != self.m.shape:
            raise ValueError("optimizer state does not match the parameter layout")
        self.m, self.v, self.t = np.array(d["m"]), np.array(d["v"]), int(d["t"])


@dataclass(frozen=True)
class Schedule:
    eta_init: float = 5e-3
    eta_min: float = 5e-4
    n_iters: int = 3000

    def __post_init__(self):
        if self.eta_min > self.eta_init:
            raise ValueError("eta_min must not exceed eta_init")
        if self.n_iters < 1:
            raise ValueError("n_iters must be positive")


def cosine_lr(schedule: Schedule, t: int) -> float:
    """``eta_min + (eta_init - eta_min) (1 + cos(pi t / N)) / 2``."""
    if not 0 <= t <= schedule.n_iters:
        raise ValueError(f"t={t} outside [0, {schedule.n_iters}]")
    return schedule.eta_min + 0.5 * (schedule.eta_init - schedule.eta_min) * (
        1.0 + math.cos(math.pi * t / schedule.n_iters))


def schedule_blocks(plan, n_total: int | None = None) -> list[tuple[str, ...]]:
    """Expand ``[(blocks, n_iters), ...]`` into one active-block tuple per iteration.

    Blocks are returned in canonical layout order.  When ``n_total`` is
    given the spans must add up to it.
    """
    out = []
    for blocks, span in plan:
        bad = set(blocks) - set(BLOCKS)
        if bad:
            raise ValueError(f"unknown blocks {sorted(bad)}")
        blocks = tuple(b for b in BLOCKS if b in set(blocks))
        if not blocks:
            raise ValueError("empty active block set")
        if span < 0:
            raise ValueError("negative iteration span")
        out.extend([blocks] * int(span))
    if n_total is not None and len(out) != n_total:
        raise ValueError(f"block plan covers {len(out)} iterations, expected {n_total}")
    return out
