"""Continuous-time LTI plant simulation.

Exact zero-order-hold discretization via the augmented matrix exponential,
noiseless output generation on a fine grid, and true impulse-response
evaluation for scoring estimates. The shipped plant family is the
mass-spring-damper G(s) = 1/(m s^2 + d s + k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .domain import ZohInput
from .errors import ValidationError

__all__ = [
    "StateSpace",
    "SecondOrderPlant",
    "plant_to_ss",
    "zoh_discretize",
    "simulate_noiseless",
    "true_impulse",
]


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Strictly causal single-input single-output state-space model.

    x' = A x + B u, output = C x. D is identically zero (strictly causal),
    so it is not stored.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValidationError(f"A must be square, got shape {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n)
        C = np.asarray(self.C, dtype=float).reshape(n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def order(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class SecondOrderPlant:
    """Mass-spring-damper with transfer function 1/(m s^2 + d s + k)."""

    m: float
    d: float
    k: float

    def __post_init__(self):
        # d = 0 (undamped) is admissible; mass and stiffness are not
        if not (self.m > 0):
            raise ValidationError(f"m must be > 0, got {self.m}")
        if not (self.d >= 0):
            raise ValidationError(f"d must be >= 0, got {self.d}")
        if not (self.k > 0):
            raise ValidationError(f"k must be > 0, got {self.k}")
        for name in ("m", "d", "k"):
            object.__setattr__(self, name, float(getattr(self, name)))


def plant_to_ss(p: SecondOrderPlant) -> StateSpace:
    """Controllable-canonical realization of 1/(m s^2 + d s + k)."""
    A = np.array([[0.0, 1.0], [-p.k / p.m, -p.d / p.m]])
    B = np.array([0.0, 1.0])
    C = np.array([1.0 / p.m, 0.0])
    return StateSpace(A=A, B=B, C=C)


def zoh_discretize(ss: StateSpace, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step transition for a piecewise-constant input.

    Returns (Ad, Bd) with Ad = exp(A*step) and Bd = int_0^step exp(A*tau) dtau B,
    computed jointly from the exponential of the augmented matrix
    [[A, B], [0, 0]] * step.
    """
    if step < 0:
        raise ValidationError(f"step must be >= 0, got {step}")
    n = ss.order
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = ss.A
    M[:n, n] = ss.B
    E = expm(M * step)
    return E[:n, :n], E[:n, n]


def simulate_noiseless(ss: StateSpace, u: ZohInput, grid_step: float, n_steps: int) -> np.ndarray:
    """Noiseless output x(t) = (g * u)(t) at t = grid_step * {0..n_steps}.

    The grid step must divide the input's hold period so u is constant on
    every step; the march is then exact up to matrix-exponential accuracy.
    """
    r = u.hold_substeps(grid_step)
    Ad, Bd = zoh_discretize(ss, grid_step)
    amps = np.asarray(u.amplitudes)
    out = np.empty(n_steps + 1)
    state = np.zeros(ss.order)
    out[0] = 0.0
    for kstep in range(n_steps):
        hold = kstep // r
        a = amps[hold] if hold < amps.size else 0.0
        state = Ad @ state + Bd * a
        out[kstep + 1] = ss.C @ state
    return out


def true_impulse(ss: StateSpace, t) -> np.ndarray | float:
    """g(t) = C exp(A t) B for t >= 0, zero for t < 0 (causality)."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    g = np.zeros(ts.shape)
    order = np.argsort(ts)
    # march with one exponential per gap between sorted evaluation times
    prev_t = 0.0
    eAt = np.eye(ss.order)
    for idx in order:
        ti = ts[idx]
        if ti < 0:
            continue
        if ti != prev_t:
            eAt = expm(ss.A * (ti - prev_t)) @ eAt
            prev_t = ti
        g[idx] = ss.C @ eAt @ ss.B
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(g[0])
    return g
