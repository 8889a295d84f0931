"""First-order stable-spline kernel and the input-convolved Gram matrix.

The kernel is k(t, tau) = exp(-beta*max(t, tau)). With a zero-order-hold
input whose hold period is an integer multiple of the fast period delta,
u(i*delta - xi) is constant on every cell [k*delta, (k+1)*delta), so the
double integral defining the output Gram matrix

    K_ij = int int u(i*delta - xi) u(j*delta - tau) k(xi, tau) dtau dxi

collapses to U E U^T: U is a lower-triangular Toeplitz matrix of cell
amplitudes and E holds the exact cell-pair integrals of the kernel, with
closed forms both off-diagonal and on the diagonal (where the cell
straddles xi = tau). No quadrature is involved anywhere.

Representers g_i(t) = int u(i*delta - tau) k(t, tau) dtau and weighted
sums of them are evaluated through the same cell profile in closed form.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .domain import Hyperparameters, ZohInput
from .errors import ValidationError

__all__ = [
    "KernelGram",
    "ImpulseEstimate",
    "ss1_kernel",
    "gram_matrix",
    "representer_eval",
    "reconstruct_impulse",
    "predict_output",
]


@dataclass(frozen=True, eq=False)
class KernelGram:
    """Output Gram matrix together with the decay it was built with.

    K is symmetric by construction and positive semidefinite up to
    roundoff (min eigenvalue >= -1e-8 * ||K||_2, checked in tests).
    input_id fingerprints the input and fast period that produced K.
    """

    K: np.ndarray
    beta: float
    input_id: str

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValidationError(f"K must be square, got shape {K.shape}")
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True, eq=False)
class ImpulseEstimate:
    """Weight vector plus everything needed to evaluate the estimate."""

    c: np.ndarray
    input: ZohInput
    delta: float
    rho: Hyperparameters

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    def evaluate(self, t_grid) -> np.ndarray:
        return reconstruct_impulse(self.c, self.input, self.delta, self.rho.beta, t_grid)


def ss1_kernel(t, tau, beta: float):
    """First-order stable-spline kernel exp(-beta*max(t, tau))."""
    if not (beta > 0):
        raise ValidationError(f"beta must be > 0, got {beta}")
    return np.exp(-beta * np.maximum(t, tau))


def _input_id(u: ZohInput, delta: float) -> str:
    key = "|".join(
        format(v, ".17g") for v in (delta, u.delta_u, u.t0, *u.amplitudes)
    )
    return hashlib.sha256(key.encode("ascii")).hexdigest()[:16]


def _cell_amplitudes(u: ZohInput, delta: float, n_cells: int) -> np.ndarray:
    """u on each fast cell (m*delta, (m+1)*delta), m = 0..n_cells-1."""
    r = u.hold_substeps(delta)
    amps = np.asarray(u.amplitudes)
    m = np.arange(n_cells)
    hold = m // r
    out = np.zeros(n_cells)
    inside = hold < amps.size
    out[inside] = amps[hold[inside]]
    return out


def _one_minus_exp_one_plus(x: float) -> float:
    """1 - exp(-x)*(1+x), accurate near zero via its power series."""
    if x < 0.02:
        # sum_{n>=2} (-1)^n (n-1)/n! x^n, truncated after x^7
        return x * x * (
            0.5
            + x * (-1.0 / 3.0 + x * (0.125 + x * (-1.0 / 30.0 + x * (1.0 / 144.0 - x / 840.0))))
        )
    return 1.0 - np.exp(-x) * (1.0 + x)


def _cell_weights(beta: float, delta: float, n: int) -> np.ndarray:
    """w[m] = int over cell m of exp(-beta*tau) dtau, exact."""
    decay = np.exp(-beta * delta * np.arange(n))
    return decay * (-np.expm1(-beta * delta) / beta)


def gram_matrix(u: ZohInput, delta: float, beta: float, n: int) -> KernelGram:
    """Exact output Gram matrix for samples at i*delta, i = 1..n."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not (beta > 0):
        raise ValidationError(f"beta must be > 0, got {beta}")
    amp_cell = _cell_amplitudes(u, delta, n)
    U = toeplitz(amp_cell, np.zeros(n))
    w = _cell_weights(beta, delta, n)
    idx = np.arange(n)
    E = delta * w[np.maximum.outer(idx, idx)]
    # diagonal cells straddle xi = tau; use the exact straddling integral
    x = beta * delta
    diag = 2.0 * np.exp(-beta * delta * idx) * _one_minus_exp_one_plus(x) / (beta * beta)
    E[idx, idx] = diag
    K = U @ E @ U.T
    K = 0.5 * (K + K.T)
    return KernelGram(K=K, beta=float(beta), input_id=_input_id(u, delta))


def _profile_eval(q: np.ndarray, delta: float, beta: float, t_grid) -> np.ndarray:
    """int q(tau) exp(-beta*max(t, tau)) dtau for a cell-wise constant q.

    q[k] is the value on [k*delta, (k+1)*delta); q vanishes beyond.
    """
    q = np.asarray(q, dtype=float)
    L = q.size
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t < 0):
        raise ValidationError("evaluation times must be >= 0")
    w = _cell_weights(beta, delta, L)
    # prefix integrals of q and suffix integrals of q * exp(-beta*tau)
    cq = np.concatenate(([0.0], np.cumsum(q) * delta))
    ce = np.concatenate((np.cumsum((q * w)[::-1])[::-1], [0.0]))
    j = np.minimum(np.floor(t / delta).astype(int), L - 1)
    inside = t < L * delta
    out = np.empty(t.shape)
    e_t = np.exp(-beta * t)
    # beyond the profile support only the decaying prefix term survives
    out[~inside] = e_t[~inside] * cq[L]
    ji = j[inside]
    ti = t[inside]
    qj = q[ji]
    left = e_t[inside] * (cq[ji] + qj * (ti - ji * delta))
    right = qj * (e_t[inside] - np.exp(-beta * delta * (ji + 1))) / beta + ce[ji + 1]
    out[inside] = left + right
    if np.isscalar(t_grid) or np.asarray(t_grid).ndim == 0:
        return out[0]
    return out


def representer_eval(u: ZohInput, delta: float, i: int, beta: float, t):
    """g_i(t) = int u(i*delta - tau) exp(-beta*max(t, tau)) dtau, i >= 1."""
    if i < 1:
        raise ValidationError(f"representer index must be >= 1, got {i}")
    amp_cell = _cell_amplitudes(u, delta, i)
    q = amp_cell[::-1]  # u(i*delta - tau) on cell k is the cell i-1-k value
    return _profile_eval(q, delta, beta, t)


def reconstruct_impulse(c, u: ZohInput, delta: float, beta: float, t_grid) -> np.ndarray:
    """ghat(t) = sum_i c_i g_i(t) evaluated through one combined profile.

    The combined integrand weight sum_i c_i u(i*delta - tau) is itself
    constant on fast cells, so the whole sum costs one profile pass.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    amp_cell = _cell_amplitudes(u, delta, n)
    U = toeplitz(amp_cell, np.zeros(n))
    q = U.T @ c
    return _profile_eval(q, delta, beta, t_grid)


def predict_output(gram: KernelGram, c) -> np.ndarray:
    """Model output at the fast grid: K @ c."""
    c = np.asarray(c, dtype=float)
    if c.shape != (gram.n,):
        raise ValidationError(
            f"weight vector shape {c.shape} does not match gram size {gram.n}"
        )
    return gram.K @ c
