"""MAP-EM solver for the representer weights under band-censored data.

The posterior mode of the weight vector c maximizes a sum of per-sample
band log-masses minus a kernel-norm penalty. The EM iteration replaces
each censored sample by the conditional mean of the predicted output
inside its band (an exact E-step for Gaussian noise) and then solves a
ridge-type linear system (the M-step). Each sweep cannot increase the
negative log-posterior, which is monitored and enforced.

Also provides the regularized least-squares solve used both as the EM
M-step and as the estimator for point-valued (non-banded) data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError, ValidationError
from .kernel import KernelGram
from .truncgauss import BandConstraint, gaussian_band_logprob, trunc_norm_mean

__all__ = [
    "WeightSolution",
    "neg_log_posterior",
    "em_update",
    "map_em_weights",
    "regularized_ls",
]

# slack allowed on the per-step objective decrease: roundoff on an
# O(N)-term log-sum, not a modeling tolerance
_MONOTONE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class WeightSolution:
    """Result of a MAP-EM solve."""

    c: np.ndarray
    iterations_run: int
    objective_trace: np.ndarray
    converged: bool


def _gram_array(K: Union[KernelGram, np.ndarray]) -> np.ndarray:
    arr = K.K if isinstance(K, KernelGram) else np.asarray(K, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"gram matrix must be square, got shape {arr.shape}")
    return arr


def _check_scalars(sigma2: float, gamma: float) -> None:
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValidationError(f"sigma2 must be finite and > 0, got {sigma2}")
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValidationError(f"gamma must be finite and > 0, got {gamma}")


def _ridge_factor(Kmat: np.ndarray, gamma_tilde: float):
    """Cholesky factor of K + gamma_tilde*I, with a diagnostic on failure."""
    A = Kmat + gamma_tilde * np.eye(Kmat.shape[0])
    try:
        return cho_factor(A, lower=True)
    except np.linalg.LinAlgError as err:
        min_eig = float(np.linalg.eigvalsh(A)[0])
        raise NumericError(
            f"regularized gram not positive definite; min eigenvalue {min_eig:.6g}"
        ) from err


def regularized_ls(K: Union[KernelGram, np.ndarray], z, gamma_tilde: float) -> np.ndarray:
    """c = (K + gamma_tilde*I)^{-1} z via Cholesky."""
    Kmat = _gram_array(K)
    z = np.asarray(z, dtype=float)
    if z.shape != (Kmat.shape[0],):
        raise ValidationError(f"z shape {z.shape} does not match gram size {Kmat.shape[0]}")
    if not (np.isfinite(gamma_tilde) and gamma_tilde > 0):
        raise ValidationError(f"gamma_tilde must be finite and > 0, got {gamma_tilde}")
    return cho_solve(_ridge_factor(Kmat, gamma_tilde), z)


def _check_instance(Kmat: np.ndarray, bands: BandConstraint) -> None:
    if bands.n != Kmat.shape[0]:
        raise ValidationError(
            f"band count {bands.n} does not match gram size {Kmat.shape[0]}"
        )


def neg_log_posterior(
    c,
    K: Union[KernelGram, np.ndarray],
    bands: BandConstraint,
    sigma2: float,
    gamma: float,
) -> float:
    """Band-censoring data misfit plus kernel penalty, up to a c-free constant."""
    Kmat = _gram_array(K)
    _check_instance(Kmat, bands)
    _check_scalars(sigma2, gamma)
    c = np.asarray(c, dtype=float)
    if c.shape != (Kmat.shape[0],):
        raise ValidationError(f"c shape {c.shape} does not match gram size {Kmat.shape[0]}")
    pred = Kmat @ c
    sigma = float(np.sqrt(sigma2))
    data_term = -float(np.sum(gaussian_band_logprob(pred, sigma, bands.lower, bands.upper)))
    return data_term + gamma * float(c @ Kmat @ c)


def _em_step(cho, Kmat: np.ndarray, bands: BandConstraint, sigma: float, c: np.ndarray):
    pred = Kmat @ c
    z_tilde = trunc_norm_mean(pred, sigma, bands.lower, bands.upper)
    return cho_solve(cho, z_tilde)


def em_update(
    c_j,
    K: Union[KernelGram, np.ndarray],
    bands: BandConstraint,
    sigma2: float,
    gamma: float,
) -> np.ndarray:
    """One EM sweep: censored samples -> conditional means -> ridge solve."""
    Kmat = _gram_array(K)
    _check_instance(Kmat, bands)
    _check_scalars(sigma2, gamma)
    c_j = np.asarray(c_j, dtype=float)
    gamma_tilde = 2.0 * sigma2 * gamma
    cho = _ridge_factor(Kmat, gamma_tilde)
    return _em_step(cho, Kmat, bands, float(np.sqrt(sigma2)), c_j)


def map_em_weights(
    K: Union[KernelGram, np.ndarray],
    bands: BandConstraint,
    sigma2: float,
    gamma: float,
    c_init: Optional[np.ndarray] = None,
    max_iter: int = 40,
    tol: float = 1e-6,
) -> WeightSolution:
    """Run the EM iteration to a posterior mode of the weight vector.

    Stops when ||c_{j+1} - c_j||_inf < tol * (1 + ||c_j||_inf) or after
    max_iter sweeps. The objective is recorded at the start and after each
    sweep; an increase beyond roundoff slack aborts with a numeric error,
    since the sweep is monotone by construction.
    """
    Kmat = _gram_array(K)
    _check_instance(Kmat, bands)
    _check_scalars(sigma2, gamma)
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    gamma_tilde = 2.0 * sigma2 * gamma
    sigma = float(np.sqrt(sigma2))
    cho = _ridge_factor(Kmat, gamma_tilde)

    if c_init is None:
        midpoints = 0.5 * (bands.lower + bands.upper)
        c = cho_solve(cho, midpoints)
    else:
        c = np.asarray(c_init, dtype=float).copy()
        if c.shape != (Kmat.shape[0],):
            raise ValidationError(
                f"c_init shape {c.shape} does not match gram size {Kmat.shape[0]}"
            )

    trace = [neg_log_posterior(c, Kmat, bands, sigma2, gamma)]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        c_next = _em_step(cho, Kmat, bands, sigma, c)
        iterations += 1
        obj = neg_log_posterior(c_next, Kmat, bands, sigma2, gamma)
        if obj > trace[-1] + _MONOTONE_SLACK:
            raise NumericError(
                f"EM objective increased from {trace[-1]:.12g} to {obj:.12g} "
                f"at iteration {iterations}"
            )
        trace.append(obj)
        step = float(np.max(np.abs(c_next - c)))
        scale = 1.0 + float(np.max(np.abs(c)))
        c = c_next
        if step < tol * scale:
            converged = True
            break
    return WeightSolution(
        c=c,
        iterations_run=iterations,
        objective_trace=np.asarray(trace),
        converged=converged,
    )
