"""Empirical-Bayes hyperparameter estimation from band-censored output data.

The hyperparameters rho = (gamma, beta, sigma2) are tuned by an EM scheme
on the marginal model z ~ N(0, S_rho), S_rho = K_beta/gamma + sigma2*I,
with the observation that z is only known to lie in its band. Each
iteration draws a Monte Carlo estimate Q of E[z z^T | bands, rho] and then
minimizes log det(S_rho) + tr(S_rho^{-1} Q) over rho by Nelder-Mead in
log coordinates (positivity by construction, best-so-far contract).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .domain import Dataset, Hyperparameters, ZohInput
from .errors import NumericError, ValidationError
from .kernel import gram_matrix
from .truncgauss import BandConstraint, SamplerConfig, conditional_second_moment

__all__ = [
    "EbTrace",
    "make_gram_builder",
    "marginal_cov",
    "mstep_objective",
    "optimize_mstep",
    "eb_estimate",
]

GramBuilder = Callable[[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class EbTrace:
    """Per-iteration record of the EB tuning loop."""

    rho_per_iter: Tuple[Hyperparameters, ...]
    mstep_objective_per_iter: Tuple[float, ...]
    q_sampler_config: Tuple[int, int, int]  # (n_samples, burn_in, seed)
    q_seeds_per_iter: Tuple[Tuple[int, int], ...]


def make_gram_builder(u: ZohInput, delta: float, n: int, maxsize: int = 64) -> GramBuilder:
    """beta -> K_beta with a small memo cache (optimizers revisit betas).

    The returned arrays are shared cache entries: treat them as read-only.
    """

    @functools.lru_cache(maxsize=maxsize)
    def build(beta: float) -> np.ndarray:
        return gram_matrix(u, delta, beta, n).K

    return build


def marginal_cov(
    beta: float, gamma: float, sigma2: float, gram_builder: GramBuilder
) -> np.ndarray:
    """S_rho = K_beta / gamma + sigma2 * I, the marginal output covariance."""
    rho = Hyperparameters(gamma=gamma, beta=beta, sigma2=sigma2)  # validates rho
    K = gram_builder(rho.beta)
    return K / rho.gamma + rho.sigma2 * np.eye(K.shape[0])


def mstep_objective(rho: Hyperparameters, Q_bar, gram_builder: GramBuilder) -> float:
    """log det(S_rho) + tr(S_rho^{-1} Q_bar), the per-iteration M-step cost."""
    S = marginal_cov(rho.beta, rho.gamma, rho.sigma2, gram_builder)
    Q_bar = np.asarray(Q_bar, dtype=float)
    if Q_bar.shape != S.shape:
        raise ValidationError(f"Q_bar shape {Q_bar.shape} does not match S shape {S.shape}")
    try:
        cho = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as err:
        raise NumericError(f"marginal covariance not positive definite: {err}") from err
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    trace_term = float(np.trace(cho_solve(cho, Q_bar)))
    return logdet + trace_term


class _BudgetExhausted(Exception):
    pass


def _rho_to_log(rho: Hyperparameters) -> np.ndarray:
    return np.log([rho.gamma, rho.beta, rho.sigma2])


def _log_to_rho(x: np.ndarray) -> Hyperparameters:
    g, b, s2 = np.exp(x)
    return Hyperparameters(gamma=float(g), beta=float(b), sigma2=float(s2))


def optimize_mstep(
    Q_bar,
    rho_start: Hyperparameters,
    gram_builder: GramBuilder,
    budget: int = 200,
    free_mask: Optional[Sequence[bool]] = None,
) -> Hyperparameters:
    """Minimize the M-step objective by Nelder-Mead in log(rho) coordinates.

    Warm-started at rho_start with simplex scale 0.2 in log space and a
    hard cap of `budget` objective evaluations. Returns the best point
    seen, never worse than rho_start (whose evaluation is counted first).
    Probes where the objective is not computable (exp overflow on a wild
    step, or sigma2 so small that S is numerically indefinite) count as
    +inf rather than aborting the search. Coordinates where free_mask is
    False stay frozen at the start value; order is (gamma, beta, sigma2).
    """
    if budget < 1:
        raise ValidationError(f"budget must be >= 1, got {budget}")
    free = np.ones(3, dtype=bool) if free_mask is None else np.asarray(free_mask, dtype=bool)
    if free.shape != (3,):
        raise ValidationError(f"free_mask must have 3 entries, got shape {free.shape}")
    x_start = _rho_to_log(rho_start)
    try:
        best_obj = mstep_objective(rho_start, Q_bar, gram_builder)
    except NumericError:  # infeasible start: any finite probe wins
        best_obj = np.inf
    best_x = x_start.copy()
    if not np.any(free):
        return rho_start
    evals = 1  # the start point consumed one evaluation

    def objective(x_free: np.ndarray) -> float:
        nonlocal evals, best_obj, best_x
        if evals >= budget:
            raise _BudgetExhausted
        evals += 1
        x = x_start.copy()
        x[free] = x_free
        try:
            rho = _log_to_rho(x)
            obj = mstep_objective(rho, Q_bar, gram_builder)
        except (ValidationError, NumericError):  # wild or indefinite probe
            return np.inf
        if obj < best_obj:
            best_obj = obj
            best_x = x.copy()
        return obj

    x0 = x_start[free]
    simplex = np.vstack([x0] + [x0 + 0.2 * np.eye(x0.size)[i] for i in range(x0.size)])
    try:
        minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": budget,
                "initial_simplex": simplex,
                "xatol": 1e-6,
                "fatol": 1e-10,
            },
        )
    except _BudgetExhausted:
        pass
    if np.array_equal(best_x, x_start):  # nothing beat the start; keep it exact
        return rho_start
    return _log_to_rho(best_x)


def default_rho_init(ds: Dataset) -> Hyperparameters:
    """Heuristic start: uniform-in-band noise variance, unit gamma, 1/hold decay."""
    return Hyperparameters(
        gamma=1.0,
        beta=1.0 / ds.input.delta_u,
        sigma2=ds.bands.h**2 / 12.0,
    )


def eb_estimate(
    ds: Dataset,
    rho_init: Optional[Hyperparameters] = None,
    em_iters: int = 40,
    sampler_cfg: Optional[SamplerConfig] = None,
    mstep_budget: int = 200,
) -> Tuple[Hyperparameters, EbTrace]:
    """Tune rho on a band-censored dataset by Monte Carlo EM.

    Per iteration j: build S at the current rho, draw Q = E[z z^T | bands]
    with a fresh seed derived as (seed, j), then re-optimize rho on that Q.
    The M-step objective at the new rho can never exceed its value at the
    current rho for the same Q (checked); across iterations the sampled Q
    makes the exact likelihood noisy, which is logged, not enforced.
    """
    if em_iters < 1:
        raise ValidationError(f"em_iters must be >= 1, got {em_iters}")
    cfg = SamplerConfig() if sampler_cfg is None else sampler_cfg
    rho = default_rho_init(ds) if rho_init is None else rho_init
    bands = BandConstraint.from_bands(ds.bands)
    builder = make_gram_builder(ds.input, ds.bands.delta, ds.bands.n)

    rho_per_iter = [rho]
    objectives = []
    seeds = []
    for j in range(1, em_iters + 1):
        S = marginal_cov(rho.beta, rho.gamma, rho.sigma2, builder)
        seed_j = (cfg.seed, j)
        est = conditional_second_moment(
            S,
            bands,
            n_samples=cfg.n_samples,
            seed=list(seed_j),
            burn_in=cfg.burn_in,
            n_chains=cfg.n_chains,
            thinning=cfg.thinning,
        )
        obj_before = mstep_objective(rho, est.Q, builder)
        rho_next = optimize_mstep(est.Q, rho, builder, budget=mstep_budget)
        obj_after = mstep_objective(rho_next, est.Q, builder)
        if obj_after > obj_before:
            raise NumericError(
                f"M-step worsened its own objective at iteration {j}: "
                f"{obj_before:.12g} -> {obj_after:.12g}"
            )
        rho = rho_next
        rho_per_iter.append(rho)
        objectives.append(obj_after)
        seeds.append(seed_j)

    trace = EbTrace(
        rho_per_iter=tuple(rho_per_iter),
        mstep_objective_per_iter=tuple(objectives),
        q_sampler_config=(cfg.n_samples, cfg.burn_in, cfg.seed),
        q_seeds_per_iter=tuple(seeds),
    )
    return rho, trace
