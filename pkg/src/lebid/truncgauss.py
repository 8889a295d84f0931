"""Truncated Gaussian primitives.

Stable band log-probabilities, univariate truncated-normal moments, a
box-truncated multivariate normal Gibbs sampler, and the conditional
second-moment matrix consumed by the empirical-Bayes update.

Numerical strategy: everything is computed on standardized bounds
lo = (a-mu)/sigma, hi = (b-mu)/sigma and split into three regimes. A band
straddling the mean uses plain erf, which has no cancellation there. A
band in a tail is rewritten with the scaled complementary error function
erfcx so the common factor exp(-lo^2/2) never under- or overflows; the
remaining small differences go through expm1/log1p. Lower tails mirror
onto upper tails. The formulas stay finite and accurate for bands
hundreds of sigmas from the mean, far beyond where naive erf
differencing returns 0 or NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import erf, erfcx, ndtr, ndtri

from .domain import BandSequence
from .errors import NumericError, ValidationError

__all__ = [
    "BandConstraint",
    "MomentEstimate",
    "SamplerConfig",
    "gaussian_band_logprob",
    "trunc_norm_mean",
    "trunc_norm_second_moment",
    "sample_tmvn",
    "conditional_second_moment",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2_PI = math.sqrt(2.0 / math.pi)
_TAIL = 5.0  # standardized distance beyond which rejection sampling takes over
_FAR = 700.0  # exp(-d) below double range; upper edge acts as open beyond this
_NARROW = 5e-3  # w*(1+|m|) cut for the midpoint-expansion branch


@dataclass(frozen=True, eq=False)
class BandConstraint:
    """Axis-aligned box: coordinate i is confined to (lower[i], upper[i])."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValidationError(
                f"lower/upper must be equal-length vectors, got {lower.shape} and {upper.shape}"
            )
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValidationError("band edges must not be NaN")
        if not np.all(lower < upper):
            i = int(np.argmin(lower < upper))
            raise ValidationError(f"empty band at coordinate {i}: [{lower[i]}, {upper[i]}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_bands(cls, bands: BandSequence) -> "BandConstraint":
        lower = np.asarray(bands.eta)
        return cls(lower=lower, upper=lower + bands.h)

    @property
    def n(self) -> int:
        return self.lower.size


@dataclass(frozen=True, eq=False)
class MomentEstimate:
    """Monte Carlo estimate of a conditional second-moment matrix."""

    Q: np.ndarray
    n_samples: int
    seed: object


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of the truncated-MVN Gibbs sampler used by the EB loop."""

    n_samples: int = 1000
    burn_in: int = 200
    seed: int = 0
    thinning: int = 1
    n_chains: Optional[int] = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.burn_in < 0:
            raise ValidationError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.thinning < 1:
            raise ValidationError(f"thinning must be >= 1, got {self.thinning}")
        if self.n_chains is not None and self.n_chains < 1:
            raise ValidationError(f"n_chains must be >= 1, got {self.n_chains}")


def _log_expm1(x: np.ndarray) -> np.ndarray:
    """log(exp(x) - 1) for x > 0 without overflow."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 0.7
    out[small] = np.log(np.expm1(x[small]))
    xb = x[~small]
    out[~small] = xb + np.log1p(-np.exp(-xb))
    return out


def _standardize(mu, sigma, a, b):
    scalar = all(np.ndim(v) == 0 for v in (mu, sigma, a, b))
    mu, sigma, a, b = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (mu, sigma, a, b))
    )
    if np.any(sigma <= 0) or np.any(~np.isfinite(sigma)):
        raise ValidationError("sigma must be finite and > 0")
    if np.any(~np.isfinite(mu)):
        raise ValidationError("mu must be finite")
    if not np.all(a < b):
        raise ValidationError("band must satisfy a < b")
    lo = (a - mu) / sigma
    hi = (b - mu) / sigma
    # a < b can still collapse to lo == hi in float for sub-ulp bands; keep
    # the standardized band non-degenerate so the ratio formulas stay finite
    hi = np.maximum(hi, np.nextafter(lo, np.inf))
    return mu, sigma, a, b, lo, hi, scalar


def _tail_mass_ratios(lo, hi):
    """(log Z, r1, r2) for standard X on a band with 0 <= lo < hi.

    Z = P(lo < X < hi), r1 = (phi(lo) - phi(hi))/Z,
    r2 = (lo phi(lo) - hi phi(hi))/Z.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ex_lo = erfcx(lo / _SQRT2)
    with np.errstate(invalid="ignore", over="ignore"):
        d_raw = 0.5 * (hi - lo) * (hi + lo)
    # beyond _FAR the upper edge contributes nothing representable
    far = np.isinf(hi) | (d_raw > _FAR)
    d = np.where(far, 1.0, d_raw)
    hi_f = np.where(far, lo + 1.0, hi)
    ex_hi = erfcx(hi_f / _SQRT2)
    log_ratio = np.log(ex_lo) - np.log(ex_hi)
    # bracket = erfcx(lo/s2) - erfcx(hi/s2) e^{-d}, kept in log form
    log_bracket = np.where(
        far, np.log(ex_lo), np.log(ex_hi) - d + _log_expm1(log_ratio + d)
    )
    log_z = math.log(0.5) - 0.5 * lo * lo + log_bracket
    log_num1 = np.where(far, 0.0, np.log(-np.expm1(-d)))  # log(1 - e^{-d})
    r1 = _SQRT_2_PI * np.exp(log_num1 - log_bracket)
    # r2 numerator lo - hi e^{-d} = -(hi - lo) + hi (1 - e^{-d}): no cancellation
    n2 = np.where(far, lo, -(hi_f - lo) + hi_f * (-np.expm1(-d)))
    r2 = _SQRT_2_PI * n2 * np.exp(-log_bracket)
    return log_z, r1, r2


def _narrow_mass_ratios(lo, hi):
    """(log Z, r1, r2) for a very narrow band, any location.

    The erfcx route differences two nearly equal logs here and loses the
    band width's digits, so expand about the midpoint m instead. With
    w = hi - lo, these are exact identities:
      phi(lo) - phi(hi)       = 2 phi(m) e^{-w^2/8} sinh(m w / 2)
      lo phi(lo) - hi phi(hi) = phi(m) e^{-w^2/8} (2 m sinh(mw/2) - w cosh(mw/2))
    and the mass has the series Z = phi(m) w (1 + (m^2-1) w^2/24 + O(w^4)),
    whose truncation error is negligible for w (1+|m|) below the _NARROW cut.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    w = hi - lo
    m = 0.5 * (lo + hi)
    series = 1.0 + (m * m - 1.0) * w * w / 24.0
    log_z = np.log(w) - 0.5 * m * m - 0.5 * math.log(2.0 * math.pi) + np.log(series)
    damp = np.exp(-w * w / 8.0)
    sh = np.sinh(0.5 * m * w)
    r1 = damp * 2.0 * sh / (w * series)
    r2 = damp * (2.0 * m * sh - w * np.cosh(0.5 * m * w)) / (w * series)
    return log_z, r1, r2


def _straddle_mass_ratios(lo, hi):
    """(log Z, r1, r2) for a band with lo < 0 < hi: plain erf, terms add."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    z = 0.5 * (erf(hi / _SQRT2) - erf(lo / _SQRT2))
    qlo = -0.5 * lo * lo
    qhi = -0.5 * hi * hi
    # expm1(-inf) = -1 makes the infinite-edge cases exact
    num1 = np.expm1(qlo) - np.expm1(qhi)
    with np.errstate(invalid="ignore"):  # inf * 0 in the discarded branch
        num2 = np.where(np.isinf(lo), 0.0, lo * np.exp(qlo)) - np.where(
            np.isinf(hi), 0.0, hi * np.exp(qhi)
        )
    c = 1.0 / math.sqrt(2.0 * math.pi)
    return np.log(z), c * num1 / z, c * num2 / z


def _band_stats(lo, hi):
    """(log Z, r1, r2) elementwise across the regimes."""
    log_z = np.empty(lo.shape)
    r1 = np.empty(lo.shape)
    r2 = np.empty(lo.shape)
    with np.errstate(invalid="ignore"):  # inf - inf on unconstrained bands
        narrow = (hi - lo) * (1.0 + np.abs(0.5 * (lo + hi))) < _NARROW
    narrow &= np.isfinite(lo) & np.isfinite(hi)
    up = (lo >= 0) & ~narrow
    dn = (hi <= 0) & ~up & ~narrow
    mid = ~(up | dn | narrow)
    if np.any(narrow):
        log_z[narrow], r1[narrow], r2[narrow] = _narrow_mass_ratios(lo[narrow], hi[narrow])
    if np.any(up):
        log_z[up], r1[up], r2[up] = _tail_mass_ratios(lo[up], hi[up])
    if np.any(dn):
        # mirror X -> -X: Z and r2 invariant, r1 flips sign
        m_z, m1, m2 = _tail_mass_ratios(-hi[dn], -lo[dn])
        log_z[dn], r1[dn], r2[dn] = m_z, -m1, m2
    if np.any(mid):
        log_z[mid], r1[mid], r2[mid] = _straddle_mass_ratios(lo[mid], hi[mid])
    return log_z, r1, r2


def gaussian_band_logprob(mu, sigma, a, b):
    """log of the N(mu, sigma^2) mass on the band (a, b).

    Vectorized over broadcastable arguments; scalar inputs return a float.
    Stays finite for bands arbitrarily far into the tails and is monotone
    increasing in b.
    """
    _, _, _, _, lo, hi, scalar = _standardize(mu, sigma, a, b)
    log_z, _, _ = _band_stats(lo, hi)
    return float(log_z[0]) if scalar else log_z


def _clip_open(x, a, b):
    """Clamp x into the open interval (a, b), moving one ulp off an edge."""
    lo_open = np.nextafter(a, np.inf)
    hi_open = np.nextafter(b, -np.inf)
    return np.minimum(np.maximum(x, lo_open), hi_open)


def trunc_norm_mean(mu, sigma, a, b):
    """E[Z | a < Z < b] for Z ~ N(mu, sigma^2), strictly inside (a, b)."""
    mu_, sigma_, a_, b_, lo, hi, scalar = _standardize(mu, sigma, a, b)
    _, r1, _ = _band_stats(lo, hi)
    out = _clip_open(mu_ + sigma_ * r1, a_, b_)
    return float(out[0]) if scalar else out


def trunc_norm_second_moment(mu, sigma, a, b):
    """E[Z^2 | a < Z < b] for Z ~ N(mu, sigma^2)."""
    mu_, sigma_, _, _, lo, hi, scalar = _standardize(mu, sigma, a, b)
    _, r1, r2 = _band_stats(lo, hi)
    out = mu_ * mu_ + 2.0 * mu_ * sigma_ * r1 + sigma_ * sigma_ * (1.0 + r2)
    return float(out[0]) if scalar else out


def _robert_tail(lo, hi, rng, max_rounds: int = 1000):
    """Draws of standard X | lo < X < hi for lo >= _TAIL, by rejection.

    Truncated-exponential proposal at the optimal rate; its inverse CDF
    keeps proposals strictly inside (lo, hi) by construction.
    """
    lam = 0.5 * (lo + np.sqrt(lo * lo + 4.0))
    with np.errstate(invalid="ignore"):
        span = -np.expm1(-lam * (hi - lo))  # 1 - e^{-lam w}; 1 for open bands
    span = np.where(np.isnan(span), 1.0, span)
    log_sup = np.where(lam > hi, -0.5 * (hi - lam) ** 2, 0.0)
    out = np.empty(lo.shape)
    pending = np.ones(lo.shape, dtype=bool)
    for _ in range(max_rounds):
        k = int(pending.sum())
        if k == 0:
            return out
        idx = np.flatnonzero(pending)
        u1 = rng.random(k)
        u2 = rng.random(k)
        lo_p = lo[idx]
        lam_p = lam[idx]
        x = lo_p - np.log1p(-u1 * span[idx]) / lam_p
        ok = np.log(u2) <= -0.5 * (x - lam_p) ** 2 - log_sup[idx]
        out[idx[ok]] = x[ok]
        pending[idx[ok]] = False
    raise NumericError("tail rejection sampler failed to accept a draw")


def _sample_trunc_std(lo, hi, rng):
    """One draw per lane of standard X | lo < X < hi, vectorized."""
    x = np.empty(lo.shape)
    up = lo >= _TAIL
    dn = hi <= -_TAIL
    mid = ~(up | dn)
    if mid.any():
        p_lo = ndtr(lo[mid])
        p_hi = ndtr(hi[mid])
        u = rng.random(int(mid.sum()))
        p = p_lo + u * (p_hi - p_lo)
        # keep ndtri finite on (half-)open bands
        p = np.minimum(np.maximum(p, 1e-300), 1.0 - 1e-16)
        x[mid] = ndtri(p)
    if up.any():
        x[up] = _robert_tail(lo[up], hi[up], rng)
    if dn.any():
        x[dn] = -_robert_tail(-hi[dn], -lo[dn], rng)
    return np.minimum(np.maximum(x, lo), hi)


def _initial_point(mu: np.ndarray, box: BandConstraint) -> np.ndarray:
    with np.errstate(invalid="ignore"):  # -inf + inf on unconstrained edges
        mid = 0.5 * (box.lower + box.upper)
    fallback = np.clip(mu, box.lower, box.upper)
    return _clip_open(np.where(np.isfinite(mid), mid, fallback), box.lower, box.upper)


def sample_tmvn(
    mu,
    Sigma,
    box: BandConstraint,
    n_samples: int,
    burn_in: int = 200,
    seed=0,
    n_chains: Optional[int] = None,
    thinning: int = 1,
) -> np.ndarray:
    """Draws from N(mu, Sigma) conditioned on the box, by Gibbs sampling.

    Systematic-scan Gibbs over coordinates with exact univariate
    truncated-normal conditionals, run as several independent chains in
    parallel lanes off one counter-based stream. Output row s*C + c is
    kept sweep s of chain c, so the layout is deterministic given the
    seed. Every returned sample lies strictly inside the box.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    n = mu.size
    if Sigma.shape != (n, n):
        raise ValidationError(f"Sigma shape {Sigma.shape} does not match mu size {n}")
    if box.n != n:
        raise ValidationError(f"box size {box.n} does not match mu size {n}")
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
    if burn_in < 0:
        raise ValidationError(f"burn_in must be >= 0, got {burn_in}")
    if thinning < 1:
        raise ValidationError(f"thinning must be >= 1, got {thinning}")
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as err:
        raise NumericError(f"covariance not PD: {err}") from err
    P = cho_solve((L, True), np.eye(n))
    P = 0.5 * (P + P.T)
    p_diag = np.diag(P).copy()
    s_cond = 1.0 / np.sqrt(p_diag)

    if n_chains is None:
        n_chains = max(1, min(50, n_samples // 20))
    kept_sweeps = -(-n_samples // n_chains)  # ceil

    rng = np.random.Generator(np.random.Philox(seed))
    lower, upper = box.lower, box.upper
    z = np.tile(_initial_point(mu, box), (n_chains, 1))
    out = np.empty((kept_sweeps * n_chains, n))
    kept = 0

    total_sweeps = burn_in + kept_sweeps * thinning
    for sweep in range(total_sweeps):
        # w_i = sum_j P_ij (z_j - mu_j); refreshed per sweep, patched per move
        w = (z - mu) @ P
        for i in range(n):
            m = mu[i] + (z[:, i] - mu[i]) - w[:, i] / p_diag[i]
            lo = (lower[i] - m) / s_cond[i]
            hi = (upper[i] - m) / s_cond[i]
            if not np.all(lo < hi):  # also catches NaN
                raise NumericError(f"band unreachable at coordinate {i}")
            x = _sample_trunc_std(lo, hi, rng)
            z_new = _clip_open(m + s_cond[i] * x, lower[i], upper[i])
            w += np.outer(z_new - z[:, i], P[i])
            z[:, i] = z_new
        if np.any(z <= lower) or np.any(z >= upper):
            raise NumericError("Gibbs state left its box")
        if sweep >= burn_in and (sweep - burn_in) % thinning == 0:
            out[kept * n_chains : (kept + 1) * n_chains] = z
            kept += 1
    return out[:n_samples]


def conditional_second_moment(
    S_rho,
    box: BandConstraint,
    n_samples: int,
    seed=0,
    burn_in: int = 200,
    n_chains: Optional[int] = None,
    thinning: int = 1,
) -> MomentEstimate:
    """Q = E[z z^T | z in box] for z ~ N(0, S_rho), by Monte Carlo."""
    S_rho = np.atleast_2d(np.asarray(S_rho, dtype=float))
    draws = sample_tmvn(
        np.zeros(S_rho.shape[0]),
        S_rho,
        box,
        n_samples,
        burn_in=burn_in,
        seed=seed,
        n_chains=n_chains,
        thinning=thinning,
    )
    Q = draws.T @ draws / draws.shape[0]
    return MomentEstimate(Q=0.5 * (Q + Q.T), n_samples=n_samples, seed=seed)
