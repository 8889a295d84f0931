"""Independent oracles used by the test suite.

Everything here is deliberately written from first principles (series
expansions, quadrature, extended precision) and never calls the package's
analytic production paths, so agreement between the two is evidence of
correctness rather than tautology.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np


def taylor_expm(M: np.ndarray, terms: int = 30) -> np.ndarray:
    """Matrix exponential by truncated power series (no scaling tricks)."""
    M = np.asarray(M, dtype=float)
    acc = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ M / k
        acc = acc + term
    return acc


def gl_nodes(a: float, b: float, n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _zoh_value(u, t: float) -> float:
    """u(t) for a ZOH input described by (delta_u, amplitudes); causal."""
    if t < 0.0 or t >= u.delta_u * len(u.amplitudes):
        return 0.0
    return u.amplitudes[int(t // u.delta_u)]


def _breakpoints(u, i_delta: float) -> list[float]:
    """Sorted knots of xi -> u(i_delta - xi) on [0, i_delta]."""
    pts = {0.0, i_delta}
    m = 1
    while m * u.delta_u < i_delta:
        pts.add(i_delta - m * u.delta_u)
        m += 1
    return sorted(pts)


def _exp_max_rect_gl(x0, x1, y0, y1, beta, n=64) -> float:
    """Integral of exp(-beta*max(xi, tau)) over [x0,x1] x [y0,y1] by GL.

    One-sided rectangles use a tensor rule directly. A rectangle that
    straddles the diagonal is cut at the diagonal's entry/exit ordinates
    into one-sided pieces plus a square centered on the diagonal; on that
    square symmetry reduces the integral to a 1-D GL rule.
    """
    if x1 <= y0 or y1 <= x0:
        # fully one-sided: the integrand is smooth here
        xi, wx = gl_nodes(x0, x1, n)
        ta, wy = gl_nodes(y0, y1, n)
        vals = np.exp(-beta * np.maximum.outer(xi, ta))
        return float(wx @ vals @ wy)
    c0, c1 = max(x0, y0), min(x1, y1)
    total = 0.0
    # split x and y ranges at the diagonal square [c0,c1]^2
    for xa, xb in ((x0, c0), (c0, c1), (c1, x1)):
        if xb <= xa:
            continue
        for ya, yb in ((y0, c0), (c0, c1), (c1, y1)):
            if yb <= ya:
                continue
            if xa == c0 and xb == c1 and ya == c0 and yb == c1:
                # diagonal square: max is the larger coordinate, and by
                # symmetry the integral is 2 * int (tau - c0) e^{-b tau} dtau
                ta, wy = gl_nodes(c0, c1, n)
                total += float(wy @ (2.0 * (ta - c0) * np.exp(-beta * ta)))
            else:
                total += _exp_max_rect_gl(xa, xb, ya, yb, beta, n)
    return total


def gram_entry_gl(u, delta: float, beta: float, i: int, j: int, n: int = 64) -> float:
    """Output-kernel entry by 2-D Gauss-Legendre over ZOH rectangles.

    Integrates u(i*delta - xi) u(j*delta - tau) exp(-beta*max(xi, tau))
    over [0, i*delta] x [0, j*delta], splitting at the input breakpoints
    and the diagonal.
    """
    ti, tj = i * delta, j * delta
    bx = _breakpoints(u, ti)
    by = _breakpoints(u, tj)
    total = 0.0
    for x0, x1 in zip(bx[:-1], bx[1:]):
        ax = _zoh_value(u, ti - 0.5 * (x0 + x1))
        if ax == 0.0:
            continue
        for y0, y1 in zip(by[:-1], by[1:]):
            ay = _zoh_value(u, tj - 0.5 * (y0 + y1))
            if ay == 0.0:
                continue
            total += ax * ay * _exp_max_rect_gl(x0, x1, y0, y1, beta, n)
    return total


def representer_quad(u, delta: float, i: int, beta: float, t: float) -> float:
    """1-D adaptive quadrature of int u(i*delta - tau) exp(-beta*max(t,tau)) dtau."""
    from scipy.integrate import quad

    ti = i * delta
    knots = sorted(set(_breakpoints(u, ti) + [t]))
    knots = [k for k in knots if 0.0 <= k <= ti]
    if not knots or knots[0] > 0.0:
        knots = [0.0] + knots
    if knots[-1] < ti:
        knots = knots + [ti]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = quad(
            lambda tau: _zoh_value(u, ti - tau) * math.exp(-beta * max(t, tau)),
            a,
            b,
            limit=200,
        )
        total += val
    return total


def trunc_moments_mp(mu, sigma, a, b, dps: int = 50):
    """Extended-precision mean and second moment of N(mu, sigma^2) on (a, b).

    Works directly from the normal CDF/PDF in mpmath, so it stays accurate
    for bands tens of sigmas away from the mean.
    """
    if (b - mu) <= 0:  # reflect left-tail bands; erfc near 2 cancels badly
        m_mean, m_second = trunc_moments_mp(-mu, sigma, -b, -a, dps=dps)
        return -m_mean, m_second
    with mpmath.workdps(dps):
        mu_, s_, a_, b_ = map(mpmath.mpf, (mu, sigma, a, b))
        al = (a_ - mu_) / s_
        be = (b_ - mu_) / s_
        sq2 = mpmath.sqrt(2)
        z = (mpmath.erfc(al / sq2) - mpmath.erfc(be / sq2)) / 2
        phi = lambda x: mpmath.exp(-x * x / 2) / mpmath.sqrt(2 * mpmath.pi)
        r1 = (phi(al) - phi(be)) / z
        r2 = (al * phi(al) - be * phi(be)) / z
        mean = mu_ + s_ * r1
        second = mu_ * mu_ + 2 * mu_ * s_ * r1 + s_ * s_ * (1 + r2)
        return float(mean), float(second)


def band_logprob_mp(mu, sigma, a, b, dps: int = 50) -> float:
    """Extended-precision log of the band mass of N(mu, sigma^2) on (a, b)."""
    if (b - mu) <= 0:  # reflect left-tail bands; erfc near 2 cancels badly
        return band_logprob_mp(-mu, sigma, -b, -a, dps=dps)
    with mpmath.workdps(dps):
        mu_, s_, a_, b_ = map(mpmath.mpf, (mu, sigma, a, b))
        sq2 = mpmath.sqrt(2)
        al = (a_ - mu_) / s_
        be = (b_ - mu_) / s_
        mass = (mpmath.erfc(al / sq2) - mpmath.erfc(be / sq2)) / 2
        return float(mpmath.log(mass))


def tmvn_moments_2d(Sigma, lower, upper, n: int = 200):
    """Mean and second moment of a box-truncated zero-mean 2-D Gaussian.

    Tensor Gauss-Legendre over the box; fine for the well-conditioned
    covariances used in tests.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    P = np.linalg.inv(Sigma)
    x, wx = gl_nodes(lower[0], upper[0], n)
    y, wy = gl_nodes(lower[1], upper[1], n)
    X, Y = np.meshgrid(x, y, indexing="ij")
    quad_form = P[0, 0] * X * X + 2 * P[0, 1] * X * Y + P[1, 1] * Y * Y
    dens = np.exp(-0.5 * quad_form)
    W = np.outer(wx, wy)
    mass = float(np.sum(W * dens))
    mean = np.array(
        [float(np.sum(W * dens * X)), float(np.sum(W * dens * Y))]
    ) / mass
    second = (
        np.array(
            [
                [float(np.sum(W * dens * X * X)), float(np.sum(W * dens * X * Y))],
                [float(np.sum(W * dens * X * Y)), float(np.sum(W * dens * Y * Y))],
            ]
        )
        / mass
    )
    return mean, second


def golden_section_min(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Golden-section search for the minimizer of a unimodal f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)
