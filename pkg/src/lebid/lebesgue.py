"""Lebesgue (level-crossing) sampler.

A signal z(t), observed on a fine grid of step delta/sim_substeps, is
recorded only when it crosses one of the thresholds {m*h}. Between
crossings the value is known only up to a band [eta, eta+h). This module
detects crossing events, tracks the band occupied at each fast-grid
instant, and provides the midpoint surrogate used by the Riemann-style
baseline estimator.

Conventions: a fine sample lying exactly on a threshold m*h belongs to the
upper band [m*h, m*h+h), matching quantize_band. Crossing instants are
located by linear interpolation between fine samples, so they need not be
multiples of delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import BandSequence, SamplingConfig
from .errors import ValidationError

__all__ = [
    "CrossingEvent",
    "quantize_band",
    "detect_events",
    "band_sequence",
    "bands_from_events",
    "midpoint_data",
    "event_compression_ratio",
]


@dataclass(frozen=True)
class CrossingEvent:
    """One recorded sample: time, threshold value m*h, threshold index m."""

    t: float
    value: float
    m: int


def _band_index(z: float, h: float) -> int:
    """Integer m with m*h <= z < (m+1)*h, robust to rounding of z/h."""
    m = math.floor(z / h)
    # the quotient can round across an exact boundary; nudge once
    if m * h > z:
        m -= 1
    elif z >= (m + 1) * h:
        m += 1
    return m


def quantize_band(z: float, h: float) -> float:
    """Lower edge of the band containing z: eta = h*floor(z/h).

    Lower-inclusive, upper-exclusive: z = m*h maps to eta = m*h.
    """
    if not (h > 0):
        raise ValidationError(f"h must be > 0, got {h}")
    if not math.isfinite(z):
        raise ValidationError(f"z must be finite, got {z}")
    return _band_index(z, h) * h


def detect_events(z_fine, step: float, h: float) -> list[CrossingEvent]:
    """Threshold-crossing events of a finely sampled signal.

    The first event is the initial condition at t = 0 (recorded at the lower
    edge of the starting band). After that, one event is emitted per
    threshold crossed between consecutive fine samples, located by linear
    interpolation; several thresholds crossed within one step yield one
    event each, in traversal order. Events are strictly increasing in time,
    so a crossing located exactly at the previous event's instant (e.g. a
    signal starting on a threshold and moving off it) is not duplicated.
    """
    z = np.asarray(z_fine, dtype=float)
    if z.size == 0:
        raise ValidationError("z_fine must be nonempty")
    if not (step > 0):
        raise ValidationError(f"step must be > 0, got {step}")
    if not (h > 0):
        raise ValidationError(f"h must be > 0, got {h}")

    cur = _band_index(z[0], h)
    events = [CrossingEvent(t=0.0, value=cur * h, m=cur)]
    last_t = 0.0
    for k in range(z.size - 1):
        z0, z1 = z[k], z[k + 1]
        nxt = _band_index(z[k + 1], h)
        if nxt == cur:
            continue
        if nxt > cur:
            crossed = range(cur + 1, nxt + 1)  # rising: thresholds cur+1 .. nxt
        else:
            crossed = range(cur, nxt, -1)  # falling: thresholds cur .. nxt+1
        for m in crossed:
            frac = (m * h - z0) / (z1 - z0)
            t_star = (k + frac) * step
            if t_star <= last_t:
                continue
            events.append(CrossingEvent(t=t_star, value=m * h, m=m))
            last_t = t_star
        cur = nxt
    return events


def band_sequence(z_fine, cfg: SamplingConfig) -> BandSequence:
    """Band occupied at each fast-grid instant i*delta, i = 1..N.

    z_fine must sample t = 0..N*delta at step delta/sim_substeps; the
    sample at t = 0 is dropped.
    """
    z = np.asarray(z_fine, dtype=float)
    sub = cfg.sim_substeps
    if z.size < sub + 1:
        raise ValidationError(
            f"z_fine must cover at least one fast period ({sub + 1} samples), got {z.size}"
        )
    n = (z.size - 1) // sub
    eta = tuple(quantize_band(z[i * sub], cfg.h) for i in range(1, n + 1))
    return BandSequence(eta=eta, h=cfg.h, delta=cfg.delta)


def bands_from_events(events, cfg: SamplingConfig, n: int) -> BandSequence:
    """Reconstruct the band at each instant i*delta from the event stream.

    The stream alone determines the band: the initial event fixes the
    starting band, and each later crossing of threshold m either enters
    band m from below (rising) or leaves it downward into band m-1
    (falling), decided by the band currently occupied. At a sample instant
    a rising crossing applies when t <= i*delta (the signal sits exactly on
    m*h, which belongs to the upper band), while a falling one applies only
    when t < i*delta (at the crossing instant the signal is still in band m).
    """
    evs = list(events)
    if not evs or evs[0].t != 0.0:
        raise ValidationError("event stream must start with the t=0 initial event")
    eta = []
    cur = evs[0].m
    pos = 1
    for i in range(1, n + 1):
        t_i = i * cfg.delta
        while pos < len(evs):
            ev = evs[pos]
            rising = ev.m == cur + 1
            if not rising and ev.m != cur:
                raise ValidationError(
                    f"event stream inconsistent at t={ev.t}: threshold {ev.m} "
                    f"not adjacent to current band {cur}"
                )
            if ev.t < t_i or (rising and ev.t == t_i):
                cur = ev.m if rising else ev.m - 1
                pos += 1
            else:
                break
        eta.append(cur * cfg.h)
    return BandSequence(eta=tuple(eta), h=cfg.h, delta=cfg.delta)


def midpoint_data(bands: BandSequence) -> np.ndarray:
    """Midpoint surrogate eta + h/2, one value per band."""
    return np.asarray(bands.eta) + 0.5 * bands.h


def event_compression_ratio(events, n: int) -> float:
    """Fraction of fast-grid samples actually transmitted: N_L / N."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    return len(list(events)) / n
