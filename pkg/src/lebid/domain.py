"""Core domain types and dataset file I/O.

All containers are immutable after construction and validate their
invariants eagerly, so the numerical code downstream can assume
well-formed data. Sequences are stored as tuples of floats, which keeps
the types hashable and comparable by value.

Index convention: output samples are numbered i = 1..N and refer to the
fast-grid instants t = i*delta. The sample at t = 0 is dropped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

from .errors import ValidationError

__all__ = [
    "SamplingConfig",
    "ZohInput",
    "BandSequence",
    "Hyperparameters",
    "Dataset",
    "save_dataset",
    "load_dataset",
]

SCHEMA_VERSION = 1

# slack for "is an exact multiple" checks on quantities stored as floats
_GRID_RTOL = 1e-9


def _as_float_tuple(xs) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


def _multiple_of(value: float, base: float) -> Optional[int]:
    """Integer q with value = q*base up to rounding, or None."""
    ratio = value / base
    q = round(ratio)
    if abs(ratio - q) <= _GRID_RTOL * max(1.0, abs(ratio)):
        return int(q)
    return None


@dataclass(frozen=True)
class SamplingConfig:
    """Fast detection period, threshold spacing, and crossing-grid refinement.

    Parameters
    ----------
    delta : float
        Fast sampling period of the amplitude detection mechanism, seconds.
    h : float
        Spacing between adjacent amplitude thresholds.
    sim_substeps : int
        Subdivision of ``delta`` used for crossing detection; crossing
        instants need not fall on the ``delta`` grid.
    """

    delta: float
    h: float
    sim_substeps: int = 20

    def __post_init__(self):
        if not (self.delta > 0):
            raise ValidationError(f"delta must be > 0, got {self.delta}")
        if not (self.h > 0):
            raise ValidationError(f"h must be > 0, got {self.h}")
        if int(self.sim_substeps) != self.sim_substeps or self.sim_substeps < 1:
            raise ValidationError(f"sim_substeps must be an integer >= 1, got {self.sim_substeps}")
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "sim_substeps", int(self.sim_substeps))

    @property
    def fine_step(self) -> float:
        return self.delta / self.sim_substeps


@dataclass(frozen=True)
class ZohInput:
    """Piecewise-constant causal input from a zero-order hold.

    u(t) = amplitudes[k] on [k*delta_u, (k+1)*delta_u) and 0 outside
    [0, len(amplitudes)*delta_u). The hold period must be an integer
    multiple of the fast period delta wherever the two meet; that check
    lives in :meth:`hold_substeps` because the input alone does not know
    delta.
    """

    delta_u: float
    amplitudes: tuple[float, ...]
    t0: float = 0.0

    def __post_init__(self):
        if not (self.delta_u > 0):
            raise ValidationError(f"delta_u must be > 0, got {self.delta_u}")
        amps = _as_float_tuple(self.amplitudes)
        if len(amps) == 0:
            raise ValidationError("amplitudes must be nonempty")
        if float(self.t0) != 0.0:
            raise ValidationError(f"t0 must be 0, got {self.t0}")
        object.__setattr__(self, "delta_u", float(self.delta_u))
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "t0", 0.0)

    @property
    def n_holds(self) -> int:
        return len(self.amplitudes)

    @property
    def support_end(self) -> float:
        return self.n_holds * self.delta_u

    def value_at(self, t: float) -> float:
        """u(t) for a scalar time; 0 outside the support."""
        if t < 0.0 or t >= self.support_end:
            return 0.0
        return self.amplitudes[int(t // self.delta_u)]

    def hold_substeps(self, delta: float) -> int:
        """delta_u / delta as an exact integer, or a validation error."""
        q = _multiple_of(self.delta_u, delta)
        if q is None or q < 1:
            raise ValidationError(
                f"delta_u={self.delta_u} is not an integer multiple of delta={delta}"
            )
        return q


@dataclass(frozen=True)
class BandSequence:
    """Set-valued output: band i is [eta[i], eta[i]+h), lower-inclusive.

    Entry i (0-based) corresponds to the fast-grid instant (i+1)*delta.
    Every lower edge must sit on the threshold grid {m*h : m integer}.
    """

    eta: tuple[float, ...]
    h: float
    delta: float

    def __post_init__(self):
        if not (self.h > 0):
            raise ValidationError(f"h must be > 0, got {self.h}")
        if not (self.delta > 0):
            raise ValidationError(f"delta must be > 0, got {self.delta}")
        eta = _as_float_tuple(self.eta)
        if len(eta) == 0:
            raise ValidationError("eta must be nonempty")
        for i, e in enumerate(eta):
            if _multiple_of(e, self.h) is None:
                raise ValidationError(f"eta not on grid: eta[{i}]={e} with h={self.h}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return len(self.eta)

    def contains(self, i: int, z: float) -> bool:
        """Whether z lies in band i, lower-inclusive upper-exclusive."""
        return self.eta[i] <= z < self.eta[i] + self.h


@dataclass(frozen=True)
class Hyperparameters:
    """rho = (gamma, beta, sigma2): regularization weight, kernel decay,
    noise variance. The admissible set is the open positive octant."""

    gamma: float
    beta: float
    sigma2: float

    def __post_init__(self):
        for name in ("gamma", "beta", "sigma2"):
            v = float(getattr(self, name))
            if not (v > 0.0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be finite and > 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Dataset:
    """One identification experiment: input, set-valued output, extras.

    ``oracle_z`` is the unsampled noisy output z(i*delta) for i = 1..N.
    It exists only so an oracle baseline can be scored; a real sensor
    would never expose it. ``events`` holds the (t, value) stream of
    threshold crossings that produced the bands.
    """

    input: ZohInput
    bands: BandSequence
    oracle_z: Optional[tuple[float, ...]] = None
    events: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.oracle_z is not None:
            z = _as_float_tuple(self.oracle_z)
            if len(z) != self.bands.n:
                raise ValidationError(
                    f"oracle_z length {len(z)} does not match bands length {self.bands.n}"
                )
            for i, zi in enumerate(z):
                if not self.bands.contains(i, zi):
                    raise ValidationError(
                        f"oracle_z[{i}]={zi} outside its band "
                        f"[{self.bands.eta[i]}, {self.bands.eta[i] + self.bands.h})"
                    )
            object.__setattr__(self, "oracle_z", z)
        if self.events is not None:
            evs = tuple((float(t), float(v)) for t, v in self.events)
            for k in range(1, len(evs)):
                if not (evs[k][0] > evs[k - 1][0]):
                    raise ValidationError(
                        f"events not strictly increasing in t at index {k}"
                    )
            for k, (_, v) in enumerate(evs):
                if _multiple_of(v, self.bands.h) is None:
                    raise ValidationError(
                        f"event value not on grid: events[{k}] value {v} with h={self.bands.h}"
                    )
            object.__setattr__(self, "events", evs)

    @property
    def n(self) -> int:
        return self.bands.n


def _fmt(x) -> str:
    """Serialize a JSON-ready value; floats get 17 significant digits."""
    if x is None:
        return "null"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValidationError(f"cannot serialize non-finite value {x}")
        s = format(x, ".17g")
        # keep the value a JSON float: bare "-0" would reload as int 0
        if not any(ch in s for ch in ".eE"):
            s += ".0"
        return s
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_fmt(v)}" for k, v in x.items()) + "}"
    raise ValidationError(f"cannot serialize value of type {type(x).__name__}")


def dumps_json(doc: dict) -> str:
    """Render a nested dict as JSON with full-precision decimal floats."""
    return _fmt(doc) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset as self-describing JSON, bit-exact on reload.

    The full document is serialized before the file is opened, so an
    unwritable path leaves nothing behind.
    """
    doc = {
        "schema_version": SCHEMA_VERSION,
        "input": {
            "delta_u": ds.input.delta_u,
            "amplitudes": list(ds.input.amplitudes),
            "t0": ds.input.t0,
        },
        "bands": {
            "eta": list(ds.bands.eta),
            "h": ds.bands.h,
            "delta": ds.bands.delta,
        },
        "oracle_z": list(ds.oracle_z) if ds.oracle_z is not None else None,
        "events": [list(e) for e in ds.events] if ds.events is not None else None,
    }
    text = dumps_json(doc)
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as err:
        raise ValidationError(f"cannot write dataset to {str(path)!r}: {err}") from err


def load_dataset(path) -> Dataset:
    """Parse and validate a dataset file written by :func:`save_dataset`."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as err:
        raise ValidationError(f"cannot read dataset from {str(path)!r}: {err}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(f"invalid JSON in dataset file {str(path)!r}: {err}") from err

    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported dataset schema in {str(path)!r}: "
            f"expected schema_version={SCHEMA_VERSION}"
        )
    try:
        inp = doc["input"]
        bnd = doc["bands"]
        u = ZohInput(delta_u=inp["delta_u"], amplitudes=tuple(inp["amplitudes"]), t0=inp.get("t0", 0.0))
        bands = BandSequence(eta=tuple(bnd["eta"]), h=bnd["h"], delta=bnd["delta"])
        oracle = doc.get("oracle_z")
        events = doc.get("events")
        return Dataset(
            input=u,
            bands=bands,
            oracle_z=tuple(oracle) if oracle is not None else None,
            events=tuple((e[0], e[1]) for e in events) if events is not None else None,
        )
    except (KeyError, TypeError, IndexError) as err:
        raise ValidationError(f"malformed dataset file {str(path)!r}: {err}") from err
