"""Uniformly sampled concentration series and the grid rules they obey."""

import math

import numpy as np

from model.errors import DomainError, GridError
from model.types import PulseSpec
from utils import utils

CLAMP_TOLERANCE = 1e-12
CLAMP_WARNING = -1e-9


def clamp_nonnegative(values, tolerance=CLAMP_TOLERANCE, warn_below=CLAMP_WARNING, what=""):
    """
    Clamp negative floating-point residue to zero.

    Residue down to -tolerance is removed silently; anything below warn_below
    is reported since it points at a real numerical problem, not cancellation.
    """
    values = np.asarray(values, dtype=float)
    low = values.min(initial=0.0)
    if low < warn_below:
        utils.log(
            f"negative concentration {low:.3e} nM clamped to 0 {what}".rstrip(),
            severity="WARNING",
        )
    elif low < -tolerance:
        utils.log(
            f"negative residue {low:.3e} nM clamped to 0 {what}".rstrip(),
            severity="DEBUG",
        )
    return np.where(values < 0.0, 0.0, values)


class SignalTrace:
    """
    Concentration (nM) per sampling interval [t0 + k*ts, t0 + (k+1)*ts].

    Instances are immutable: the sample array is read-only and every operation
    returns a new trace.
    """

    __slots__ = ("_t0", "_ts", "_values")

    def __init__(self, values, ts: float, t0: float = 0.0, clamp: bool = True):
        if not ts > 0:
            raise DomainError(f"sampling step must be positive, got {ts}")
        arr = np.array(values, dtype=float)
        if arr.ndim != 1:
            raise DomainError("trace values must be one-dimensional")
        if clamp:
            arr = clamp_nonnegative(arr)
        elif arr.size and arr.min() < 0:
            raise DomainError("trace values must be non-negative")
        arr.setflags(write=False)
        self._t0 = float(t0)
        self._ts = float(ts)
        self._values = arr

    @classmethod
    def zeros(cls, n: int, ts: float, t0: float = 0.0):
        return cls(np.zeros(n), ts, t0)

    @classmethod
    def from_pulse(cls, pulse: PulseSpec, n: int, ts: float, t0: float = 0.0):
        """
        Per-interval dose delivered by a rectangular bath: amplitude * rate * overlap.

        Intervals only partly covered by the pulse receive the covered fraction.
        """
        edges = t0 + ts * np.arange(n + 1)
        lo = np.clip(edges[:-1], pulse.start, pulse.start + pulse.duration)
        hi = np.clip(edges[1:], pulse.start, pulse.start + pulse.duration)
        return cls(pulse.amplitude * pulse.release_rate * (hi - lo), ts, t0)

    @property
    def t0(self) -> float:
        return self._t0

    @property
    def ts(self) -> float:
        return self._ts

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self):
        return self._values.size

    def __repr__(self):
        return f"SignalTrace(n={len(self)}, ts={self._ts}, t0={self._t0})"

    def times(self) -> np.ndarray:
        """Left edge of every sampling interval."""
        return self._t0 + self._ts * np.arange(len(self))

    @property
    def horizon(self) -> float:
        return self._t0 + self._ts * len(self)

    def index_of(self, t: float) -> int:
        """Index of the interval containing time t."""
        k = int(math.floor((t - self._t0) / self._ts + 1e-9))
        if k < 0 or k >= len(self):
            raise DomainError(f"time {t} s lies outside the trace [{self._t0}, {self.horizon})")
        return k

    def same_grid(self, other: "SignalTrace") -> bool:
        return (
            math.isclose(self._t0, other._t0, rel_tol=0, abs_tol=1e-12)
            and math.isclose(self._ts, other._ts, rel_tol=1e-12)
            and len(self) == len(other)
        )

    def check_grid(self, other: "SignalTrace"):
        if not self.same_grid(other):
            raise GridError(f"incompatible traces: {self!r} vs {other!r}")

    def with_values(self, values) -> "SignalTrace":
        return SignalTrace(values, self._ts, self._t0)

    def __add__(self, other: "SignalTrace") -> "SignalTrace":
        self.check_grid(other)
        return self.with_values(self._values + other._values)

    def __radd__(self, other):
        # lets sum() start from 0
        if other == 0:
            return self
        return NotImplemented

    def scaled(self, factor: float) -> "SignalTrace":
        if factor < 0:
            raise DomainError("traces can only be scaled by non-negative factors")
        return self.with_values(self._values * factor)

    def delayed(self, k: int) -> "SignalTrace":
        """Shift right by k samples, keeping the length (zeros enter at the front)."""
        if k < 0:
            raise DomainError("delay must be non-negative")
        out = np.zeros_like(self._values)
        if k < len(self):
            out[k:] = self._values[: len(self) - k]
        return self.with_values(out)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self._values)

    def peak(self):
        """(time, value) of the maximum sample."""
        k = int(np.argmax(self._values))
        return self._t0 + k * self._ts, float(self._values[k])


def zero_like(trace: SignalTrace) -> SignalTrace:
    return SignalTrace.zeros(len(trace), trace.ts, trace.t0)


def grid_length(horizon: float, ts: float) -> int:
    """Number of intervals covering [0, horizon)."""
    if not ts > 0 or horizon < 0:
        raise DomainError("need ts > 0 and horizon >= 0")
    return int(math.ceil(horizon / ts - 1e-9))


def resample(trace: SignalTrace, new_ts: float) -> SignalTrace:
    """
    Move a trace onto a step that is an integer multiple or divisor of its own.

    Refining interpolates linearly between samples (the last sample is held);
    coarsening keeps the left point of every group. Samples on shared grid
    points are carried over exactly.
    """
    ts = trace.ts
    if not new_ts > 0:
        raise GridError(f"new step must be positive, got {new_ts}")
    if math.isclose(new_ts, ts, rel_tol=1e-12):
        return trace
    if new_ts < ts:
        factor = ts / new_ts
        f = int(round(factor))
        if f < 2 or not math.isclose(factor, f, rel_tol=1e-9):
            raise GridError(f"{new_ts} s does not divide {ts} s")
        old = trace.values
        n = len(old)
        if n == 0:
            return SignalTrace([], new_ts, trace.t0)
        positions = np.arange(n * f) / f
        refined = np.interp(positions, np.arange(n), old)
        # keep shared grid points bit-exact
        refined[::f] = old
        return SignalTrace(refined, new_ts, trace.t0)
    factor = new_ts / ts
    f = int(round(factor))
    if not math.isclose(factor, f, rel_tol=1e-9):
        raise GridError(f"{new_ts} s is not a multiple of {ts} s")
    return SignalTrace(trace.values[::f], new_ts, trace.t0)
