"""Fixed-step ring history for delayed signal lookups."""

from __future__ import annotations

import math

import numpy as np

from .errors import HistoryUnderflowError, InvalidParameterError

__all__ = ["DelayBuffer"]


class DelayBuffer:
    """Uniform-step ring buffer of a vector-valued signal.

    Holds ceil(horizon/dt) + 2 samples, enough to cover a lookback window of
    one horizon from the newest sample.  The signal is defined to be exactly
    zero for t < 0; lookups between stored nodes interpolate linearly, and
    lookups outside [earliest stored, latest stored] (other than t < 0)
    raise HistoryUnderflowError.
    """

    def __init__(self, dt: float, horizon: float, dim: int):
        if dt <= 0:
            raise InvalidParameterError(f"dt must be positive, got {dt}")
        if horizon < 0:
            raise InvalidParameterError(f"horizon must be nonnegative, got {horizon}")
        if dim < 1:
            raise InvalidParameterError(f"dim must be at least 1, got {dim}")
        self.dt = float(dt)
        self.dim = int(dim)
        self.capacity = math.ceil(horizon / dt) + 2
        self._vals = np.zeros((self.capacity, dim), dtype=complex)
        self._head = -1          # ring index of the newest sample
        self._count = 0
        self._t_latest = None
        self._eps = 1e-9 * self.dt

    def __len__(self) -> int:
        return self._count

    @property
    def latest_time(self) -> float:
        if self._count == 0:
            raise HistoryUnderflowError("buffer is empty")
        return self._t_latest

    @property
    def earliest_time(self) -> float:
        if self._count == 0:
            raise HistoryUnderflowError("buffer is empty")
        return self._t_latest - (self._count - 1) * self.dt

    def append(self, t: float, value) -> None:
        """Append the sample at time t; times must advance by exactly dt."""
        value = np.asarray(value, dtype=complex)
        if value.shape != (self.dim,):
            raise InvalidParameterError(
                f"sample must have shape ({self.dim},), got {value.shape}")
        if self._count and abs(t - (self._t_latest + self.dt)) > self._eps:
            raise InvalidParameterError(
                f"samples must be spaced by dt={self.dt}; "
                f"got t={t} after t={self._t_latest}")
        self._head = (self._head + 1) % self.capacity
        self._vals[self._head] = value
        self._count = min(self._count + 1, self.capacity)
        self._t_latest = float(t)

    def _value_at_offset(self, i: int) -> np.ndarray:
        # sample i steps back from the newest one
        return self._vals[(self._head - i) % self.capacity]

    def lookup(self, t: float) -> np.ndarray:
        """Signal value at time t (linear interpolation between nodes)."""
        if t < -self._eps:
            return np.zeros(self.dim, dtype=complex)
        if self._count == 0:
            raise HistoryUnderflowError("buffer is empty")
        if t > self._t_latest + self._eps:
            raise HistoryUnderflowError(
                f"lookup at t={t} is ahead of the stored history "
                f"(latest {self._t_latest})")
        t_earliest = self.earliest_time
        if t < t_earliest - self._eps:
            raise HistoryUnderflowError(
                f"lookup at t={t} precedes the stored history "
                f"(earliest {t_earliest})")
        x = (self._t_latest - min(max(t, t_earliest), self._t_latest)) / self.dt
        i0 = int(math.floor(x + 1e-12))
        frac = x - i0
        if frac <= 1e-9:
            return self._value_at_offset(i0).copy()
        if i0 + 1 >= self._count:
            return self._value_at_offset(i0).copy()
        return ((1.0 - frac) * self._value_at_offset(i0)
                + frac * self._value_at_offset(i0 + 1))

    def window(self, lo: float, hi: float):
        """Quadrature nodes and samples covering [lo, hi].

        Returns (s, values) where s contains lo, every stored node strictly
        inside (lo, hi), and hi.  Endpoint values are interpolated; nodes at
        negative times evaluate to zero.
        """
        if hi < lo - self._eps:
            raise InvalidParameterError(f"window requires lo <= hi, got [{lo}, {hi}]")
        if hi <= self._eps and lo < 0:
            # entirely in the zero past
            s = np.array([lo, hi])
            return s, np.zeros((2, self.dim), dtype=complex)
        if self._count == 0:
            raise HistoryUnderflowError("buffer is empty")
        # stored grid nodes strictly inside (lo, hi); the grid extends to
        # negative times where the signal is identically zero
        k_lo = math.floor((lo - self._t_latest) / self.dt + 1e-9) + 1
        k_hi = math.ceil((hi - self._t_latest) / self.dt - 1e-9) - 1
        k = np.arange(k_lo, k_hi + 1)
        nodes = self._t_latest + self.dt * k
        inner = np.zeros((k.size, self.dim), dtype=complex)
        stored = nodes >= -self._eps
        offsets = -k[stored]
        if offsets.size and int(offsets.max()) > self._count - 1:
            raise HistoryUnderflowError(
                f"window [{lo}, {hi}] reaches before the stored history")
        inner[stored] = self._vals[(self._head - offsets) % self.capacity]
        s = np.concatenate([[lo], nodes, [hi]])
        vals = np.concatenate([[self.lookup(lo)], inner, [self.lookup(hi)]])
        return s, vals
