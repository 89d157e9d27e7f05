"""Deterministic large-system limit: tail-fraction ODE and its fixed point.

The tail fractions v(k) of an infinitely large system obey

    dv(k)/dt = lam * (v(k-1)^d - v(k)^d) - (v(k) - v(k+1)),   k >= 1,

with v(0) = 1.  The system is truncated at level K by setting v(K+1) = 0,
which is harmless once the fixed-point value at K is negligible: the fixed
point is v(k) = lam^((d^k - 1)/(d - 1)), which decays doubly exponentially
for d >= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

_MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class MeanFieldState:
    """Truncated tail-fraction vector v(1..K); v(0)=1 and v(K+1)=0 implied."""

    v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.v.ndim != 1 or len(self.v) == 0:
            raise ValueError("v must be a nonempty vector")
        check_monotone(self.v)

    @property
    def K(self) -> int:
        return len(self.v)


Values = Union[MeanFieldState, Sequence[float], np.ndarray]


def _values(v: Values) -> np.ndarray:
    if isinstance(v, MeanFieldState):
        return v.v
    return np.asarray(v, dtype=float)


def check_monotone(v: np.ndarray, tol: float = _MONOTONE_TOL) -> None:
    """Require 1 >= v(1) >= ... >= v(K) >= 0 up to ``tol``."""
    if v[0] > 1.0 + tol or v[-1] < -tol:
        raise ValueError(f"values outside [0, 1] beyond tolerance: {v}")
    drops = np.diff(v)
    worst = float(drops.max()) if len(drops) else 0.0
    if worst > tol:
        raise ValueError(f"tail values increase by {worst:.3e} (> {tol:.0e})")


def derivative(v: Values, lam: float, d: int) -> np.ndarray:
    """Right-hand side dv(k)/dt for k = 1..K with v(0)=1, v(K+1)=0."""
    vals = _values(v)
    full = np.concatenate(([1.0], vals, [0.0]))
    powers = full ** d
    k = np.arange(1, len(vals) + 1)
    return lam * (powers[k - 1] - powers[k]) - (full[k] - full[k + 1])


def fixed_point(lam: float, d: int, K: int) -> MeanFieldState:
    """Stationary tail vector v(k) = lam^((d^k - 1)/(d - 1)), k = 1..K.

    Exponents are kept as exact integers and the powers evaluated in log
    space, so values simply underflow to 0 instead of corrupting."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be a positive integer")
    log_lam = math.log(lam)
    out = np.empty(K)
    e = 0
    for k in range(1, K + 1):
        e = e * d + 1
        logv = e * log_lam
        out[k - 1] = math.exp(logv) if logv > -745.0 else 0.0
    return MeanFieldState(v=out)


def default_truncation(lam: float, d: int, tol: float = 1e-12,
                       k_max: int = 10_000) -> int:
    """Smallest K whose fixed-point value falls below ``tol``."""
    log_lam = math.log(lam)
    e = 0
    for k in range(1, k_max + 1):
        e = e * d + 1
        if e * log_lam < math.log(tol):
            return k
    raise ValueError(f"no truncation below {tol} within {k_max} levels")


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step integration output: times and the matrix of tail vectors."""

    times: np.ndarray
    values: np.ndarray

    def state(self, i: int) -> MeanFieldState:
        return MeanFieldState(v=self.values[i])

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def integrate(v0: Values, lam: float, d: int, T: float,
              dt: float = 0.01) -> Trajectory:
    """Classical fixed-step 4th-order integration of the tail ODE to time T.

    The monotonicity invariant is re-checked after every step; a violation
    beyond 1e-9 aborts with a diagnostic (the step size or truncation level
    is then unsuitable).  Fixed stepping keeps runs bit-reproducible.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    v = _values(v0).copy()
    check_monotone(v)
    steps = int(round(T / dt))
    out = np.empty((steps + 1, len(v)))
    out[0] = v
    for s in range(1, steps + 1):
        k1 = derivative(v, lam, d)
        k2 = derivative(v + 0.5 * dt * k1, lam, d)
        k3 = derivative(v + 0.5 * dt * k2, lam, d)
        k4 = derivative(v + dt * k3, lam, d)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        try:
            check_monotone(v)
        except ValueError as err:
            raise RuntimeError(
                f"integration lost monotonicity at step {s} (t={s * dt:.6g}, "
                f"dt={dt}, K={len(v)}): {err}") from err
        out[s] = v
    return Trajectory(times=dt * np.arange(steps + 1), values=out)


def step_halving_error(v0: Values, lam: float, d: int, T: float,
                       dt: float = 0.01) -> float:
    """Max difference at time T between integrations with steps dt and dt/2."""
    coarse = integrate(v0, lam, d, T, dt).final
    fine = integrate(v0, lam, d, T, dt / 2.0).final
    return float(np.max(np.abs(coarse - fine)))


def mass_rate(v: Values, lam: float, d: int) -> float:
    """Direct evaluation of d/dt sum_k v(k) = lam (1 - v(K)^d) - v(1)."""
    vals = _values(v)
    return float(lam * (1.0 - vals[-1] ** d) - vals[0])
