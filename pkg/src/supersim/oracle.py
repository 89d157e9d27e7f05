"""Exact analysis of tiny capped systems: generator, stationary law, transients.

States are length vectors in {0..C}^n indexed lexicographically with the
first queue most significant.  Arrivals into a queue already at the cap are
blocked (the customer is lost); the resulting truncation error is measured
by the stationary mass on boundary states and reported alongside results.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve as dense_solve
from scipy.stats import poisson

from .model import QueueState

MAX_STATES = 10 ** 6
DENSE_LIMIT = 10 ** 4
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class CappedChainSpec:
    """Finite chain: n queues, d choices, per-queue arrival rate lam, cap C."""

    n: int
    lam: float
    d: int
    cap: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive integers")
        if not (0.0 < self.lam < 1.0):
            raise ValueError("lam must lie in (0, 1)")
        if self.cap < 0:
            raise ValueError("cap must be nonnegative")
        if (self.cap + 1) ** self.n > MAX_STATES:
            raise ValueError(
                f"state space (cap+1)^n = {(self.cap + 1) ** self.n} exceeds "
                f"the hard limit {MAX_STATES}")

    @property
    def n_states(self) -> int:
        return (self.cap + 1) ** self.n

    @cached_property
    def states(self) -> np.ndarray:
        """All states as an (S, n) array in index order."""
        shape = (self.cap + 1,) * self.n
        grids = np.unravel_index(np.arange(self.n_states), shape)
        return np.stack(grids, axis=1).astype(np.int64)

    def state_index(self, x: Sequence[int]) -> int:
        x = np.asarray(x, dtype=np.int64)
        if len(x) != self.n or np.any(x < 0) or np.any(x > self.cap):
            raise ValueError(f"state {x} outside {{0..{self.cap}}}^{self.n}")
        return int(np.ravel_multi_index(tuple(x), (self.cap + 1,) * self.n))

    def index_state(self, idx: int) -> tuple[int, ...]:
        return tuple(int(v) for v in
                     np.unravel_index(idx, (self.cap + 1,) * self.n))


def choice_probabilities(lengths: Sequence[int], n: int, d: int) -> np.ndarray:
    """Probability each queue wins an arrival, by exhaustive tuple enumeration.

    All n^d ordered choice tuples are resolved with the first-listed-minimum
    rule and averaged; this doubles as the ground truth for the tie-break.
    """
    x = np.asarray(lengths, dtype=np.int64)
    tuples = np.indices((n,) * d).reshape(d, -1).T
    lens = x[tuples]
    win_pos = np.argmin(lens, axis=1)
    winners = tuples[np.arange(len(tuples)), win_pos]
    return np.bincount(winners, minlength=n) / float(n ** d)


def build_generator(spec: CappedChainSpec) -> sp.csr_matrix:
    """Rate matrix Q of the capped chain (rows sum to zero)."""
    n, d, lam, C = spec.n, spec.d, spec.lam, spec.cap
    S = spec.n_states
    states = spec.states
    strides = [(C + 1) ** (n - 1 - j) for j in range(n)]
    rows: list[int] = []
    cols: list[int] = []
    rates: list[float] = []
    arrival_total = lam * n
    for idx in range(S):
        x = states[idx]
        p = choice_probabilities(x, n, d)
        for j in range(n):
            if p[j] > 0.0 and x[j] < C:
                rows.append(idx)
                cols.append(idx + strides[j])
                rates.append(arrival_total * float(p[j]))
            if x[j] > 0:
                rows.append(idx)
                cols.append(idx - strides[j])
                rates.append(1.0)
    q = sp.coo_matrix((rates, (rows, cols)), shape=(S, S)).tocsr()
    q = q - sp.diags(np.asarray(q.sum(axis=1)).ravel())
    return q.tocsr()


def stationary(spec: CappedChainSpec,
               q: Union[sp.spmatrix, None] = None) -> np.ndarray:
    """Stationary distribution; dense solve when small, power method beyond."""
    if q is None:
        q = build_generator(spec)
    if spec.n_states <= DENSE_LIMIT:
        pi = _stationary_dense(q)
    else:
        pi = stationary_power(spec, q)
    resid = float(np.max(np.abs(q.T @ pi)))
    if resid >= RESIDUAL_TOL:
        raise RuntimeError(f"stationary solve residual {resid:.3e} exceeds "
                           f"{RESIDUAL_TOL:.0e}")
    return pi


def _stationary_dense(q: sp.spmatrix) -> np.ndarray:
    s = q.shape[0]
    a = q.toarray().T
    a[-1, :] = 1.0
    b = np.zeros(s)
    b[-1] = 1.0
    pi = dense_solve(a, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_power(spec: CappedChainSpec, q: Union[sp.spmatrix, None] = None,
                     tol: float = 1e-14, max_iter: int = 2_000_000) -> np.ndarray:
    """Power iteration on the uniformized jump matrix (sparse-friendly path)."""
    if q is None:
        q = build_generator(spec)
    s = q.shape[0]
    lam_max = float(np.max(-q.diagonal()))
    if lam_max == 0.0:
        return np.ones(s) / s
    rate = 1.05 * lam_max
    p_mat = (sp.eye(s, format="csr") + q.tocsr() / rate).T.tocsr()
    pi = np.full(s, 1.0 / s)
    for _ in range(max_iter):
        nxt = p_mat @ pi
        delta = float(np.abs(nxt - pi).sum())
        pi = nxt
        if delta < tol:
            break
    else:
        raise RuntimeError(f"power iteration did not reach {tol:.0e} within "
                           f"{max_iter} iterations (last delta {delta:.3e})")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _coerce_x0(spec: CappedChainSpec,
               x0: Union[int, Sequence[int], QueueState]) -> int:
    if isinstance(x0, QueueState):
        return spec.state_index(x0.lengths)
    if isinstance(x0, (int, np.integer)):
        if not (0 <= int(x0) < spec.n_states):
            raise ValueError(f"state index {x0} out of range")
        return int(x0)
    return spec.state_index(x0)


def transient(spec: CappedChainSpec, x0: Union[int, Sequence[int], QueueState],
              t: float, tol: float = 1e-12,
              q: Union[sp.spmatrix, None] = None) -> np.ndarray:
    """Distribution at time t from ``x0`` via uniformization.

    The Poisson mixture over jump counts is truncated once its remaining
    tail mass is below ``tol``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if q is None:
        q = build_generator(spec)
    s = q.shape[0]
    p0 = np.zeros(s)
    p0[_coerce_x0(spec, x0)] = 1.0
    lam_max = float(np.max(-q.diagonal()))
    mu = lam_max * t
    if mu == 0.0:
        return p0
    if mu > 1e7:
        raise ValueError(f"uniformization rate * t = {mu:.3e} too large; "
                         "split the horizon")
    k_hi = int(poisson.isf(tol / 10.0, mu)) + 10
    weights = poisson.pmf(np.arange(k_hi + 1), mu)
    covered = float(weights.sum())
    if covered < 1.0 - tol:
        raise RuntimeError(f"Poisson window mass {covered} below 1 - {tol:.0e}")
    p_mat = (sp.eye(s, format="csr") + q.tocsr() / lam_max).T.tocsr()
    vec = p0.copy()
    out = weights[0] * vec
    for k in range(1, k_hi + 1):
        vec = p_mat @ vec
        if weights[k] > 0.0:
            out += weights[k] * vec
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def exact_tv(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance between two distributions on one enumeration."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass(frozen=True)
class TailSummary:
    """Stationary tail expectations with the cap-truncation error indicator."""

    u: np.ndarray
    u_pow_d: np.ndarray
    boundary_mass: float


def tail_expectations(spec: CappedChainSpec, pi: np.ndarray) -> TailSummary:
    """E[u(k, X)] and E[u(k, X)^d] for k = 0..cap under distribution ``pi``."""
    states = spec.states
    levels = spec.cap + 1
    u = np.empty(levels)
    u_pow = np.empty(levels)
    for k in range(levels):
        uk = (states >= k).sum(axis=1) / spec.n
        u[k] = float(pi @ uk)
        u_pow[k] = float(pi @ uk ** spec.d)
    boundary = float(pi[(states == spec.cap).any(axis=1)].sum())
    return TailSummary(u=u, u_pow_d=u_pow, boundary_mass=boundary)


def max_length_cdf(spec: CappedChainSpec, pi: np.ndarray) -> np.ndarray:
    """Pr(max queue length <= m) for m = 0..cap under ``pi``."""
    states = spec.states
    return np.array([float(pi[(states <= m).all(axis=1)].sum())
                     for m in range(spec.cap + 1)])


def empirical_distribution(spec: CappedChainSpec,
                           lengths: np.ndarray) -> np.ndarray:
    """Histogram of sampled length vectors on the chain's state enumeration.

    Lengths above the cap are clipped onto the boundary; callers should
    treat visible boundary mass as a sign the cap is too small."""
    clipped = np.clip(lengths, 0, spec.cap)
    shape = (spec.cap + 1,) * spec.n
    idx = np.ravel_multi_index(tuple(clipped.T), shape)
    counts = np.bincount(idx, minlength=spec.n_states)
    return counts / counts.sum()
