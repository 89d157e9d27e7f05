"""Closed-form predictions and probability bounds for the d-choice system.

Everything here is plain arithmetic on (n, lam, d): the two-point location
indices for the maximum queue length, the exact max-law for d=1, tail and
survival bounds, and Poisson concentration inequalities.  Powers of lam with
doubly-exponential exponents are evaluated in log space throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import QueueState

# Slack for >=/< comparisons whose two sides are computed through logs.
_LOG_EPS = 1e-9

_D1_SAMPLE_LABEL = 100


def tail_exponent(d: int, i: int) -> int:
    """Exact integer exponent e(i) = 1 + d + ... + d^(i-1) (0 when i=0)."""
    if i < 0:
        raise ValueError("level must be nonnegative")
    e = 0
    for _ in range(i):
        e = e * d + 1
    return e


def predicted_tail(lam: float, d: int, i: int) -> float:
    """Equilibrium tail value lam^e(i), evaluated safely in log space."""
    logv = tail_exponent(d, i) * math.log(lam)
    return math.exp(logv) if logv > -745.0 else 0.0


def _threshold(n: int) -> float:
    return math.log(n) ** 2 / math.sqrt(n)


def compute_i_d(n: int, lam: float, d: int) -> int:
    """Least i >= 0 with lam^e(i) < ln^2(n)/sqrt(n).

    Returns 0 in the small-n regime where the threshold exceeds 1."""
    if d < 2:
        raise ValueError("defined for d >= 2; use the d=1 calculators instead")
    if n < 2:
        raise ValueError("n must be at least 2")
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must lie in (0, 1)")
    log_thresh = math.log(_threshold(n))
    log_lam = math.log(lam)
    i = 0
    e = 0
    while e * log_lam >= log_thresh:
        i += 1
        e = e * d + 1
    return i


def compute_m_d(n: int, lam: float, d: int) -> int:
    """Two-point location index: i_2 + 1 when d=2, i_d for d >= 3."""
    if d == 1:
        raise ValueError("undefined for d=1; the exact d=1 law is available "
                         "via d1_max_cdf / d1_equilibrium_sample")
    i = compute_i_d(n, lam, d)
    return i + 1 if d == 2 else i


def pre_asymptotic(n: int, lam: float) -> bool:
    """True when ln^2(n)/sqrt(n) >= lam, i.e. the defining threshold is not
    yet meaningful at this n."""
    return _threshold(n) >= lam


def predicted_mode(n: int, lam: float, d: int) -> int:
    """Largest i whose expected level count n * lam^e(i) is still >= 1.

    This is the desk-scale location of the maximum: one level further the
    expected count collapses doubly exponentially."""
    if n < 1:
        raise ValueError("n must be positive")
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be a positive integer")
    log_n = math.log(n)
    log_lam = math.log(lam)
    i = 0
    e = 1
    while log_n + e * log_lam >= -_LOG_EPS:
        i += 1
        e = e * d + 1
    return i


def loglog_scale(n: int, d: int) -> float:
    """The ln ln n / ln d location scale (d >= 2)."""
    if d < 2:
        raise ValueError("scale defined for d >= 2")
    if n <= math.e:
        raise ValueError("n too small for ln ln n")
    return math.log(math.log(n)) / math.log(d)


def d1_max_cdf(n: int, lam: float, m: int) -> float:
    """Exact Pr(max <= m) = (1 - lam^(m+1))^n for the d=1 system."""
    if m < 0:
        return 0.0
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must lie in (0, 1)")
    log_p = (m + 1) * math.log(lam)
    p = math.exp(log_p) if log_p > -745.0 else 0.0
    return math.exp(n * math.log1p(-p)) if p < 1.0 else 0.0


def d1_equilibrium_sample(n: int, lam: float, seed: int) -> QueueState:
    """Exact stationary sample for d=1: n independent geometric lengths."""
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((seed, _D1_SAMPLE_LABEL))))
    lengths = rng.geometric(1.0 - lam, size=n) - 1
    return QueueState(lengths=lengths.astype(np.int64))


def bound_max_tail(n: int, lam: float, k: int) -> float:
    """Union bound n * lam^k on Pr(max >= k); may exceed 1 (vacuous)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return n * lam ** k


def survival_rate(lam: float) -> float:
    """Decay rate min(ln(1/lam)/4, 1/4) of the initial-customer survival bound."""
    return min(0.25 * math.log(1.0 / lam), 0.25)


def bound_survival(n: int, lam: float, t: float) -> float:
    """Bound 2n exp(-alpha t) on any initial customer remaining at time t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 2.0 * n * math.exp(-survival_rate(lam) * t)


def chernoff_lower(mu: float, eps: float) -> float:
    """Bound exp(-eps^2 mu / 2) on Pr(X <= (1 - eps) mu), Poisson mean mu."""
    _check_eps(mu, eps)
    return math.exp(-0.5 * eps * eps * mu)


def chernoff_upper(mu: float, eps: float) -> float:
    """Bound exp(-eps^2 mu / 3) on Pr(X >= (1 + eps) mu), Poisson mean mu."""
    _check_eps(mu, eps)
    return math.exp(-eps * eps * mu / 3.0)


def chernoff_2x(mu: float, x: float) -> float:
    """Bound 2^(-x) on Pr(X >= x), valid only for x >= 2 e mu."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if x < 2.0 * math.e * mu:
        raise ValueError(f"bound requires x >= 2 e mu = {2.0 * math.e * mu:.6g}, "
                         f"got x = {x}")
    return 2.0 ** (-x)


def _check_eps(mu: float, eps: float) -> None:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if not (0.0 <= eps <= 1.0):
        raise ValueError(f"eps must lie in [0, 1], got {eps}")


def poisson_tail(mu: float, x: int) -> float:
    """Exact Pr(X >= x) for Poisson mean mu, by direct term summation."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if x <= 0:
        return 1.0
    if mu == 0.0:
        return 0.0
    if x <= mu:
        # Sum the (short) lower tail and complement.
        term = math.exp(-mu)
        acc = term
        for k in range(1, x):
            term *= mu / k
            acc += term
        return max(0.0, 1.0 - acc)
    log_term = x * math.log(mu) - mu - math.lgamma(x + 1)
    term = math.exp(log_term) if log_term > -745.0 else 0.0
    acc = 0.0
    k = x
    while term > 0.0:
        acc += term
        k += 1
        term *= mu / k
        if term < acc * 1e-18:
            acc += term / (1.0 - mu / (k + 1))
            break
    return acc


@dataclass(frozen=True)
class PredictionReport:
    """Closed-form predictions for one (n, lam, d) configuration."""

    n: int
    lam: float
    d: int
    i_d: Optional[int]
    m_d: Optional[int]
    mode: int
    loglog: Optional[float]
    pre_asymptotic: bool
    tails: list[float] = field(default_factory=list)
    d1_max_cdf_table: Optional[dict[int, float]] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lambda": self.lam,
            "d": self.d,
            "i_d": self.i_d,
            "m_d": self.m_d,
            "predicted_mode": self.mode,
            "loglog_scale": self.loglog,
            "pre_asymptotic": self.pre_asymptotic,
            "predicted_tails": self.tails,
            "d1_max_cdf": ({str(m): v for m, v in self.d1_max_cdf_table.items()}
                           if self.d1_max_cdf_table is not None else None),
        }


def predict(n: int, lam: float, d: int, levels: Optional[int] = None) -> PredictionReport:
    """Assemble the full prediction report for one configuration."""
    mode = predicted_mode(n, lam, d)
    if levels is None:
        levels = mode + 3
    tails = [predicted_tail(lam, d, i) for i in range(levels + 1)]
    if d >= 2:
        report = PredictionReport(
            n=n, lam=lam, d=d,
            i_d=compute_i_d(n, lam, d), m_d=compute_m_d(n, lam, d),
            mode=mode, loglog=loglog_scale(n, d),
            pre_asymptotic=pre_asymptotic(n, lam), tails=tails,
            d1_max_cdf_table=None)
    else:
        table = {m: d1_max_cdf(n, lam, m) for m in range(mode + 4)}
        report = PredictionReport(
            n=n, lam=lam, d=d, i_d=None, m_d=None, mode=mode, loglog=None,
            pre_asymptotic=pre_asymptotic(n, lam), tails=tails,
            d1_max_cdf_table=table)
    return report
