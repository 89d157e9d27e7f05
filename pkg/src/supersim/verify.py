"""Named verification checks, one per acceptance target.

Every check is addressable by name so CI (and the ``verify`` CLI
subcommand) can run subsets.  Checks are deterministic: seeds, grids and
tolerances are pinned module constants.  ``quick=True`` shrinks sample
sizes for smoke runs; the full configuration is the one that carries the
stated statistical guarantees.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import ModelParams, QueueState, derive_seed, make_stream
from .simulate import (SamplingPlan, Snapshot, TailEstimate, default_warmup,
                       estimate_tail, replicate_final_states, run_trajectory,
                       survival_time, verify_balance)
from .coupling import (audit_pair, fit_exponential_decay, mixing_profile)
from .meanfield import derivative, fixed_point, integrate, step_halving_error
from .oracle import (CappedChainSpec, build_generator, empirical_distribution,
                     exact_tv, stationary, tail_expectations, transient)
from .theory import (bound_max_tail, bound_survival, chernoff_2x,
                     chernoff_lower, chernoff_upper, d1_equilibrium_sample,
                     d1_max_cdf, poisson_tail, predicted_mode, predicted_tail)

__all__ = ["CheckResult", "CHECKS", "CHECK_NAMES", "run_checks"]


@dataclass
class CheckResult:
    check: str
    passed: bool
    observed: float
    expected: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def verdict(self) -> dict:
        """The five-field machine-readable verdict record."""
        return {
            "check": self.check,
            "passed": bool(self.passed),
            "observed": float(self.observed),
            "expected": float(self.expected),
            "tolerance": float(self.tolerance),
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.check}: observed={self.observed:.6g} "
                f"expected={self.expected:.6g} tol={self.tolerance:.6g} "
                f"({self.seconds:.1f}s) {self.detail}")


CHECKS: dict[str, Callable[[bool], CheckResult]] = {}


def _register(name: str):
    def deco(fn):
        CHECKS[name] = fn
        return fn
    return deco


# Equilibrium runs shared between checks (same key -> computed once).
_EQ_CACHE: dict[tuple, tuple[list[Snapshot], TailEstimate]] = {}


def _equilibrium_run(n: int, lam: float, d: int, interval: float, count: int,
                     seed: int) -> tuple[list[Snapshot], TailEstimate]:
    key = (n, lam, d, interval, count, seed)
    if key not in _EQ_CACHE:
        params = ModelParams(n=n, lam=lam, d=d)
        plan = SamplingPlan(warmup=default_warmup(params), interval=interval,
                            count=count)
        snaps = run_trajectory(params, QueueState.zeros(n), plan, seed=seed)
        _EQ_CACHE[key] = (snaps, estimate_tail(snaps))
    return _EQ_CACHE[key]


def _se_floor(count: int, hits: float, se: np.ndarray) -> np.ndarray:
    """Batch-means SE with a binomial floor for rarely-hit levels.

    Batch means underestimate the SE of a proportion whose event was seen
    only a handful of times; the floor is the Agresti-style adjusted
    binomial SE, which stays positive at zero observed hits.
    """
    p = (np.asarray(hits) + 2.0) / (count + 4.0)
    return np.maximum(se, np.sqrt(p * (1.0 - p) / count))


# --- 1. coupling contraction -------------------------------------------------

_AUDIT_HORIZONS = {0.3: 60.0, 0.5: 80.0, 0.9: 150.0}


@_register("coupling-contraction")
def check_coupling_contraction(quick: bool = False) -> CheckResult:
    """Per-event audit of the two-copy coupling on random state pairs.

    Pair mix per (lam, d) cell: one third ordered (y >= x coordinatewise),
    one third adjacent (y = x plus a single customer), one third
    independent.  Zero tolerance: any monotonicity or absorption violation
    fails the check.
    """
    t0 = time.time()
    n, max_len = 50, 20
    total_pairs = 90 if quick else 1000
    combos = [(lam, d) for lam in (0.3, 0.5, 0.9) for d in (1, 2, 3)]
    base, extra = divmod(total_pairs, len(combos))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((111, 0))))
    viol = 0
    coalesced = 0
    pairs = 0
    for ci, (lam, d) in enumerate(combos):
        params = ModelParams(n=n, lam=lam, d=d)
        horizon = _AUDIT_HORIZONS[lam]
        for j in range(base + (1 if ci < extra else 0)):
            xl = rng.integers(0, max_len + 1, size=n)
            kind = j % 3
            if kind == 0:
                yl = np.minimum(xl + rng.integers(0, 6, size=n), max_len)
            elif kind == 1:
                yl = xl.copy()
                yl[rng.integers(0, n)] += 1
            else:
                yl = rng.integers(0, max_len + 1, size=n)
            stream = make_stream(params, derive_seed(111, ci, j),
                                 horizon=horizon)
            audit = audit_pair(QueueState.from_lengths(xl),
                               QueueState.from_lengths(yl), stream,
                               horizon=horizon)
            viol += (audit.l1_violations + audit.linf_violations
                     + audit.order_violations + audit.absorb_violations)
            coalesced += audit.coalescence_time is not None
            pairs += 1
    return CheckResult(
        check="coupling-contraction", passed=viol == 0, observed=float(viol),
        expected=0.0, tolerance=0.0, seconds=time.time() - t0,
        detail=f"pairs={pairs} coalesced={coalesced} violations={viol}")


# --- 2/3. oracle equivalence -------------------------------------------------

_ORACLE_SPEC = dict(n=2, lam=0.5, d=2, cap=12)


@_register("oracle-stationary")
def check_oracle_stationary(quick: bool = False) -> CheckResult:
    """Simulated equilibrium tail vs the exact stationary tail at n=2."""
    t0 = time.time()
    spec = CappedChainSpec(**_ORACLE_SPEC)
    q = build_generator(spec)
    pi = stationary(spec, q)
    residual = float(np.max(np.abs(q.T @ pi)))
    exact = tail_expectations(spec, pi)

    count = 20_000 if quick else 100_000
    snaps, est = _equilibrium_run(spec.n, spec.lam, spec.d, interval=1.0,
                                  count=count, seed=101)
    levels = min(spec.cap, len(est.u) - 1)
    u_hat = est.u[1:levels + 1]
    se = _se_floor(count, u_hat * count, est.se[1:levels + 1])
    dev = np.abs(u_hat - exact.u[1:levels + 1])
    worst = float(np.max(dev / se))
    passed = worst <= 3.0 and residual < 1e-12
    return CheckResult(
        check="oracle-stationary", passed=passed, observed=worst,
        expected=0.0, tolerance=3.0, seconds=time.time() - t0,
        detail=(f"worst |u_hat-u_pi|/SE over k=1..{levels}; generator "
                f"residual={residual:.2e} (<1e-12); samples={count}"))


@_register("oracle-transient")
def check_oracle_transient(quick: bool = False) -> CheckResult:
    """TV between simulated replicas at t=2 and the uniformization law."""
    t0 = time.time()
    spec = CappedChainSpec(**_ORACLE_SPEC)
    params = ModelParams(n=spec.n, lam=spec.lam, d=spec.d)
    replicas = 20_000 if quick else 100_000
    t = 2.0
    finals = replicate_final_states(params, QueueState.zeros(spec.n), t,
                                    seed=303, replicas=replicas)
    emp = empirical_distribution(spec, finals)
    p_t = transient(spec, (0, 0), t)
    tv = exact_tv(emp, p_t)
    return CheckResult(
        check="oracle-transient", passed=tv <= 0.03, observed=tv,
        expected=0.0, tolerance=0.03, seconds=time.time() - t0,
        detail=f"replicas={replicas}, t={t}; noise budget ~0.015")


# --- 4. d=1 exact stationary law ---------------------------------------------

def _ks_against_max_law(max_values: np.ndarray, n: int, lam: float) -> float:
    ms = np.arange(0, int(max_values.max()) + 2)
    cdf = np.array([d1_max_cdf(n, lam, int(m)) for m in ms])
    ecdf = np.searchsorted(np.sort(max_values), ms, side="right") / len(max_values)
    return float(np.max(np.abs(ecdf - cdf)))


@_register("d1-exact-law")
def check_d1_exact_law(quick: bool = False) -> CheckResult:
    """Maximum-length CDF at d=1: exact sampler and simulator vs closed form."""
    t0 = time.time()
    n, lam = 100, 0.5
    n_exact = 2_000 if quick else 10_000
    maxima = np.empty(n_exact)
    for i in range(n_exact):
        maxima[i] = d1_equilibrium_sample(n, lam, derive_seed(404, i)).max_len
    ks_exact = _ks_against_max_law(maxima, n, lam)

    count = 300 if quick else 1000
    snaps, _ = _equilibrium_run(n, lam, 1, interval=25.0, count=count,
                                seed=405)
    sim_max = np.array([s.max_len for s in snaps])
    ks_sim = _ks_against_max_law(sim_max, n, lam)

    worst = max(ks_exact / 0.02, ks_sim / 0.05)
    return CheckResult(
        check="d1-exact-law", passed=worst <= 1.0, observed=worst,
        expected=0.0, tolerance=1.0, seconds=time.time() - t0,
        detail=(f"normalized max of KS_exact={ks_exact:.4f} (tol 0.02, "
                f"{n_exact} samples) and KS_sim={ks_sim:.4f} (tol 0.05, "
                f"{count} snapshots)"))


# --- 5/6/8. the shared large equilibrium run ----------------------------------

def _main_run(quick: bool) -> tuple[list[Snapshot], TailEstimate, ModelParams]:
    if quick:
        n, count = 1000, 400
    else:
        n, count = 10_000, 2000
    snaps, est = _equilibrium_run(n, 0.7, 2, interval=2.0, count=count,
                                  seed=555)
    return snaps, est, ModelParams(n=n, lam=0.7, d=2)


@_register("balance-identity")
def check_balance_identity(quick: bool = False) -> CheckResult:
    """Stationary balance: lam E[u(i-1)^d] = E[u(i)] within 3 SE + 10/n."""
    t0 = time.time()
    snaps, est, params = _main_run(quick)
    report = verify_balance(snaps, params)
    worst = 0.0
    rows = []
    for i in range(1, 7):
        if i <= len(report.residual):
            res = abs(float(report.residual[i - 1]))
            tol = 3.0 * float(report.se[i - 1]) + 10.0 / params.n
        else:
            res, tol = 0.0, 10.0 / params.n
        worst = max(worst, res / tol)
        rows.append(f"i={i}:{res:.1e}/{tol:.1e}")
    u1_dev = abs(float(est.u[1]) - params.lam)
    worst = max(worst, u1_dev / 0.005)
    return CheckResult(
        check="balance-identity", passed=worst <= 1.0, observed=worst,
        expected=0.0, tolerance=1.0, seconds=time.time() - t0,
        detail=(f"worst residual/tolerance ratio; |u(1)-lam|={u1_dev:.5f} "
                f"(tol 0.005); " + " ".join(rows)))


@_register("tail-law")
def check_tail_law(quick: bool = False) -> CheckResult:
    """Equilibrium tails vs the doubly exponential law lam^(2^i - 1)."""
    t0 = time.time()
    snaps, est, params = _main_run(quick)
    worst = -math.inf
    for i in range(1, len(est.u)):
        dev = abs(float(est.u[i]) - predicted_tail(params.lam, params.d, i))
        worst = max(worst, dev - 3.0 * float(est.se[i]))
    return CheckResult(
        check="tail-law", passed=worst <= 0.01, observed=worst,
        expected=0.0, tolerance=0.01, seconds=time.time() - t0,
        detail=f"max_i(|u_hat(i) - lam^(2^i-1)| - 3 SE), i=1..{len(est.u)-1}")


@_register("equilibrium-domination")
def check_equilibrium_domination(quick: bool = False) -> CheckResult:
    """Tails below lam^i and max-length tail below n lam^k, up to 4 SE."""
    t0 = time.time()
    snaps, est, params = _main_run(quick)
    count = len(snaps)
    worst = -math.inf
    for i in range(1, len(est.u)):
        excess = float(est.u[i]) - params.lam ** i - 4.0 * float(est.se[i])
        worst = max(worst, excess)
    max_vals = np.array([s.max_len for s in snaps])
    for k in range(1, int(max_vals.max()) + 2):
        p = float((max_vals >= k).mean())
        se = float(_se_floor(count, p * count, np.zeros(1))[0])
        bound = min(1.0, bound_max_tail(params.n, params.lam, k))
        worst = max(worst, p - bound - 4.0 * se)
    return CheckResult(
        check="equilibrium-domination", passed=worst <= 0.0, observed=worst,
        expected=0.0, tolerance=0.0, seconds=time.time() - t0,
        detail="max excess of u_hat(i) over lam^i and Pr(M>=k) over n lam^k")


# --- 7. two-point concentration of the maximum --------------------------------

@_register("max-two-point")
def check_max_two_point(quick: bool = False) -> CheckResult:
    """Concentration of the equilibrium maximum on two adjacent values."""
    t0 = time.time()
    if quick:
        # n where the level above the predicted mode is essentially never
        # occupied; between ~6e3 and ~6e4 the finite-n law straddles three
        # values and the two-point statement only holds at larger n.
        n, count = 2000, 100
    else:
        n, count = 100_000, 500
    snaps, _ = _equilibrium_run(n, 0.7, 2, interval=5.0, count=count,
                                seed=707)
    max_vals = np.array([s.max_len for s in snaps])
    mode = predicted_mode(n, 0.7, 2)
    frac_two = float(np.isin(max_vals, (mode - 1, mode)).mean())
    center = math.log(math.log(n)) / math.log(2.0)
    frac_band = float((np.abs(max_vals - center) <= 4.0).mean())
    passed = frac_two >= 0.90 and frac_band >= 0.99
    return CheckResult(
        check="max-two-point", passed=passed, observed=frac_two,
        expected=0.90, tolerance=0.0, seconds=time.time() - t0,
        detail=(f"fraction with M in {{{mode-1},{mode}}} (need >=0.90); "
                f"fraction with |M-{center:.3f}|<=4 is {frac_band:.4f} "
                f"(need >=0.99); snapshots={count}"))


# --- 9/10. mixing bounds -------------------------------------------------------

@_register("mixing-upper")
def check_mixing_upper(quick: bool = False) -> CheckResult:
    """Coupled-pair disagreement decays exponentially and is gone by t*."""
    t0 = time.time()
    params = ModelParams(n=1000, lam=0.7, d=2)
    t_star = 40.0 * math.log(params.n) / (1.0 - params.lam)
    if quick:
        replicas, step = 80, 5.0
    else:
        replicas, step = 500, 2.5
    grid = np.append(np.arange(0.0, 60.0 + step / 2, step), t_star)
    prof = mixing_profile(params, grid, replicas=replicas, seed_base=909)
    p_end = float(prof.pr_neq[-1])
    try:
        fit = fit_exponential_decay(prof.t, prof.pr_neq, lo=0.02, hi=0.9)
        r2, rate, pts = fit.r2, fit.rate, fit.points
    except ValueError:
        r2, rate, pts = math.nan, math.nan, 0
    passed = p_end <= 0.05 and r2 >= 0.95
    return CheckResult(
        check="mixing-upper", passed=passed, observed=p_end,
        expected=0.0, tolerance=0.05, seconds=time.time() - t0,
        detail=(f"Pr(X!=Y) at t*={t_star:.0f} (tol 0.05); log-scale fit "
                f"R^2={r2:.4f} (need >=0.95), rate={rate:.3f}, "
                f"{pts} points in [0.02,0.9]; replicas={replicas}"))


@_register("mixing-lower")
def check_mixing_lower(quick: bool = False) -> CheckResult:
    """Early-time deficit lam - u_t(1) stays above lam e^(-(1+lam d)t)."""
    t0 = time.time()
    params = ModelParams(n=1000, lam=0.7, d=2)
    replicas = 150 if quick else 500
    grid = np.arange(0.0, 3.0 + 1e-9, 0.25)
    prof = mixing_profile(params, grid, replicas=replicas, seed_base=505,
                          warmup=0.0)
    margin = prof.deficit + 3.0 * prof.se_deficit - prof.bound_lower
    worst = float(np.min(margin))
    # At t=0 both sides equal lam exactly; allow rounding noise from the
    # replica average.
    passed = worst >= -1e-9
    k = int(np.argmin(margin))
    return CheckResult(
        check="mixing-lower", passed=passed, observed=worst,
        expected=0.0, tolerance=1e-9, seconds=time.time() - t0,
        detail=(f"min over grid of deficit+3SE-bound, at t={prof.t[k]:.2f}; "
                f"replicas={replicas}, empty start"))


# --- 11. survival bound --------------------------------------------------------

@_register("survival-bound")
def check_survival_bound(quick: bool = False) -> CheckResult:
    """Fraction of replicas retaining an initial customer vs 2n e^(-alpha t)."""
    t0 = time.time()
    n, lam = 100, 0.5
    params = ModelParams(n=n, lam=lam, d=1)
    replicas = 400 if quick else 2000
    ts = (20.0, 40.0, 60.0)
    times = np.empty(replicas)
    censored = np.zeros(replicas, dtype=bool)
    for r in range(replicas):
        x0 = d1_equilibrium_sample(n, lam, derive_seed(606, r, 0))
        stream = make_stream(params, derive_seed(606, r, 1), horizon=ts[-1])
        rec = survival_time(x0, stream)
        times[r] = rec.time
        censored[r] = rec.censored
    worst = -math.inf
    rows = []
    for t in ts:
        frac = float((censored | (times > t)).mean())
        se = math.sqrt(max(frac * (1 - frac), 0.25 / replicas) / replicas)
        bound = min(1.0, bound_survival(n, lam, t))
        worst = max(worst, frac - bound - 3.0 * se)
        rows.append(f"t={t:.0f}:{frac:.4f}<={bound:.4f}")
    return CheckResult(
        check="survival-bound", passed=worst <= 0.0, observed=worst,
        expected=0.0, tolerance=0.0, seconds=time.time() - t0,
        detail=(f"max excess of survivor fraction over bound+3SE; "
                + " ".join(rows) + f"; replicas={replicas}"))


# --- 12. mean-field ------------------------------------------------------------

@_register("meanfield")
def check_meanfield(quick: bool = False) -> CheckResult:
    """Fixed point, ODE convergence, step-halving, and simulator agreement."""
    t0 = time.time()
    lam, d, K, T = 0.5, 2, 12, 50.0
    fp = fixed_point(lam, d, K)
    resid = float(np.max(np.abs(derivative(fp.v, lam, d))))

    dt = 0.02 if quick else 0.01
    traj = integrate(np.zeros(K), lam, d, T, dt=dt)
    conv = float(np.max(np.abs(traj.final - fp.v)))
    halving = step_halving_error(np.zeros(K), lam, d, T, dt=dt)

    if quick:
        n, count = 1000, 400
    else:
        n, count = 10_000, 2000
    snaps, est = _equilibrium_run(n, lam, d, interval=2.0, count=count,
                                  seed=1212)
    v_ext = np.concatenate([fp.v, np.zeros(max(0, len(est.u) - 1 - K))])
    tail_worst = -math.inf
    for i in range(1, len(est.u)):
        dev = abs(float(est.u[i]) - v_ext[i - 1])
        tail_worst = max(tail_worst, dev - 3.0 * float(est.se[i]))

    worst = max(resid / 1e-12, conv / 1e-6, halving / 1e-9,
                tail_worst / 0.01)
    return CheckResult(
        check="meanfield", passed=worst <= 1.0, observed=worst,
        expected=0.0, tolerance=1.0, seconds=time.time() - t0,
        detail=(f"worst normalized part: residual={resid:.1e} (<1e-12), "
                f"convergence at T={T:.0f} ={conv:.1e} (<1e-6), "
                f"step-halving={halving:.1e} (<1e-9), "
                f"sim tail excess={tail_worst:.1e} (<0.01)"))


# --- 13. Chernoff utilities ----------------------------------------------------

@_register("chernoff")
def check_chernoff(quick: bool = False) -> CheckResult:
    """Closed-form bounds dominate the exact Poisson tails on a grid."""
    t0 = time.time()
    mus = (0.5, 1.0, 5.0, 20.0, 50.0)
    eps_grid = np.arange(0.05, 1.0 + 1e-9, 0.05)
    worst = math.inf
    points = 0
    for mu in mus:
        for eps in eps_grid:
            k = math.floor(mu * (1.0 - eps) + 1e-9)
            exact_low = 1.0 - poisson_tail(mu, k + 1) if k >= 0 else 0.0
            worst = min(worst, chernoff_lower(mu, float(eps)) - exact_low)
            x_up = math.ceil(mu * (1.0 + eps) - 1e-9)
            worst = min(worst, chernoff_upper(mu, float(eps))
                        - poisson_tail(mu, x_up))
            points += 2
        x0 = math.ceil(2.0 * math.e * mu - 1e-9)
        for x in range(x0, x0 + 10):
            worst = min(worst, chernoff_2x(mu, float(x))
                        - poisson_tail(mu, x))
            points += 1
    return CheckResult(
        check="chernoff", passed=worst >= 0.0, observed=worst,
        expected=0.0, tolerance=0.0, seconds=time.time() - t0,
        detail=f"min margin bound-exact over {points} grid points")


CHECK_NAMES = list(CHECKS)


def run_checks(names: Optional[Sequence[str]] = None,
               quick: bool = False) -> list[CheckResult]:
    """Run the selected checks (all when ``names`` is None), in order."""
    if names is None:
        names = CHECK_NAMES
    unknown = [m for m in names if m not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}; "
                       f"available: {', '.join(CHECK_NAMES)}")
    return [CHECKS[m](quick) for m in names]
