"""Trajectory driving, warm-up, spaced sampling, and equilibrium estimates."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .model import (EventStream, ModelParams, QueueState, derive_seed)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingPlan:
    """Warm-up period followed by ``count`` snapshots spaced ``interval`` apart."""

    warmup: float
    interval: float
    count: int

    def __post_init__(self) -> None:
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if self.interval <= 0:
            raise ValueError("interval must be positive")
        if self.count < 1:
            raise ValueError("count must be at least 1")

    @property
    def sample_times(self) -> np.ndarray:
        return self.warmup + self.interval * np.arange(self.count)

    @property
    def horizon(self) -> float:
        return float(self.warmup + self.interval * (self.count - 1))


def default_warmup(params: ModelParams) -> float:
    """Generous warm-up from the empty state: 40 max(ln n, 1)/(1 - lam)."""
    return 40.0 * max(math.log(params.n), 1.0) / (1.0 - params.lam)


def default_plan(params: ModelParams, count: int,
                 interval: float = 2.0) -> SamplingPlan:
    return SamplingPlan(warmup=default_warmup(params), interval=interval,
                        count=count)


@dataclass(frozen=True)
class Snapshot:
    """Observables of one sampled state: level counts, total mass, maximum."""

    t: float
    ell: np.ndarray
    total: int
    max_len: int

    @property
    def n(self) -> int:
        return int(self.ell[0])

    @property
    def u(self) -> np.ndarray:
        return self.ell / self.n


def snapshot_of(t: float, lengths: np.ndarray) -> Snapshot:
    n = len(lengths)
    mx = int(lengths.max())
    hist = np.bincount(lengths, minlength=mx + 1)
    ell = n - np.concatenate(([0], np.cumsum(hist[:-1])))
    return Snapshot(t=float(t), ell=ell.astype(np.int64),
                    total=int(lengths.sum()), max_len=mx)


def run_trajectory(params: ModelParams, x0: QueueState, plan: SamplingPlan,
                   seed: int, block_size: Optional[int] = None) -> list[Snapshot]:
    """Evolve ``x0`` and record a snapshot at each planned sample time."""
    if x0.n != params.n:
        raise ValueError(f"state has n={x0.n}, params expect n={params.n}")
    times = plan.sample_times
    if plan.horizon == 0.0:
        return [snapshot_of(0.0, x0.lengths)]
    stream = EventStream(params, seed, horizon=plan.horizon)
    lengths = x0.lengths.copy()
    cur = stream.cursor(plan.horizon, block_size=block_size)

    def apply(t, k, p, start, t_target):
        return _kernels.apply_events(lengths, t, k, p, start, t_target)

    out = []
    for t_k in times:
        cur.advance(float(t_k), apply)
        out.append(snapshot_of(float(t_k), lengths))
    return out


def _batch_edges(count: int, n_batches: Optional[int]) -> list[slice]:
    b = n_batches if n_batches is not None else min(40, count)
    b = max(1, min(b, count))
    bounds = np.linspace(0, count, b + 1).astype(int)
    return [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(b)]


def _batch_se(samples: np.ndarray, slices: list[slice]) -> tuple[np.ndarray, np.ndarray]:
    """Batch-means standard error for (possibly) autocorrelated sample rows."""
    means = np.stack([samples[s].mean(axis=0) for s in slices])
    if len(slices) < 2:
        return means, np.zeros(samples.shape[1])
    se = means.std(axis=0, ddof=1) / math.sqrt(len(slices))
    return means, se


@dataclass
class TailEstimate:
    """Per-level tail estimates with batch-means uncertainty.

    ``u[k]`` estimates the equilibrium fraction of queues of length >= k;
    ``u[0]`` is exactly 1.  ``batch_means``/``batch_sizes`` are retained so
    estimates from independent replicas can be merged associatively.
    """

    n: int
    count: int
    u: np.ndarray
    se: np.ndarray
    var: np.ndarray
    batch_means: np.ndarray
    batch_sizes: np.ndarray
    max_hist: dict[int, int]
    total_mean: float
    total_se: float

    def level_count(self) -> int:
        return len(self.u)


def _u_matrix(snapshots: Sequence[Snapshot], levels: int) -> np.ndarray:
    rows = np.zeros((len(snapshots), levels))
    for i, s in enumerate(snapshots):
        rows[i, :len(s.ell)] = s.ell / s.n
    return rows


def estimate_tail(snapshots: Sequence[Snapshot],
                  n_batches: Optional[int] = None) -> TailEstimate:
    """Summarize equilibrium snapshots into per-level tail estimates."""
    if len(snapshots) == 0:
        raise ValueError("need at least one snapshot")
    n = snapshots[0].n
    levels = max(s.max_len for s in snapshots) + 1
    mat = _u_matrix(snapshots, levels)
    slices = _batch_edges(len(snapshots), n_batches)
    means, se = _batch_se(mat, slices)
    totals = np.array([[s.total] for s in snapshots], dtype=float)
    _, tot_se = _batch_se(totals, slices)
    return TailEstimate(
        n=n,
        count=len(snapshots),
        u=mat.mean(axis=0),
        se=se,
        var=mat.var(axis=0, ddof=1) if len(snapshots) > 1 else np.zeros(levels),
        batch_means=means,
        batch_sizes=np.array([sl.stop - sl.start for sl in slices]),
        max_hist=dict(sorted(Counter(s.max_len for s in snapshots).items())),
        total_mean=float(totals.mean()),
        total_se=float(tot_se[0]),
    )


def merge_tail_estimates(parts: Sequence[TailEstimate]) -> TailEstimate:
    """Merge estimates from independent replicas (count-weighted)."""
    if not parts:
        raise ValueError("nothing to merge")
    n = parts[0].n
    if any(p.n != n for p in parts):
        raise ValueError("replicas disagree on n")
    levels = max(p.level_count() for p in parts)

    def pad(a: np.ndarray) -> np.ndarray:
        out = np.zeros((a.shape[0], levels))
        out[:, :a.shape[1]] = a
        return out

    bm = np.vstack([pad(p.batch_means) for p in parts])
    bs = np.concatenate([p.batch_sizes for p in parts])
    count = int(bs.sum())
    w = bs / count
    u = (bm * w[:, None]).sum(axis=0)
    se = (bm.std(axis=0, ddof=1) / math.sqrt(len(bs))
          if len(bs) > 1 else np.zeros(levels))
    var = np.zeros(levels)
    for p in parts:
        pv = np.zeros(levels)
        pu = np.zeros(levels)
        pv[:p.level_count()] = p.var
        pu[:p.level_count()] = p.u
        var += (p.count - 1) * pv + p.count * (pu - u) ** 2
    var = var / max(count - 1, 1)
    hist: Counter = Counter()
    for p in parts:
        hist.update(p.max_hist)
    tot_mean = sum(p.total_mean * p.count for p in parts) / count
    tot_se = math.sqrt(sum((p.total_se * p.count / count) ** 2 for p in parts))
    return TailEstimate(n=n, count=count, u=u, se=se, var=var, batch_means=bm,
                        batch_sizes=bs, max_hist=dict(sorted(hist.items())),
                        total_mean=tot_mean, total_se=tot_se)


@dataclass(frozen=True)
class BalanceReport:
    """Per-level residuals of the equilibrium arrival/departure balance."""

    levels: np.ndarray
    residual: np.ndarray
    se: np.ndarray
    non_equilibrium: bool


def verify_balance(snapshots: Sequence[Snapshot], params: ModelParams,
                   n_batches: Optional[int] = None) -> BalanceReport:
    """Residuals r(i) = lam * mean(u(i-1)^d) - mean(u(i)) with batch-means SE.

    In equilibrium every residual is zero in expectation; a warm-up of zero
    (first snapshot at t=0) or degenerate input is flagged since residuals
    then reflect transient bias rather than noise.
    """
    if len(snapshots) == 0:
        raise ValueError("need at least one snapshot")
    non_eq = False
    if snapshots[0].t == 0.0:
        logger.warning("verify_balance: snapshots start at t=0 (no warm-up); "
                       "residuals include transient bias")
        non_eq = True
    levels = max(s.max_len for s in snapshots) + 1
    mat = _u_matrix(snapshots, levels + 1)
    ks = np.arange(1, levels + 1)
    g = params.lam * mat[:, ks - 1] ** params.d - mat[:, ks]
    slices = _batch_edges(len(snapshots), n_batches)
    _, se = _batch_se(g, slices)
    if np.all(se == 0.0) and len(snapshots) > 1:
        non_eq = True
    return BalanceReport(levels=ks, residual=g.mean(axis=0), se=se,
                         non_equilibrium=non_eq)


def max_interval_extremes(params: ModelParams, x0: QueueState, horizon: float,
                          seed: int) -> tuple[int, int]:
    """Exact (min, max) of the maximum queue length over [0, horizon]."""
    if x0.n != params.n:
        raise ValueError(f"state has n={x0.n}, params expect n={params.n}")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    m0 = x0.max_len
    if horizon == 0.0:
        return m0, m0
    lengths = x0.lengths.copy()
    cap = max(64, 2 * m0 + 16)
    counts = np.zeros(cap, dtype=np.int64)
    got = np.bincount(lengths)
    counts[:len(got)] = got
    box = {"counts": counts, "cur": m0, "lo": m0, "hi": m0}
    stream = EventStream(params, seed, horizon=horizon)
    cur = stream.cursor(horizon)

    def apply(t, k, p, start, t_target):
        i = start
        while True:
            i, box["cur"], box["lo"], box["hi"], status = (
                _kernels.apply_events_extremes(
                    lengths, box["counts"], box["cur"], t, k, p, i, t_target,
                    box["lo"], box["hi"]))
            if status == 0:
                return i
            box["counts"] = np.concatenate(
                (box["counts"], np.zeros(len(box["counts"]), dtype=np.int64)))

    cur.advance(horizon, apply)
    return box["lo"], box["hi"]


@dataclass(frozen=True)
class SurvivalRecord:
    """When the last of the initial customers left the system (FIFO count-down)."""

    initial_lengths: np.ndarray
    time: float
    censored: bool

    @property
    def total_initial(self) -> int:
        return int(self.initial_lengths.sum())


def survival_time(x0: QueueState, stream: EventStream,
                  horizon: Optional[float] = None) -> SurvivalRecord:
    """Time the last initial customer departs; censored if past the horizon.

    Under FIFO the initial customers of queue j are exactly its first
    ``x0(j)`` departures, so only the selection events matter.
    """
    if x0.n != stream.params.n:
        raise ValueError(f"state has n={x0.n}, stream expects n={stream.params.n}")
    t_max = stream.horizon if horizon is None else float(horizon)
    remaining = x0.lengths.copy()
    n_active = int(np.count_nonzero(remaining))
    if n_active == 0:
        return SurvivalRecord(initial_lengths=x0.lengths.copy(), time=0.0,
                              censored=False)
    lengths = x0.lengths.copy()
    box = {"active": n_active, "gone": -1.0}
    cur = stream.cursor(t_max)

    def apply(t, k, p, start, t_target):
        i, box["active"], box["gone"] = _kernels.apply_events_survival(
            lengths, remaining, t, k, p, start, t_target,
            box["active"], box["gone"])
        return i

    cur.advance(t_max, apply)
    if box["active"] > 0:
        return SurvivalRecord(initial_lengths=x0.lengths.copy(), time=t_max,
                              censored=True)
    return SurvivalRecord(initial_lengths=x0.lengths.copy(),
                          time=float(box["gone"]), censored=False)


def replicate_final_states(params: ModelParams, x0: QueueState, t: float,
                           seed: int, replicas: int) -> np.ndarray:
    """Final length vectors of ``replicas`` independent runs to time ``t``."""
    out = np.empty((replicas, params.n), dtype=np.int64)
    for r in range(replicas):
        stream = EventStream(params, derive_seed(seed, r), horizon=t)
        lengths = x0.lengths.copy()
        cur = stream.cursor(t)

        def apply(tm, k, p, start, t_target):
            return _kernels.apply_events(lengths, tm, k, p, start, t_target)

        cur.advance(t, apply)
        out[r] = lengths
    return out
