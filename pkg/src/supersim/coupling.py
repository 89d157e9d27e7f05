"""Shared-stream coupling: contraction audits, coalescence, mixing profiles.

Several replicas are driven by one event stream.  Distances between replicas
can then only shrink: the audit machinery here re-applies events in plain
Python (independently of the compiled kernels) and verifies, event by event,
that the l1 and max distances never increase, that componentwise order is
preserved, and that replicas which have met never separate again.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .model import EventStream, ModelParams, QueueState, derive_seed
from .simulate import default_warmup

logger = logging.getLogger(__name__)

# Full per-event audits are affordable while n * events stays below this;
# larger runs are audited every AUDIT_SAMPLE_EVERY events instead.
AUDIT_FULL_LIMIT = 10 ** 7
AUDIT_SAMPLE_EVERY = 64


def coupled_evolve(states: Sequence[QueueState], stream: EventStream,
                   t: float) -> list[QueueState]:
    """Evolve every state through the same events up to time ``t``."""
    if not states:
        return []
    n = states[0].n
    if any(s.n != n for s in states):
        raise ValueError("all coupled states must have the same n")
    if n != stream.params.n:
        raise ValueError(f"states have n={n}, stream expects n={stream.params.n}")
    arrays = [s.lengths.copy() for s in states]
    for blk in stream.merged_blocks(t):
        for arr in arrays:
            _kernels.apply_events(arr, blk.times, blk.kinds, blk.payload, 0, t)
    return [QueueState(lengths=a) for a in arrays]


@dataclass
class PairAudit:
    """Per-event distance bookkeeping for one coupled pair."""

    events: int
    audited: int
    l1_start: int
    l1_end: int
    linf_start: int
    linf_end: int
    l1_violations: int
    linf_violations: int
    order_violations: int
    absorb_violations: int
    ordered_start: bool
    coalescence_time: Optional[float]

    @property
    def clean(self) -> bool:
        return (self.l1_violations == 0 and self.linf_violations == 0
                and self.order_violations == 0 and self.absorb_violations == 0)


class _PairTracker:
    """Incremental l1/linf/order/disagreement bookkeeping for two length lists."""

    def __init__(self, lx: list[int], ly: list[int]) -> None:
        self.lx = lx
        self.ly = ly
        diffs = [a - b for a, b in zip(lx, ly)]
        self.l1 = sum(abs(v) for v in diffs)
        self.linf = max(abs(v) for v in diffs)
        self.hist = [0] * (self.linf + 2)
        for v in diffs:
            self.hist[abs(v)] += 1
        if all(v <= 0 for v in diffs):
            self.direction = -1
        elif all(v >= 0 for v in diffs):
            self.direction = 1
        else:
            self.direction = 0
        self.order_bad = 0

    @property
    def ndiff(self) -> int:
        return len(self.lx) - self.hist[0]

    def _shift(self, old: int, new: int) -> None:
        ao, an = abs(old), abs(new)
        self.hist[ao] -= 1
        if an >= len(self.hist):
            self.hist.extend([0] * (an + 1 - len(self.hist)))
        self.hist[an] += 1
        self.l1 += an - ao
        if an > self.linf:
            self.linf = an
        elif ao == self.linf and self.hist[ao] == 0:
            m = self.linf
            while m > 0 and self.hist[m] == 0:
                m -= 1
            self.linf = m
        if self.direction != 0:
            was_bad = old * self.direction < 0
            is_bad = new * self.direction < 0
            self.order_bad += int(is_bad) - int(was_bad)

    def bump_x(self, j: int, delta: int) -> None:
        old = self.lx[j] - self.ly[j]
        self.lx[j] += delta
        self._shift(old, old + delta)

    def bump_y(self, j: int, delta: int) -> None:
        old = self.lx[j] - self.ly[j]
        self.ly[j] += delta
        self._shift(old, old - delta)


def _first_min(lengths: list[int], row, d: int) -> int:
    best = row[0]
    best_len = lengths[best]
    for a in range(1, d):
        c = row[a]
        if lengths[c] < best_len:
            best = c
            best_len = lengths[c]
    return best


def audit_pair(x: QueueState, y: QueueState, stream: EventStream,
               horizon: float, full: Optional[bool] = None) -> PairAudit:
    """Replay the shared stream over a pair, checking contraction per event.

    With ``full`` (the default under the size limit) every event is checked;
    otherwise distances are verified every AUDIT_SAMPLE_EVERY events.  The
    event application here is an independent plain-Python fold, so this also
    cross-checks the compiled kernels.
    """
    if x.n != y.n:
        raise ValueError("pair must share n")
    if x.n != stream.params.n:
        raise ValueError(f"pair has n={x.n}, stream expects n={stream.params.n}")
    p = stream.params
    expected_events = (1.0 + p.lam) * p.n * horizon
    if full is None:
        full = p.n * expected_events <= AUDIT_FULL_LIMIT
    every = 1 if full else AUDIT_SAMPLE_EVERY

    tr = _PairTracker([int(v) for v in x.lengths], [int(v) for v in y.lengths])
    ordered = tr.direction != 0
    l1_0, linf_0 = tr.l1, tr.linf
    prev_l1, prev_linf = tr.l1, tr.linf
    coal: Optional[float] = 0.0 if tr.ndiff == 0 else None
    events = audited = 0
    l1_bad = linf_bad = order_bad_events = absorb_bad = 0
    d = p.d

    for blk in stream.merged_blocks(horizon):
        times = blk.times.tolist()
        kinds = blk.kinds.tolist()
        payload = blk.payload.tolist()
        for i in range(len(times)):
            if times[i] > horizon:
                break
            row = payload[i]
            if kinds[i] == 0:
                wx = _first_min(tr.lx, row, d)
                wy = _first_min(tr.ly, row, d)
                tr.bump_x(wx, 1)
                tr.bump_y(wy, 1)
            else:
                s = row[0]
                if tr.lx[s] > 0:
                    tr.bump_x(s, -1)
                if tr.ly[s] > 0:
                    tr.bump_y(s, -1)
            events += 1
            if events % every == 0:
                audited += 1
                if tr.l1 > prev_l1:
                    l1_bad += 1
                if tr.linf > prev_linf:
                    linf_bad += 1
                if ordered and tr.order_bad > 0:
                    order_bad_events += 1
                if coal is not None and tr.ndiff > 0:
                    absorb_bad += 1
                prev_l1, prev_linf = tr.l1, tr.linf
            if coal is None and tr.ndiff == 0:
                coal = times[i]
    return PairAudit(events=events, audited=audited,
                     l1_start=l1_0, l1_end=tr.l1,
                     linf_start=linf_0, linf_end=tr.linf,
                     l1_violations=l1_bad, linf_violations=linf_bad,
                     order_violations=order_bad_events if ordered else 0,
                     absorb_violations=absorb_bad,
                     ordered_start=ordered, coalescence_time=coal)


@dataclass(frozen=True)
class CoalescenceResult:
    time: float
    censored: bool


def _pair_until_coalesced(lx: np.ndarray, ly: np.ndarray, stream: EventStream,
                          horizon: float) -> CoalescenceResult:
    ndiff = int(np.count_nonzero(lx != ly))
    if ndiff == 0:
        return CoalescenceResult(time=0.0, censored=False)
    box = {"ndiff": ndiff, "coal": -1.0}
    cur = stream.cursor(horizon)

    def apply(t, k, p, start, t_target):
        i, box["ndiff"], box["coal"] = _kernels.apply_events_pair(
            lx, ly, t, k, p, start, t_target, box["ndiff"], box["coal"], True)
        return i

    cur.advance(horizon, apply)
    if box["coal"] >= 0.0:
        return CoalescenceResult(time=float(box["coal"]), censored=False)
    return CoalescenceResult(time=horizon, censored=True)


def coalescence_time(x: QueueState, x_plus: QueueState, stream: EventStream,
                     horizon: float) -> CoalescenceResult:
    """First meeting time of two replicas that differ by one customer."""
    diff = x_plus.lengths - x.lengths
    extra = np.flatnonzero(diff)
    if len(extra) != 1 or diff[extra[0]] != 1:
        raise ValueError("x_plus must equal x plus exactly one customer")
    return _pair_until_coalesced(x.lengths.copy(), x_plus.lengths.copy(),
                                 stream, horizon)


@dataclass(frozen=True)
class PathCoalescence:
    time: float
    censored: bool
    path_bound: int


def path_coalescence(x: QueueState, y: QueueState, stream: EventStream,
                     horizon: float) -> PathCoalescence:
    """Meeting time of two arbitrary replicas under the shared stream.

    ``path_bound`` reports ||x||1 + ||y||1, the length of an adjacent-state
    path between the two initial states through the empty state.
    """
    if x.n != y.n:
        raise ValueError("pair must share n")
    res = _pair_until_coalesced(x.lengths.copy(), y.lengths.copy(),
                                stream, horizon)
    return PathCoalescence(time=res.time, censored=res.censored,
                           path_bound=int(x.total + y.total))


@dataclass(frozen=True)
class MixingProfile:
    """Coupled-replica disagreement and empty-start tail deficit over time."""

    t: np.ndarray
    pr_neq: np.ndarray
    se_neq: np.ndarray
    deficit: np.ndarray
    se_deficit: np.ndarray
    bound_lower: np.ndarray
    replicas: int


def mixing_bound_lower(params: ModelParams, t: np.ndarray) -> np.ndarray:
    """Closed-form floor for the empty-start deficit of the nonempty fraction."""
    return params.lam * np.exp(-(1.0 + params.lam * params.d) * np.asarray(t, dtype=float))


def mixing_profile(params: ModelParams, t_grid: Sequence[float], replicas: int,
                   seed_base: int, warmup: Optional[float] = None) -> MixingProfile:
    """Estimate Pr(X_t != Y_t) and the deficit lam - u_t(1) on a time grid.

    X starts empty and Y starts from an independently warmed-up state; both
    then consume one shared stream per replica, so per replica the
    disagreement indicator is nonincreasing in t.
    """
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if len(t_grid) == 0:
        raise ValueError("empty time grid")
    if t_grid[0] < 0:
        raise ValueError("grid times must be nonnegative")
    if replicas < 100:
        logger.warning("mixing_profile with %d replicas: confidence "
                       "intervals will be wide", replicas)
    if warmup is None:
        warmup = default_warmup(params)
    n = params.n
    neq = np.zeros((replicas, len(t_grid)))
    u1 = np.zeros((replicas, len(t_grid)))

    for r in range(replicas):
        warm_stream = EventStream(params, derive_seed(seed_base, r, 0),
                                  horizon=max(warmup, 1e-9))
        ly = np.zeros(n, dtype=np.int64)
        if warmup > 0:
            wcur = warm_stream.cursor(warmup)

            def warm_apply(t, k, p, start, t_target):
                return _kernels.apply_events(ly, t, k, p, start, t_target)

            wcur.advance(warmup, warm_apply)
        lx = np.zeros(n, dtype=np.int64)
        ndiff = int(np.count_nonzero(ly))
        box = {"ndiff": ndiff, "coal": 0.0 if ndiff == 0 else -1.0}
        shared = EventStream(params, derive_seed(seed_base, r, 1),
                             horizon=max(float(t_grid[-1]), 1e-9))
        cur = shared.cursor(float(t_grid[-1]))

        def apply(t, k, p, start, t_target):
            i, box["ndiff"], box["coal"] = _kernels.apply_events_pair(
                lx, ly, t, k, p, start, t_target, box["ndiff"], box["coal"],
                False)
            return i

        for gi, tg in enumerate(t_grid):
            if tg > 0:
                cur.advance(float(tg), apply)
            neq[r, gi] = 1.0 if box["ndiff"] > 0 else 0.0
            u1[r, gi] = np.count_nonzero(lx) / n

    def col_stats(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = mat.mean(axis=0)
        if replicas > 1:
            se = mat.std(axis=0, ddof=1) / math.sqrt(replicas)
        else:
            se = np.zeros(mat.shape[1])
        return mean, se

    pr_neq, se_neq = col_stats(neq)
    deficit, se_deficit = col_stats(params.lam - u1)
    return MixingProfile(t=t_grid, pr_neq=pr_neq, se_neq=se_neq,
                         deficit=deficit, se_deficit=se_deficit,
                         bound_lower=mixing_bound_lower(params, t_grid),
                         replicas=replicas)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential fit p ~ exp(intercept - rate * t)."""

    rate: float
    intercept: float
    r2: float
    points: int


def fit_exponential_decay(t: np.ndarray, p: np.ndarray, lo: float = 0.02,
                          hi: float = 0.98) -> DecayFit:
    """Fit the decaying segment (lo <= p <= hi) of a probability curve.

    The fit is ordinary least squares on log p; r2 is reported on the log
    scale.  Raises if fewer than three points fall in the window.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    mask = (p >= lo) & (p <= hi)
    if mask.sum() < 3:
        raise ValueError(f"only {int(mask.sum())} points inside [{lo}, {hi}]; "
                         "cannot fit a decay rate")
    ts, ys = t[mask], np.log(p[mask])
    slope, intercept = np.polyfit(ts, ys, 1)
    fitted = intercept + slope * ts
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=-float(slope), intercept=float(intercept), r2=r2,
                    points=int(mask.sum()))
