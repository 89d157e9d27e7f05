"""Core state and event machinery for the join-shortest-of-d queueing system.

A system of ``n`` FIFO queues is driven by two marked Poisson processes:
customers arrive at rate ``lam * n``, each sampling ``d`` queues uniformly
at random with replacement and joining the shortest of them (the first
listed wins ties), while a rate-``n`` selection process picks a uniform
queue and completes one job there if any is present.  The randomness is
organised as four independent substreams (arrival times, arrival choices,
departure times, departure selections) so that distinct initial states can
be evolved against literally the same noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

ARRIVAL = 0
DEPARTURE = 1

# Substream labels; child seeds are derived from (seed, label) so the four
# streams are independent and reproducible individually.
_LBL_ARRIVAL_TIMES = 0
_LBL_CHOICES = 1
_LBL_DEPARTURE_TIMES = 2
_LBL_SELECTIONS = 3


class StreamHorizonError(RuntimeError):
    """Raised when events are requested beyond a stream's declared horizon."""


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child seed from a root seed and a label path.

    Children with distinct paths are statistically independent, and the
    derivation is stable across processes.
    """
    ss = np.random.SeedSequence((seed, *path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ModelParams:
    """System parameters: ``n`` queues, arrival rate ``lam`` per queue, ``d`` choices."""

    n: int
    lam: float
    d: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        if self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")

    @property
    def arrival_rate(self) -> float:
        return self.lam * self.n

    @property
    def selection_rate(self) -> float:
        return float(self.n)


@dataclass(frozen=True)
class Arrival:
    time: float
    choices: tuple[int, ...]


@dataclass(frozen=True)
class Departure:
    time: float
    selection: int


Event = Union[Arrival, Departure]


def _enforce_increasing(times: np.ndarray, prev_time: float) -> int:
    """Make ``times`` strictly increasing in place; returns how many were nudged.

    Equal times have probability zero but do occur in finite precision.  The
    later of a tied pair is pushed forward by one ulp (cascading if needed).
    The common case of no ties is a single vectorized scan.
    """
    if times.size == 0:
        return 0
    starts = np.flatnonzero(times[1:] <= times[:-1]) + 1
    if times[0] <= prev_time:
        starts = np.concatenate(([0], starts))
    if starts.size == 0:
        return 0
    nudged = 0
    for s in starts:
        prev = times[s - 1] if s > 0 else prev_time
        j = int(s)
        while j < len(times) and times[j] <= prev:
            times[j] = np.nextafter(prev, math.inf)
            prev = times[j]
            nudged += 1
            j += 1
    return nudged


def _level_counts_from_lengths(lengths: np.ndarray) -> list[int]:
    """Counts ell[k] = #{queues with at least k jobs}; ell[0] == n always."""
    n = len(lengths)
    mx = int(lengths.max()) if n else 0
    hist = np.bincount(lengths, minlength=mx + 1)
    ell = n - np.concatenate(([0], np.cumsum(hist)[:-1]))
    return [int(v) for v in ell]


@dataclass
class QueueState:
    """Queue lengths plus incrementally maintained level counts.

    ``level_counts[k]`` is the number of queues holding at least ``k``
    customers; index 0 is therefore always ``n``.  The list carries no
    trailing zeros, so its length is ``max length + 1``.
    """

    lengths: np.ndarray
    level_counts: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        if self.lengths.ndim != 1 or len(self.lengths) == 0:
            raise ValueError("lengths must be a nonempty 1-d array")
        if np.any(self.lengths < 0):
            raise ValueError("queue lengths cannot be negative")
        if not self.level_counts:
            self.level_counts = _level_counts_from_lengths(self.lengths)

    @classmethod
    def zeros(cls, n: int) -> "QueueState":
        return cls(lengths=np.zeros(n, dtype=np.int64))

    @classmethod
    def from_lengths(cls, lengths: Sequence[int]) -> "QueueState":
        return cls(lengths=np.asarray(lengths, dtype=np.int64))

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> int:
        return int(self.lengths.sum())

    @property
    def max_len(self) -> int:
        return len(self.level_counts) - 1

    def ell(self, k: int) -> int:
        """Number of queues with at least k customers."""
        if k < 0:
            raise ValueError("level index must be nonnegative")
        if k >= len(self.level_counts):
            return 0
        return self.level_counts[k]

    def u(self, k: int) -> float:
        """Fraction of queues with at least k customers."""
        return self.ell(k) / self.n

    def copy(self) -> "QueueState":
        return QueueState(lengths=self.lengths.copy(),
                          level_counts=list(self.level_counts))

    def _inc(self, j: int) -> None:
        new_len = int(self.lengths[j]) + 1
        self.lengths[j] = new_len
        if new_len == len(self.level_counts):
            self.level_counts.append(1)
        else:
            self.level_counts[new_len] += 1

    def _dec(self, j: int) -> None:
        old_len = int(self.lengths[j])
        if old_len == 0:
            return
        self.lengths[j] = old_len - 1
        self.level_counts[old_len] -= 1
        while len(self.level_counts) > 1 and self.level_counts[-1] == 0:
            self.level_counts.pop()


@dataclass(frozen=True)
class Observables:
    """Summary of a state: level counts, tail fractions, total mass, maximum."""

    ell: np.ndarray
    u: np.ndarray
    total: int
    max_len: int


def observables(state: QueueState) -> Observables:
    ell = np.asarray(state.level_counts, dtype=np.int64)
    return Observables(ell=ell, u=ell / state.n, total=state.total,
                       max_len=state.max_len)


def choose_queue(lengths: np.ndarray, choices: Sequence[int]) -> int:
    """Index of the shortest queue among the listed choices, first listed winning ties."""
    best = int(choices[0])
    best_len = lengths[best]
    for c in choices[1:]:
        c = int(c)
        if lengths[c] < best_len:
            best = c
            best_len = lengths[c]
    return best


def apply_arrival(state: QueueState, choices: Sequence[int]) -> QueueState:
    """Return the state after one arrival that saw the given choice list."""
    if len(choices) == 0:
        raise ValueError("an arrival needs at least one choice")
    for c in choices:
        if not (0 <= int(c) < state.n):
            raise ValueError(f"choice {c} out of range for n={state.n}")
    out = state.copy()
    out._inc(choose_queue(out.lengths, choices))
    return out


def apply_departure(state: QueueState, selection: int) -> QueueState:
    """Return the state after one selection event; empty selections change nothing."""
    if not (0 <= int(selection) < state.n):
        raise ValueError(f"selection {selection} out of range for n={state.n}")
    out = state.copy()
    out._dec(int(selection))
    return out


def apply_event(state: QueueState, event: Event) -> QueueState:
    if isinstance(event, Arrival):
        return apply_arrival(state, event.choices)
    return apply_departure(state, event.selection)


@dataclass
class EventBlock:
    """A time-sorted slab of merged events.

    ``kinds`` holds 0 for arrivals and 1 for selections.  Row ``i`` of
    ``payload`` lists the d choices of an arrival, or the selected queue in
    column 0 for a selection.  The block contains every stream event in
    ``(open, cover_until]`` relative to the previous block, so a consumer
    that has drained it knows the state at any time up to ``cover_until``.
    """

    times: np.ndarray
    kinds: np.ndarray
    payload: np.ndarray
    cover_until: float


class EventStream:
    """Reproducible merged event stream for one (params, seed) pair.

    The four substreams are generated lazily in blocks and merged on the
    fly, so memory stays bounded for long runs.  Regenerating the stream
    yields the identical event sequence regardless of internal block size.
    """

    def __init__(self, params: ModelParams, seed: int, horizon: float) -> None:
        if horizon <= 0.0:
            raise ValueError("horizon must be positive")
        self.params = params
        self.seed = int(seed)
        self.horizon = float(horizon)

    def _check_t(self, t_end: Optional[float]) -> float:
        if t_end is None:
            return self.horizon
        if t_end > self.horizon:
            raise StreamHorizonError(
                f"requested t={t_end} beyond stream horizon {self.horizon}")
        if t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        return float(t_end)

    def _substream(self, label: int) -> np.random.Generator:
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((self.seed, label))))

    def _default_block(self, t_end: float) -> int:
        expect = (1.0 + self.params.lam) * self.params.n * t_end
        return int(min(max(512, expect / 8), 2_000_000))

    def _timed_batches(self, label: int, rate: float,
                       block: int) -> Iterator[np.ndarray]:
        """Cumulative event times of a Poisson process, in blocks."""
        rng = self._substream(label)
        t = 0.0
        while True:
            gaps = rng.standard_exponential(block) / rate
            # Chain blocks through the running sum itself so the sequence of
            # float additions (and hence every time) is identical no matter
            # how the draws are partitioned into blocks.
            gaps[0] += t
            times = np.cumsum(gaps)
            t = float(times[-1])
            yield times

    def merged_blocks(self, t_end: Optional[float] = None,
                      block_size: Optional[int] = None) -> Iterator[EventBlock]:
        """Yield merged, strictly time-increasing event blocks up to ``t_end``."""
        t_end = self._check_t(t_end)
        p = self.params
        block = block_size or self._default_block(t_end)

        a_times_gen = self._timed_batches(_LBL_ARRIVAL_TIMES, p.arrival_rate, block)
        d_times_gen = self._timed_batches(_LBL_DEPARTURE_TIMES, p.selection_rate, block)
        choice_rng = self._substream(_LBL_CHOICES)
        select_rng = self._substream(_LBL_SELECTIONS)
        width = max(p.d, 1)

        a_t = next(a_times_gen)
        a_c = choice_rng.integers(0, p.n, size=(block, p.d), dtype=np.int32)
        d_t = next(d_times_gen)
        d_s = select_rng.integers(0, p.n, size=block, dtype=np.int32)
        a_i = d_i = 0
        prev_time = -math.inf

        while True:
            t_cut = min(a_t[-1], d_t[-1], t_end)
            j_a = int(np.searchsorted(a_t, t_cut, side="right"))
            j_d = int(np.searchsorted(d_t, t_cut, side="right"))
            at, dt = a_t[a_i:j_a], d_t[d_i:j_d]
            na, nd = len(at), len(dt)
            m = na + nd

            # Merge two sorted runs by scatter; at an exact time tie the
            # arrival lands first ('left'/'right' sides below).
            pos_a = np.arange(na) + np.searchsorted(dt, at, side="left")
            pos_d = np.arange(nd) + np.searchsorted(at, dt, side="right")
            times = np.empty(m, dtype=np.float64)
            times[pos_a] = at
            times[pos_d] = dt
            kinds = np.empty(m, dtype=np.int8)
            kinds[pos_a] = ARRIVAL
            kinds[pos_d] = DEPARTURE
            payload = np.zeros((m, width), dtype=np.int32)
            payload[pos_a, :p.d] = a_c[a_i:j_a]
            payload[pos_d, 0] = d_s[d_i:j_d]

            nudged = _enforce_increasing(times, prev_time)
            if nudged:
                logger.warning("nudged %d tied event times forward by one ulp",
                               nudged)
            if m:
                prev_time = float(times[-1])

            cover = max(t_cut, prev_time)
            yield EventBlock(times=times, kinds=kinds, payload=payload,
                             cover_until=cover)
            if t_cut >= t_end:
                return

            if j_a == len(a_t):
                a_t = next(a_times_gen)
                a_c = choice_rng.integers(0, p.n, size=(block, p.d), dtype=np.int32)
                a_i = 0
            else:
                a_i = j_a
            if j_d == len(d_t):
                d_t = next(d_times_gen)
                d_s = select_rng.integers(0, p.n, size=block, dtype=np.int32)
                d_i = 0
            else:
                d_i = j_d

    def iter_events(self, t_end: Optional[float] = None) -> Iterator[Event]:
        """Yield individual events in time order up to ``t_end``."""
        for blk in self.merged_blocks(t_end):
            for i in range(len(blk.times)):
                if blk.kinds[i] == ARRIVAL:
                    yield Arrival(time=float(blk.times[i]),
                                  choices=tuple(int(c) for c in
                                                blk.payload[i, :self.params.d]))
                else:
                    yield Departure(time=float(blk.times[i]),
                                    selection=int(blk.payload[i, 0]))

    def cursor(self, t_end: Optional[float] = None,
               block_size: Optional[int] = None) -> "StreamCursor":
        return StreamCursor(self, self._check_t(t_end), block_size=block_size)


class StreamCursor:
    """Forward-only consumer of a stream's merged blocks.

    ``advance(t, fn)`` feeds every not-yet-consumed event with time <= t to
    ``fn`` in order.  ``fn(times, kinds, payload, start, t)`` must consume
    events from ``start`` on while their time is <= t and return the first
    unconsumed index.
    """

    def __init__(self, stream: EventStream, t_end: float,
                 block_size: Optional[int] = None) -> None:
        self.t_end = t_end
        self._blocks = stream.merged_blocks(t_end, block_size=block_size)
        self._blk: Optional[EventBlock] = None
        self._idx = 0
        self._done = False

    def advance(self, t_target: float, apply_fn) -> None:
        if t_target > self.t_end:
            raise StreamHorizonError(
                f"cursor target {t_target} beyond its end {self.t_end}")
        while not self._done:
            if self._blk is None:
                try:
                    self._blk = next(self._blocks)
                    self._idx = 0
                except StopIteration:
                    self._done = True
                    return
            blk = self._blk
            self._idx = int(apply_fn(blk.times, blk.kinds, blk.payload,
                                     self._idx, t_target))
            if self._idx < len(blk.times):
                return
            self._blk = None
            if blk.cover_until >= t_target:
                return


def make_stream(params: ModelParams, seed: int, horizon: float) -> EventStream:
    return EventStream(params, seed, horizon)


def evolve(x0: QueueState, stream: EventStream, t: float) -> QueueState:
    """Deterministically evolve ``x0`` through the stream's events up to time ``t``."""
    from . import _kernels

    if x0.n != stream.params.n:
        raise ValueError(f"state has n={x0.n} but stream expects n={stream.params.n}")
    lengths = x0.lengths.copy()
    cur = stream.cursor(t)

    def apply(times, kinds, payload, start, t_target):
        return _kernels.apply_events(lengths, times, kinds, payload, start, t_target)

    cur.advance(t, apply)
    return QueueState(lengths=lengths)


def _evolve_py(x0: QueueState, stream: EventStream, t: float) -> QueueState:
    """Reference single-event fold used to cross-check the block kernel."""
    state = x0
    for ev in stream.iter_events(t):
        state = apply_event(state, ev)
    return state


def dump_events(stream: EventStream, t_end: Optional[float],
                out: IO[str]) -> int:
    """Write the event sequence as text, one event per line.

    Arrivals print as ``A <time> <c1> ... <cd>`` and selections as
    ``D <time> <sel>`` with queue indices 1-based.  Returns the number of
    lines written.
    """
    count = 0
    for ev in stream.iter_events(t_end):
        if isinstance(ev, Arrival):
            cs = " ".join(str(c + 1) for c in ev.choices)
            out.write(f"A {ev.time!r} {cs}\n")
        else:
            out.write(f"D {ev.time!r} {ev.selection + 1}\n")
        count += 1
    return count


def parse_events(lines: Iterable[str]) -> list[Event]:
    """Parse the text format produced by :func:`dump_events`."""
    events: list[Event] = []
    for raw in lines:
        parts = raw.split()
        if not parts:
            continue
        tag, time, rest = parts[0], float(parts[1]), parts[2:]
        if tag == "A":
            events.append(Arrival(time=time,
                                  choices=tuple(int(c) - 1 for c in rest)))
        elif tag == "D":
            if len(rest) != 1:
                raise ValueError(f"malformed selection line: {raw!r}")
            events.append(Departure(time=time, selection=int(rest[0]) - 1))
        else:
            raise ValueError(f"unknown event tag {tag!r}")
    return events
