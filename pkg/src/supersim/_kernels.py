"""Compiled inner loops for event application.

Each kernel consumes events from a merged block starting at index ``start``
while their time is <= ``t_max``, mutating the state arrays in place, and
returns the first unconsumed index (plus any scalar state it threads).  All
randomness lives in the blocks; the kernels are deterministic folds.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def apply_events(lengths, times, kinds, payload, start, t_max):
    """Fold arrivals and selections into ``lengths``; returns next index."""
    n_ev = times.shape[0]
    d = payload.shape[1]
    i = start
    while i < n_ev and times[i] <= t_max:
        if kinds[i] == 0:
            best = payload[i, 0]
            best_len = lengths[best]
            for a in range(1, d):
                c = payload[i, a]
                if lengths[c] < best_len:
                    best = c
                    best_len = lengths[c]
            lengths[best] = best_len + 1
        else:
            s = payload[i, 0]
            if lengths[s] > 0:
                lengths[s] -= 1
        i += 1
    return i


@njit(cache=True)
def apply_events_pair(lx, ly, times, kinds, payload, start, t_max,
                      ndiff, coal_time, stop_on_coalesce):
    """Evolve two replicas on the shared events, tracking disagreement.

    ``ndiff`` is the number of coordinates where the replicas differ and
    ``coal_time`` the first time it reached 0 (-1.0 while it has not).
    Returns ``(next_index, ndiff, coal_time)``.
    """
    n_ev = times.shape[0]
    d = payload.shape[1]
    i = start
    while i < n_ev and times[i] <= t_max:
        if kinds[i] == 0:
            bx = payload[i, 0]
            blx = lx[bx]
            by = bx
            bly = ly[by]
            for a in range(1, d):
                c = payload[i, a]
                if lx[c] < blx:
                    bx = c
                    blx = lx[c]
                if ly[c] < bly:
                    by = c
                    bly = ly[c]
            if bx == by:
                lx[bx] = blx + 1
                ly[by] = bly + 1
            else:
                was_eq = lx[bx] == ly[bx]
                lx[bx] = blx + 1
                if was_eq:
                    ndiff += 1
                elif lx[bx] == ly[bx]:
                    ndiff -= 1
                was_eq = lx[by] == ly[by]
                ly[by] = bly + 1
                if was_eq:
                    ndiff += 1
                elif lx[by] == ly[by]:
                    ndiff -= 1
        else:
            s = payload[i, 0]
            dx = lx[s] > 0
            dy = ly[s] > 0
            if dx and dy:
                lx[s] -= 1
                ly[s] -= 1
            elif dx:
                was_eq = lx[s] == ly[s]
                lx[s] -= 1
                if was_eq:
                    ndiff += 1
                elif lx[s] == ly[s]:
                    ndiff -= 1
            elif dy:
                was_eq = lx[s] == ly[s]
                ly[s] -= 1
                if was_eq:
                    ndiff += 1
                elif lx[s] == ly[s]:
                    ndiff -= 1
        i += 1
        if ndiff == 0 and coal_time < 0.0:
            coal_time = times[i - 1]
            if stop_on_coalesce:
                return i, ndiff, coal_time
    return i, ndiff, coal_time


@njit(cache=True)
def apply_events_extremes(lengths, counts, cur_max, times, kinds, payload,
                          start, t_max, m_min, m_max):
    """Fold events while tracking the running maximum queue length.

    ``counts[v]`` is the number of queues of length exactly ``v``.  Returns
    ``(next_index, cur_max, m_min, m_max, status)``; status 1 means the
    counts array is too short for the next increment (event not applied,
    caller must grow and retry from the returned index).
    """
    n_ev = times.shape[0]
    d = payload.shape[1]
    cap = counts.shape[0]
    i = start
    while i < n_ev and times[i] <= t_max:
        if kinds[i] == 0:
            best = payload[i, 0]
            best_len = lengths[best]
            for a in range(1, d):
                c = payload[i, a]
                if lengths[c] < best_len:
                    best = c
                    best_len = lengths[c]
            if best_len + 1 >= cap:
                return i, cur_max, m_min, m_max, 1
            lengths[best] = best_len + 1
            counts[best_len] -= 1
            counts[best_len + 1] += 1
            if best_len + 1 > cur_max:
                cur_max = best_len + 1
        else:
            s = payload[i, 0]
            if lengths[s] > 0:
                v = lengths[s]
                lengths[s] = v - 1
                counts[v] -= 1
                counts[v - 1] += 1
                if v == cur_max and counts[v] == 0:
                    cur_max = v - 1
        if cur_max < m_min:
            m_min = cur_max
        if cur_max > m_max:
            m_max = cur_max
        i += 1
    return i, cur_max, m_min, m_max, 0


@njit(cache=True)
def apply_events_survival(lengths, remaining, times, kinds, payload,
                          start, t_max, n_active, last_gone):
    """Fold events while counting down each queue's initial customers.

    ``remaining[j]`` starts at the initial length of queue j; under FIFO a
    real departure retires one initial customer while any remain.  Returns
    early once every initial customer has left (``n_active == 0``), with
    ``last_gone`` the time that happened.
    """
    n_ev = times.shape[0]
    d = payload.shape[1]
    i = start
    while i < n_ev and times[i] <= t_max:
        if kinds[i] == 0:
            best = payload[i, 0]
            best_len = lengths[best]
            for a in range(1, d):
                c = payload[i, a]
                if lengths[c] < best_len:
                    best = c
                    best_len = lengths[c]
            lengths[best] = best_len + 1
        else:
            s = payload[i, 0]
            if lengths[s] > 0:
                lengths[s] -= 1
                if remaining[s] > 0:
                    remaining[s] -= 1
                    if remaining[s] == 0:
                        n_active -= 1
                        if n_active == 0:
                            last_gone = times[i]
                            return i + 1, n_active, last_gone
        i += 1
    return i, n_active, last_gone
