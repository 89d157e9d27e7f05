import itertools

import numpy as np
import pytest

from supersim.model import ModelParams, QueueState
from supersim.oracle import (CappedChainSpec, build_generator,
                             choice_probabilities, empirical_distribution,
                             exact_tv, max_length_cdf, stationary,
                             stationary_power, tail_expectations, transient)


def test_spec_validation_and_enumeration():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=3)
    assert spec.n_states == 16
    for idx in range(spec.n_states):
        assert spec.state_index(spec.index_state(idx)) == idx
    # first queue most significant
    assert spec.index_state(0) == (0, 0)
    assert spec.index_state(1) == (0, 1)
    with pytest.raises(ValueError):
        CappedChainSpec(n=2, lam=0.5, d=2, cap=-1)
    with pytest.raises(ValueError):
        CappedChainSpec(n=10, lam=0.5, d=2, cap=12)  # state space too large


def test_choice_probabilities_tie_prefers_first_listed():
    # lengths (0,1): tuples (0,0),(0,1),(1,0),(1,1); queue 0 wins all but (1,1)
    p = choice_probabilities([0, 1], n=2, d=2)
    np.testing.assert_allclose(p, [0.75, 0.25])
    # equal lengths: whoever is listed first wins, so the split is even
    p = choice_probabilities([1, 1], n=2, d=2)
    np.testing.assert_allclose(p, [0.5, 0.5])
    p1 = choice_probabilities([3, 0, 0], n=3, d=1)
    np.testing.assert_allclose(p1, [1 / 3, 1 / 3, 1 / 3])


def test_choice_probabilities_exhaustive_against_direct_count():
    lengths = [2, 0, 1]
    n, d = 3, 3
    p = choice_probabilities(lengths, n, d)
    counts = np.zeros(n)
    for tup in itertools.product(range(n), repeat=d):
        best = tup[0]
        for c in tup[1:]:
            if lengths[c] < lengths[best]:
                best = c
        counts[best] += 1
    np.testing.assert_allclose(p, counts / n ** d)


def test_generator_rows_sum_to_zero():
    spec = CappedChainSpec(n=2, lam=0.7, d=2, cap=4)
    q = build_generator(spec)
    sums = np.asarray(q.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums, 0.0, atol=1e-12)
    dense = q.toarray()
    off = dense - np.diag(np.diag(dense))
    assert np.all(off >= 0)
    assert np.all(np.diag(dense) <= 0)


def test_stationary_single_queue_matches_birth_death_form():
    # one queue with a cap: truncated geometric stationary law
    lam, cap = 0.6, 7
    spec = CappedChainSpec(n=1, lam=lam, d=1, cap=cap)
    pi = stationary(spec)
    want = lam ** np.arange(cap + 1) * (1 - lam) / (1 - lam ** (cap + 1))
    np.testing.assert_allclose(pi, want, atol=1e-13)


def test_stationary_symmetric_under_queue_relabeling():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=5)
    pi = stationary(spec)
    for a in range(spec.cap + 1):
        for b in range(spec.cap + 1):
            assert pi[spec.state_index((a, b))] == pytest.approx(
                pi[spec.state_index((b, a))], abs=1e-13)


def test_stationary_dense_and_power_agree():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=6)
    q = build_generator(spec)
    dense = stationary(spec, q)
    power = stationary_power(spec, q)
    assert np.max(np.abs(dense - power)) < 1e-10


def test_stationary_residual_is_tiny():
    spec = CappedChainSpec(n=3, lam=0.4, d=2, cap=3)
    q = build_generator(spec)
    pi = stationary(spec, q)
    assert float(np.max(np.abs(q.T @ pi))) < 1e-12
    assert pi.sum() == pytest.approx(1.0)
    assert np.all(pi >= 0)


def test_transient_point_mass_at_time_zero():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=4)
    p0 = transient(spec, (1, 2), 0.0)
    want = np.zeros(spec.n_states)
    want[spec.state_index((1, 2))] = 1.0
    np.testing.assert_allclose(p0, want)


def test_transient_approaches_stationary():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=6)
    pi = stationary(spec)
    p_t = transient(spec, (0, 0), 400.0)
    assert exact_tv(p_t, pi) < 1e-10


def test_transient_tolerance_self_consistency():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=5)
    a = transient(spec, (0, 0), 2.0, tol=1e-10)
    b = transient(spec, (0, 0), 2.0, tol=1e-14)
    assert np.max(np.abs(a - b)) < 1e-9


def test_transient_accepts_state_index_and_queue_state():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=3)
    a = transient(spec, (1, 0), 1.0)
    b = transient(spec, spec.state_index((1, 0)), 1.0)
    c = transient(spec, QueueState.from_lengths((1, 0)), 1.0)
    np.testing.assert_allclose(a, b)
    np.testing.assert_allclose(a, c)


def test_exact_tv_basic_values():
    assert exact_tv(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0
    assert exact_tv(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    assert exact_tv(np.array([0.8, 0.2]),
                    np.array([0.6, 0.4])) == pytest.approx(0.2)


def test_tail_expectations_against_direct_sum():
    spec = CappedChainSpec(n=2, lam=0.6, d=2, cap=4)
    pi = stationary(spec)
    tails = tail_expectations(spec, pi)
    # recompute E[u(k)] by brute force over all states
    for k in range(spec.cap + 1):
        want = sum(pi[i] * np.mean(np.asarray(spec.index_state(i)) >= k)
                   for i in range(spec.n_states))
        assert tails.u[k] == pytest.approx(want, abs=1e-13)
    assert tails.u[0] == pytest.approx(1.0)
    assert tails.boundary_mass == pytest.approx(
        sum(pi[i] for i in range(spec.n_states)
            if max(spec.index_state(i)) == spec.cap))


def test_max_length_cdf_single_queue():
    lam, cap = 0.5, 6
    spec = CappedChainSpec(n=1, lam=lam, d=1, cap=cap)
    pi = stationary(spec)
    cdf = max_length_cdf(spec, pi)
    want = np.cumsum(pi)
    np.testing.assert_allclose(cdf, want, atol=1e-13)
    assert cdf[-1] == pytest.approx(1.0)


def test_empirical_distribution_counts_and_clipping():
    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=2)
    lengths = np.array([[0, 0], [0, 1], [0, 0], [5, 1]])
    emp = empirical_distribution(spec, lengths)
    assert emp.sum() == pytest.approx(1.0)
    assert emp[spec.state_index((0, 0))] == pytest.approx(0.5)
    assert emp[spec.state_index((0, 1))] == pytest.approx(0.25)
    # lengths beyond the cap land on the boundary state
    assert emp[spec.state_index((2, 1))] == pytest.approx(0.25)


def test_simulator_params_and_spec_share_semantics():
    # the capped chain at a cap far above reachable lengths matches the
    # free simulator's equilibrium tail estimate (coarse agreement)
    from supersim.simulate import default_plan, estimate_tail, run_trajectory

    spec = CappedChainSpec(n=2, lam=0.5, d=2, cap=10)
    pi = stationary(spec)
    tails = tail_expectations(spec, pi)
    p = ModelParams(n=2, lam=0.5, d=2)
    snaps = run_trajectory(p, QueueState.zeros(2),
                           default_plan(p, count=4000, interval=1.0), seed=88)
    est = estimate_tail(snaps)
    m = min(len(est.u), len(tails.u))
    assert np.max(np.abs(est.u[:m] - tails.u[:m])) < 0.02
