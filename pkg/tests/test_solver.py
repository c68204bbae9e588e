import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_mdp
from qconv.errors import DimensionMismatch
from qconv.mdp import Gaussian, PointMass, make_mdp
from qconv.solver import bellman_apply, contraction_check, greedy_policy, sup_norm, value_iterate


def single(mean=1.0, gamma=0.9):
    return make_mdp([[[1.0]]], [[Gaussian(mean, 5.0)]], gamma)


def test_bellman_no_bootstrap():
    assert bellman_apply(single(), np.zeros((1, 1)))[0, 0] == pytest.approx(1.0)


def test_bellman_fixed_point_of_single_cell():
    assert bellman_apply(single(), np.array([[10.0]]))[0, 0] == pytest.approx(10.0, abs=1e-14)


def test_bellman_matches_enumeration():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, 4, 3, gamma=0.8)
    q = rng.normal(size=(4, 3))
    tq = bellman_apply(mdp, q)
    for s in range(4):
        for a in range(3):
            boot = sum(mdp.trans[s, a, s2] * max(q[s2, b] for b in range(3)) for s2 in range(4))
            assert tq[s, a] == pytest.approx(mdp.reward_mean[s, a] + 0.8 * boot, abs=1e-13)


def test_bellman_dimension_check(bench_mdp):
    with pytest.raises(DimensionMismatch):
        bellman_apply(bench_mdp, np.zeros((3, 5)))


def test_value_iterate_geometric_series():
    q, _ = value_iterate(single(), tol=1e-10)
    assert abs(q[0, 0] - 10.0) <= 1e-10


def test_value_iterate_chain(chain_mdp):
    q, _ = value_iterate(chain_mdp, tol=1e-12)
    np.testing.assert_allclose(q, [[0.5, 1.0], [2.0, 2.0]], atol=1e-12)
    # brute force: iterate the operator far past convergence
    brute = np.zeros((2, 2))
    for _ in range(2000):
        brute = bellman_apply(chain_mdp, brute)
    np.testing.assert_allclose(q, brute, atol=1e-12)
    np.testing.assert_array_equal(greedy_policy(q)[0], [0.0, 1.0])


def test_value_iterate_zero_rewards():
    mdp = make_mdp(np.full((3, 2, 3), 1 / 3), [[PointMass(0.0)] * 2] * 3, 0.95)
    q, _ = value_iterate(mdp)
    np.testing.assert_array_equal(q, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_value_iterate_error_bound(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 4, 3)
    tol = 1e-8
    q, _ = value_iterate(mdp, tol)
    g = mdp.gamma
    assert sup_norm(bellman_apply(mdp, q) - q) <= tol * (1 - g) / (2 * g) * (1 + 1e-6) + 1e-15
    exact = np.linalg.solve(np.eye(12) - g * _greedy_transition(mdp, q), mdp.reward_mean.ravel())
    assert sup_norm(q.ravel() - exact) <= tol


def _greedy_transition(mdp, q):
    S, A = mdp.shape
    pi = q.argmax(axis=1)
    P = np.zeros((S * A, S * A))
    for s in range(S):
        for a in range(A):
            for s2 in range(S):
                P[s * A + a, s2 * A + pi[s2]] = mdp.trans[s, a, s2]
    return P


def test_greedy_policy_rows():
    np.testing.assert_array_equal(greedy_policy(np.array([[1.0, 3.0, 2.0]])), [[0, 1, 0]])
    np.testing.assert_array_equal(greedy_policy(np.array([[2.0, 2.0]])), [[1, 0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_greedy_invariant_under_shift(seed, c):
    q = np.random.default_rng(seed).normal(size=(5, 4))
    pi = greedy_policy(q)
    np.testing.assert_array_equal(pi.sum(axis=1), 1.0)
    assert np.array_equal(np.argmax(greedy_policy(q + c), 1), np.argmax(q + c, 1))


def test_contraction_identical_inputs(bench_mdp):
    q = np.ones((5, 3))
    assert contraction_check(bench_mdp, q, q) == (0.0, 0.0)


def test_contraction_constant_shift_is_equality(bench_mdp):
    q = np.random.default_rng(1).normal(size=(5, 3))
    lhs, rhs = contraction_check(bench_mdp, q, q + 1.0)
    assert lhs == pytest.approx(0.9, abs=1e-12)
    assert rhs == pytest.approx(0.9, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4))
def test_contraction_property(seed, S, A):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, S, A)
    q1, q2 = rng.normal(0, 10, (S, A)), rng.normal(0, 10, (S, A))
    lhs, rhs = contraction_check(mdp, q1, q2)
    assert lhs <= rhs + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bellman_monotone(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 4, 3)
    q1 = rng.normal(size=(4, 3))
    q2 = q1 + rng.uniform(0, 2, (4, 3))
    assert np.all(bellman_apply(mdp, q1) <= bellman_apply(mdp, q2))


def test_sup_norm_uses_absolute_value():
    assert sup_norm(np.array([[-3.0, 1.0]])) == 3.0
