"""Exact Bellman optimality operator, value iteration and greedy policies.

Everything here uses the closed-form reward means, so it is noise-free and
serves as the oracle for the sampling-based learners.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NonConvergence
from .mdp import ValidatedMdp

MAX_ITERATIONS = 10**7


def sup_norm(x: np.ndarray) -> float:
    """max |x|; the W-norm used throughout (absolute value included)."""
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(x))) if x.size else 0.0


def _check(mdp: ValidatedMdp, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != mdp.shape:
        raise DimensionMismatch(f"Q table has shape {q.shape}, MDP is {mdp.shape}")
    return q


def bellman_apply(mdp: ValidatedMdp, q: np.ndarray) -> np.ndarray:
    """(Tq)(s, a) = E r(s, a) + gamma * sum_s' p(s'|s, a) max_b q(s', b)."""
    q = _check(mdp, q)
    return mdp.reward_mean + mdp.gamma * (mdp.trans @ q.max(axis=1))


def value_iterate(mdp: ValidatedMdp, tol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Iterate T from zero until the returned table is within ``tol`` of Q*.

    Stops once ||q_{k+1} - q_k|| <= tol (1 - gamma) / (2 gamma); the contraction
    then gives ||q_{k+1} - Q*|| <= tol / 2.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    gamma = mdp.gamma
    threshold = tol * (1.0 - gamma) / (2.0 * gamma)
    q = np.zeros(mdp.shape)
    for it in range(1, MAX_ITERATIONS + 1):
        q_next = bellman_apply(mdp, q)
        if sup_norm(q_next - q) <= threshold:
            return q_next, it
        q = q_next
    raise NonConvergence(f"value iteration did not reach tol={tol} in {MAX_ITERATIONS} sweeps")


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """One-hot rows on argmax_a q(s, a); ties go to the lowest action index."""
    q = np.asarray(q, dtype=float)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def contraction_check(mdp: ValidatedMdp, q1: np.ndarray, q2: np.ndarray) -> tuple[float, float]:
    """Return (||Tq1 - Tq2||, gamma ||q1 - q2||)."""
    q1, q2 = _check(mdp, q1), _check(mdp, q2)
    lhs = sup_norm(bellman_apply(mdp, q1) - bellman_apply(mdp, q2))
    rhs = mdp.gamma * sup_norm(q1 - q2)
    return lhs, rhs
