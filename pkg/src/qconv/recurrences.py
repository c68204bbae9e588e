"""Deterministic stochastic-approximation recurrences and their closed forms.

All three recurrences iterate

    x_{n+1} = (1 - a_n) x_n + gamma a_n |x_n + c_n|

with c = 0 (contraction to 0), c = eps (limit eps gamma / (1 - gamma)) or a
vanishing perturbation c_n -> 0. Oracles are products evaluated in log
space with compensated prefix sums, so 1e6-step comparisons stay at the
1e-13 level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import BadSchedule, NonVanishingPerturbation
from .schedules import StepSchedule

LADDER = (0.1, 0.01, 0.001)


@dataclass
class RecurrenceResult:
    x: np.ndarray  # x_0 .. x_N
    oracle: np.ndarray | None  # closed form on the same indices, where valid
    limit: float  # theoretical limit
    limit_estimate: float  # x_N
    n_at_tolerance: dict = field(default_factory=dict)  # eps -> index after which |x - limit| < eps
    max_rel_dev: float | None = None
    envelope: np.ndarray | None = None  # comparison process from envelope_start on
    envelope_start: int | None = None
    envelope_level: float | None = None
    envelope_dominates: bool | None = None

    @property
    def N(self) -> int:
        return self.x.size - 1

    def rows(self, stride: int = 1000):
        idx = np.unique(np.r_[np.arange(0, self.x.size, stride), self.x.size - 1])
        orc = self.oracle if self.oracle is not None else np.full_like(self.x, np.nan)
        for n in idx:
            yield int(n), float(self.x[n]), float(orc[n]), float(abs(self.x[n] - orc[n]))


def step_values(a: StepSchedule | Sequence[float], N: int) -> np.ndarray:
    vals = a.sequence(N) if isinstance(a, StepSchedule) else np.asarray(a, dtype=float)[:N]
    if vals.size < N:
        raise BadSchedule(f"need {N} step sizes, got {vals.size}")
    if np.any(~np.isfinite(vals)) or np.any((vals < 0) | (vals > 1)):
        raise BadSchedule("step sizes must lie in [0, 1]")
    return np.ascontiguousarray(vals)


def iterate(x0: float, gamma: float, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    out = np.empty(a.size + 1)
    kernels.recurrence(float(x0), float(gamma), np.ascontiguousarray(a, dtype=float),
                       np.ascontiguousarray(c, dtype=float), out)
    return out


def log_product(factors: np.ndarray) -> np.ndarray:
    """Prefix products 1, f_0, f_0 f_1, ... of positive factors via Kahan sums of logs."""
    out = np.empty(factors.size + 1)
    kernels.kahan_cumsum(np.ascontiguousarray(np.log(factors)), out)
    return np.exp(out)


def _check_gamma(gamma: float) -> None:
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def settle_index(err: np.ndarray, eps: float) -> int | None:
    """First n with err[m] < eps for every m >= n, or None if never settled."""
    above = np.flatnonzero(err >= eps)
    if above.size == 0:
        return 0
    last = int(above[-1])
    return None if last == err.size - 1 else last + 1


def _ladder(x: np.ndarray, limit: float, ladder: Sequence[float]) -> dict:
    err = np.abs(x - limit)
    return {eps: settle_index(err, eps) for eps in ladder}


def _rel_dev(x: np.ndarray, oracle: np.ndarray) -> float:
    scale = np.maximum(np.abs(oracle), np.finfo(float).tiny)
    dev = np.abs(x - oracle) / scale
    dev[(x == 0) & (oracle == 0)] = 0.0
    return float(dev.max())


def lemma3_oracle(x0: float, gamma: float, a: np.ndarray) -> np.ndarray:
    """Piecewise product form.

    While x < 0 the map is x (1 - a (1 + gamma)); the first factor <= 0 flips
    the sign and from then on x >= 0 evolves as x (1 - a (1 - gamma)).
    """
    if x0 >= 0:
        return x0 * log_product(1.0 - a * (1.0 - gamma))
    neg = 1.0 - a * (1.0 + gamma)
    flips = np.flatnonzero(neg <= 0)
    if flips.size == 0:
        return x0 * log_product(neg)
    k = int(flips[0])
    out = np.empty(a.size + 1)
    out[: k + 1] = x0 * log_product(neg[:k])
    x_flip = out[k] * neg[k]  # >= 0
    out[k + 1 :] = x_flip * log_product(1.0 - a[k + 1 :] * (1.0 - gamma))
    return out


def recurrence_lemma3(x0: float, gamma: float, a, N: int, ladder: Sequence[float] = LADDER) -> RecurrenceResult:
    """x_{n+1} = (1 - a_n) x_n + gamma a_n |x_n| against its product form."""
    _check_gamma(gamma)
    av = step_values(a, N)
    x = iterate(x0, gamma, av, np.zeros(N))
    oracle = lemma3_oracle(x0, gamma, av)
    return RecurrenceResult(
        x=x, oracle=oracle, limit=0.0, limit_estimate=float(x[-1]),
        n_at_tolerance=_ladder(x, 0.0, ladder), max_rel_dev=_rel_dev(x, oracle),
    )


def recurrence_lemma4(x0: float, gamma: float, eps: float, a, N: int,
                      ladder: Sequence[float] = LADDER) -> RecurrenceResult:
    """x_{n+1} = (1 - a_n) x_n + gamma a_n |x_n + eps| -> eps gamma / (1 - gamma).

    The oracle uses y_n = x_n - limit, which contracts by (1 - a_n (1 - gamma))
    while x_n + eps >= 0; that holds for every n once x0 >= -eps.
    """
    _check_gamma(gamma)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    av = step_values(a, N)
    limit = eps * gamma / (1.0 - gamma)
    x = iterate(x0, gamma, av, np.full(N, float(eps)))
    oracle = None
    dev = None
    if x0 + eps >= 0:
        oracle = limit + (x0 - limit) * log_product(1.0 - av * (1.0 - gamma))
        dev = float(np.max(np.abs(x - oracle)) / max(abs(x0 - limit), abs(limit), 1e-300))
    return RecurrenceResult(
        x=x, oracle=oracle, limit=limit, limit_estimate=float(x[-1]),
        n_at_tolerance=_ladder(x, limit, ladder), max_rel_dev=dev,
    )


def vanishing_sequence(C: float, q: float, N: int) -> np.ndarray:
    """c_n = C / (n + 1)**q; q = 0 gives the constant (non-vanishing) control."""
    return C / (np.arange(N, dtype=float) + 1.0) ** q


def recurrence_lemma5(
    x0: float,
    gamma: float,
    a,
    c: Sequence[float],
    N: int,
    ladder: Sequence[float] = LADDER,
    envelope_start: int | None = None,
    vanish_tol: float = 1e-2,
    require_vanishing: bool = True,
) -> RecurrenceResult:
    """x_{n+1} = (1 - a_n) x_n + gamma a_n |x_n + c_n| with c_n -> 0.

    The comparison process z restarts at ``envelope_start`` (default N // 2)
    from |x| and runs with the constant eps1 = sup of the remaining c_n; it
    must dominate |x_n| pointwise and tends to eps1 gamma / (1 - gamma).
    """
    _check_gamma(gamma)
    av = step_values(a, N)
    cv = np.ascontiguousarray(np.asarray(c, dtype=float)[:N])
    if cv.size < N or np.any(cv < 0):
        raise ValueError("perturbation must be non-negative with at least N terms")
    if require_vanishing and not cv[-1] < vanish_tol:
        raise NonVanishingPerturbation(f"c_N = {cv[-1]:.3g} has not decayed below {vanish_tol}")
    x = iterate(x0, gamma, av, cv)

    n0 = N // 2 if envelope_start is None else int(envelope_start)
    eps1 = float(cv[n0:].max())
    z = iterate(abs(x[n0]), gamma, av[n0:], np.full(N - n0, eps1))
    dominates = bool(np.all(z >= np.abs(x[n0:])))
    return RecurrenceResult(
        x=x, oracle=None, limit=0.0, limit_estimate=float(x[-1]),
        n_at_tolerance=_ladder(x, 0.0, ladder),
        envelope=z, envelope_start=n0, envelope_level=eps1 * gamma / (1.0 - gamma),
        envelope_dominates=dominates,
    )


def stall_floor(x0: float, gamma: float, a: np.ndarray) -> float:
    """Lower bound on the |x| recurrence iterate (x0 >= 0) when sum a_n < inf.

    With u_n = (1 - gamma) a_n <= 1 - gamma < 1, log(1 - u) >= -u / (1 - u)
    gives x_N >= x0 exp(-sum u_n / (1 - u_n)) > 0.
    """
    u = (1.0 - gamma) * np.asarray(a, dtype=float)
    return float(x0 * math.exp(-math.fsum(u / (1.0 - u))))
