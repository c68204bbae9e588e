"""Robbins-Monro step-size schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy import special

from .errors import BadSchedule, ConfigError

VISIT_HARMONIC, GLOBAL_POLYNOMIAL, CONSTANT = range(3)


@dataclass(frozen=True)
class StepSchedule:
    """Step-size family.

    ``visit_harmonic``: c0 / (k + 1), k the visit count of the updated cell.
    ``global_polynomial``: c0 / (t + 1)**p, t the global step.
    ``constant``: c0, a deliberate Robbins-Monro violation for controls.
    """

    family: str
    c0: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.family not in _CODES:
            raise BadSchedule(f"unknown schedule family {self.family!r}")
        if not (0.0 <= self.c0 <= 1.0):
            raise BadSchedule(f"c0 must lie in [0, 1], got {self.c0}")
        if self.family == "global_polynomial" and not self.p > 0:
            raise BadSchedule(f"exponent p must be positive, got {self.p}")

    @property
    def code(self) -> int:
        return _CODES[self.family]

    def packed(self) -> tuple[int, float, float]:
        return self.code, float(self.c0), float(self.p)

    def to_dict(self) -> dict[str, Any]:
        d = {"family": self.family, "c0": self.c0}
        if self.family == "global_polynomial":
            d["p"] = self.p
        return d

    def sequence(self, n: int) -> np.ndarray:
        """First ``n`` values along a single cell visited at every step (k = t)."""
        t = np.arange(n, dtype=float)
        if self.family == "visit_harmonic":
            return self.c0 / (t + 1.0)
        if self.family == "global_polynomial":
            return self.c0 / (t + 1.0) ** self.p
        return np.full(n, float(self.c0))

    def square_sum(self) -> float:
        """Closed-form sum of c_t**2 over t >= 0 along one cell (inf if divergent)."""
        if self.family == "visit_harmonic":
            return self.c0**2 * math.pi**2 / 6.0
        if self.family == "global_polynomial":
            if 2 * self.p <= 1:
                return math.inf
            return self.c0**2 * float(special.zeta(2 * self.p, 1))
        return 0.0 if self.c0 == 0 else math.inf


_CODES = {"visit_harmonic": VISIT_HARMONIC, "global_polynomial": GLOBAL_POLYNOMIAL, "constant": CONSTANT}


def VisitHarmonic(c0: float = 1.0) -> StepSchedule:
    return StepSchedule("visit_harmonic", c0)


def GlobalPolynomial(c0: float = 1.0, p: float = 1.0) -> StepSchedule:
    return StepSchedule("global_polynomial", c0, p)


def Constant(c0: float) -> StepSchedule:
    return StepSchedule("constant", c0)


def schedule_from_dict(d: Mapping[str, Any]) -> StepSchedule:
    extra = set(d) - {"family", "c0", "p"}
    if extra:
        raise ConfigError(f"unknown schedule keys: {sorted(extra)}")
    try:
        return StepSchedule(d["family"], float(d.get("c0", 1.0)), float(d.get("p", 1.0)))
    except KeyError:
        raise ConfigError("schedule needs a 'family' key") from None


def step_size(schedule: StepSchedule, t: float, k: float) -> float:
    """Step size at global step ``t`` for a cell visited ``k`` times before.

    Must stay bit-identical to the kernels' inline version.
    """
    if t < 0 or k < 0:
        raise ValueError("t and k must be non-negative")
    code, c0, p = schedule.packed()
    if code == VISIT_HARMONIC:
        return c0 / (k + 1.0)
    if code == GLOBAL_POLYNOMIAL:
        return c0 / (t + 1.0) ** p
    return c0


@dataclass(frozen=True)
class ScheduleReport:
    horizon: int
    partial_sum: float
    partial_square_sum: float
    verdict: str
    analytic_verdict: str | None
    sum_still_increasing: bool
    square_tail_increment: float


SATISFIES = "satisfies"
VIOLATES_DIVERGENCE = "violates-divergence"
VIOLATES_SQUARE = "violates-square-summability"


def _analytic_verdict(schedule: StepSchedule) -> str:
    if schedule.family == "visit_harmonic":
        return SATISFIES if schedule.c0 > 0 else VIOLATES_DIVERGENCE
    if schedule.family == "global_polynomial":
        if schedule.c0 == 0 or schedule.p > 1:
            return VIOLATES_DIVERGENCE
        if schedule.p <= 0.5:
            return VIOLATES_SQUARE
        return SATISFIES
    return VIOLATES_SQUARE if schedule.c0 > 0 else VIOLATES_DIVERGENCE


def validate_schedule(
    schedule: StepSchedule,
    horizon: int,
    sum_threshold: float | None = None,
    tail_tol: float = 0.03,
) -> ScheduleReport:
    """Finite-horizon check of sum c = inf and sum c**2 < inf.

    Divergence heuristic: the partial sum exceeds ``sum_threshold`` (default
    log(horizon) / 2, half the harmonic growth) and its last-decile increment
    is still at least 1% of that threshold. Square summability: the
    last-half increment of sum c**2 relative to the total is below ``tail_tol``.
    """
    if horizon < 1000:
        raise ValueError("horizon must be at least 1000")
    c = schedule.sequence(horizon)
    csum = np.cumsum(c)
    sq = np.cumsum(c * c)
    total, sq_total = float(csum[-1]), float(sq[-1])
    threshold = 0.5 * math.log(horizon) if sum_threshold is None else sum_threshold
    tail_sum_inc = total - float(csum[int(0.9 * horizon) - 1])
    increasing = tail_sum_inc >= 0.01 * threshold
    sq_tail = sq_total - float(sq[horizon // 2 - 1])
    sq_rel = sq_tail / sq_total if sq_total > 0 else 0.0

    if not (total > threshold and increasing):
        verdict = VIOLATES_DIVERGENCE
    elif sq_rel > tail_tol:
        verdict = VIOLATES_SQUARE
    else:
        verdict = SATISFIES
    return ScheduleReport(
        horizon=horizon,
        partial_sum=total,
        partial_square_sum=sq_total,
        verdict=verdict,
        analytic_verdict=_analytic_verdict(schedule),
        sum_still_increasing=bool(increasing),
        square_tail_increment=sq_rel,
    )
