"""Finite MDPs with unbounded (finite second moment) reward distributions.

Rewards are drawn independently of the next state, and their law does not
depend on time. Every reward family exposes closed-form first and second
raw moments so that the exact solver and the moment bounds never need to
estimate anything.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import special

from .errors import (
    BadGamma,
    ConfigError,
    IndexOutOfRange,
    InvalidDistribution,
    NonStochasticRow,
)

ROW_SUM_TOL = 1e-12

# Integer family codes shared with the compiled kernels.
GAUSSIAN, UNIFORM, STUDENT_T, SHIFTED_EXPONENTIAL, POINT_MASS = range(5)


# --------------------------------------------------------------------------
# reward distributions
# --------------------------------------------------------------------------


class RewardDist:
    """Base class; concrete families are frozen dataclasses below."""

    code: int
    family: str

    def params(self) -> tuple[float, float, float]:
        raise NotImplementedError

    def validate(self) -> None:
        raise NotImplementedError

    def moments(self) -> tuple[float, float]:
        raise NotImplementedError

    def ppf(self, u: float) -> float:
        """Inverse CDF. The learners sample rewards through this map."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` i.i.d. draws (vectorized inverse CDF)."""
        u = rng.random(n)
        u[u == 0.0] = 2.0**-54
        return self._ppf_array(u)

    def _ppf_array(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        d = {"family": self.family}
        d.update({k: float(v) for k, v in self.__dict__.items()})
        return d


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidDistribution(msg)


def _finite(*xs: float) -> bool:
    return all(math.isfinite(float(x)) for x in xs)


@dataclass(frozen=True)
class Gaussian(RewardDist):
    mean: float
    stddev: float
    code = GAUSSIAN
    family = "gaussian"

    def params(self):
        return (float(self.mean), float(self.stddev), 0.0)

    def validate(self):
        _require(_finite(self.mean, self.stddev), f"non-finite parameter in {self}")
        _require(self.stddev > 0, f"stddev must be > 0, got {self.stddev}")

    def moments(self):
        return float(self.mean), float(self.mean) ** 2 + float(self.stddev) ** 2

    def ppf(self, u):
        return self.mean + self.stddev * float(special.ndtri(u))

    def _ppf_array(self, u):
        return self.mean + self.stddev * special.ndtri(u)


@dataclass(frozen=True)
class Uniform(RewardDist):
    lo: float
    hi: float
    code = UNIFORM
    family = "uniform"

    def params(self):
        return (float(self.lo), float(self.hi), 0.0)

    def validate(self):
        _require(_finite(self.lo, self.hi), f"non-finite parameter in {self}")
        _require(self.hi > self.lo, f"need hi > lo, got {self}")

    def moments(self):
        lo, hi = float(self.lo), float(self.hi)
        return 0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * u

    _ppf_array = ppf


@dataclass(frozen=True)
class StudentT(RewardDist):
    dof: float
    loc: float = 0.0
    scale: float = 1.0
    code = STUDENT_T
    family = "student_t"

    def params(self):
        return (float(self.dof), float(self.loc), float(self.scale))

    def validate(self):
        _require(_finite(self.dof, self.loc, self.scale), f"non-finite parameter in {self}")
        # dof <= 2 has an infinite second moment.
        _require(self.dof > 2, f"StudentT needs dof > 2 for a finite second moment, got {self.dof}")
        _require(self.scale > 0, f"scale must be > 0, got {self.scale}")

    def moments(self):
        dof, loc, scale = self.params()
        return loc, loc * loc + scale * scale * dof / (dof - 2.0)

    def ppf(self, u):
        return self.loc + self.scale * float(special.stdtrit(self.dof, u))

    def _ppf_array(self, u):
        return self.loc + self.scale * special.stdtrit(self.dof, u)


@dataclass(frozen=True)
class ShiftedExponential(RewardDist):
    rate: float
    shift: float = 0.0
    code = SHIFTED_EXPONENTIAL
    family = "shifted_exponential"

    def params(self):
        return (float(self.rate), float(self.shift), 0.0)

    def validate(self):
        _require(_finite(self.rate, self.shift), f"non-finite parameter in {self}")
        _require(self.rate > 0, f"rate must be > 0, got {self.rate}")

    def moments(self):
        rate, shift, _ = self.params()
        mean = shift + 1.0 / rate
        return mean, 1.0 / (rate * rate) + mean * mean

    def ppf(self, u):
        return self.shift - math.log1p(-u) / self.rate

    def _ppf_array(self, u):
        return self.shift - np.log1p(-u) / self.rate


@dataclass(frozen=True)
class PointMass(RewardDist):
    value: float
    code = POINT_MASS
    family = "point_mass"

    def params(self):
        return (float(self.value), 0.0, 0.0)

    def validate(self):
        _require(_finite(self.value), f"non-finite parameter in {self}")

    def moments(self):
        return float(self.value), float(self.value) ** 2

    def ppf(self, u):
        return float(self.value)

    def _ppf_array(self, u):
        return np.full_like(u, float(self.value))


FAMILIES: dict[str, type[RewardDist]] = {
    cls.family: cls for cls in (Gaussian, Uniform, StudentT, ShiftedExponential, PointMass)
}


def reward_moments(dist: RewardDist) -> tuple[float, float]:
    """Exact (mean, second raw moment) of a reward distribution."""
    dist.validate()
    return dist.moments()


def dist_from_dict(d: Mapping[str, Any]) -> RewardDist:
    """Build a distribution from ``{"family": name, <param>: value, ...}``."""
    if not isinstance(d, Mapping) or "family" not in d:
        raise ConfigError(f"reward entry must be a mapping with a 'family' key, got {d!r}")
    name = d["family"]
    if name not in FAMILIES:
        raise ConfigError(f"unknown reward family {name!r}; expected one of {sorted(FAMILIES)}")
    cls = FAMILIES[name]
    allowed = {f for f in cls.__dataclass_fields__}
    extra = set(d) - allowed - {"family"}
    if extra:
        raise ConfigError(f"unknown keys for {name}: {sorted(extra)}")
    try:
        return cls(**{k: float(v) for k, v in d.items() if k != "family"})
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None


# --------------------------------------------------------------------------
# MDP spec and validated handle
# --------------------------------------------------------------------------


@dataclass
class MdpSpec:
    """Raw, unchecked MDP description.

    ``trans`` and ``rewards`` are either mappings keyed by ``(s, a)`` or
    nested sequences indexed ``[s][a]``.
    """

    n_states: int
    n_actions: int
    trans: Any
    rewards: Any
    gamma: float

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for s in range(self.n_states):
            for a in range(self.n_actions):
                rows.append(
                    {
                        "state": s,
                        "action": a,
                        "trans": [float(p) for p in _cell(self.trans, s, a)],
                        "reward": _cell(self.rewards, s, a).to_dict(),
                    }
                )
        return {
            "n_states": int(self.n_states),
            "n_actions": int(self.n_actions),
            "gamma": float(self.gamma),
            "rows": rows,
        }


def _cell(table, s, a):
    if isinstance(table, Mapping):
        try:
            return table[(s, a)]
        except KeyError:
            raise NonStochasticRow(f"missing entry for cell ({s}, {a})") from None
    return table[s][a]


@dataclass(frozen=True)
class Transition:
    reward: float
    next_state: int


@dataclass(frozen=True, eq=False)
class ValidatedMdp:
    """Sealed MDP; arrays are read-only and safe to share between runs."""

    spec: MdpSpec
    trans: np.ndarray  # (S, A, S)
    cdf: np.ndarray  # (S*A, S), cumulative rows with the tail pinned to 1
    rewards: tuple  # rewards[s][a] -> RewardDist
    reward_codes: np.ndarray  # (S*A,)
    reward_params: np.ndarray  # (S*A, 3)
    reward_mean: np.ndarray  # (S, A)
    reward_second: np.ndarray  # (S, A)
    sink: np.ndarray  # (S,) bool, absorbing zero-reward states
    gamma: float = field(default=0.9)

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def n_actions(self) -> int:
        return self.trans.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.trans.shape[:2]

    def __eq__(self, other):
        if not isinstance(other, ValidatedMdp):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and np.array_equal(self.trans, other.trans)
            and self.rewards == other.rewards
        )

    __hash__ = None


def _cumulative(row: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(row)
    last = int(np.flatnonzero(row > 0)[-1])
    cdf[last:] = 1.0
    return cdf


def validate_mdp(spec: MdpSpec | ValidatedMdp) -> ValidatedMdp:
    """Check every invariant of ``spec`` and return a sealed handle."""
    if isinstance(spec, ValidatedMdp):
        spec = spec.spec
    S, A = int(spec.n_states), int(spec.n_actions)
    if S < 1 or A < 1:
        raise NonStochasticRow(f"need at least one state and one action, got {S}x{A}")
    gamma = float(spec.gamma)
    if not (0.0 < gamma < 1.0):
        raise BadGamma(f"gamma must lie strictly inside (0, 1), got {spec.gamma}")

    trans = np.empty((S, A, S))
    rewards = []
    for s in range(S):
        row_r = []
        for a in range(A):
            p = np.asarray(_cell(spec.trans, s, a), dtype=float)
            if p.shape != (S,):
                raise NonStochasticRow(f"row ({s}, {a}) has shape {p.shape}, expected ({S},)")
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise NonStochasticRow(f"row ({s}, {a}) has negative or non-finite entries")
            if abs(p.sum() - 1.0) > ROW_SUM_TOL:
                raise NonStochasticRow(f"row ({s}, {a}) sums to {p.sum()!r}")
            trans[s, a] = p
            dist = _cell(spec.rewards, s, a)
            if not isinstance(dist, RewardDist):
                raise InvalidDistribution(f"reward ({s}, {a}) is not a RewardDist: {dist!r}")
            dist.validate()
            row_r.append(dist)
        rewards.append(tuple(row_r))

    flat = [d for row in rewards for d in row]
    moments = np.array([d.moments() for d in flat]).reshape(S, A, 2)
    sink = np.array(
        [
            all(trans[s, a, s] == 1.0 and rewards[s][a] == PointMass(0.0) for a in range(A))
            for s in range(S)
        ]
    )
    arrays = dict(
        trans=trans,
        cdf=np.array([_cumulative(trans[s, a]) for s in range(S) for a in range(A)]),
        reward_codes=np.array([d.code for d in flat], dtype=np.int64),
        reward_params=np.array([d.params() for d in flat], dtype=float).reshape(S * A, 3),
        reward_mean=np.ascontiguousarray(moments[..., 0]),
        reward_second=np.ascontiguousarray(moments[..., 1]),
        sink=sink,
    )
    for arr in arrays.values():
        arr.setflags(write=False)
    return ValidatedMdp(spec=spec, rewards=tuple(rewards), gamma=gamma, **arrays)


def sample_transition(mdp: ValidatedMdp, s: int, a: int, rng: np.random.Generator) -> Transition:
    """Draw ``(reward, next_state)`` for taking action ``a`` in state ``s``."""
    S, A = mdp.shape
    if not (0 <= s < S and 0 <= a < A):
        raise IndexOutOfRange(f"cell ({s}, {a}) outside {S}x{A}")
    u_next, u_rew = rng.random(2)
    next_state = bisect.bisect_right(mdp.cdf[s * A + a], u_next)
    if u_rew == 0.0:
        u_rew = 2.0**-54
    return Transition(reward=mdp.rewards[s][a].ppf(u_rew), next_state=int(next_state))


def compute_cr(mdp: ValidatedMdp) -> float:
    """Largest reward second moment over all state-action cells."""
    return float(mdp.reward_second.max())


# --------------------------------------------------------------------------
# structured config
# --------------------------------------------------------------------------

_MDP_KEYS = {"n_states", "n_actions", "gamma", "rows"}
_ROW_KEYS = {"state", "action", "trans", "reward"}


def mdp_from_dict(d: Mapping[str, Any]) -> MdpSpec:
    """Parse the ``mdp`` section of a config file.

    Schema::

        n_states: int
        n_actions: int
        gamma: float
        rows:            # one entry per (state, action)
          - state: int
            action: int
            trans: [p_0, ..., p_{S-1}]
            reward: {family: gaussian, mean: 0.0, stddev: 1.0}
    """
    extra = set(d) - _MDP_KEYS
    if extra:
        raise ConfigError(f"unknown keys in mdp section: {sorted(extra)}")
    missing = _MDP_KEYS - set(d)
    if missing:
        raise ConfigError(f"missing keys in mdp section: {sorted(missing)}")
    S, A = int(d["n_states"]), int(d["n_actions"])
    trans, rewards = {}, {}
    for row in d["rows"]:
        extra = set(row) - _ROW_KEYS
        if extra:
            raise ConfigError(f"unknown keys in mdp row: {sorted(extra)}")
        if _ROW_KEYS - set(row):
            raise ConfigError(f"mdp row missing keys: {sorted(_ROW_KEYS - set(row))}")
        key = (int(row["state"]), int(row["action"]))
        if key in trans:
            raise ConfigError(f"duplicate row for cell {key}")
        trans[key] = [float(p) for p in row["trans"]]
        rewards[key] = dist_from_dict(row["reward"])
    expected = {(s, a) for s in range(S) for a in range(A)}
    if set(trans) != expected:
        raise ConfigError(
            f"rows must cover every (state, action) exactly once; "
            f"missing {sorted(expected - set(trans))}, extra {sorted(set(trans) - expected)}"
        )
    return MdpSpec(n_states=S, n_actions=A, trans=trans, rewards=rewards, gamma=float(d["gamma"]))


def as_arrays(spec: MdpSpec) -> tuple[np.ndarray, list[list[RewardDist]]]:
    """Dense ``(S, A, S)`` transitions and nested reward list for a spec."""
    S, A = spec.n_states, spec.n_actions
    trans = np.array([[_cell(spec.trans, s, a) for a in range(A)] for s in range(S)], dtype=float)
    rewards = [[_cell(spec.rewards, s, a) for a in range(A)] for s in range(S)]
    return trans, rewards


def make_mdp(trans: Sequence, rewards: Sequence, gamma: float) -> ValidatedMdp:
    """Convenience: validate dense ``trans[s][a]`` / ``rewards[s][a]`` tables."""
    trans = np.asarray(trans, dtype=float)
    S, A = trans.shape[:2]
    return validate_mdp(MdpSpec(S, A, trans, rewards, gamma))
