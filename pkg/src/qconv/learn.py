"""Tabular Q-learning and SARSA with Robbins-Monro schedules.

Both learners update exactly one cell per step,

    Q(s, a) <- (1 - alpha) Q(s, a) + alpha * (r + gamma * boot),

with ``boot = max_b Q(s', b)`` for Q-learning and ``Q(s', a')`` for SARSA,
``a'`` drawn from the behavior policy. The hot loop lives in the kernel
backend; this module owns configuration, RNG streams and bookkeeping.

All randomness comes from a PCG64 stream consumed as blocks of uniforms
(seven per step), so a run is fully determined by its seed and config and
both kernel backends see the same numbers.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ._backend import BACKEND, kernels
from .errors import ConfigError, DimensionMismatch, NonFiniteValue
from .mdp import ValidatedMdp
from .schedules import StepSchedule, schedule_from_dict

CHUNK = 1 << 16
N_UNIFORMS = 7
DECAYS = {"none": 0, "inv_sqrt": 1, "inv_t": 2}
TRAJECTORY_COLUMNS = ("t", "sup_error", "L_t", "Lprime_t", "min_visits", "max_visits")


# --------------------------------------------------------------------------
# behavior policies
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformRandom:
    def packed(self):
        return (0, 0.0, 0.0, 0)

    def to_dict(self):
        return {"family": "uniform_random"}


@dataclass(frozen=True)
class EpsilonGreedy:
    """eps_t = max(eps_min, eps0 * decay(t)); decay in {none, inv_sqrt, inv_t}."""

    eps0: float
    decay: str = "none"
    eps_min: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.eps0 <= 1.0 and 0.0 <= self.eps_min <= 1.0):
            raise ConfigError(f"epsilon values must lie in [0, 1]: {self}")
        if self.decay not in DECAYS:
            raise ConfigError(f"unknown decay {self.decay!r}")

    def packed(self):
        return (1, float(self.eps0), float(self.eps_min), DECAYS[self.decay])

    def to_dict(self):
        return {"family": "epsilon_greedy", "eps0": self.eps0, "decay": self.decay, "eps_min": self.eps_min}


@dataclass(frozen=True)
class Softmax:
    """Boltzmann exploration with tau_t = max(temp_min, temperature * decay(t))."""

    temperature: float
    decay: str = "none"
    temp_min: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0 or self.temp_min < 0:
            raise ConfigError(f"temperature must be positive: {self}")
        if self.decay not in DECAYS:
            raise ConfigError(f"unknown decay {self.decay!r}")

    def packed(self):
        return (2, float(self.temperature), float(self.temp_min), DECAYS[self.decay])

    def to_dict(self):
        return {"family": "softmax", "temperature": self.temperature, "decay": self.decay,
                "temp_min": self.temp_min}


Behavior = UniformRandom | EpsilonGreedy | Softmax

_BEHAVIORS = {"uniform_random": UniformRandom, "epsilon_greedy": EpsilonGreedy, "softmax": Softmax}


def behavior_from_dict(d: Mapping[str, Any]) -> Behavior:
    d = dict(d)
    name = d.pop("family", None)
    if name not in _BEHAVIORS:
        raise ConfigError(f"unknown behavior family {name!r}; expected one of {sorted(_BEHAVIORS)}")
    try:
        return _BEHAVIORS[name](**d)
    except TypeError as exc:
        raise ConfigError(f"bad behavior parameters: {exc}") from None


# --------------------------------------------------------------------------
# config and diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LearnConfig:
    schedule: StepSchedule
    behavior: Behavior
    horizon: int
    q_init: Any = 0.0
    seed: Any = 0
    record_every: int = 1000

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")

    def to_dict(self) -> dict[str, Any]:
        q_init = self.q_init
        if isinstance(q_init, np.ndarray):
            q_init = q_init.tolist()
        seed = list(self.seed) if isinstance(self.seed, (tuple, list)) else self.seed
        return {
            "schedule": self.schedule.to_dict(),
            "behavior": self.behavior.to_dict(),
            "horizon": self.horizon,
            "q_init": q_init,
            "seed": seed,
            "record_every": self.record_every,
        }


_LEARN_KEYS = {"schedule", "behavior", "horizon", "q_init", "record_every"}


def learn_config_from_dict(d: Mapping[str, Any], seed: Any = 0) -> LearnConfig:
    extra = set(d) - _LEARN_KEYS
    if extra:
        raise ConfigError(f"unknown learner keys: {sorted(extra)}")
    for key in ("schedule", "behavior", "horizon"):
        if key not in d:
            raise ConfigError(f"learner section needs {key!r}")
    q_init = d.get("q_init", 0.0)
    if isinstance(q_init, list):
        q_init = np.asarray(q_init, dtype=float)
    return LearnConfig(
        schedule=schedule_from_dict(d["schedule"]),
        behavior=behavior_from_dict(d["behavior"]),
        horizon=int(d["horizon"]),
        q_init=q_init,
        seed=seed,
        record_every=int(d.get("record_every", 1000)),
    )


@dataclass
class RunDiagnostics:
    """Recorded trajectory of one learning run.

    Arrays are aligned on ``t``; visit columns hold per-cell visit counts
    (accumulated ripple mass for the continuous-domain learner).
    """

    t: np.ndarray
    sup_error: np.ndarray
    mean_error: np.ndarray
    L: np.ndarray
    Lprime: np.ndarray
    min_visits: np.ndarray
    max_visits: np.ndarray
    visit_sum: np.ndarray
    visits: np.ndarray
    q: np.ndarray
    seed: Any = None
    wall_time: float = 0.0
    backend: str = BACKEND
    step_sizes: np.ndarray | None = field(default=None, repr=False)

    @property
    def initial_error(self) -> float:
        return float(self.sup_error[0])

    @property
    def final_error(self) -> float:
        return float(self.sup_error[-1])

    def error_at(self, t: int) -> float:
        idx = np.flatnonzero(self.t == t)
        if idx.size == 0:
            raise KeyError(f"t={t} was not recorded")
        return float(self.sup_error[idx[0]])

    def rows(self):
        for i in range(self.t.size):
            yield (
                int(self.t[i]),
                float(self.sup_error[i]),
                float(self.L[i]),
                float(self.Lprime[i]),
                int(self.min_visits[i]),
                int(self.max_visits[i]),
            )

    def to_csv(self, path) -> None:
        write_csv(path, TRAJECTORY_COLUMNS, self.rows())


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, columns, rows) -> None:
    """CSV with round-trip float formatting, so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def make_rng(seed: Any) -> np.random.Generator:
    if isinstance(seed, (tuple, list)):
        seed = np.random.SeedSequence([int(s) for s in seed])
    return np.random.Generator(np.random.PCG64(seed))


def initial_q(q_init: Any, shape: tuple[int, int]) -> np.ndarray:
    q = np.asarray(q_init, dtype=float)
    if q.ndim == 0:
        return np.full(shape, float(q))
    if q.shape != shape:
        raise DimensionMismatch(f"q_init has shape {q.shape}, expected {shape}")
    return q.copy()


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def drive(
    mdp: ValidatedMdp,
    qstar: np.ndarray,
    cfg: LearnConfig,
    *,
    sarsa: bool = False,
    spread: np.ndarray | None = None,
    keep_step_sizes: bool = False,
    kernel_module=None,
) -> RunDiagnostics:
    """Run a learner through the kernel backend in fixed-size uniform blocks."""
    kern = kernels if kernel_module is None else kernel_module
    S, A = mdp.shape
    qstar = np.asarray(qstar, dtype=float)
    if qstar.shape != (S, A):
        raise DimensionMismatch(f"qstar has shape {qstar.shape}, MDP is {(S, A)}")
    rng = make_rng(cfg.seed)
    start = time.perf_counter()

    u0 = rng.random(3)
    Q = initial_q(cfg.q_init, (S, A)).ravel()
    s0 = min(int(u0[0] * S), S - 1)
    behav = cfg.behavior.packed()
    a0 = 0
    if sarsa:
        a0 = _choose_py(Q, s0, A, 0.0, behav, u0[1], u0[2])
    state = np.array([s0, a0, 0], dtype=np.int64)
    mass = np.zeros(S * A)
    spread_arr = np.zeros((0, 0)) if spread is None else np.ascontiguousarray(spread, dtype=float)
    rec = np.zeros((cfg.horizon // cfg.record_every + 3, 8))
    alpha_out = np.zeros(cfg.horizon if keep_step_sizes else 0)
    qs = np.ascontiguousarray(qstar.ravel())
    sink = mdp.sink.tolist()
    sched = cfg.schedule.packed()

    n_rec = 0
    status = 0
    while state[2] < cfg.horizon:
        n = min(CHUNK, cfg.horizon - int(state[2]))
        u = rng.random((n, N_UNIFORMS))
        k, status = kern.run_learner(
            mdp.cdf, mdp.reward_codes, mdp.reward_params, mdp.gamma, qs, Q, mass, spread_arr,
            sink, sched, behav, sarsa, u, state, cfg.horizon, cfg.record_every,
            rec[n_rec:], alpha_out,
        )
        n_rec += k
        if status:
            break

    rec = rec[:n_rec]
    diag = RunDiagnostics(
        t=rec[:, 0].astype(np.int64),
        sup_error=rec[:, 1].copy(),
        mean_error=rec[:, 2].copy(),
        L=rec[:, 3].copy(),
        Lprime=rec[:, 4].copy(),
        min_visits=rec[:, 5].copy(),
        max_visits=rec[:, 6].copy(),
        visit_sum=rec[:, 7].copy(),
        visits=mass.reshape(S, A),
        q=Q.reshape(S, A),
        seed=cfg.seed,
        wall_time=time.perf_counter() - start,
        backend="cython" if kern.__name__.endswith("_kernels") else "python",
        step_sizes=alpha_out if keep_step_sizes else None,
    )
    if status:
        raise NonFiniteValue(f"non-finite Q value at t={int(state[2])}", diagnostics=diag)
    return diag


def _choose_py(Q, s, A, t, behav, u_e, u_a):
    from ._fallback import _choose

    return _choose(Q.tolist(), s, A, t, behav, float(u_e), float(u_a))


def q_learning_run(mdp: ValidatedMdp, qstar: np.ndarray, cfg: LearnConfig, **kw) -> RunDiagnostics:
    """Off-policy Q-learning; ``qstar`` is only used to measure the error."""
    return drive(mdp, qstar, cfg, sarsa=False, **kw)


def sarsa_run(mdp: ValidatedMdp, qstar: np.ndarray, cfg: LearnConfig, **kw) -> RunDiagnostics:
    """On-policy SARSA; converges to Q* only under a greedy-in-the-limit behavior."""
    return drive(mdp, qstar, cfg, sarsa=True, **kw)


def summary(diag: RunDiagnostics, cfg: LearnConfig, algorithm: str) -> dict[str, Any]:
    return {
        "algorithm": algorithm,
        "config": cfg.to_dict(),
        "seed": cfg.to_dict()["seed"],
        "initial_sup_error": diag.initial_error,
        "final_sup_error": diag.final_error,
        "wall_time": diag.wall_time,
        "backend": diag.backend,
    }
