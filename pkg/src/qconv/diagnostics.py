"""Empirical checks of the objects used in the tabular convergence proof.

The error Delta_t = Q_t - Q* is split into a noise-driven part w_t and a
contraction-driven part delta_t,

    delta_{t+1} = (1 - a_t) delta_t + a_t E[F_t | past]
    w_{t+1}     = (1 - a_t) w_t     + a_t p_t,     p_t = F_t - E[F_t | past],

with w_0 = 0 and delta_0 = Delta_0. E[F_t | past] is computed exactly from
the model, so identities and the contraction step can be checked to
round-off on one side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ._backend import kernels
from .errors import NonFiniteValue
from .learn import CHUNK, N_UNIFORMS, LearnConfig, drive, initial_q, make_rng
from .mdp import RewardDist, ValidatedMdp, compute_cr
from .schedules import StepSchedule
from .solver import value_iterate

DECOMP_COLUMNS = (
    "t", "sup_delta", "sup_w", "sup_delta_part", "identity_residual",
    "max_cell_noise_sum", "max_identity_residual", "max_contraction_margin",
)


@dataclass
class DecompositionTrace:
    t: np.ndarray
    sup_delta: np.ndarray  # ||Delta_t||
    sup_w: np.ndarray  # ||w_t||
    sup_delta_part: np.ndarray  # ||delta_t||
    identity_residual: np.ndarray  # max_x |Delta_t - w_t - delta_t| at record time
    max_cell_noise_sum: np.ndarray  # max_x sum_{s<t} a_s(x)^2 p_s(x)^2
    max_identity_residual: float  # over every step
    max_contraction_margin: float  # max_t |E[F_t|.]| - gamma ||Delta_t||
    step_sizes: np.ndarray  # per step
    p: np.ndarray  # per step, at the visited cell
    expected_f: np.ndarray  # per step, at the visited cell
    gamma_delta_norm: np.ndarray  # per step
    w_tables: np.ndarray | None  # (n_records, S, A) if kept
    delta_tables: np.ndarray | None
    Delta_tables: np.ndarray | None
    noise_sums: np.ndarray  # final per-cell sums
    q: np.ndarray
    schedule: StepSchedule | None = None
    max_identity_residual_at: np.ndarray | None = field(default=None, repr=False)
    max_margin_at: np.ndarray | None = field(default=None, repr=False)

    def rows(self):
        for i in range(self.t.size):
            yield (int(self.t[i]), *(float(getattr(self, c)[i]) for c in DECOMP_COLUMNS[1:6]),
                   float(self.max_identity_residual_at[i]), float(self.max_margin_at[i]))


def decompose_run(
    mdp: ValidatedMdp,
    qstar: np.ndarray,
    cfg: LearnConfig,
    keep_tables: bool = True,
    kernel_module=None,
) -> DecompositionTrace:
    """Q-learning run that also evolves w_t and delta_t.

    Consumes the random stream exactly like :func:`q_learning_run`, so the
    Q trajectory is identical for the same config.
    """
    kern = kernels if kernel_module is None else kernel_module
    S, A = mdp.shape
    rng = make_rng(cfg.seed)
    u0 = rng.random(3)
    Q = initial_q(cfg.q_init, (S, A)).ravel()
    qs = np.ascontiguousarray(np.asarray(qstar, dtype=float).ravel())
    D = Q - qs
    W = np.zeros(S * A)
    noise = np.zeros(S * A)
    mass = np.zeros(S * A)
    state = np.array([min(int(u0[0] * S), S - 1), 0, 0], dtype=np.int64)
    fstate = np.zeros(2)
    fstate[1] = -math.inf
    T = cfg.horizon
    rec = np.zeros((T // cfg.record_every + 3, 8))
    per_step = [np.zeros(T) for _ in range(4)]
    P = np.ascontiguousarray(mdp.trans.reshape(S * A, S))
    rmean = np.ascontiguousarray(mdp.reward_mean.ravel())
    sched, behav = cfg.schedule.packed(), cfg.behavior.packed()
    sink = mdp.sink.tolist()
    tables: list[list[np.ndarray]] = [[], [], []]
    if keep_tables:
        for tab, arr in zip(tables, (W, D, Q - qs)):
            tab.append(arr.reshape(S, A).copy())
    chunk = cfg.record_every if keep_tables else CHUNK

    n_rec = 0
    status = 0
    while state[2] < T:
        n = min(chunk, T - int(state[2]))
        u = rng.random((n, N_UNIFORMS))
        k, status = kern.run_decompose(
            mdp.cdf, P, rmean, mdp.reward_codes, mdp.reward_params, mdp.gamma, qs, Q, mass, W, D,
            noise, sink, sched, behav, u, state, fstate, T, cfg.record_every, rec[n_rec:],
            *per_step,
        )
        n_rec += k
        if keep_tables:
            for tab, arr in zip(tables, (W, D, Q - qs)):
                tab.append(arr.reshape(S, A).copy())
        if status:
            break
    if status:
        raise NonFiniteValue(f"non-finite Q value at t={int(state[2])}")

    rec = rec[:n_rec]
    stacked = [np.stack(tab) if keep_tables else None for tab in tables]
    trace = DecompositionTrace(
        t=rec[:, 0].astype(np.int64),
        sup_delta=rec[:, 1].copy(),
        sup_w=rec[:, 2].copy(),
        sup_delta_part=rec[:, 3].copy(),
        identity_residual=rec[:, 4].copy(),
        max_cell_noise_sum=rec[:, 5].copy(),
        max_identity_residual=float(fstate[0]),
        max_contraction_margin=float(fstate[1]),
        step_sizes=per_step[0],
        p=per_step[1],
        expected_f=per_step[2],
        gamma_delta_norm=per_step[3],
        w_tables=stacked[0],
        delta_tables=stacked[1],
        Delta_tables=stacked[2],
        noise_sums=noise.reshape(S, A),
        q=Q.reshape(S, A),
        schedule=cfg.schedule,
    )
    trace.max_identity_residual_at = rec[:, 6].copy()
    trace.max_margin_at = rec[:, 7].copy()
    return trace


# --------------------------------------------------------------------------
# K_t recursion
# --------------------------------------------------------------------------


@dataclass
class KtTrace:
    K: np.ndarray  # K_0 .. K_T
    cap: float  # max(K_0, 1/(1-gamma) + 1)
    b: np.ndarray
    within_cap: bool
    nondecreasing: bool


def kt_cap(k0: float, gamma: float) -> float:
    return max(k0, 1.0 / (1.0 - gamma) + 1.0)


def kt_sequence(k0: float, b: Sequence[float] | StepSchedule, gamma: float, T: int) -> KtTrace:
    """K_{t+1} = max(K_t, K_t + b_t (1 - (1 - gamma) K_t)), checked against the cap."""
    if k0 < 0 or not (0 < gamma < 1):
        raise ValueError("need k0 >= 0 and gamma in (0, 1)")
    b = b.sequence(T) if isinstance(b, StepSchedule) else np.asarray(b, dtype=float)[:T]
    if b.size < T:
        raise ValueError(f"need {T} step sizes, got {b.size}")
    if np.any((b < 0) | (b > 1)):
        raise ValueError("step sizes must lie in [0, 1]")
    K = np.empty(T + 1)
    K[0] = k = float(k0)
    shrink = 1.0 - gamma
    for i, bt in enumerate(b.tolist()):
        k = max(k, k + bt * (1.0 - shrink * k))
        K[i + 1] = k
    cap = kt_cap(k0, gamma)
    return KtTrace(
        K=K, cap=cap, b=b,
        within_cap=bool(np.all(K <= cap)),
        nondecreasing=bool(np.all(np.diff(K) >= 0)),
    )


# --------------------------------------------------------------------------
# second-moment bound on L_t = max_x |Q_t(x)|
# --------------------------------------------------------------------------


@dataclass
class MomentReport:
    t: np.ndarray
    empirical: np.ndarray  # mean L_t^2 + 3 standard errors
    mean: np.ndarray
    se: np.ndarray
    bound: np.ndarray  # K_t^2 C_R
    verdict: str
    k0: float
    c_r: float
    n_runs: int

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": self.t.tolist(),
                "empirical": self.empirical.tolist(),
                "bound": self.bound.tolist(),
                "verdict": self.verdict,
                "mean": self.mean.tolist(),
                "se": self.se.tolist(),
                "k0": self.k0,
                "c_r": self.c_r,
                "n_runs": self.n_runs,
            },
            indent=1,
        )


def replica_seed(seed: Any, i: int) -> tuple[int, ...]:
    base = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    return (*base, int(i))


def lt_moment_check(
    mdp: ValidatedMdp,
    cfg: LearnConfig,
    n_runs: int,
    k0: float = 1.0,
    qstar: np.ndarray | None = None,
    traces: list | None = None,
) -> MomentReport:
    """Monte-Carlo E[L_t^2] over independent Q-learning runs against K_t^2 C_R.

    The step sizes applied at the visited cell differ between replicas; K_t
    is driven by their pointwise minimum, which gives the smallest K_t any
    replica could claim (K_{t+1} is nondecreasing in b_t while K_t is below
    1/(1-gamma)), so the comparison is conservative.
    """
    if n_runs < 30:
        raise ValueError("need at least 30 replicas")
    if qstar is None:
        qstar, _ = value_iterate(mdp)
    L2 = []
    b_min = np.full(cfg.horizon, np.inf)
    t = None
    for i in range(n_runs):
        rcfg = LearnConfig(cfg.schedule, cfg.behavior, cfg.horizon, cfg.q_init,
                           replica_seed(cfg.seed, i), cfg.record_every)
        diag = drive(mdp, qstar, rcfg, keep_step_sizes=True)
        if traces is not None:
            traces.append(diag)
        L2.append(diag.L**2)
        np.minimum(b_min, diag.step_sizes, out=b_min)
        t = diag.t
    L2 = np.array(L2)
    mean = L2.mean(axis=0)
    se = L2.std(axis=0, ddof=1) / math.sqrt(n_runs)
    kt = kt_sequence(k0, b_min, mdp.gamma, cfg.horizon)
    c_r = compute_cr(mdp)
    bound = kt.K[t] ** 2 * c_r
    empirical = mean + 3.0 * se
    verdict = "pass" if np.all(empirical <= bound) else "fail"
    return MomentReport(t=t, empirical=empirical, mean=mean, se=se, bound=bound,
                        verdict=verdict, k0=k0, c_r=c_r, n_runs=n_runs)


# --------------------------------------------------------------------------
# E[(Y - E[Y|G])^2] <= 4 E[Y^2]
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Lemma1Result:
    lhs: float
    rhs: float
    se: float
    passed: bool


def lemma1_check(dist: RewardDist, conditioning: str, n: int, rng: np.random.Generator) -> Lemma1Result:
    """Empirical E[Z^2] for Z = Y - E[Y|G] against the exact 4 E[Y^2].

    ``conditioning="trivial"``: G carries no information, Z = Y - E[Y].
    ``conditioning="full"``: Y is G-measurable, Z = 0.
    """
    if n < 10**4:
        raise ValueError("need at least 1e4 samples")
    mean, second = dist.moments()
    rhs = 4.0 * second
    if conditioning == "full":
        return Lemma1Result(0.0, rhs, 0.0, True)
    if conditioning != "trivial":
        raise ValueError(f"conditioning must be 'trivial' or 'full', got {conditioning!r}")
    z2 = (dist.sample(rng, n) - mean) ** 2
    lhs = float(z2.mean())
    se = float(z2.std(ddof=1) / math.sqrt(n))
    return Lemma1Result(lhs, rhs, se, lhs <= rhs + 3.0 * se)


# --------------------------------------------------------------------------
# summability of the noise term
# --------------------------------------------------------------------------


@dataclass
class NoiseSumReport:
    t: np.ndarray
    running: np.ndarray  # max over cells of the running sum, at record times
    total: float
    bound: float  # 4 M (1 + gamma K*) C_R
    bound_squared: float  # 4 M (1 + gamma K*)^2 C_R
    last_decile_fraction: float
    plateaued: bool
    passed: bool


def noise_summability_check(
    trace: DecompositionTrace,
    schedule: StepSchedule,
    mdp: ValidatedMdp,
    k0: float = 1.0,
) -> NoiseSumReport:
    """Per-cell sum of a_t^2 p_t^2 against the bound built from M = sum b_t^2.

    ``bound`` is the published form; expanding E[G_t^2] with L_t^2 <= K*^2 C_R
    gives the larger ``bound_squared``. The verdict uses the smaller one.
    """
    running = trace.max_cell_noise_sum
    total = float(running[-1])
    M = schedule.square_sum()
    k_star = kt_cap(k0, mdp.gamma)
    c_r = compute_cr(mdp)
    g = 1.0 + mdp.gamma * k_star
    bound = 4.0 * M * g * c_r
    bound_sq = 4.0 * M * g * g * c_r
    cut = int(np.searchsorted(trace.t, 0.9 * trace.t[-1]))
    frac = (total - float(running[cut])) / total if total > 0 else 0.0
    plateaued = frac < 0.01
    passed = bool(math.isfinite(total) and total <= bound and plateaued)
    return NoiseSumReport(trace.t, running, total, bound, bound_sq, frac, plateaued, passed)


def w_vanishing(traces: Sequence[DecompositionTrace]) -> float:
    """Median over runs of ||w_T|| / max_t ||w_t|| (0 when w never moves)."""
    ratios = [tr.sup_w[-1] / tr.sup_w.max() if tr.sup_w.max() > 0 else 0.0 for tr in traces]
    return float(np.median(ratios))
