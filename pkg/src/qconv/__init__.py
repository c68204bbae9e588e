"""Numerical lab for tabular and continuous-domain Q-learning with unbounded rewards."""

__version__ = "0.1.0"

from ._backend import BACKEND, COMPILED
from .errors import *  # noqa: F401,F403
from .mdp import (
    Gaussian,
    MdpSpec,
    PointMass,
    ShiftedExponential,
    StudentT,
    Transition,
    Uniform,
    ValidatedMdp,
    compute_cr,
    make_mdp,
    reward_moments,
    sample_transition,
    validate_mdp,
)
from .solver import bellman_apply, contraction_check, greedy_policy, sup_norm, value_iterate
from .schedules import Constant, GlobalPolynomial, StepSchedule, VisitHarmonic, step_size, validate_schedule
from .learn import (
    EpsilonGreedy,
    LearnConfig,
    RunDiagnostics,
    Softmax,
    UniformRandom,
    q_learning_run,
    sarsa_run,
)
from .diagnostics import (
    decompose_run,
    kt_sequence,
    lemma1_check,
    lt_moment_check,
    noise_summability_check,
)
from .recurrences import recurrence_lemma3, recurrence_lemma4, recurrence_lemma5

__all__ = [name for name in dir() if not name.startswith("_")]
