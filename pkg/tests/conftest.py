import numpy as np
import pytest

from qconv import _fallback
from qconv._backend import COMPILED, kernels
from qconv.experiments import generate_mdp
from qconv.mdp import Gaussian, PointMass, make_mdp, validate_mdp
from qconv.solver import value_iterate

BACKENDS = [pytest.param(_fallback, id="python")]
if COMPILED:
    BACKENDS.insert(0, pytest.param(kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def bench_mdp():
    """5 states, 3 actions, Gaussian(mu, 1) rewards, gamma 0.9."""
    return validate_mdp(generate_mdp(5, 3, "gaussian", seed=7))


@pytest.fixture(scope="session")
def bench_qstar(bench_mdp):
    return value_iterate(bench_mdp)[0]


@pytest.fixture
def chain_mdp():
    """s0: stay (0) or go to s1 (1); s1 absorbing with mean reward 1; gamma 0.5."""
    trans = [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]]
    rewards = [[PointMass(0.0), PointMass(0.0)], [Gaussian(1.0, 1.0), Gaussian(1.0, 1.0)]]
    return make_mdp(trans, rewards, 0.5)


def random_mdp(rng, S, A, gamma=None, families=("gaussian",)):
    trans = rng.dirichlet(np.ones(S), size=(S, A))
    trans /= trans.sum(axis=2, keepdims=True)
    rewards = [[Gaussian(float(rng.uniform(-2, 2)), float(rng.uniform(0.1, 2))) for _ in range(A)]
               for _ in range(S)]
    g = float(rng.uniform(0.05, 0.99)) if gamma is None else gamma
    return make_mdp(trans, rewards, g)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record and print one pass/fail line for an exit criterion."""

    def emit(tag: str, ok: bool, detail: str) -> bool:
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
