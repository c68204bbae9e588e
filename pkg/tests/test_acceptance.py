"""Exit criteria A1-A10, each at its stated tolerance.

Every test prints one ``A<n> PASS|FAIL: ...`` line and then asserts the
criterion; the lines are repeated in the terminal summary.
"""

import filecmp
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_mdp
from qconv.diagnostics import kt_sequence, lemma1_check, lt_moment_check
from qconv.errors import InvalidDistribution
from qconv.experiments import generate_mdp, load_config, run_experiment
from qconv.learn import EpsilonGreedy, LearnConfig, UniformRandom, q_learning_run, sarsa_run
from qconv.mdp import Gaussian, PointMass, ShiftedExponential, StudentT, Uniform, make_mdp, validate_mdp
from qconv.pg import (
    AdditiveNoiseZ,
    QuadraticCritic,
    SmallNet,
    StateBatch,
    distributional_check,
    empirical_lipschitz,
    grad_check,
    lipschitz_bound,
    policy_grad_analytic,
)
from qconv.recurrences import recurrence_lemma3, recurrence_lemma4, recurrence_lemma5, vanishing_sequence
from qconv.ripple import (
    Affine,
    ContinuousMdp,
    GaussianRBF,
    GridQ,
    Indicator,
    continuous_qstar,
    induced_mdp,
    ripple_q_run,
)
from qconv.schedules import Constant, GlobalPolynomial, VisitHarmonic
from qconv.solver import contraction_check, value_iterate

pytestmark = pytest.mark.acceptance

SEEDS = range(10)
CHECKPOINTS = (2 * 10**3, 2 * 10**4, 2 * 10**5, 2 * 10**6)


@pytest.fixture(scope="module")
def a1_mdp():
    mdp = validate_mdp(generate_mdp(5, 3, "gaussian", seed=7))
    return mdp, value_iterate(mdp, tol=1e-12)[0]


def _runs(run, mdp, qstar, behavior, sched, horizon, every):
    out = []
    for s in SEEDS:
        t0 = time.perf_counter()
        d = run(mdp, qstar, LearnConfig(sched, behavior, horizon, 0.0, s, every))
        out.append((d, time.perf_counter() - t0))
    return out


def test_a1_qlearning(a1_mdp, verdict):
    mdp, qs = a1_mdp
    runs = _runs(q_learning_run, mdp, qs, EpsilonGreedy(0.1), VisitHarmonic(1), 2 * 10**6, 2000)
    ratio = float(np.median([d.final_error / d.initial_error for d, _ in runs]))
    med = [float(np.median([d.error_at(t) for d, _ in runs])) for t in CHECKPOINTS]
    monotone = all(b <= a for a, b in zip(med, med[1:]))
    slowest = max(w for _, w in runs)
    ok = ratio < 0.1 and monotone and slowest <= 120
    verdict("A1", ok, f"median final/initial = {ratio:.4f} (need < 0.1); checkpoint medians "
            f"{[round(m, 4) for m in med]} monotone={monotone}; slowest seed {slowest:.2f}s")
    assert ok


def test_a2_sarsa(a1_mdp, verdict):
    mdp, qs = a1_mdp
    glie = EpsilonGreedy(1.0, "inv_sqrt")  # eps_t = 1 / sqrt(t + 1)
    runs = _runs(sarsa_run, mdp, qs, glie, VisitHarmonic(1), 2 * 10**6, 2000)
    ratio = float(np.median([d.final_error / d.initial_error for d, _ in runs]))
    slowest = max(w for _, w in runs)
    ok = ratio < 0.15 and slowest <= 120
    verdict("A2", ok, f"median final/initial = {ratio:.4f} (need < 0.15); slowest seed {slowest:.2f}s")
    assert ok


def test_a3_moment_bound_and_kt_cap(a1_mdp, verdict):
    mdp, qs = a1_mdp
    cfg = LearnConfig(VisitHarmonic(1), EpsilonGreedy(0.1), 10**5, 0.0, 0, 1000)
    rep = lt_moment_check(mdp, cfg, 100, k0=1.0, qstar=qs)
    worst = float(np.max(rep.empirical / rep.bound))
    grid_ok, n = True, 0
    for k0 in (0.0, 0.5, 1.0, 5.0, 20.0):
        for g in (0.1, 0.5, 0.9, 0.99):
            for sched in (VisitHarmonic(1), GlobalPolynomial(1, 0.6), GlobalPolynomial(0.5, 1), Constant(0.5)):
                kt = kt_sequence(k0, sched, g, 10**4)
                grid_ok &= bool(np.all(kt.K <= max(k0, 1 / (1 - g) + 1)))
                n += 1
    ok = rep.passed and grid_ok
    verdict("A3", ok, f"E[L_t^2]+3SE <= K_t^2 C_R at all {rep.t.size} records over 100 replicas "
            f"(worst ratio {worst:.3f}); K_t cap held on {n} (K0, gamma, schedule) cases: {grid_ok}")
    assert ok


def test_a4_contraction(verdict):
    rng = np.random.default_rng(2024)
    worst, violations = -np.inf, 0
    for _ in range(1000):
        S, A = int(rng.integers(1, 8)), int(rng.integers(1, 5))
        mdp = random_mdp(rng, S, A)
        q1, q2 = rng.normal(0, 10, (S, A)), rng.normal(0, 10, (S, A))
        lhs, rhs = contraction_check(mdp, q1, q2)
        worst = max(worst, lhs - rhs)
        violations += lhs > rhs + 1e-9
    ok = violations == 0
    verdict("A4", ok, f"{violations} violations in 1000 triples; max lhs - rhs = {worst:.3g}")
    assert ok


def test_a5_ripple(verdict):
    cmdp = ContinuousMdp((Affine((1.0,), 0.0), Affine((-1.0,), 1.0)), gamma=0.5, noise_sd=1.0)
    vbar = continuous_qstar(cmdp).vbar
    cfg = LearnConfig(VisitHarmonic(1), UniformRandom(), 10**6, 0.0, 0, 10**4)
    errs = [ripple_q_run(cmdp, GaussianRBF(0.05), GridQ(64), replace(cfg, seed=s)).final_error for s in SEEDS]
    med = float(np.median(errs))
    g = GridQ(64)
    small = replace(cfg, horizon=2 * 10**5, seed=3)
    rip = ripple_q_run(cmdp, Indicator(0), g, small)
    tab = q_learning_run(induced_mdp(cmdp, g), continuous_qstar(cmdp).on_grid(g), small)
    same = np.array_equal(rip.q, tab.q) and np.array_equal(rip.sup_error, tab.sup_error)
    ok = med < 0.1 and abs(vbar - 1.5) < 1e-12 and same
    verdict("A5", ok, f"median final grid error {med:.4f} (need < 0.1), Vbar = {vbar!r}; "
            f"Indicator(0) bit-exact with tabular: {same}")
    assert ok


def test_a6_recurrences(verdict):
    N = 10**6
    l3 = recurrence_lemma3(1.0, 0.5, GlobalPolynomial(1, 1), N)
    ok3 = l3.max_rel_dev <= 1e-12 and l3.limit_estimate < 1e-2
    rm = GlobalPolynomial(1, 0.7)
    l4 = {(g, e): abs(recurrence_lemma4(1.0, g, e, rm, N).limit_estimate - e * g / (1 - g))
          for g in (0.5, 0.9) for e in (0.2, 1.0)}
    ok4 = all(v < 1e-4 for v in l4.values())
    l5 = recurrence_lemma5(1.0, 0.5, rm, vanishing_sequence(1.0, 1.0, N), N)
    ladder = l5.n_at_tolerance
    ok5 = all(v is not None for v in ladder.values()) and l5.envelope_dominates
    ctrl = recurrence_lemma5(1.0, 0.5, rm, vanishing_sequence(0.3, 0.0, N), N, require_vanishing=False)
    okc = abs(ctrl.limit_estimate - 0.3 * 0.5 / 0.5) < 1e-3
    ok = ok3 and ok4 and ok5 and okc
    verdict("A6", ok, f"L3 rel dev {l3.max_rel_dev:.2e}, x_N {l3.limit_estimate:.2e}; L4 max err "
            f"{max(l4.values()):.2e}; L5 ladder {ladder}, envelope {l5.envelope_dominates}; "
            f"constant-c limit {ctrl.limit_estimate:.6f}")
    assert ok


def test_a7_lemma1(verdict):
    rng = np.random.default_rng(7)
    dists = [Gaussian(3.0, 1.0), Uniform(-1.0, 2.0), StudentT(3.0, 0.0, 1.0), ShiftedExponential(2.0, -1.0),
             PointMass(1.5)]
    res = [(type(d).__name__, lemma1_check(d, "trivial", 10**6, rng)) for d in dists]
    ok = all(r.passed for _, r in res)
    verdict("A7", ok, "; ".join(f"{n} {r.lhs:.4f} <= {r.rhs:.4f}" for n, r in res))
    assert ok


def test_a8_policy_gradient(verdict):
    rng = np.random.default_rng(11)
    critic = QuadraticCritic(target=rng.normal(size=(2, 3)), offset=rng.normal(size=2))
    worst, lip_ok, nets = 0.0, True, []
    for _ in range(20):
        net = SmallNet.random([3, 8, 2], ["sigmoid", "sigmoid"], rng)
        rho = StateBatch.uniform(rng.normal(size=(10, 3)))
        worst = max(worst, grad_check(net, critic, rho).max_rel_error)
        lip_ok &= empirical_lipschitz(net, 10**4, rng) <= lipschitz_bound(net) + 1e-9
        nets.append((net, rho))
    net, rho = nets[0]
    chk = distributional_check(AdditiveNoiseZ(critic, 0.5, on="action"), net, rho,
                               policy_grad_analytic(net, critic, rho), 10**4, rng)
    ok = worst <= 1e-4 and chk.passed and lip_ok
    verdict("A8", ok, f"max rel error {worst:.2e} over 20 draws; distributional z = {chk.z_score:.2f} "
            f"(|z| <= 3); Lipschitz bound held: {lip_ok}")
    assert ok


def test_a9_negative_controls(a1_mdp, verdict):
    mdp, qs = a1_mdp
    runs = [q_learning_run(mdp, qs, LearnConfig(Constant(0.5), EpsilonGreedy(0.1), 2 * 10**5, 0.0, s, 1000))
            for s in SEEDS]
    tail = float(np.median(np.concatenate([d.sup_error[-(d.t.size // 10):] for d in runs])))
    rejected = False
    try:
        make_mdp([[[1.0]]], [[StudentT(2.0, 0.0, 1.0)]], 0.9)
    except InvalidDistribution:
        rejected = True
    ok = tail > 1e-3 and rejected
    verdict("A9", ok, f"Constant(0.5) final-decile median error {tail:.3f} (> 1e-3); "
            f"StudentT(dof=2) rejected: {rejected}")
    assert ok


def test_a10_determinism(tmp_path, verdict):
    from pathlib import Path

    configs = Path(__file__).resolve().parent.parent / "configs"
    # every command that writes CSV output
    counts, bad = {}, []
    for command in ("qlearn", "sarsa", "decompose", "bounds", "lemmas", "ripple"):
        for d in ("a", "b"):
            run_experiment(load_config(command, configs / f"{command}.yaml", tmp_path / command / d, seed=3))
        base = tmp_path / command
        csvs = sorted(p.relative_to(base / "a") for p in (base / "a").rglob("*.csv"))
        counts[command] = len(csvs)
        bad += [f"{command}/{p}" for p in csvs if not filecmp.cmp(base / "a" / p, base / "b" / p, shallow=False)]
    ok = all(counts.values()) and not bad
    verdict("A10", ok, f"CSV files compared per command {counts}; differing: {bad or 'none'}")
    assert ok
