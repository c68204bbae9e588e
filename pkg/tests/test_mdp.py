import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qconv.errors import BadGamma, ConfigError, IndexOutOfRange, InvalidDistribution, NonStochasticRow
from qconv.mdp import (
    Gaussian,
    MdpSpec,
    PointMass,
    ShiftedExponential,
    StudentT,
    Transition,
    Uniform,
    compute_cr,
    dist_from_dict,
    make_mdp,
    mdp_from_dict,
    reward_moments,
    sample_transition,
    validate_mdp,
)


def one_cell(dist, gamma=0.9):
    return MdpSpec(1, 1, [[[1.0]]], [[dist]], gamma)


def test_smallest_legal_mdp():
    mdp = validate_mdp(one_cell(Gaussian(1, 1)))
    assert mdp.shape == (1, 1)
    assert mdp.gamma == 0.9


def test_student_t_with_infinite_variance_is_rejected():
    with pytest.raises(InvalidDistribution):
        validate_mdp(one_cell(StudentT(2.0, 0.0, 1.0)))


def test_row_not_summing_to_one():
    spec = MdpSpec(2, 1, [[[0.5, 0.6]], [[0.5, 0.5]]], [[Gaussian(0, 1)], [Gaussian(0, 1)]], 0.9)
    with pytest.raises(NonStochasticRow):
        validate_mdp(spec)


def test_row_sum_tolerance_is_1e_12():
    ok = [[[0.5, 0.5 + 5e-13]], [[0.5, 0.5]]]
    bad = [[[0.5, 0.5 + 5e-12]], [[0.5, 0.5]]]
    r = [[PointMass(0)], [PointMass(0)]]
    validate_mdp(MdpSpec(2, 1, ok, r, 0.9))
    with pytest.raises(NonStochasticRow):
        validate_mdp(MdpSpec(2, 1, bad, r, 0.9))


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_gamma_outside_open_interval(gamma):
    with pytest.raises(BadGamma):
        validate_mdp(one_cell(Gaussian(0, 1), gamma))


@pytest.mark.parametrize(
    "dist",
    [Gaussian(0, 0), Gaussian(0, -1), Uniform(1, 1), Uniform(2, 1), StudentT(3, 0, 0),
     ShiftedExponential(0), ShiftedExponential(-1), Gaussian(math.inf, 1), PointMass(math.nan)],
)
def test_invalid_parameters(dist):
    with pytest.raises(InvalidDistribution):
        validate_mdp(one_cell(dist))


def test_negative_probability_rejected():
    spec = MdpSpec(2, 1, [[[1.5, -0.5]], [[0.5, 0.5]]], [[PointMass(0)], [PointMass(0)]], 0.9)
    with pytest.raises(NonStochasticRow):
        validate_mdp(spec)


def test_validate_is_idempotent(bench_mdp):
    again = validate_mdp(bench_mdp)
    assert again == bench_mdp
    assert again is not bench_mdp


def test_arrays_are_read_only(bench_mdp):
    with pytest.raises(ValueError):
        bench_mdp.trans[0, 0, 0] = 1.0


def test_dict_keyed_tables():
    spec = MdpSpec(1, 2, {(0, 0): [1.0], (0, 1): [1.0]}, {(0, 0): PointMass(1), (0, 1): PointMass(2)}, 0.5)
    mdp = validate_mdp(spec)
    np.testing.assert_array_equal(mdp.reward_mean, [[1.0, 2.0]])


def test_missing_cell_in_dict_table():
    spec = MdpSpec(1, 2, {(0, 0): [1.0]}, {(0, 0): PointMass(1), (0, 1): PointMass(2)}, 0.5)
    with pytest.raises(NonStochasticRow):
        validate_mdp(spec)


def test_deterministic_transition():
    mdp = validate_mdp(one_cell(PointMass(3.0)))
    rng = np.random.default_rng(0)
    assert all(sample_transition(mdp, 0, 0, rng) == Transition(3.0, 0) for _ in range(100))


def test_sample_out_of_range(bench_mdp):
    rng = np.random.default_rng(0)
    with pytest.raises(IndexOutOfRange):
        sample_transition(bench_mdp, 5, 0, rng)
    with pytest.raises(IndexError):
        sample_transition(bench_mdp, 0, -1, rng)


def test_gaussian_sample_mean_within_4_sigma():
    dist = Gaussian(0.0, 1.0)
    x = dist.sample(np.random.default_rng(1), 10**6)
    assert abs(x.mean()) < 4.0 / math.sqrt(10**6)


def test_next_state_frequencies_within_3_se():
    mdp = make_mdp([[[0.25, 0.75]], [[0.5, 0.5]]], [[Gaussian(0, 1)], [Gaussian(0, 1)]], 0.9)
    rng = np.random.default_rng(2)
    n = 10**5
    hits = sum(sample_transition(mdp, 0, 0, rng).next_state for _ in range(n))
    se = math.sqrt(0.75 * 0.25 / n)
    assert abs(hits / n - 0.75) < 3 * se


def test_sample_transition_reward_moments():
    mdp = validate_mdp(one_cell(ShiftedExponential(2.0, -1.0)))
    rng = np.random.default_rng(3)
    r = np.array([sample_transition(mdp, 0, 0, rng).reward for _ in range(50_000)])
    mean, second = reward_moments(ShiftedExponential(2.0, -1.0))
    assert abs(r.mean() - mean) < 4 * r.std() / math.sqrt(r.size)


@pytest.mark.parametrize(
    "dist, expected",
    [
        (Gaussian(1, 2), (1.0, 5.0)),
        (Uniform(0, 1), (0.5, 1.0 / 3.0)),
        (StudentT(3, 0, 1), (0.0, 3.0)),
        (ShiftedExponential(2.0, 1.0), (1.5, 0.25 + 2.25)),
        (PointMass(-2.0), (-2.0, 4.0)),
    ],
)
def test_reward_moments(dist, expected):
    assert reward_moments(dist) == pytest.approx(expected, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize(
    "dist",
    [Gaussian(1, 2), Uniform(-1, 3), StudentT(5, 1, 2), ShiftedExponential(0.5, -1), PointMass(2.5)],
)
def test_moments_match_monte_carlo(dist):
    x = dist.sample(np.random.default_rng(4), 10**6)
    mean, second = dist.moments()
    for emp, exact in ((x, mean), (x * x, second)):
        se = emp.std() / math.sqrt(emp.size)
        assert abs(emp.mean() - exact) <= 4 * se + 1e-12


def test_student_t_second_moment_by_monte_carlo():
    x = StudentT(3, 0, 1).sample(np.random.default_rng(5), 10**7)
    sq = x * x
    # heavy tail: the fourth moment is infinite, so the SE is itself noisy; 3 SE as stated
    assert abs(sq.mean() - 3.0) <= 3 * sq.std() / math.sqrt(sq.size)


def test_ppf_scalar_matches_vector():
    u = np.array([1e-9, 0.1, 0.5, 0.9, 1 - 1e-9])
    for dist in (Gaussian(1, 2), Uniform(-1, 3), StudentT(5, 1, 2), ShiftedExponential(0.5, -1), PointMass(2.5)):
        np.testing.assert_array_equal([dist.ppf(v) for v in u], dist._ppf_array(u))


def test_compute_cr():
    zero = make_mdp([[[1.0]]], [[PointMass(0.0)]], 0.9)
    assert compute_cr(zero) == 0.0
    two = make_mdp([[[1.0], [1.0]]], [[Gaussian(0, 1), Gaussian(2, 1)]], 0.9)
    assert compute_cr(two) == 5.0


def test_compute_cr_mixed_families_matches_enumeration():
    rng = np.random.default_rng(6)
    fams = [Gaussian(0.3, 1.2), Uniform(-2, 1), StudentT(4, 0.5, 0.7), ShiftedExponential(3, 0.2),
            PointMass(-1.7), Gaussian(-1, 0.1)]
    trans = rng.dirichlet(np.ones(3), size=(3, 2))
    mdp = make_mdp(trans, [fams[0:2], fams[2:4], fams[4:6]], 0.8)
    assert compute_cr(mdp) == max(d.moments()[1] for d in fams)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_cr_is_max_second_moment(S, A, seed):
    rng = np.random.default_rng(seed)
    trans = rng.dirichlet(np.ones(S), size=(S, A))
    trans /= trans.sum(axis=2, keepdims=True)
    rewards = [[Gaussian(float(rng.normal()), float(rng.uniform(0.1, 3))) for _ in range(A)] for _ in range(S)]
    mdp = make_mdp(trans, rewards, 0.9)
    brute = max(r.moments()[1] for row in rewards for r in row)
    assert math.isfinite(compute_cr(mdp))
    assert compute_cr(mdp) == brute


def test_sink_detection(chain_mdp):
    assert not chain_mdp.sink.any()
    mdp = make_mdp([[[1.0, 0.0]], [[0.0, 1.0]]], [[Gaussian(0, 1)], [PointMass(0.0)]], 0.9)
    np.testing.assert_array_equal(mdp.sink, [False, True])


def test_config_round_trip(bench_mdp):
    d = bench_mdp.spec.to_dict()
    again = validate_mdp(mdp_from_dict(d))
    assert again == bench_mdp


def test_config_rejects_unknown_keys(bench_mdp):
    d = bench_mdp.spec.to_dict()
    d["horizon"] = 3
    with pytest.raises(ConfigError):
        mdp_from_dict(d)
    d = bench_mdp.spec.to_dict()
    d["rows"][0]["note"] = "x"
    with pytest.raises(ConfigError):
        mdp_from_dict(d)
    with pytest.raises(ConfigError):
        dist_from_dict({"family": "gaussian", "mean": 0, "stddev": 1, "skew": 2})
    with pytest.raises(ConfigError):
        dist_from_dict({"family": "cauchy"})


def test_config_requires_every_cell(bench_mdp):
    d = bench_mdp.spec.to_dict()
    d["rows"].pop()
    with pytest.raises(ConfigError):
        mdp_from_dict(d)
