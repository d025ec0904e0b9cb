import math

import numpy as np
import pytest

from conftest import fair_env, hb_env
from rwre.chain import (ExcursionLawParams, HitProbs, OccupationBefore, escape_barrier, escape_parameter,
                        excursion_visit_mean, excursion_visit_mean_alt, excursion_visit_params,
                        excursion_visit_pmf, excursion_visit_variance, expected_hitting_time,
                        golosov_bound, hit_before_prob, oracle_escape_parameter, oracle_excursion_params,
                        solve_finite_chain)
from rwre.environment import EnvironmentSpec, TwoPoint, UniformSymmetric, make_environment
from rwre.errors import BadOrdering, WindowTooLarge

E = math.e


def rel(a, b):
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------- hitting probabilities


def test_gamblers_ruin(fair):
    assert abs(hit_before_prob(fair, 0, 3, 10) - 0.7) < 1e-14


def test_hb_hitting_probability(hb):
    expected = (math.exp(-1) + 1) / (math.exp(-2) + math.exp(-1) + 1)
    assert abs(expected - 0.90997) < 1e-5
    assert rel(hit_before_prob(hb, 2, 3, 5), expected) < 1e-14
    assert rel(solve_finite_chain(hb, 2, 5, HitProbs(2)).at(3), expected) < 1e-12


def test_hitting_probability_at_the_target_end(hb):
    assert hit_before_prob(hb, 2, 2, 5) == 1.0
    assert hit_before_prob(hb, 2, 5, 5) == 0.0
    with pytest.raises(BadOrdering):
        hit_before_prob(hb, 5, 3, 9)


def test_oracle_gamblers_ruin(fair):
    res = solve_finite_chain(fair, 0, 10, HitProbs(10))
    assert abs(res.at(3) - 0.3) < 1e-14
    assert np.allclose(res.probabilities, np.arange(11) / 10, rtol=0, atol=1e-14)


def test_oracle_conservation_and_residual():
    for s in range(20):
        env = make_environment(EnvironmentSpec(UniformSymmetric(0.1), s))
        left, right = 100 + s, 400 + 3 * s
        to_l = solve_finite_chain(env, left, right, HitProbs(left))
        to_r = solve_finite_chain(env, left, right, HitProbs(right))
        assert np.max(np.abs(to_l.probabilities + to_r.probabilities - 1.0)) <= 1e-12
        assert np.all((to_l.probabilities >= 0) & (to_l.probabilities <= 1))
        assert to_l.residual <= 1e-10


def test_closed_form_matches_oracle_random():
    rng = np.random.default_rng(5)
    for s in range(200):
        env = make_environment(EnvironmentSpec(TwoPoint(float(rng.uniform(0.2, 2))), s))
        b = int(rng.integers(0, 3000))
        i = b + int(rng.integers(2, 301))
        x = int(rng.integers(b + 1, i))
        assert rel(hit_before_prob(env, b, x, i), solve_finite_chain(env, b, i, HitProbs(b)).at(x)) <= 1e-10


def test_window_too_large(fair):
    with pytest.raises(WindowTooLarge):
        solve_finite_chain(fair, 0, 10**4, HitProbs(0))


# ---------------------------------------------------------------- excursion law


def test_excursion_mean_fair(fair):
    assert abs(excursion_visit_mean(fair, 3, 17) - 1.0) < 1e-14


def test_excursion_mean_hb(hb):
    assert abs(excursion_visit_mean(hb, 2, 4) - math.exp(-1)) < 1e-14
    assert abs(excursion_visit_mean(hb, 2, 4) - (1 + E) / (E * E + E)) < 1e-14
    assert rel(excursion_visit_mean_alt(hb, 2, 4), math.exp(-1)) < 1e-10


def test_excursion_params_fair(fair):
    p = excursion_visit_params(fair, 5, 8)
    assert abs(p.alpha - 1 / 6) < 1e-14 and abs(p.beta - 1 / 6) < 1e-14
    p = excursion_visit_params(fair, 8, 5)
    assert abs(p.alpha - 1 / 6) < 1e-14 and abs(p.beta - 1 / 6) < 1e-14


def test_excursion_params_hb(hb):
    p = excursion_visit_params(hb, 2, 4)
    beta = (1 - hb.omega_at(4)) / (math.exp(-1) + 1)
    assert rel(p.beta, beta) < 1e-14
    assert rel(p.alpha, math.exp(-1) * beta) < 1e-12
    o = oracle_excursion_params(hb, 2, 4)
    assert rel(o.alpha, p.alpha) < 1e-12 and rel(o.beta, p.beta) < 1e-12


def test_excursion_params_random_both_sides():
    rng = np.random.default_rng(9)
    for s in range(1000):
        env = make_environment(EnvironmentSpec(TwoPoint(1.0), s))
        b = int(rng.integers(1, 500))
        x = int(rng.integers(1, 500))
        if x == b:
            continue
        p = excursion_visit_params(env, b, x)
        assert 0 < p.alpha <= 1 and 0 < p.beta <= 1
        assert rel(p.mean, excursion_visit_mean(env, b, x)) <= 1e-10
        if s < 100:
            o = oracle_excursion_params(env, b, x)
            assert rel(o.alpha, p.alpha) <= 1e-10 and rel(o.beta, p.beta) <= 1e-10


def test_pmf_values_and_normalization():
    p = ExcursionLawParams(0.5, 0.5)
    assert excursion_visit_pmf(p, 0) == 0.5
    assert excursion_visit_pmf(p, 2) == 0.125
    q = ExcursionLawParams(0.3, 0.07)
    total = sum(excursion_visit_pmf(q, m) for m in range(2000))
    assert abs(total - 1.0) < 1e-10
    assert excursion_visit_pmf(q, -1) == 0.0


def test_variance(fair):
    assert excursion_visit_variance(ExcursionLawParams(1.0, 1.0)) == 0.0
    assert abs(excursion_visit_variance(fair, 5, 6) - 2.0) < 1e-12


# ---------------------------------------------------------------- bounds


def test_golosov_flat(fair):
    for x in (1, 5, 60):
        assert abs(golosov_bound(fair, x) - x * x) < 1e-9


def test_golosov_hb(hb):
    assert rel(golosov_bound(hb, 7), 49 * math.exp(4)) < 1e-14


def test_golosov_dominates_oracle_expected_time():
    for s in range(30):
        env = make_environment(EnvironmentSpec(TwoPoint(1.0), 200 + s))
        for x in (5, 50, 300, 1000):
            res = solve_finite_chain(env, 0, x, OccupationBefore(x, 0))
            assert res.expected_time <= golosov_bound(env, x)
            assert rel(res.expected_time, expected_hitting_time(env, x)) < 1e-8


def test_expected_hitting_time_flat(fair):
    # reflected simple walk: E T(x) = x^2
    for x in (1, 7, 40):
        assert rel(expected_hitting_time(fair, x), x * x) < 1e-12


def test_escape_fair(fair):
    assert abs(escape_parameter(fair, 1, 5) - 0.125) < 1e-15


def test_escape_hb(hb):
    v = [-2, -1, 0, 1, 2]
    expected = hb.omega_at(2) * math.exp(-2) / sum(math.exp(t) for t in v)
    assert rel(escape_parameter(hb, 2, 7), expected) < 1e-14
    assert rel(oracle_escape_parameter(hb, 2, 7), expected) < 1e-12
    assert escape_parameter(hb, 2, 7) <= math.exp(-escape_barrier(hb, 2, 7))


def test_escape_below_barrier_random():
    for s in range(100):
        env = make_environment(EnvironmentSpec(UniformSymmetric(0.2), s))
        b, i = 10 + s, 60 + 2 * s
        assert escape_parameter(env, b, i) <= math.exp(-escape_barrier(env, b, i)) * (1 + 1e-12)
    with pytest.raises(BadOrdering):
        escape_parameter(env, 5, 5)
