import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import HB_V, fair_env
from rwre.environment import EnvironmentSpec, TwoPoint, UniformSymmetric, make_environment
from rwre.errors import InvalidSpec


def test_same_site_queried_twice_is_identical():
    env = make_environment(EnvironmentSpec(TwoPoint(1.0), 7))
    assert env.omega_at(1) == env.omega_at(1)
    other = make_environment(EnvironmentSpec(TwoPoint(1.0), 7))
    assert np.array_equal(env.omega_block(1, 5000), other.omega_block(1, 5000))


def test_two_point_support():
    env = make_environment(EnvironmentSpec(TwoPoint(1.0), 3))
    om = env.omega_block(1, 20000)
    lo, hi = 1 / (1 + math.e), math.e / (1 + math.e)
    assert set(np.round(om, 12)) == {round(lo, 12), round(hi, 12)}
    assert abs(lo - 0.26894) < 1e-5 and abs(hi - 0.73106) < 1e-5
    # both values occur with frequency near 1/2
    assert abs(np.mean(om > 0.5) - 0.5) < 4 * 0.5 / math.sqrt(om.size)


def test_uniform_log_rho_is_centered():
    env = make_environment(EnvironmentSpec(UniformSymmetric(0.1), 11))
    lr = env.log_rho_block(1, 10**6 + 1)
    assert abs(lr.mean()) <= 4 * lr.std() / 1e3


@pytest.mark.parametrize("spec", [EnvironmentSpec(TwoPoint(0.5), 1), EnvironmentSpec(UniformSymmetric(0.3), 2)])
def test_omega_within_ellipticity_bounds(spec):
    env = make_environment(spec)
    om = env.omega_block(1, 50000)
    assert np.all(om >= env.delta - 1e-15) and np.all(om <= 1 - env.delta + 1e-15)
    assert np.all(np.abs(env.log_rho_block(1, 50000)) <= env.increment_bound + 1e-12)


@pytest.mark.parametrize("bad", [TwoPoint(-1.0), TwoPoint(0.0), UniformSymmetric(0.5), UniformSymmetric(0.0)])
def test_out_of_range_parameters_rejected(bad):
    with pytest.raises(InvalidSpec):
        make_environment(EnvironmentSpec(bad, 0))


def test_hb_omega_and_potential(hb):
    assert abs(hb.omega_at(2) - 1 / (1 + math.exp(-1))) < 1e-15
    assert list(hb.potential_prefix(15)) == HB_V
    assert hb.potential(6) == 2
    assert hb.potential(0) == 0


def test_log_rho_values():
    assert fair_env().log_rho(3) == 0.0
    env = make_environment(EnvironmentSpec(TwoPoint(1.0), 0), prefix=[1.0, -1.0])
    assert abs(env.omega_at(1) - 1 / (1 + math.e)) < 1e-15 and env.log_rho(1) == 1.0
    assert abs(env.omega_at(2) - math.e / (1 + math.e)) < 1e-15 and env.log_rho(2) == -1.0


def test_fair_environment_has_flat_potential(fair):
    assert np.all(fair.potential_prefix(1000) == 0.0)
    assert fair.conductance(17) == 1.0
    assert fair.reversible_measure(0) == 1.0
    assert fair.reversible_measure(9) == 2.0


def test_conductance_and_measure_on_hb(hb):
    assert abs(hb.conductance(2) - math.exp(2)) < 1e-12
    assert abs(hb.reversible_measure(4) - (1 + math.e)) < 1e-12
    assert hb.reversible_measure(0) == 1.0


def test_log_conductance_far_from_zero():
    env = make_environment(EnvironmentSpec(TwoPoint(1.0), 0), prefix=np.ones(1000))
    assert env.log_conductance(1000) == -1000.0
    with pytest.raises(OverflowError):
        env.conductance(1000)


def test_measure_times_omega_is_conductance():
    env = make_environment(EnvironmentSpec(UniformSymmetric(0.2), 5))
    for x in range(1, 2000, 37):
        lhs = env.log_reversible_measure(x) + math.log(env.omega_at(x))
        assert abs(math.exp(lhs + env.potential(x)) - 1.0) < 1e-12


def test_potential_matches_exact_rational_sum():
    a = 1.0
    env = make_environment(EnvironmentSpec(TwoPoint(a), 21))
    n = 200000
    v = env.potential_prefix(n)
    exact = np.cumsum(np.rint(env.log_rho_block(1, n + 1) / a).astype(np.int64))
    err = np.abs(v[1:] - exact * a)
    assert np.all(err <= np.arange(1, n + 1) * 2.0 ** -40 * a)
    # non-integral a exercises rounding in the summation
    a = 0.3
    env = make_environment(EnvironmentSpec(TwoPoint(a), 21))
    v = env.potential_prefix(n)
    steps = np.rint(env.log_rho_block(1, n + 1) / a).astype(np.int64)
    check = range(1, n + 1, 997)
    for x in check:
        exact_x = Fraction(int(steps[:x].sum())) * Fraction(a)
        assert abs(Fraction(v[x]) - exact_x) <= Fraction(x) * Fraction(2) ** -40 * Fraction(a)


def test_potential_window_consistent_with_prefix():
    env = make_environment(EnvironmentSpec(UniformSymmetric(0.2), 9))
    full = env.potential_prefix(5000)
    assert np.array_equal(env.potential_window(1200, 3400), full[1200:3401])


def test_spec_round_trip():
    for spec in (EnvironmentSpec(TwoPoint(0.7), 5), EnvironmentSpec(UniformSymmetric(0.15), 2**63)):
        assert EnvironmentSpec.from_dict(spec.to_dict()) == spec
