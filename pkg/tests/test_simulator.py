import math

import numpy as np
import pytest
from scipy import stats

from conftest import fair_env, forced_env, hb_env
from rwre.chain import excursion_visit_params, escape_parameter
from rwre.environment import EnvironmentSpec, TwoPoint, make_environment
from rwre.errors import HorizonTooSmall, StepCapExceeded
from rwre.simulator import (Overrun, WalkConfig, excursion_census, excursions_before_hit, exit_times,
                            first_hitting_time, geometric_probes, hitting_time_samples, hitting_times,
                            occupation_by_valley, occupation_from_table, run_walk, seen_from_max,
                            seen_valleys)
from rwre.valleys import decompose, decompose_covering

SPEC = EnvironmentSpec(TwoPoint(1.0), 4)


def test_zero_and_one_step():
    s = run_walk(WalkConfig(SPEC, 1, 0, probe_schedule=(0,)))
    assert s.probe_tables[0].tolist() == [1] and s.xi_star[0] == 1
    s = run_walk(WalkConfig(SPEC, 1, 1, probe_schedule=(0, 1)))
    assert s.probe_tables[1].tolist() == [1, 1] and s.final_position == 1


def test_counting_identities_at_every_probe():
    s = run_walk(WalkConfig(SPEC, 9, 10**6))
    prev = None
    for n, table, star in zip(s.probes, s.probe_tables, s.xi_star):
        assert int(table.sum()) == n + 1
        assert star == table.max()
        if prev is not None:
            assert np.all(table[:prev.size] >= prev)
        prev = table
    assert s.probes.tolist() == list(geometric_probes(10**6))


def test_geometric_probes():
    pr = geometric_probes(100)
    assert pr[:6] == (1, 2, 3, 4, 6, 8) and pr[-1] == 100
    assert all(b > a for a, b in zip(pr, pr[1:]))


def test_determinism():
    a = run_walk(WalkConfig(SPEC, 17, 10**5, hitting_targets=(5, 12)))
    b = run_walk(WalkConfig(SPEC, 17, 10**5, hitting_targets=(5, 12)))
    assert a.hitting == b.hitting and np.array_equal(a.local_times, b.local_times)
    assert all(np.array_equal(x, y) for x, y in zip(a.probe_tables, b.probe_tables))


def test_step_cap():
    with pytest.raises(StepCapExceeded):
        run_walk(WalkConfig(SPEC, 1, 100, step_cap=10))


def test_hit_tables_are_snapshots_at_hitting_time():
    s = run_walk(WalkConfig(SPEC, 3, 10**5, hitting_targets=(4, 9)))
    for x, t in s.hitting.items():
        if isinstance(t, int):
            table = s.hit_tables[x]
            assert int(table.sum()) == t + 1 and table[x] == 1 and table.size == x + 1


def test_first_hitting_time_basics():
    env = make_environment(SPEC)
    for r in range(20):
        assert first_hitting_time(env, 5, 1, replica=r) == 1
        t = first_hitting_time(env, 5, 8, replica=r)
        assert t >= 8
    assert isinstance(first_hitting_time(env, 5, 10**6, cap=1000), Overrun)
    res = hitting_times(env, 5, [3, 6], cap=10**7)
    assert res[3] <= res[6]


def test_flat_hitting_time_mean():
    env = fair_env(64)
    t = hitting_time_samples(env, 2, 10, 10**4, cap=10**7).astype(float)
    se = t.std(ddof=1) / math.sqrt(t.size)
    assert abs(t.mean() - 100.0) <= 3 * se


def test_samples_match_single_replicas():
    env = make_environment(SPEC)
    batch = hitting_time_samples(env, 11, 6, 5, cap=10**7, first_replica=3)
    single = [first_hitting_time(env, 11, 6, cap=10**7, replica=3 + r) for r in range(5)]
    assert batch.tolist() == single


def test_census_on_hb():
    env = hb_env()
    c = excursion_census(env, 7, 2, [4], 10**5, start_at_anchor=True)
    y = c.visits[:, 0]
    se = y.std(ddof=1) / math.sqrt(y.size)
    assert abs(y.mean() - math.exp(-1)) <= 3 * se
    p = excursion_visit_params(env, 2, 4)
    p0 = 1 - p.alpha
    assert abs(np.mean(y == 0) - p0) <= 3 * math.sqrt(p0 * (1 - p0) / y.size)
    assert c.durations.min() >= 2 and np.all(c.visits >= 0)
    half = y.size // 2
    assert stats.ks_2samp(y[:half], y[half:], method="asymp").statistic <= 0.02


def test_census_rejects_anchor_site():
    with pytest.raises(ValueError):
        excursion_census(hb_env(), 1, 2, [2], 10)


def test_geometric_excursion_count():
    env = hb_env()
    b, i = 2, 7
    p = escape_parameter(env, b, i)
    k = excursions_before_hit(env, 3, b, i, 10**4).astype(float)
    mean = (1 - p) / p
    se = k.std(ddof=1) / math.sqrt(k.size)
    assert abs(k.mean() - mean) <= 3 * se
    # chi-square against geometric(p) on tail-merged bins
    edges = [0]
    while (1 - p) ** edges[-1] * k.size > 50:
        edges.append(edges[-1] + max(1, int(0.5 / p)))
    probs = [(1 - p) ** a - (1 - p) ** b_ for a, b_ in zip(edges, edges[1:])] + [(1 - p) ** edges[-1]]
    observed = [np.sum((k >= a) & (k < b_)) for a, b_ in zip(edges, edges[1:])] + [np.sum(k >= edges[-1])]
    stat = sum((o - k.size * q) ** 2 / (k.size * q) for o, q in zip(observed, probs))
    assert stats.chi2.sf(stat, len(probs) - 1) >= 0.01


def test_exit_times_start_at_one():
    env = make_environment(SPEC)
    t = exit_times(env, 1, 50, 40, 60, 200, 10**5)
    assert np.all((t == -1) | (t >= 10))


def test_occupation_partitions_time():
    env = make_environment(SPEC)
    s = run_walk(WalkConfig(SPEC, 21, 10**6))
    dec = decompose_covering(env, 2.0, int(s.max_position[-1]))
    for n, table in zip(s.probes, s.probe_tables):
        occ = occupation_from_table(table, dec)
        assert int(occ.sum()) == n + 1
        # direct recount
        starts = dec.starts + [10**18]
        direct = [int(table[starts[k]:starts[k + 1]].sum()) for k in range(len(dec.starts))]
        assert occ.tolist()[:len(direct)] == direct[:occ.size]
    assert occupation_by_valley(s, dec).sum() == s.n_steps + 1


def test_confined_walk_lives_in_valley_zero():
    # a well of depth 30 at the origin keeps a 10^4-step walk below m_1
    env = forced_env([1.0] * 40 + [-1.0] * 80)
    dec = decompose(env, 5.0, 10**4)
    s = run_walk(WalkConfig(env.spec, 1, 10**4), env)
    assert s.max_position[-1] < dec[1].m
    occ = occupation_by_valley(s, dec)
    assert occ[0] == 10**4 + 1 and occ[1:].sum() == 0
    assert seen_valleys(s, dec) == 0


def test_seen_valleys_definition(hb):
    dec = decompose(hb, 2.0, 10**5)
    assert seen_from_max(dec[1].m - 1, dec) == 0
    assert seen_from_max(dec[1].m, dec) == 1
    assert seen_from_max(dec[3].m, dec) == 3


def test_short_decomposition_raises():
    env = make_environment(SPEC)
    s = run_walk(WalkConfig(SPEC, 21, 10**6))
    dec = decompose(env, 1.0, int(s.max_position[-1]) // 2)
    with pytest.raises(HorizonTooSmall):
        occupation_by_valley(s, dec)


def test_steps_are_nearest_neighbour():
    # with probes at every step the position sequence is recorded exactly
    s = run_walk(WalkConfig(SPEC, 8, 3000, probe_schedule=tuple(range(3001))))
    x = s.position
    d = np.diff(x)
    assert np.all((np.abs(d) == 1))
    assert np.all(x[1:][x[:-1] == 0] == 1)
