import math

import numpy as np
import pytest

from conftest import hb_env
from rwre.experiments import REGISTRY, STUDIES, config_from_dict, default_config, run_study
from rwre.experiments.report import ExperimentReport, Series, canonical_json, format_cell
from rwre.experiments.studies import _censored_median, depth_bounds_hold, ratio_values, tail_fit
from rwre.simulator import WalkConfig, occupation_from_table, run_walk, seen_from_max
from rwre.valleys import DepthStats, decompose, decompose_covering


# ---------------------------------------------------------------- estimators on forced inputs


def test_ratio_when_only_the_bottom_is_visited():
    table = np.zeros(40, dtype=np.int64)
    table[17] = 250
    occ, r1, r2 = ratio_values(table, 10, 30, 17, lam=2.5)
    assert occ == 250
    assert r2 == pytest.approx(1 / 2.5) and r1 == pytest.approx(1 / 2.5)


def test_ratio_with_spread_local_times():
    table = np.array([0, 0, 3, 5, 9, 4, 1, 0])
    occ, r1, r2 = ratio_values(table, 2, 7, 4, lam=1.5)
    assert occ == 22
    assert r1 == pytest.approx(22 / (1.5 * 9)) and r2 == pytest.approx(22 / (1.5 * 9))
    occ, r1, r2 = ratio_values(table, 2, 7, 3, lam=1.5)
    assert r1 == pytest.approx(22 / (1.5 * 5)) and r2 == pytest.approx(22 / (1.5 * 9))


def test_last_two_valleys_hold_everything_before_second_valley_is_reached():
    env = hb_env()
    dec = decompose(env, 2.0, 10**5)
    s = run_walk(WalkConfig(env.spec, 3, 10**5, hitting_targets=(dec[2].m,)), env)
    t2 = s.hitting[dec[2].m]
    for n, table, mx in zip(s.probes, s.probe_tables, s.max_position):
        if isinstance(t2, int) and n >= t2:
            break
        occ = occupation_from_table(table, dec)
        nn = seen_from_max(int(mx), dec)
        assert nn <= 1
        assert occ[:2].sum() == n + 1


def test_tail_fit_on_exact_exponential():
    w = 1.0 + np.random.default_rng(0).exponential(scale=2.0, size=20000)
    slope, r2, npts = tail_fit(w, 50, 99)
    assert slope == pytest.approx(-0.5, rel=0.05) and r2 > 0.99 and npts > 1000


def test_censored_median():
    assert _censored_median([1, 2, 3], 10) == 2
    assert _censored_median([1, 2, None, None], 10) is None
    assert _censored_median([1, 5, 2, None, None], 10) == 5
    assert _censored_median([4, 1, 2, 3], 10) == 2.5


def test_depth_bounds():
    d = DepthStats(0.0, 5.0, 50.0, 1.0)   # 100^0.8 is about 39.8
    assert depth_bounds_hold(d, 100.0, 200.0, 0.2) == (True, True, True, True)
    d = DepthStats(99.0, 199.0, 0.5, 99.0)
    assert depth_bounds_hold(d, 100.0, 200.0, 0.2) == (False, False, False, False)


# ---------------------------------------------------------------- report plumbing


def test_report_serialization_is_canonical():
    rep = ExperimentReport("demo")
    rep.add_series("s", {"a": [1, 2], "b": [0.1, math.nan]})
    rep.check("1", "x", "<= 1", 0.5, True)
    rep.check("1", "y", "report only", 3, None)
    assert rep.passed and len(rep.enabled) == 1
    assert rep.to_json() == rep.to_json()
    assert Series("s", {"a": [1, 2], "b": [0.1, math.nan]}).to_csv() == b"a,b\n1,0.1\n2,nan\n"
    assert format_cell(0.1 + 0.2) == "0.30000000000000004"
    assert canonical_json({"b": 1, "a": [np.int64(2), np.float64(1.5)]}) == \
        b'{\n  "a": [\n    2,\n    1.5\n  ],\n  "b": 1\n}\n'
    rep.check("1", "z", "== 0", 1, False)
    assert not rep.passed


def test_ragged_series_rejected():
    with pytest.raises(ValueError):
        Series("bad", {"a": [1, 2], "b": [1]})


# ---------------------------------------------------------------- configs


def test_registry_covers_every_study():
    assert set(REGISTRY) == set(STUDIES)


def test_config_validation():
    with pytest.raises(ValueError):
        default_config("nope")
    with pytest.raises(ValueError):
        default_config("oracle", sizes={"cases": 0})
    with pytest.raises(ValueError):
        config_from_dict({"study": "oracle", "bogus": 1})
    cfg = config_from_dict({"study": "ratio", "quick": True, "k0": 2.0, "sizes": {"seeds": 2}})
    assert cfg.k0 == 2.0 and cfg.sizes["seeds"] == 2 and cfg.sizes["n_min"] == 3


def test_config_hash_ignores_output_and_workers():
    a = default_config("counting", quick=True)
    b = default_config("counting", quick=True, out="/tmp/x", workers=2)
    assert a.config_hash() == b.config_hash()
    assert default_config("counting", quick=True, master_seed=2).config_hash() != a.config_hash()


def test_seed_blocks_are_disjoint():
    cfg = default_config("localization", quick=True)
    env, walk = cfg.seeds("env", 50), cfg.seeds("walk", 50)
    assert not set(env) & set(walk)
    assert default_config("ratio").seeds("env", 50) != env


def test_hitting_targets_guard():
    with pytest.raises(ValueError):
        run_study(default_config("hitting_scaling", quick=True, sizes={"targets": [8, 30]}))


def test_localization_needs_long_runs():
    with pytest.raises(ValueError):
        run_study(default_config("localization", quick=True, sizes={"steps": 10**5}))


# ---------------------------------------------------------------- every study, reduced size


@pytest.mark.parametrize("study", STUDIES)
def test_quick_study_runs_and_is_byte_stable(study):
    cfg = default_config(study, quick=True)
    first = run_study(cfg)
    assert first.verdicts and first.series
    assert first.provenance["config_hash"] == cfg.config_hash()
    for v in first.verdicts:
        assert v.threshold   # every verdict states its threshold
    again = run_study(cfg)
    assert first.to_json() == again.to_json()
    assert [s.to_csv() for s in first.series] == [s.to_csv() for s in again.series]


@pytest.mark.parametrize("study", ["oracle", "counting", "valley_invariants"])
def test_exact_studies_pass_at_reduced_size(study):
    assert run_study(default_config(study, quick=True)).passed


def test_parallel_fan_out_matches_serial():
    serial = run_study(default_config("counting", quick=True))
    parallel = run_study(default_config("counting", quick=True, workers=2))
    assert serial.to_json() == parallel.to_json()
