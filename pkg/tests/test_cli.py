import json

import pytest

from rwre.cli import GlobalConfig, main, parse_config, run_command, write_report
from rwre.errors import IoError, ParseError, ValidationError
from rwre.experiments.report import ExperimentReport


def _files(path):
    return sorted(p.name for p in path.iterdir())


# ---------------------------------------------------------------- config


def test_minimal_config_gets_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"family": "twopoint", "a": 1.0, "seed": 7}))
    cfg = parse_config(str(p))
    assert cfg.k0 == 5.0 and cfg.seed == 7 and cfg.a == 1.0
    assert cfg.to_dict()["k0"] == 5.0


def test_negative_a_names_the_field():
    with pytest.raises(ValidationError) as info:
        parse_config(flags={"a": -1.0})
    assert [path for path, _ in info.value.errors] == ["a"]


def test_every_problem_is_reported():
    with pytest.raises(ValidationError) as info:
        parse_config(flags={"a": -1.0, "k0": 0.0, "formats": ["csv", "xml"], "colour": "red",
                            "study": {"speed": 1}})
    paths = {path for path, _ in info.value.errors}
    assert paths == {"a", "k0", "formats[1]", "colour", "study.speed"}


def test_round_trip(tmp_path):
    cfg = parse_config(flags={"family": "uniform", "delta": 0.1, "seed": 3, "k0": 2.5,
                              "study": {"quick": True}})
    p = tmp_path / "again.json"
    p.write_bytes(cfg.to_json())
    assert parse_config(str(p)) == cfg


def test_flags_override_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 7, "k0": 3.0}))
    cfg = parse_config(str(p), {"seed": 9, "k0": None})
    assert cfg.seed == 9 and cfg.k0 == 3.0


def test_unreadable_or_malformed_config(tmp_path):
    with pytest.raises(ParseError):
        parse_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        parse_config(str(bad))


def test_config_hash_ignores_output_location():
    assert GlobalConfig(out="x").config_hash() == GlobalConfig(out="y").config_hash()
    assert GlobalConfig(seed=1).config_hash() != GlobalConfig(seed=2).config_hash()


# ---------------------------------------------------------------- commands


def test_valleys_header(tmp_path, capsys):
    assert main(["valleys", "--seed", "7", "--horizon", "1e6", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "valleys.csv").read_text().splitlines()
    assert lines[0] == "k,m,theta,b,eta,h_minus,h_plus,h,lambda,complete"
    assert len(lines) > 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["files"]) == {"valleys.csv"} and manifest["config_hash"]


def test_unknown_subcommand_exits_2(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert run_command("frobnicate", GlobalConfig()) == 2


def test_bad_flag_value_exits_2(tmp_path, capsys):
    assert main(["env", "--a", "-1", "--out", str(tmp_path)]) == 2
    assert main(["env", "--dump", "9..3", "--out", str(tmp_path)]) == 2


def test_env_dump(tmp_path, capsys):
    assert main(["env", "--seed", "7", "--dump", "0..20", "--out", str(tmp_path), "-q"]) == 0
    rows = (tmp_path / "env.csv").read_text().splitlines()
    assert rows[0] == "x,omega,log_rho,V" and len(rows) == 22
    assert rows[1].startswith("0,1.0,,")


def test_exact_matches_oracle(tmp_path, capsys):
    assert main(["exact", "hitprob", "--b", "2", "--x", "9", "--i", "40", "--out", str(tmp_path), "-q"]) == 0
    res = json.loads((tmp_path / "exact.json").read_text())
    assert res["rel_err"] <= 1e-10
    assert main(["exact", "escape", "--b", "2", "--out", str(tmp_path), "-q"]) == 2


def test_simulate_outputs(tmp_path, capsys):
    assert main(["simulate", "--steps", "1e4", "--hit", "5,100000", "--out", str(tmp_path), "-q"]) == 0
    assert _files(tmp_path) == ["manifest.json", "probes.csv", "summary.json"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n_steps"] == 10**4 and summary["hitting"]["100000"] is None
    assert (tmp_path / "probes.csv").read_text().startswith("probe_n,xi_star,max_pos,N_n,L_top1,L_top2\n")


def test_verify_exit_codes(tmp_path, capsys):
    assert main(["verify", "counting", "--quick", "--out", str(tmp_path / "ok"), "-q"]) == 0
    assert (tmp_path / "ok" / "report.json").exists()
    cfg = tmp_path / "strict.json"
    cfg.write_text(json.dumps({"study": {"tolerances": {"rel_err": -1.0}}}))
    assert main(["verify", "oracle", "--quick", "--config", str(cfg), "--out", str(tmp_path / "no"), "-q"]) == 1
    assert main(["verify", "nonsense", "--out", str(tmp_path / "x")]) == 2


def test_rwre_out_overrides(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RWRE_OUT", str(tmp_path / "env_wins"))
    assert main(["env", "--dump", "0..5", "--out", str(tmp_path / "flag_loses"), "-q"]) == 0
    assert (tmp_path / "env_wins" / "env.csv").exists()
    assert not (tmp_path / "flag_loses").exists()


def test_unwritable_output_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["env", "--dump", "0..5", "--out", str(blocker / "sub"), "-q"]) == 1


# ---------------------------------------------------------------- report writing


def test_empty_report_writes_report_only(tmp_path):
    manifest = write_report(ExperimentReport("empty"), tmp_path)
    assert list(manifest["files"]) == ["report.json"]
    assert _files(tmp_path) == ["manifest.json", "report.json"]
    assert json.loads((tmp_path / "report.json").read_text())["schema"] == "v1"


def _three_series():
    rep = ExperimentReport("demo")
    for name in ("a", "b", "c"):
        rep.add_series(name, {"x": [1, 2, 3], "y": [0.1, 0.2, 1 / 3]})
    rep.check("0", "demo statistic", "<= 1", 0.5, True)
    return rep


def test_three_series_give_three_csvs(tmp_path):
    manifest = write_report(_three_series(), tmp_path)
    assert sorted(manifest["files"]) == ["a.csv", "b.csv", "c.csv", "report.json"]
    assert len(_files(tmp_path)) == 5
    for name, entry in manifest["files"].items():
        assert entry["bytes"] == (tmp_path / name).stat().st_size and len(entry["sha256"]) == 64


def test_rewrite_is_byte_identical(tmp_path):
    write_report(_three_series(), tmp_path / "one")
    write_report(_three_series(), tmp_path / "two")
    for name in _files(tmp_path / "one"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    assert "0.3333333333333333" in (tmp_path / "one" / "a.csv").read_text()


def test_json_only_format_skips_csv(tmp_path):
    manifest = write_report(_three_series(), tmp_path, formats=("json",))
    assert list(manifest["files"]) == ["report.json"]


def test_write_failure_raises_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        write_report(ExperimentReport("x"), blocker / "sub")
