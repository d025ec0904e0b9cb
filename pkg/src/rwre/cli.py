"""Command-line entry point: ``rwre {env,valleys,exact,simulate,verify}``.

Configuration precedence, lowest to highest: built-in defaults, the JSON
file given by ``--config``, command-line flags, and ``RWRE_OUT`` for the
output directory.

Exit codes: 0 success, 1 a verdict failed or the computation raised, 2
usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .chain import (HitProbs, OccupationBefore, escape_barrier, escape_parameter, excursion_visit_params,
                    expected_hitting_time, golosov_bound, hit_before_prob, oracle_escape_parameter,
                    oracle_excursion_params, solve_finite_chain)
from .environment import EnvironmentSpec, make_environment
from .errors import InvalidSpec, IoError, ParseError, RwreError, ValidationError
from .experiments import STUDIES, config_from_dict, run_study
from .experiments.report import ExperimentReport, canonical_json, format_cell
from .simulator import WalkConfig, geometric_probes, occupation_from_table, run_walk, seen_from_max
from .valleys import decompose, decompose_covering

FAMILIES = ("twopoint", "uniform")
FORMATS = ("csv", "json")
STUDY_KEYS = {"sizes", "tolerances", "quick", "workers", "env", "k0"}


@dataclass(frozen=True)
class GlobalConfig:
    family: str = "twopoint"
    a: float = 1.0
    delta: float = 0.2
    seed: int = 0
    k0: float = 5.0
    walk_seed: int = 0
    master_seed: int = 1
    out: str = "rwre_out"
    formats: tuple = FORMATS
    verbosity: int = 1
    study: dict = field(default_factory=dict)

    def env_spec(self) -> EnvironmentSpec:
        return EnvironmentSpec.from_dict(self.env_dict(), seed=self.seed)

    def env_dict(self) -> dict:
        if self.family == "twopoint":
            return {"family": "twopoint", "a": self.a}
        return {"family": "uniform", "delta": self.delta}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["formats"] = list(self.formats)
        return d

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        d.pop("verbosity")
        return hashlib.sha256(canonical_json(d)).hexdigest()


_FIELDS = {f.name: f for f in fields(GlobalConfig)}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _validate(raw: dict) -> list:
    """Every problem in ``raw`` as ``(field_path, message)``."""
    errors = []
    for key in sorted(set(raw) - set(_FIELDS)):
        errors.append((key, "unknown key"))
    get = raw.get
    if "family" in raw and get("family") not in FAMILIES:
        errors.append(("family", f"must be one of {', '.join(FAMILIES)}"))
    if "a" in raw and not (_is_real(get("a")) and 0 < get("a") <= 700):
        errors.append(("a", "must be a real in (0, 700]"))
    if "delta" in raw and not (_is_real(get("delta")) and 0 < get("delta") < 0.5):
        errors.append(("delta", "must be a real in (0, 1/2)"))
    for key in ("seed", "walk_seed", "master_seed"):
        if key in raw and not (_is_int(get(key)) and 0 <= get(key) < 2**64):
            errors.append((key, "must be an integer in [0, 2^64)"))
    if "k0" in raw and not (_is_real(get("k0")) and get("k0") > 0):
        errors.append(("k0", "must be a positive real"))
    if "out" in raw and not (isinstance(get("out"), str) and get("out")):
        errors.append(("out", "must be a nonempty path"))
    if "formats" in raw:
        fm = get("formats")
        if not isinstance(fm, (list, tuple)) or not fm:
            errors.append(("formats", "must be a nonempty list"))
        else:
            for j, f in enumerate(fm):
                if f not in FORMATS:
                    errors.append((f"formats[{j}]", f"must be one of {', '.join(FORMATS)}"))
    if "verbosity" in raw and not (_is_int(get("verbosity")) and 0 <= get("verbosity") <= 2):
        errors.append(("verbosity", "must be 0, 1 or 2"))
    if "study" in raw:
        st = get("study")
        if not isinstance(st, dict):
            errors.append(("study", "must be an object"))
        else:
            for key in sorted(set(st) - STUDY_KEYS):
                errors.append((f"study.{key}", "unknown key"))
            for part in ("sizes", "tolerances"):
                if part in st and not isinstance(st[part], dict):
                    errors.append((f"study.{part}", "must be an object"))
    return errors


def parse_config(path: Optional[str] = None, flags: Optional[dict] = None) -> GlobalConfig:
    """Defaults, then the JSON file at ``path``, then ``flags`` (``None`` values ignored)."""
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ParseError(f"{path}: top level must be an object")
    raw = dict(raw)
    raw.update({k: v for k, v in (flags or {}).items() if v is not None})
    errors = _validate(raw)
    if errors:
        raise ValidationError(errors)
    if "formats" in raw:
        raw["formats"] = tuple(raw["formats"])
    for key in ("a", "delta", "k0"):
        if key in raw:
            raw[key] = float(raw[key])
    return GlobalConfig(**raw)


# ---------------------------------------------------------------- output


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    import numba
    import scipy
    return {"rwre": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_artifacts(files: dict, out_dir, config_hash: str, extra: Optional[dict] = None) -> dict:
    """Write ``{name: bytes}`` under ``out_dir`` plus ``manifest.json``; return the manifest."""
    out = Path(out_dir)
    listing = {name: {"bytes": len(data), "sha256": _sha(data)} for name, data in sorted(files.items())}
    manifest = {"schema": "v1", "config_hash": config_hash, "files": listing, "versions": _versions()}
    manifest.update(extra or {})
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            (out / name).write_bytes(files[name])
        (out / "manifest.json").write_bytes(canonical_json(manifest))
    except OSError as exc:
        raise IoError(f"cannot write under {out}: {exc}") from exc
    return manifest


def write_report(report: ExperimentReport, out_dir, formats: Sequence[str] = FORMATS) -> dict:
    """JSON report, one CSV per series and a manifest with sha-256 of each file."""
    files = {"report.json": report.to_json()}
    if "csv" in formats:
        for s in report.series:
            files[f"{s.name}.csv"] = s.to_csv()
    prov = report.provenance
    return write_artifacts(files, out_dir, prov.get("config_hash", ""),
                           {"seeds": prov.get("seeds", {}), "study": report.study})


def _csv(header: Sequence[str], rows) -> bytes:
    lines = [",".join(header)]
    lines += [",".join(format_cell(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode()


# ---------------------------------------------------------------- commands


def _parse_range(text: str) -> tuple:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError(f"expected a range like 0..100, got {text!r}")
    lo, hi = int(lo), int(float(hi))
    if not 0 <= lo <= hi:
        raise ValueError("range must satisfy 0 <= lo <= hi")
    return lo, hi


def _cmd_env(cfg: GlobalConfig, args: dict):
    lo, hi = _parse_range(args.get("dump") or "0..100")
    env = make_environment(cfg.env_spec())
    v = env.potential_window(lo, hi)
    rows = []
    for j, x in enumerate(range(lo, hi + 1)):
        # site 0 has the forced step: omega = 1 and no log rho
        rows.append((x, 1.0 if x == 0 else env.omega_at(x), None if x == 0 else env.log_rho(x), v[j]))
    data = _csv(["x", "omega", "log_rho", "V"], rows)
    return 0, {"env.csv": data}, data


def _cmd_valleys(cfg: GlobalConfig, args: dict):
    env = make_environment(cfg.env_spec())
    dec = decompose(env, cfg.k0, int(float(args.get("horizon") or 1e6)))
    cols = ["k", "m", "theta", "b", "eta", "h_minus", "h_plus", "h", "lambda", "complete"]
    data = _csv(cols, ([v.row()[c] for c in cols] for v in dec.valleys))
    return 0, {"valleys.csv": data}, data


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def _cmd_exact(cfg: GlobalConfig, args: dict):
    what = args["what"]
    env = make_environment(cfg.env_spec())

    def need(*names):
        missing = [n for n in names if args.get(n) is None]
        if missing:
            raise _Usage(f"exact {what} requires --{' --'.join(missing)}")
        return [int(args[n]) for n in names]

    inputs = {"env": cfg.env_spec().to_dict()}
    out = {}
    if what == "hitprob":
        b, x, i = need("b", "x", "i")
        inputs.update(b=b, x=x, i=i)
        out["value"] = hit_before_prob(env, b, x, i)
        out["oracle_value"] = solve_finite_chain(env, b, i, HitProbs(b)).at(x)
    elif what == "visits":
        b, x = need("b", "x")
        inputs.update(b=b, x=x)
        p, o = excursion_visit_params(env, b, x), oracle_excursion_params(env, b, x)
        out["value"] = {"alpha": p.alpha, "beta": p.beta, "mean": p.mean}
        out["oracle_value"] = {"alpha": o.alpha, "beta": o.beta, "mean": o.mean}
        out["rel_err"] = max(_rel(p.alpha, o.alpha), _rel(p.beta, o.beta))
    elif what == "golosov":
        (x,) = need("x")
        inputs.update(x=x)
        out["value"] = golosov_bound(env, x)
        out["expected_time"] = expected_hitting_time(env, x)
    elif what == "escape":
        b, i = need("b", "i")
        inputs.update(b=b, i=i)
        out["value"] = escape_parameter(env, b, i)
        out["oracle_value"] = oracle_escape_parameter(env, b, i)
        out["barrier"] = escape_barrier(env, b, i)
    elif what == "oracle":
        left, right = need("left", "right")
        mode = args.get("mode") or "hit"
        inputs.update(left=left, right=right, mode=mode)
        if mode == "hit":
            target = int(args["target"]) if args.get("target") is not None else left
            inputs["target"] = target
            res = solve_finite_chain(env, left, right, HitProbs(target))
            out["value"] = res.probabilities
        elif mode == "occupation":
            absorber = int(args["target"]) if args.get("target") is not None else right
            start = int(args["start"]) if args.get("start") is not None else left
            inputs.update(absorber=absorber, start=start)
            res = solve_finite_chain(env, left, right, OccupationBefore(absorber, start))
            out["value"] = res.occupation
            out["expected_time"] = res.expected_time
        else:
            raise _Usage("--mode must be hit or occupation")
        out["residual"] = res.residual
    else:
        raise _Usage(f"unknown exact quantity {what!r}")
    if "oracle_value" in out and "rel_err" not in out:
        out["rel_err"] = _rel(out["value"], out["oracle_value"])
    data = canonical_json({"inputs": inputs, **out})
    return 0, {"exact.json": data}, data


def _cmd_simulate(cfg: GlobalConfig, args: dict):
    steps = int(float(args.get("steps") or 1e6))
    probes = geometric_probes(steps) if (args.get("probes") or "geometric") == "geometric" else ()
    hits = tuple(int(t) for t in (args.get("hit") or "").split(",") if t.strip())
    spec = cfg.env_spec()
    env = make_environment(spec)
    s = run_walk(WalkConfig(spec, cfg.walk_seed, steps, probe_schedule=probes, hitting_targets=hits), env)
    summary = {
        "env": spec.to_dict(), "walk_seed": cfg.walk_seed, "k0": cfg.k0, "n_steps": s.n_steps,
        "final_position": s.final_position, "max_position": int(s.max_position[-1]) if len(s.probes) else None,
        "xi_star": int(s.xi_star[-1]) if len(s.probes) else None,
        "hitting": {str(k): (int(v) if isinstance(v, (int, np.integer)) else None)
                    for k, v in s.hitting.items()},
    }
    files = {"summary.json": canonical_json(summary)}
    if "csv" in cfg.formats and len(s.probes):
        dec = decompose_covering(env, cfg.k0, int(s.max_position[-1]))
        rows = []
        for n, table, star, mx in zip(s.probes, s.probe_tables, s.xi_star, s.max_position):
            occ = np.sort(occupation_from_table(table, dec))[::-1]
            rows.append((int(n), int(star), int(mx), seen_from_max(int(mx), dec), int(occ[0]),
                         int(occ[1]) if occ.size > 1 else 0))
        files["probes.csv"] = _csv(["probe_n", "xi_star", "max_pos", "N_n", "L_top1", "L_top2"], rows)
    return 0, files, files["summary.json"]


def _cmd_verify(cfg: GlobalConfig, args: dict):
    study = args["study"]
    if study not in STUDIES:
        raise _Usage(f"unknown study {study!r}; choose from {', '.join(STUDIES)}")
    d = dict(cfg.study, study=study, master_seed=cfg.master_seed)
    if args.get("quick"):
        d["quick"] = True
    if args.get("workers") is not None:
        d["workers"] = int(args["workers"])
    try:
        scfg = config_from_dict(d)
    except (ValueError, InvalidSpec) as exc:
        raise ValidationError([("study", str(exc))]) from exc
    report = run_study(scfg)
    return (0 if report.passed else 1), report, None


class _Usage(Exception):
    pass


COMMANDS = {"env": _cmd_env, "valleys": _cmd_valleys, "exact": _cmd_exact,
            "simulate": _cmd_simulate, "verify": _cmd_verify}


def output_dir(cfg: GlobalConfig) -> str:
    return os.environ.get("RWRE_OUT") or cfg.out


def run_command(cmd: str, cfg: GlobalConfig, args: Optional[dict] = None) -> int:
    """Dispatch ``cmd``; write outputs and a manifest under the output directory."""
    args = dict(args or {})
    if cmd not in COMMANDS:
        print(f"unknown command {cmd!r}\n{USAGE}", file=sys.stderr)
        return 2
    try:
        status, payload, echo = COMMANDS[cmd](cfg, args)
    except _Usage as exc:
        print(f"usage error: {exc}\n{USAGE}", file=sys.stderr)
        return 2
    except (ValidationError, ParseError, InvalidSpec, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RwreError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out = output_dir(cfg)
    try:
        _emit(cmd, cfg, args, payload, echo, out)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return status


def _emit(cmd, cfg, args, payload, echo, out):
    if isinstance(payload, ExperimentReport):
        write_report(payload, out, cfg.formats)
        if cfg.verbosity:
            for v in payload.verdicts:
                mark = "report" if v.passed is None else ("PASS" if v.passed else "FAIL")
                print(f"[{mark}] {v.criterion}: {v.statistic} = {format_cell(v.observed)} ({v.threshold})")
            print(f"{payload.study}: {'PASS' if payload.passed else 'FAIL'} -> {out}")
    else:
        config = cfg.to_dict()
        config.pop("out")
        write_artifacts(payload, out, cfg.config_hash(), {"command": cmd, "args": args, "config": config})
        if cfg.verbosity and echo is not None:
            sys.stdout.write(echo.decode())


# ---------------------------------------------------------------- argv


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override its values)")
    common.add_argument("--family", choices=FAMILIES)
    common.add_argument("--a", type=float, help="TwoPoint half-width of log rho")
    common.add_argument("--delta", type=float, help="Uniform ellipticity bound")
    common.add_argument("--seed", type=int, help="environment seed")
    common.add_argument("--walk-seed", type=int, dest="walk_seed")
    common.add_argument("--master-seed", type=int, dest="master_seed")
    common.add_argument("--k0", type=float)
    common.add_argument("--out", help="output directory (RWRE_OUT overrides)")
    common.add_argument("--format", action="append", choices=FORMATS, dest="formats")
    common.add_argument("-q", "--quiet", action="store_const", const=0, dest="verbosity")
    common.add_argument("-v", "--verbose", action="store_const", const=2, dest="verbosity")

    p = argparse.ArgumentParser(prog="rwre", description="Random walk in random environment toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True, metavar="{env,valleys,exact,simulate,verify}")

    e = sub.add_parser("env", parents=[common], help="dump omega, log rho and V on a site range")
    e.add_argument("--dump", default="0..100", help="site range lo..hi")

    v = sub.add_parser("valleys", parents=[common], help="valley decomposition as CSV")
    v.add_argument("--horizon", default="1e6")

    x = sub.add_parser("exact", parents=[common], help="closed forms and the window oracle")
    x.add_argument("what", choices=["hitprob", "visits", "golosov", "escape", "oracle"])
    for name in ("b", "x", "i", "left", "right", "target", "start"):
        x.add_argument(f"--{name}", type=int)
    x.add_argument("--mode", choices=["hit", "occupation"])

    s = sub.add_parser("simulate", parents=[common], help="run one walk")
    s.add_argument("--steps", default="1e6")
    s.add_argument("--probes", choices=["geometric", "none"], default="geometric")
    s.add_argument("--hit", default="", help="comma-separated hitting targets")

    r = sub.add_parser("verify", parents=[common], help="run a study and its verdicts")
    r.add_argument("study", help=", ".join(STUDIES))
    r.add_argument("--quick", action="store_true", help="reduced sizes")
    r.add_argument("--workers", type=int)
    return p


USAGE = _parser().format_usage().strip()

_GLOBAL_FLAGS = ("family", "a", "delta", "seed", "walk_seed", "master_seed", "k0", "out", "formats",
                 "verbosity")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    opts = vars(ns)
    cmd = opts.pop("cmd")
    flags = {k: opts.pop(k) for k in _GLOBAL_FLAGS}
    try:
        cfg = parse_config(opts.pop("config"), flags)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run_command(cmd, cfg, opts)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
