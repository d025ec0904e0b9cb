"""Monte Carlo studies confronting simulated walks with the structural laws."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..chain import log_golosov_bound
from ..environment import EnvironmentSpec, make_environment
from ..errors import HorizonTooSmall, ScanCapExceeded
from ..simulator import (Overrun, WalkConfig, exit_times, hitting_times, occupation_from_table,
                         run_walk, seen_from_max)
from ..valleys import decompose, decompose_covering, depth_diagnostics, rho_valley
from .config import StudyConfig
from .fanout import fan_out, new_report


def _frac(flags) -> float:
    flags = list(flags)
    return sum(bool(f) for f in flags) / len(flags) if flags else math.nan


def _lll(n: float) -> float:
    return math.log(math.log(math.log(n)))


# ---------------------------------------------------------------- localization


def depth_bounds_hold(d, h_prev: float, h_cur: float, eps: float) -> tuple:
    """The four finite-k depth bounds for one valley, as booleans.

    ``h_prev`` and ``h_cur`` are ``H_{k-1}^+`` and ``H_k^+``.
    """
    slack_prev = h_prev ** (1.0 - eps)
    slack_cur = h_cur ** (1.0 - eps)
    return (d.max_rise_to_bottom <= h_prev - slack_prev,
            d.max_fall_after_bottom <= h_cur - slack_cur,
            d.min_gap_after_eta >= slack_prev,
            d.max_fall_before_eta <= h_prev - slack_prev)


def _localization_run(args):
    env_seed, walk_seed, env_dict, k0s, steps, eps = args
    spec = EnvironmentSpec.from_dict(env_dict, seed=env_seed)
    env = make_environment(spec)
    summary = run_walk(WalkConfig(spec, walk_seed, steps), env)
    top = int(summary.max_position[-1])
    per_k0 = {}
    for k0 in k0s:
        dec = decompose_covering(env, k0, top)
        f2, early, seen = [], [], []
        for n, table, mx in zip(summary.probes, summary.probe_tables, summary.max_position):
            occ = occupation_from_table(table, dec)
            nn = seen_from_max(int(mx), dec)
            last_two = occ[nn] + (occ[nn - 1] if nn >= 1 else 0)
            f2.append(last_two / (n + 1))
            early.append(occ[: max(nn - 1, 0)].sum() / (n + 1))
            seen.append(nn)
        nn = seen[-1]
        h_seen = dec.valleys[nn].h if nn >= 1 else None
        depth = []
        for k in range(1, nn + 1):
            if dec.valleys[k].complete:
                depth.append(depth_bounds_hold(depth_diagnostics(env, dec, k),
                                               dec.valleys[k - 1].h_plus, dec.valleys[k].h_plus, eps))
        per_k0[k0] = {"f2": f2, "early": early, "seen": seen, "h_seen": h_seen, "depth": depth}
    return {"probes": summary.probes.tolist(), "per_k0": per_k0}


def localization_study(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    if sz["steps"] < 10**6:
        raise ValueError("localization needs steps >= 1e6")
    n = sz["seeds"]
    env_seeds, walk_seeds = cfg.seeds("env", n), cfg.seeds("walk", n)
    rep = new_report(cfg, {"env": env_seeds, "walk": walk_seeds})
    k0s = sorted(set([cfg.k0] + list(sz["k0_sweep"])))
    runs = fan_out(_localization_run, [(e, w, cfg.env, k0s, sz["steps"], tol["depth_eps"])
                                       for e, w in zip(env_seeds, walk_seeds)], cfg.workers)
    probes = runs[0]["probes"]
    main = [r["per_k0"][cfg.k0] for r in runs]

    rep.add_series("localization_probes", {
        "probe_n": probes,
        "f2_median": [float(np.median([m["f2"][j] for m in main])) for j in range(len(probes))],
        "early_median": [float(np.median([m["early"][j] for m in main])) for j in range(len(probes))],
        "seen_median": [float(np.median([m["seen"][j] for m in main])) for j in range(len(probes))],
    }, description="medians over seeds at each probe, default K0")
    f2_final = [m["f2"][-1] for m in main]
    early_final = [m["early"][-1] for m in main]
    seen_final = [m["seen"][-1] for m in main]
    steps = sz["steps"]
    log_ratio = [math.log(m["h_seen"]) / math.log(math.log(steps)) if m["h_seen"] else math.nan
                 for m in main]
    rep.add_series("localization_seeds", {
        "seed_index": list(range(n)), "f2": f2_final, "early": early_final, "seen": seen_final,
        "log_h_seen_over_loglog_n": log_ratio,
    })
    sweep_cols = {"k0": [], "f2_median": [], "early_frac_below": [], "seen_median": []}
    for k0 in k0s:
        per = [r["per_k0"][k0] for r in runs]
        sweep_cols["k0"].append(k0)
        sweep_cols["f2_median"].append(float(np.median([p["f2"][-1] for p in per])))
        sweep_cols["early_frac_below"].append(_frac(p["early"][-1] < tol["early_max"] for p in per))
        sweep_cols["seen_median"].append(float(np.median([p["seen"][-1] for p in per])))
    rep.add_series("localization_k0_sweep", sweep_cols)

    med = float(np.median(f2_final))
    rep.check("7", "median fraction of time in the last two valleys at the final probe",
              f">= {tol['f2_median_min']!r}", med, med >= tol["f2_median_min"])
    fr = _frac(e < tol["early_max"] for e in early_final)
    rep.check("7", f"fraction of seeds with early-valley mass < {tol['early_max']!r} at the final probe",
              f">= {tol['early_frac_min']!r}", fr, fr >= tol["early_frac_min"])
    k = sz["trend_probes"]
    trend = _frac(all(b <= a for a, b in zip(m["early"][-k:], m["early"][-k + 1:])) for m in main)
    rep.check("7", f"fraction of seeds with early mass nonincreasing over the last {k} probes",
              f"report only (target >= {tol['trend_frac_min']!r})", trend, None)
    lo, hi = tol["seen_lo"], tol["seen_hi"]
    fs = _frac(lo <= s <= hi for s in seen_final)
    rep.check("7", f"fraction of seeds with N_n in [{lo}, {hi}] at the final probe",
              f"report only (target >= {tol['seen_frac_min']!r})", fs, None)
    depth = [d for m in main for d in m["depth"]]
    rep.check("7", "valleys seen satisfying all four depth bounds at eps = 0.2",
              "report only", f"{sum(all(d) for d in depth)} of {len(depth)}", None)
    rep.summary = {"median_log_h_seen_over_loglog_n": float(np.nanmedian(log_ratio))
                   if any(not math.isnan(x) for x in log_ratio) else math.nan}
    return rep


# ---------------------------------------------------------------- ratio bounds


def ratio_values(table: np.ndarray, lo: int, hi: int, bottom: int, lam: float):
    """``(L, r1, r2)`` for the valley ``[lo, hi)`` with bottom ``bottom`` and width ``lam``."""
    occ = int(table[lo:hi].sum())
    r1 = occ / (lam * table[bottom])
    r2 = occ / (lam * table[lo:hi].max())
    return occ, r1, r2


def _ratio_run(args):
    env_seed, walk_seed, env_dict, k0, n_min, n_max, cap, horizon = args
    spec = EnvironmentSpec.from_dict(env_dict, seed=env_seed)
    env = make_environment(spec)
    dec = decompose(env, k0, horizon, stop_after=n_max - 1)
    targets = {N: dec.valleys[N].m for N in range(n_min, n_max + 1)
               if N < len(dec) and dec.valleys[N - 1].complete}
    rows = []
    if not targets:
        return rows
    summary = run_walk(WalkConfig(spec, walk_seed, cap, probe_schedule=(),
                                  hitting_targets=tuple(targets.values()), stop_on_targets=True), env)
    for N, m in targets.items():
        if m not in summary.hit_tables:
            continue
        v = dec.valleys[N - 1]
        occ, r1, r2 = ratio_values(summary.hit_tables[m], v.m, m, v.b, v.lam)
        rows.append({"N": N, "T": summary.hitting[m], "L": occ, "lambda": v.lam, "r1": r1, "r2": r2})
    return rows


def ratio_study(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    n = sz["seeds"]
    env_seeds, walk_seeds = cfg.seeds("env", n), cfg.seeds("walk", n)
    rep = new_report(cfg, {"env": env_seeds, "walk": walk_seeds})
    per_seed = fan_out(_ratio_run, [(e, w, cfg.env, cfg.k0, sz["n_min"], sz["n_max"], sz["step_cap"],
                                     sz["horizon"]) for e, w in zip(env_seeds, walk_seeds)], cfg.workers)
    rows = [dict(seed_index=i, **r) for i, rs in enumerate(per_seed) for r in rs]
    cols = {k: [r[k] for r in rows] for k in ("seed_index", "N", "T", "L", "lambda", "r1", "r2")}
    rep.add_series("ratio_pairs", cols, description="ratios at n = T(m_N) for reachable N")
    lo, hi, r1_hi = tol["r2_lo"], tol["r2_hi"], tol["r1_hi"]
    a = EnvironmentSpec.from_dict(cfg.env).family.half_width
    f2 = _frac(lo <= r <= hi for r in cols["r2"])
    f1 = _frac(r <= r1_hi for r in cols["r1"])
    need = tol["frac_min"]
    rep.check("8", f"fraction of (seed, N) pairs with r2 in [{lo!r}, {hi!r}]", f">= {need!r}", f2,
              bool(rows) and f2 >= need)
    rep.check("8", f"fraction of (seed, N) pairs with r1 <= {r1_hi!r}", f">= {need!r}", f1,
              bool(rows) and f1 >= need)
    f_alt = _frac(lo <= r <= math.exp(a) for r in cols["r2"])
    rep.check("8", f"fraction of pairs with r2 in [{lo!r}, exp(C)] (C = max |log rho|)",
              "report only", f_alt, None,
              note="max local time in a valley can sit one step off the bottom, "
                   "where the reversible measure is up to exp(C) times larger")
    if rows:
        rep.summary = {"pairs": len(rows),
                       "pairs_by_N": {str(N): cols["N"].count(N) for N in sorted(set(cols["N"]))},
                       "r1_percentiles_5_50_95": np.percentile(cols["r1"], [5, 50, 95]).tolist(),
                       "r2_percentiles_5_50_95": np.percentile(cols["r2"], [5, 50, 95]).tolist()}
    rep.notes.append("envelopes are empirical; the bands are finite-size choices, not constants")
    return rep


# ---------------------------------------------------------------- effective-width tail


def _widths(args):
    seeds, env_dict, rho = args
    out = np.empty(len(seeds))
    for j, s in enumerate(seeds):
        env = make_environment(EnvironmentSpec.from_dict(env_dict, seed=s))
        out[j] = rho_valley(env, rho)[2]
    return out


def tail_fit(widths: np.ndarray, lo_pct: float, hi_pct: float):
    """Least-squares fit of log S(r) on r over ``[lo_pct, hi_pct]`` percentiles.

    Returns ``(slope, r_squared, points)``.
    """
    w = np.sort(widths)
    n = w.size
    surv = 1.0 - np.arange(1, n + 1) / n  # S(w_(j)) = P(W > w_(j))
    lo, hi = np.percentile(w, [lo_pct, hi_pct])
    keep = (w >= lo) & (w <= hi) & (surv > 0)
    r, s = w[keep], np.log(surv[keep])
    if r.size < 3 or np.ptp(r) == 0:
        return math.nan, math.nan, int(r.size)
    fit = stats.linregress(r, s)
    return float(fit.slope), float(fit.rvalue ** 2), int(r.size)


def lambda_tail_study(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    rhos = [float(r) for r in sz["rhos"]]
    seed_blocks = {rho: cfg.seeds(f"env/rho={rho!r}", sz["samples"]) for rho in rhos}
    rep = new_report(cfg, {f"rho={rho!r}": s for rho, s in seed_blocks.items()})
    samples = fan_out(_widths, [(seed_blocks[rho], cfg.env, rho) for rho in rhos], cfg.workers)
    rates, r2s, mins = [], [], []
    for rho, w in zip(rhos, samples):
        slope, r2, npts = tail_fit(w, tol["fit_lo_pct"], tol["fit_hi_pct"])
        rates.append(-slope)
        r2s.append(r2)
        mins.append(float(w.min()))
        grid = np.percentile(w, np.linspace(0, 99.9, 60))
        rep.add_series(f"width_survival_rho_{rho:g}", {
            "r": grid.tolist(), "survival": [float(np.mean(w > g)) for g in grid]})
    rep.add_series("width_tail_fits", {"rho": rhos, "rate": rates, "r_squared": r2s, "min_width": mins})
    for rho, rate, r2 in zip(rhos, rates, r2s):
        rep.check("6", f"rho={rho:g}: log-survival slope", "< 0", -rate, rate > 0)
        rep.check("6", f"rho={rho:g}: R^2 of the linear fit on [median, 99th pct]",
                  f">= {tol['r2_min']!r}", r2, r2 >= tol["r2_min"])
    spread = max(rates) / min(rates) if min(rates) > 0 else math.inf
    rep.check("6", "max/min fitted tail rate across rho", f"<= {tol['rate_ratio_max']!r}", spread,
              spread <= tol["rate_ratio_max"])
    rep.check("6", "smallest width", ">= 1", min(mins), min(mins) >= 1.0)
    return rep


# ---------------------------------------------------------------- height scaling


def _heights(args):
    env_seed, env_dict, k0, k_max, horizon = args
    env = make_environment(EnvironmentSpec.from_dict(env_dict, seed=env_seed))
    try:
        dec = decompose(env, k0, horizon, stop_after=k_max, widths=False)
    except HorizonTooSmall:
        return {"records": [], "reached": False}
    recs = [(v.k, v.h_minus, v.h_plus, v.h) for v in dec.valleys if v.complete]
    return {"records": recs, "reached": len(recs) > k_max}


def height_scaling_study(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    n_env = max(sz["envs"], sz["ks_envs"])
    seeds = cfg.seeds("env", n_env)
    rep = new_report(cfg, {"env": seeds})
    # regression environments get the long horizon, the extra KS-only ones a shorter scan
    ks_horizon = sz.get("ks_horizon", sz["horizon"])
    jobs = [(s, cfg.env, cfg.k0, sz["k_max"], sz["horizon"] if i < sz["envs"] else ks_horizon)
            for i, s in enumerate(seeds)]
    res = fan_out(_heights, jobs, cfg.workers)
    k_lo, k_hi, k_ks = sz["k_min"], sz["k_max"], sz["ks_k_min"]

    ks, logh, unif, expo, monotone_bad = [], [], [], [], 0
    for i, r in enumerate(res):
        by_k = {k: (hm, hp, h) for k, hm, hp, h in r["records"]}
        for k in sorted(by_k):
            hm, hp, h = by_k[k]
            if k - 1 in by_k and k >= 2 and h is not None and by_k[k - 1][2] is not None:
                monotone_bad += h < by_k[k - 1][2]
            if i < sz["envs"] and k_lo <= k <= k_hi and h is not None:
                ks.append(k)
                logh.append(math.log(h))
            if i < sz["ks_envs"] and k >= k_ks and k - 1 in by_k:
                prev_hp = by_k[k - 1][1]
                unif.append(prev_hp / hp)
                expo.append((hm - prev_hp) / prev_hp)
    fit = stats.linregress(ks, logh) if len(set(ks)) > 1 else None
    slope = float(fit.slope) if fit else math.nan
    # same fit restricted to environments that completed every valley up to k_max
    full = [i for i, r in enumerate(res[:sz["envs"]]) if r["reached"]]
    ks_full = [k for i in full for k, _, _, h in res[i]["records"] if k_lo <= k <= k_hi and h is not None]
    lh_full = [math.log(h) for i in full for k, _, _, h in res[i]["records"]
               if k_lo <= k <= k_hi and h is not None]
    slope_full = float(stats.linregress(ks_full, lh_full).slope) if len(set(ks_full)) > 1 else math.nan
    ks_u = float(stats.kstest(unif, "uniform").statistic) if unif else math.nan
    ks_e = float(stats.kstest(expo, "expon").statistic) if expo else math.nan
    per_k = sorted(set(ks))
    rep.add_series("log_height_by_k", {
        "k": per_k,
        "mean_log_h": [float(np.mean([l for kk, l in zip(ks, logh) if kk == k])) for k in per_k],
        "count": [ks.count(k) for k in per_k]})
    rep.add_series("height_ratio_samples", {"h_plus_ratio": unif, "h_minus_excess": expo},
                   description="H_{k-1}^+/H_k^+ and (H_k^- - H_{k-1}^+)/H_{k-1}^+ for k >= ks_k_min")
    reached = sum(r["reached"] for r in res)
    rep.check("5", f"slope of log H_k on k over k in [{k_lo}, {k_hi}]",
              f"in [{tol['slope_lo']!r}, {tol['slope_hi']!r}]", slope,
              tol["slope_lo"] <= slope <= tol["slope_hi"])
    need = tol["min_ks_samples"]
    rep.check("5", "KS distance of H_{k-1}^+/H_k^+ to Uniform(0,1)", f"<= {tol['ks_uniform']!r}", ks_u,
              ks_u <= tol["ks_uniform"] and len(unif) >= need)
    rep.check("5", "KS distance of (H_k^- - H_{k-1}^+)/H_{k-1}^+ to Exp(1)", f"<= {tol['ks_exp']!r}", ks_e,
              ks_e <= tol["ks_exp"] and len(expo) >= need)
    rep.check("5", "pooled ratio samples", f">= {need}", len(unif), len(unif) >= need)
    rep.check("5", "H_k >= H_{k-1} for every observed k", "0 violations", monotone_bad, monotone_bad == 0)
    n_reg = min(sz["envs"], n_env)
    rep.check("5", f"regression environments without a complete valley {k_hi}", "report only",
              n_reg - len(full), None,
              note="an unfinished scan drops the largest heights, which pulls the slope down")
    rep.check("5", f"slope over k in [{k_lo}, {k_hi}] using only environments that completed valley {k_hi}",
              "report only (selection favours small heights)", slope_full, None)
    rep.summary = {"envs_reaching_k_max": reached, "envs": n_env,
                   "regression_points": len(ks)}
    if reached < n_env:
        rep.notes.append(f"{n_env - reached} environments did not complete valley {k_hi} within the "
                         f"horizon; their completed valleys are still used")
    return rep


# ---------------------------------------------------------------- hitting scaling


def _hitting_run(args):
    env_seed, walk_seed, env_dict, targets, cap = args
    env = make_environment(EnvironmentSpec.from_dict(env_dict, seed=env_seed))
    res = hitting_times(env, walk_seed, targets, cap)
    return {t: (None if isinstance(v, Overrun) else int(v)) for t, v in res.items()}


def _censored_median(values: list, cap: int):
    """Median with censored entries (None) placed above ``cap``; None if undetermined."""
    n = len(values)
    observed = sorted(v for v in values if v is not None)
    lo_idx, hi_idx = (n - 1) // 2, n // 2
    if hi_idx >= len(observed):
        return None
    return 0.5 * (observed[lo_idx] + observed[hi_idx])


def hitting_scaling_study(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    targets = [int(t) for t in sz["targets"]]
    if min(targets) < 16:
        raise ValueError("targets must be >= 16 for loglog T / log x to be meaningful")
    n = sz["seeds"]
    env_seeds, walk_seeds = cfg.seeds("env", n), cfg.seeds("walk", n)
    rep = new_report(cfg, {"env": env_seeds, "walk": walk_seeds})
    res = fan_out(_hitting_run, [(e, w, cfg.env, targets, sz["step_cap"])
                                 for e, w in zip(env_seeds, walk_seeds)], cfg.workers)
    stat = lambda t, x: math.log(math.log(t)) / math.log(x)  # noqa: E731
    cols = {"seed_index": list(range(n))}
    for x in targets:
        cols[f"T_{x}"] = [r[x] if r[x] is not None else -1 for r in res]
        cols[f"stat_{x}"] = [stat(r[x], x) if r[x] is not None else math.nan for r in res]
    rep.add_series("hitting_times", cols, description="-1 / nan mark runs censored at the step cap")
    med_rows = {"x": [], "median_T": [], "median_stat": [], "censored": []}
    lo, hi = tol["median_lo"], tol["median_hi"]
    for x in targets:
        values = [r[x] for r in res]
        cens = sum(v is None for v in values)
        m = _censored_median(values, sz["step_cap"])
        ms = stat(m, x) if m is not None and m > math.e else math.nan
        med_rows["x"].append(x)
        med_rows["median_T"].append(m if m is not None else math.nan)
        med_rows["median_stat"].append(ms)
        med_rows["censored"].append(cens)
        rep.check("9", f"x={x}: median of loglog T(x)/log x", f"in [{lo!r}, {hi!r}]", ms,
                  m is not None and lo <= ms <= hi,
                  note=f"{cens} of {n} runs censored at {sz['step_cap']} steps")
    rep.add_series("hitting_medians", med_rows)
    trend = all(b >= a for a, b in zip(med_rows["median_stat"], med_rows["median_stat"][1:]))
    rep.check("9", "median statistic nondecreasing in x", "report only", trend, None)
    return rep


# ---------------------------------------------------------------- exit-time tail


def _exit_env(args):
    env_seed, walk_seed, env_dict, k0, ks, h_max, restarts, factor, max_h, horizon = args
    env = make_environment(EnvironmentSpec.from_dict(env_dict, seed=env_seed))
    dec = decompose(env, k0, horizon, stop_after=max(ks), widths=False)
    rows = []
    for j, k in enumerate(ks):
        if k >= len(dec) or not dec.valleys[k].complete or k + 1 >= len(dec):
            continue
        v = dec.valleys[k]
        if v.h is None or v.h > h_max:
            continue
        lo_exit, hi_exit = v.m - 1, dec.valleys[k + 1].m
        steps = int(min(max_h, math.ceil(factor * math.exp(v.h))))
        t = exit_times(env, walk_seed + j if walk_seed + j < 2**64 else j, v.b, lo_exit, hi_exit,
                       restarts, steps)
        rows.append({"k": k, "h": v.h, "horizon": steps, "times": t})
    return rows


def exit_tail_study(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    n = sz["envs"]
    env_seeds, walk_seeds = cfg.seeds("env", n), cfg.seeds("walk", n)
    rep = new_report(cfg, {"env": env_seeds, "walk": walk_seeds})
    per_env = fan_out(_exit_env, [(e, w, cfg.env, cfg.k0, list(sz["ks"]), sz["h_max"], sz["restarts"],
                                   sz["horizon_factor"], sz["max_horizon"], sz["horizon"])
                                  for e, w in zip(env_seeds, walk_seeds)], cfg.workers)
    rows = {"env_index": [], "k": [], "h": [], "horizon": [], "envelope": [], "argmax_m": [],
            "exited": [], "monotone": [], "p_below_1": []}
    for i, env_rows in enumerate(per_env):
        for r in env_rows:
            t, h, steps = r["times"], r["h"], r["horizon"]
            grid = np.unique(np.geomspace(1, steps, 40).astype(np.int64))
            exited = np.sort(t[t >= 0])
            # P(tau < m) on the grid
            p = np.searchsorted(exited, grid, side="left") / t.size
            env_vals = p * math.exp(h) / grid
            j = int(np.argmax(env_vals))
            rows["env_index"].append(i)
            rows["k"].append(r["k"])
            rows["h"].append(h)
            rows["horizon"].append(steps)
            rows["envelope"].append(float(env_vals[j]))
            rows["argmax_m"].append(int(grid[j]))
            rows["exited"].append(int(exited.size))
            rows["monotone"].append(bool(np.all(np.diff(p) >= 0)))
            rows["p_below_1"].append(float(p[0]))
    rep.add_series("exit_envelopes", rows,
                   description="sup over m of P(tau_k < m) exp(H_k) / m from restarts at b_k")
    med = {}
    for k in sz["ks"]:
        vals = [e for kk, e in zip(rows["k"], rows["envelope"]) if kk == k and e > 0]
        med[str(k)] = float(np.median(vals)) if vals else math.nan
    finite = [m for m in med.values() if not math.isnan(m)]
    spread = max(finite) / min(finite) if len(finite) >= 2 else math.nan
    rep.check("monitoring", "P(tau_k < m) nondecreasing in m", "all valleys", all(rows["monotone"]), None)
    rep.check("monitoring", "P(tau_k < 1)", "0", max(rows["p_below_1"], default=0.0), None)
    rep.check("monitoring", "max/min of per-k median envelopes",
              f"report only (target <= {tol['stability_factor']!r})", spread, None)
    rep.summary = {"median_envelope_by_k": med, "valleys": len(rows["k"])}
    rep.notes.append("the constant in the exit-time bound is not pinned; envelopes are estimates")
    return rep


# ---------------------------------------------------------------- liminf trace


def _liminf_run(args):
    env_seed, walk_seed, env_dict, k0, steps = args
    spec = EnvironmentSpec.from_dict(env_dict, seed=env_seed)
    env = make_environment(spec)
    summary = run_walk(WalkConfig(spec, walk_seed, steps), env)
    dec = decompose_covering(env, k0, int(summary.max_position[-1]))
    s = [(int(n), star * _lll(n) / (n + 1)) for n, star in zip(summary.probes, summary.xi_star) if n >= 16]
    table = summary.local_times
    nn = seen_from_max(table.size - 1, dec)
    fav = math.nan
    if nn >= 2:
        fav_sites = table[dec.valleys[nn].b] if dec.valleys[nn].b is not None and \
            dec.valleys[nn].b < table.size else 0
        fav_sites += table[dec.valleys[nn - 1].b]
        below = table[: dec.valleys[nn - 1].m]
        fav = fav_sites / below.max() if below.size else math.inf
    return {"s": s, "fav_ratio": fav, "seen": nn}


def liminf_trace(cfg: StudyConfig):
    sz, tol = cfg.sizes, cfg.tolerances
    n = sz["seeds"]
    env_seeds, walk_seeds = cfg.seeds("env", n), cfg.seeds("walk", n)
    rep = new_report(cfg, {"env": env_seeds, "walk": walk_seeds})
    runs = fan_out(_liminf_run, [(e, w, cfg.env, cfg.k0, sz["steps"])
                                 for e, w in zip(env_seeds, walk_seeds)], cfg.workers)
    probes = [p for p, _ in runs[0]["s"]]
    rep.add_series("liminf_statistic", {
        "probe_n": probes,
        "s_median": [float(np.median([r["s"][j][1] for r in runs])) for j in range(len(probes))],
        "s_min": [float(min(r["s"][j][1] for r in runs)) for j in range(len(probes))],
        "s_max": [float(max(r["s"][j][1] for r in runs)) for j in range(len(probes))],
    }, description="xi*(n) logloglog(n) / (n+1); monitoring, the limiting constant is not desk-verifiable")
    favs = [r["fav_ratio"] for r in runs]
    rep.add_series("favorite_site_ratio", {"seed_index": list(range(n)), "ratio": favs,
                                           "seen": [r["seen"] for r in runs]})
    late = [v for r in runs for p, v in r["s"] if p >= sz["min_probe"]]
    rep.check("monitoring", f"min of s(n) over probes n >= {sz['min_probe']}", "report only (target > 0)",
              min(late) if late else math.nan, None)
    rep.check("monitoring", f"max of s(n) over probes n >= {sz['min_probe']}",
              f"report only (target < {tol['s_hi']!r})", max(late) if late else math.nan, None)
    defined = [f for f in favs if not math.isnan(f)]
    rep.check("monitoring", f"fraction of seeds with favorite-site ratio >= {tol['fav_ratio_min']!r}",
              f"report only (target >= {tol['fav_frac_min']!r}); {len(defined)} of {n} seeds have N_n >= 2",
              _frac(f >= tol["fav_ratio_min"] for f in defined), None)
    return rep
