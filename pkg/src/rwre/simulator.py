"""Quenched Monte Carlo of the reflected walk.

The walk starts at 0, steps 0 -> 1 deterministically and elsewhere moves
right with probability ``omega_x``.  Each step consumes exactly one draw of
the replica's SplitMix64 stream (see :mod:`rwre.hashing`), including the
forced step at 0, so a trajectory is a pure function of
``(environment seed, walk seed, replica)``.

Only statistics are kept: a dense local-time table over ``[0, max
position]`` (the support of a nearest-neighbour walk from 0 is always an
interval) plus snapshots of it at probe times and hitting times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba as nb
import numpy as np

from .environment import Environment, EnvironmentSpec, make_environment
from .errors import HorizonTooSmall, StepCapExceeded
from .hashing import GOLDEN, as_u64, mix64, stream_key, to_unit
from .valleys import ValleyDecomposition

DEFAULT_STEP_CAP = 10**10
_INITIAL_SITES = 1024


@dataclass(frozen=True)
class Overrun:
    """Hitting time censored at ``cap`` steps."""

    cap: int


@dataclass(frozen=True)
class Unreached:
    """Target not hit within a fixed-length run of ``n_steps``."""

    n_steps: int


def geometric_probes(n: int) -> tuple:
    """``round(2^{j/2})`` up to ``n``, deduplicated, with ``n`` appended."""
    out = []
    j = 0
    while True:
        p = int(round(2.0 ** (j / 2)))
        if p > n:
            break
        if not out or p != out[-1]:
            out.append(p)
        j += 1
    if not out or out[-1] != n:
        out.append(n)
    return tuple(out)


@dataclass(frozen=True)
class WalkConfig:
    env_spec: EnvironmentSpec
    walk_seed: int
    n_steps: int
    probe_schedule: Optional[tuple] = None
    hitting_targets: tuple = ()
    step_cap: int = DEFAULT_STEP_CAP
    replica: int = 0
    stop_on_targets: bool = False  # end the run once every target is hit

    def probes(self) -> tuple:
        if self.probe_schedule is None:
            return geometric_probes(self.n_steps)
        return tuple(int(p) for p in self.probe_schedule)

    def validate(self) -> None:
        as_u64(self.walk_seed)
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.n_steps > self.step_cap:
            raise StepCapExceeded(f"n_steps={self.n_steps} exceeds step_cap={self.step_cap}")
        pr = self.probes()
        if any(b <= a for a, b in zip(pr, pr[1:])):
            raise ValueError("probe schedule must be strictly increasing")
        if pr and (pr[0] < 0 or pr[-1] > self.n_steps):
            raise ValueError("probes must lie in [0, n_steps]")
        if any(int(t) < 1 for t in self.hitting_targets):
            raise ValueError("hitting targets must be >= 1")


@dataclass
class TrajectorySummary:
    n_steps: int
    probes: np.ndarray                 # probe times n
    probe_tables: list                 # xi(n, 0..max_pos(n)) per probe
    xi_star: np.ndarray                # max_x xi(n, x) per probe
    max_position: np.ndarray           # per probe
    position: np.ndarray               # X_n per probe
    hitting: dict                      # target -> T(x) | Unreached
    hit_tables: dict = field(default_factory=dict)  # target -> xi(T(x), .)
    local_times: np.ndarray = None     # xi(n_steps, .)
    final_position: int = 0

    def table_at(self, n: int) -> np.ndarray:
        i = int(np.searchsorted(self.probes, n))
        if i == len(self.probes) or self.probes[i] != n:
            raise KeyError(f"{n} is not a probe time")
        return self.probe_tables[i]


@dataclass
class ExcursionCensus:
    anchor: int
    sites: tuple
    visits: np.ndarray       # (n_excursions, len(sites)) visit counts Y
    durations: np.ndarray    # steps from leaving the anchor to the next return
    completed: int
    start_time: int          # steps spent before the first excursion began


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True)
def _walk_counting(om, lt, x, n, st, stop_n, stop_site):
    state = st[0]
    while n < stop_n:
        state += GOLDEN
        x += 1 - 2 * (to_unit(mix64(state)) >= om[x])
        n += 1
        lt[x] += 1
        if x == stop_site:
            break
    st[0] = state
    return x, n


@nb.njit(cache=True)
def _walk_plain(om, x, n, st, stop_n, stop_site):
    state = st[0]
    while n < stop_n:
        state += GOLDEN
        x += 1 - 2 * (to_unit(mix64(state)) >= om[x])
        n += 1
        if x == stop_site:
            break
    st[0] = state
    return x, n


@nb.njit(cache=True)
def _census(om, col, anchor, visits, durations, j, dur, x, st, budget):
    """Advance a census; ``x`` must start at the anchor or mid-excursion.

    Returns early when the walk reaches the last site of ``om`` (the caller
    grows the arrays) or the step budget runs out.
    """
    state = st[0]
    top = om.size - 1
    n_exc = durations.size
    steps = 0
    while j < n_exc and steps < budget:
        state += GOLDEN
        x += 1 - 2 * (to_unit(mix64(state)) >= om[x])
        steps += 1
        dur += 1
        if x == anchor:
            durations[j] = dur
            j += 1
            dur = 0
        else:
            c = col[x]
            if c >= 0:
                visits[j, c] += 1
            if x == top:
                break
    st[0] = state
    return j, dur, x, steps


@nb.njit(cache=True)
def _returns_before(om, anchor, target, st, budget):
    """Completed returns to ``anchor`` (started there) before hitting ``target``."""
    state = st[0]
    x = anchor
    k = 0
    steps = 0
    while steps < budget:
        state += GOLDEN
        x += 1 - 2 * (to_unit(mix64(state)) >= om[x])
        steps += 1
        if x == anchor:
            k += 1
        elif x == target:
            return k
    return -1


@nb.njit(cache=True)
def _exit_time(om, start, lo_exit, hi_exit, st, horizon):
    state = st[0]
    x = start
    for t in range(1, horizon + 1):
        state += GOLDEN
        x += 1 - 2 * (to_unit(mix64(state)) >= om[x])
        if x == lo_exit or x == hi_exit:
            return t
    return -1


@nb.njit(cache=True)
def _hitting_batch(om, seed, target, first_replica, out, cap):
    for r in range(out.size):
        state = stream_key(seed, np.uint64(first_replica + r))
        x = 0
        n = 0
        while n < cap:
            state += GOLDEN
            x += 1 - 2 * (to_unit(mix64(state)) >= om[x])
            n += 1
            if x == target:
                break
        out[r] = n if x == target else -1


# ---------------------------------------------------------------- helpers


def _omega_table(env: Environment, size: int) -> np.ndarray:
    """omega on ``0..size-1`` with the forced value 1 at the origin."""
    om = np.empty(size)
    om[0] = 1.0
    if size > 1:
        om[1:] = env.omega_block(1, size)
    return om


def _grow(env: Environment, om: np.ndarray, *tables: np.ndarray, fill=0):
    size = 2 * om.size
    new_om = np.empty(size)
    new_om[: om.size] = om
    new_om[om.size:] = env.omega_block(om.size, size)
    grown = []
    for t in tables:
        g = np.full(size, fill, dtype=t.dtype)
        g[: t.size] = t
        grown.append(g)
    return new_om, grown


def _resolve_env(env_spec: EnvironmentSpec, env: Optional[Environment]) -> Environment:
    if env is None:
        return make_environment(env_spec)
    if env.spec != env_spec:
        raise ValueError("environment does not match the configured spec")
    return env


def walk_state(walk_seed: int, replica: int = 0) -> np.ndarray:
    """Initial SplitMix64 state of a replica, boxed so kernels can advance it in place."""
    return np.array([stream_key(as_u64(walk_seed), np.uint64(replica))], dtype=np.uint64)


# ---------------------------------------------------------------- runs


def run_walk(cfg: WalkConfig, env: Optional[Environment] = None) -> TrajectorySummary:
    """Simulate ``cfg.n_steps`` steps and collect local-time statistics.

    With ``cfg.stop_on_targets`` the run ends at the last hitting time
    (a final probe is recorded there) if that comes first.

    ``env`` may be passed to reuse an environment (for instance one with a
    forced prefix); it must carry ``cfg.env_spec``.
    """
    cfg.validate()
    env = _resolve_env(cfg.env_spec, env)
    probes = cfg.probes()
    targets = sorted(set(int(t) for t in cfg.hitting_targets))

    om = _omega_table(env, _INITIAL_SITES)
    lt = np.zeros(om.size, dtype=np.int64)
    lt[0] = 1
    x, n, state = 0, 0, walk_state(cfg.walk_seed, cfg.replica)
    hitting, hit_tables = {}, {}
    probe_times, tables, xi_star, max_pos, pos = [], [], [], [], []
    ti = 0

    probe_set = set(probes)
    stops = sorted(probe_set | {cfg.n_steps})
    done = False
    for p in stops:
        while not done:
            tgt = targets[ti] if ti < len(targets) else -1
            stop_site = om.size - 1
            if 0 <= tgt < stop_site:
                stop_site = tgt
            if n < p:
                x, n = _walk_counting(om, lt, x, n, state, p, stop_site)
            if x == tgt and tgt not in hitting:
                hitting[tgt] = n
                hit_tables[tgt] = lt[: tgt + 1].copy()
                ti += 1
                done = cfg.stop_on_targets and ti == len(targets)
            if x == om.size - 1:
                om, (lt,) = _grow(env, om, lt)
            if n == p:
                break
        if p in probe_set or done:
            top = int(np.count_nonzero(lt)) - 1  # support is the interval [0, top]
            snap = lt[: top + 1].copy()
            probe_times.append(n)
            tables.append(snap)
            xi_star.append(int(snap.max()))
            max_pos.append(top)
            pos.append(x)
        if done:
            break

    for t in targets:
        hitting.setdefault(t, Unreached(cfg.n_steps))
    return TrajectorySummary(
        n_steps=n,
        probes=np.asarray(probe_times, dtype=np.int64),
        probe_tables=tables,
        xi_star=np.asarray(xi_star, dtype=np.int64),
        max_position=np.asarray(max_pos, dtype=np.int64),
        position=np.asarray(pos, dtype=np.int64),
        hitting=hitting,
        hit_tables=hit_tables,
        local_times=lt[: int(np.count_nonzero(lt))].copy(),
        final_position=int(x),
    )


def hitting_times(env: Environment, walk_seed: int, targets: Sequence[int],
                  cap: int = DEFAULT_STEP_CAP, replica: int = 0) -> dict:
    """``T(x)`` for every target from one trajectory; censored values are :class:`Overrun`."""
    targets = sorted(set(int(t) for t in targets))
    if any(t < 1 for t in targets):
        raise ValueError("targets must be >= 1")
    om = _omega_table(env, max(targets, default=1) + 1)
    x, n, state = 0, 0, walk_state(walk_seed, replica)
    out = {}
    for t in targets:
        if x < t:
            x, n = _walk_plain(om, x, n, state, int(cap), t)
        out[t] = n if x == t else Overrun(int(cap))
    return out


def first_hitting_time(env: Environment, walk_seed: int, x: int,
                       cap: int = DEFAULT_STEP_CAP, replica: int = 0):
    """``T(x) = inf{n >= 1: X_n = x}`` or ``Overrun(cap)``."""
    return hitting_times(env, walk_seed, [x], cap, replica)[int(x)]


def hitting_time_samples(env: Environment, walk_seed: int, x: int, runs: int,
                         cap: int = DEFAULT_STEP_CAP, first_replica: int = 0) -> np.ndarray:
    """``T(x)`` over replicas ``first_replica ..``; censored runs are -1.

    Replica ``r`` gives the same value as ``first_hitting_time(env, walk_seed, x, cap, r)``.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    om = _omega_table(env, int(x) + 1)
    out = np.empty(int(runs), dtype=np.int64)
    _hitting_batch(om, as_u64(walk_seed), int(x), int(first_replica), out, int(cap))
    return out


def excursion_census(env: Environment, walk_seed: int, b: int, sites: Sequence[int],
                     n_excursions: int, cap: int = DEFAULT_STEP_CAP, replica: int = 0,
                     start_at_anchor: bool = False) -> ExcursionCensus:
    """Visit counts at ``sites`` during consecutive excursions from ``b``.

    The walk runs from 0 until ``T(b)`` and then records ``n_excursions``
    complete returns to ``b``.  With ``start_at_anchor`` the walk is
    started at ``b`` directly (same law for the excursions, by the strong
    Markov property, and no approach phase).
    """
    b = int(b)
    sites = tuple(int(s) for s in sites)
    if b < 1:
        raise ValueError("anchor must be >= 1")
    if b in sites:
        raise ValueError("census sites must differ from the anchor")
    if any(s < 0 for s in sites):
        raise ValueError("sites must be nonnegative")
    size = max(_INITIAL_SITES, 2 * (max(sites + (b,)) + 1))
    om = _omega_table(env, size)
    state = walk_state(walk_seed, replica)
    x, used = (b, 0) if start_at_anchor else (0, 0)
    if not start_at_anchor:
        x, used = _walk_plain(om, 0, 0, state, int(cap), b)
        if x != b:
            raise StepCapExceeded(f"anchor {b} not reached within {cap} steps")
    start_time = used
    col = np.full(om.size, -1, dtype=np.int64)
    for i, s in enumerate(sites):
        col[s] = i
    visits = np.zeros((int(n_excursions), len(sites)), dtype=np.int64)
    durations = np.zeros(int(n_excursions), dtype=np.int64)
    j, dur = 0, 0
    while j < n_excursions:
        j, dur, x, steps = _census(om, col, b, visits, durations, j, dur, x, state, int(cap) - used)
        used += steps
        if x == om.size - 1 and j < n_excursions:
            om, (col,) = _grow(env, om, col, fill=-1)
        elif j < n_excursions:
            raise StepCapExceeded(f"{j} of {n_excursions} excursions completed within {cap} steps")
    return ExcursionCensus(b, sites, visits, durations, int(j), int(start_time))


def excursions_before_hit(env: Environment, walk_seed: int, b: int, i: int, n_trials: int,
                          cap: int = DEFAULT_STEP_CAP) -> np.ndarray:
    """Returns to ``b`` before ``T(i)`` per trial, each trial started at ``b``.

    Trial ``t`` uses replica stream ``t``; a trial exceeding ``cap`` steps
    is reported as -1.
    """
    if not 1 <= b < i:
        raise ValueError("need 1 <= b < i")
    om = _omega_table(env, i + 1)
    out = np.empty(int(n_trials), dtype=np.int64)
    for t in range(int(n_trials)):
        out[t] = _returns_before(om, int(b), int(i), walk_state(walk_seed, t), int(cap))
    return out


def exit_times(env: Environment, walk_seed: int, start: int, lo_exit: int, hi_exit: int,
               n_samples: int, horizon: int) -> np.ndarray:
    """First time the walk from ``start`` hits ``lo_exit`` or ``hi_exit``.

    Restart ``t`` uses replica stream ``t``; samples still inside after
    ``horizon`` steps are returned as -1 (censored).  ``lo_exit = -1``
    leaves the left side open (reflection at 0).
    """
    if not lo_exit < start < hi_exit:
        raise ValueError("need lo_exit < start < hi_exit")
    om = _omega_table(env, hi_exit + 1)
    out = np.empty(int(n_samples), dtype=np.int64)
    for t in range(int(n_samples)):
        out[t] = _exit_time(om, int(start), int(lo_exit), int(hi_exit),
                               walk_state(walk_seed, t), int(horizon))
    return out


# ---------------------------------------------------------------- valley statistics


def _check_cover(table: np.ndarray, dec: ValleyDecomposition) -> None:
    top = table.size - 1
    if top > dec.horizon or top >= dec.resolved:
        raise HorizonTooSmall(f"walk reached site {top}; decomposition resolves only "
                              f"sites below {min(dec.resolved, dec.horizon + 1)}")


def occupation_from_table(table: np.ndarray, dec: ValleyDecomposition) -> np.ndarray:
    """``L(n, k)`` for ``k = 0..len(dec)-1`` from one local-time table."""
    _check_cover(table, dec)
    cs = np.concatenate([[0], np.cumsum(table, dtype=np.int64)])
    edges = np.minimum(np.asarray(dec.starts + [table.size], dtype=np.int64), table.size)
    return np.diff(cs[edges])


def occupation_by_valley(summary: TrajectorySummary, dec: ValleyDecomposition,
                         probe: Optional[int] = None) -> np.ndarray:
    """``L(n, k)`` at the final time, or at probe time ``probe``."""
    table = summary.local_times if probe is None else summary.table_at(probe)
    return occupation_from_table(table, dec)


def seen_from_max(max_pos: int, dec: ValleyDecomposition) -> int:
    """``sup{k: max position >= m_k}``."""
    if max_pos > dec.horizon or max_pos >= dec.resolved:
        raise HorizonTooSmall(f"max position {max_pos} beyond resolved range")
    starts = np.asarray(dec.starts, dtype=np.int64)
    return int(np.searchsorted(starts, max_pos, side="right") - 1)


def seen_valleys(summary: TrajectorySummary, dec: ValleyDecomposition,
                 probe: Optional[int] = None) -> int:
    """``N_n``: number of valleys whose start has been reached."""
    if probe is None:
        top = summary.local_times.size - 1
    else:
        top = summary.table_at(probe).size - 1
    return seen_from_max(top, dec)
