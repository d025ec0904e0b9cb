"""Quenched-chain analytics: closed forms plus a finite-window linear oracle.

All sums of ``exp(V)`` are evaluated in the log domain; ``V`` routinely
spans hundreds of units.  The oracle (:func:`solve_finite_chain`) never
uses the potential: it solves the harmonic / occupation equations of the
chain restricted to a window directly from the transition probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import logsumexp

from .environment import Environment
from .errors import BadOrdering, Singular, WindowTooLarge

MAX_WINDOW = 10**4


@dataclass(frozen=True)
class ExcursionLawParams:
    """``alpha = P_b(T(x) < T(b))``, ``beta = P_x(T(b) < T(x))``."""

    alpha: float
    beta: float

    @property
    def mean(self) -> float:
        return self.alpha / self.beta


@dataclass(frozen=True)
class HitProbs:
    target: int


@dataclass(frozen=True)
class OccupationBefore:
    absorber: int
    start: int


Mode = Union[HitProbs, OccupationBefore]


@dataclass(frozen=True)
class OracleResult:
    left: int
    right: int
    mode: Mode
    probabilities: Optional[np.ndarray]   # P_y(hit target first), y = left..right
    occupation: Optional[np.ndarray]      # expected visits to y before absorption
    expected_time: Optional[float]
    residual: float

    def at(self, y: int) -> float:
        arr = self.probabilities if self.probabilities is not None else self.occupation
        return float(arr[y - self.left])


# ---------------------------------------------------------------- helpers


def _omega_window(env: Environment, lo: int, hi: int) -> np.ndarray:
    """omega on lo..hi inclusive, with the forced step at 0."""
    if lo == 0:
        return np.concatenate([[1.0], env.omega_block(1, hi + 1)]) if hi >= 1 else np.array([1.0])
    return env.omega_block(lo, hi + 1)


def _lse(v) -> float:
    return float(logsumexp(v))


# ---------------------------------------------------------------- closed forms


def hit_before_prob(env: Environment, b: int, x: int, i: int) -> float:
    """``P_x(T(b) < T(i))`` for ``b <= x <= i``, ``b < i``."""
    if not (0 <= b <= x <= i and b < i):
        raise BadOrdering(f"need 0 <= b <= x <= i and b < i, got b={b}, x={x}, i={i}")
    if x == i:
        return 0.0
    v = env.potential_window(b, i - 1)
    return math.exp(_lse(v[x - b:]) - _lse(v))


def excursion_visit_mean(env: Environment, b: int, x: int) -> float:
    """``E Y_{b,x} = mu(x) / mu(b)``."""
    if b < 1 or x < 1 or x == b:
        raise BadOrdering("need b, x >= 1 and x != b")
    return math.exp(env.log_reversible_measure(x) - env.log_reversible_measure(b))


def excursion_visit_mean_alt(env: Environment, b: int, x: int) -> float:
    """Same mean via ``(omega_b / omega_x) exp(-(V(x) - V(b)))``."""
    return env.omega_at(b) / env.omega_at(x) * math.exp(env.potential(b) - env.potential(x))


def excursion_visit_params(env: Environment, b: int, x: int) -> ExcursionLawParams:
    if b < 1 or x < 1 or x == b:
        raise BadOrdering("need b, x >= 1 and x != b")
    if x > b:
        v = env.potential_window(b, x - 1)
        log_s = _lse(v)
        beta = (1.0 - env.omega_at(x)) * math.exp(v[-1] - log_s)
        alpha = env.omega_at(b) * math.exp(v[0] - log_s)
    else:
        v = env.potential_window(x, b - 1)
        log_s = _lse(v)
        beta = env.omega_at(x) * math.exp(v[0] - log_s)
        alpha = (1.0 - env.omega_at(b)) * math.exp(v[-1] - log_s)
    return ExcursionLawParams(alpha, beta)


def excursion_visit_pmf(params: ExcursionLawParams, m: int) -> float:
    a, bt = params.alpha, params.beta
    if m < 0:
        return 0.0
    if m == 0:
        return 1.0 - a
    return a * (1.0 - bt) ** (m - 1) * bt


def excursion_visit_variance(params_or_env, b: Optional[int] = None, x: Optional[int] = None) -> float:
    """``alpha (2 - beta - alpha) / beta^2``; accepts params or ``(env, b, x)``."""
    p = params_or_env if isinstance(params_or_env, ExcursionLawParams) \
        else excursion_visit_params(params_or_env, b, x)
    return p.alpha * (2.0 - p.beta - p.alpha) / p.beta ** 2


def variance_envelope(env: Environment, b: int, x: int) -> float:
    """Ratio of the exact variance to the shape of its displayed upper bound.

    The bound reads ``Var <= c_1 exp(-(V(x)-V(b))) S`` with ``S`` the
    one-sided sum of ``exp(V(y) - V(x-1))`` (x > b) or ``exp(V(y) - V(x))``
    (x < b); the returned number is the implied value of ``c_1``.
    """
    var = excursion_visit_variance(env, b, x)
    if x > b:
        v = env.potential_window(b, x - 1)
        log_shape = -(env.potential(x) - v[0]) + _lse(v - v[-1])
    else:
        v = env.potential_window(x, b - 1)
        log_shape = -(v[0] - env.potential(b)) + _lse(v - v[0])
    return var / math.exp(log_shape)


def max_rise(v: np.ndarray) -> float:
    """``max_{i <= j} v[j] - v[i]`` in one pass."""
    lo = np.minimum.accumulate(v)
    return float(np.max(v - lo))


def log_golosov_bound(env: Environment, x: int) -> float:
    if x < 1:
        raise ValueError("x must be >= 1")
    v = env.potential_window(0, x - 1)
    return 2.0 * math.log(x) + max_rise(v)


def golosov_bound(env: Environment, x: int) -> float:
    """``x^2 exp(max_{0 <= i <= j < x} V(j) - V(i))`` (inf if it overflows)."""
    lg = log_golosov_bound(env, x)
    return math.exp(lg) if lg < 709.0 else math.inf


def expected_hitting_time(env: Environment, x: int) -> float:
    """``E T(x)`` from 0 via ``sum_{j<x} exp(V(j)) sum_{i<=j} mu(i)``."""
    if x < 1:
        raise ValueError("x must be >= 1")
    v = env.potential_window(0, x - 1)
    log_mu = np.empty(x)
    log_mu[0] = 0.0
    if x > 1:
        log_mu[1:] = np.logaddexp(-v[1:], -v[:-1])
    cum = np.logaddexp.accumulate(log_mu)
    return math.exp(_lse(v + cum))


def escape_parameter(env: Environment, b: int, i: int) -> float:
    """``p(b, i) = omega_b exp(V(b)) / sum_{y=b}^{i-1} exp(V(y))``."""
    if not 1 <= b < i:
        raise BadOrdering(f"need 1 <= b < i, got b={b}, i={i}")
    v = env.potential_window(b, i - 1)
    return env.omega_at(b) * math.exp(v[0] - _lse(v))


def escape_barrier(env: Environment, b: int, i: int) -> float:
    """``W(b, i) = max_{b <= y < i} V(y) - V(b)``."""
    v = env.potential_window(b, i - 1)
    return float(np.max(v) - v[0])


# ---------------------------------------------------------------- oracle


def _hit_probs(p: np.ndarray, h_left: float, h_right: float) -> np.ndarray:
    """Harmonic function on a window with fixed endpoint values.

    ``p`` holds the right-step probabilities of the interior sites.  Forward
    elimination writes ``h(y) = a_y h(y+1) + c_y``; the pivot
    ``1 - q_y a_{y-1}`` is formed as ``p_y + q_y (1 - a_{y-1})`` with the
    complement carried separately, so no step subtracts and tiny
    probabilities keep full relative accuracy.
    """
    n = p.size
    q = 1.0 - p
    a = np.empty(n)
    c = np.empty(n)
    abar_prev, c_prev = 1.0, h_left
    for y in range(n):
        d = p[y] + q[y] * abar_prev
        if not d > 0.0:
            raise Singular("zero pivot in harmonic elimination")
        a[y] = p[y] / d
        c[y] = q[y] * c_prev / d
        abar_prev = q[y] * abar_prev / d
        c_prev = c[y]
    h = np.empty(n + 2)
    h[0], h[-1] = h_left, h_right
    nxt = h_right
    for y in range(n - 1, -1, -1):
        nxt = a[y] * nxt + c[y]
        h[y + 1] = nxt
    return h


def solve_finite_chain(env: Environment, left: int, right: int, mode: Mode) -> OracleResult:
    """Exact finite-window solve.

    ``HitProbs(target)``: both endpoints absorb; returns ``P_y(hit target
    first)`` for every site of the window.

    ``OccupationBefore(absorber, start)``: expected visits to each site
    before absorption at ``absorber``.  The other endpoint reflects when it
    is site 0 (the forced step 0 -> 1) and absorbs otherwise.
    """
    if not 0 <= left < right:
        raise BadOrdering(f"need 0 <= left < right, got [{left}, {right}]")
    if right - left + 1 > MAX_WINDOW:
        raise WindowTooLarge(f"window of {right - left + 1} sites exceeds {MAX_WINDOW}")
    om = _omega_window(env, left, right)

    if isinstance(mode, HitProbs):
        if mode.target not in (left, right):
            raise BadOrdering("target must be a window endpoint")
        p = om[1:-1]
        hl, hr = (1.0, 0.0) if mode.target == left else (0.0, 1.0)
        h = _hit_probs(p, hl, hr)
        inner = h[1:-1]
        res = inner - p * h[2:] - (1.0 - p) * h[:-2]
        resid = float(np.max(np.abs(res))) if res.size else 0.0
        return OracleResult(left, right, mode, h, None, None, resid)

    if not isinstance(mode, OccupationBefore):
        raise TypeError(f"unknown mode {mode!r}")
    if mode.absorber not in (left, right):
        raise BadOrdering("absorber must be a window endpoint")
    if not left <= mode.start <= right:
        raise BadOrdering("start outside window")
    sites = np.arange(left, right + 1)
    absorbing = np.zeros(sites.size, dtype=bool)
    absorbing[mode.absorber - left] = True
    other = right if mode.absorber == left else left
    if other != 0:
        absorbing[other - left] = True
    occ = np.zeros(sites.size)
    if absorbing[mode.start - left]:
        return OracleResult(left, right, mode, None, occ, 0.0, 0.0)
    idx = np.flatnonzero(~absorbing)
    lo, hi = idx[0], idx[-1]
    n = hi - lo + 1
    pr = om[lo:hi + 1]
    ql = 1.0 - pr
    # g (I - Q) = e_start  <=>  (I - Q)^T g = e_start
    # column y of (I - Q): -Q(y-1, y) = -p_{y-1}, -Q(y+1, y) = -q_{y+1}
    ab = np.zeros((3, n))
    ab[1] = 1.0
    ab[0, 1:] = -ql[1:]      # superdiagonal of the transpose: -Q(y+1, y)
    ab[2, :-1] = -pr[:-1]    # subdiagonal of the transpose: -Q(y-1, y)
    rhs = np.zeros(n)
    rhs[mode.start - left - lo] = 1.0
    try:
        g = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise Singular(str(exc)) from exc
    full = np.zeros(n + 2)
    full[1:-1] = g
    res = g - _inflow(full, pr, ql) - rhs
    resid = float(np.max(np.abs(res)) / max(1.0, float(np.max(np.abs(g)))))
    occ[lo:hi + 1] = g
    return OracleResult(left, right, mode, None, occ, float(np.sum(g)), resid)


def _inflow(full: np.ndarray, pr: np.ndarray, ql: np.ndarray) -> np.ndarray:
    """Inflow ``g(y-1) p_{y-1} + g(y+1) q_{y+1}`` for the padded vector ``full``."""
    n = pr.size
    inflow = np.zeros(n)
    inflow[1:] += full[1:n] * pr[:-1]
    inflow[:-1] += full[2:n + 1] * ql[1:]
    return inflow


def oracle_excursion_params(env: Environment, b: int, x: int) -> ExcursionLawParams:
    """``alpha`` and ``beta`` from window solves instead of the closed form."""
    if b < 1 or x < 1 or x == b:
        raise BadOrdering("need b, x >= 1 and x != b")
    wb, wx = env.omega_at(b), env.omega_at(x)
    if x > b:
        alpha = wb * solve_finite_chain(env, b, x, HitProbs(x)).at(b + 1)
        beta = (1.0 - wx) * solve_finite_chain(env, b, x, HitProbs(b)).at(x - 1)
    else:
        alpha = (1.0 - wb) * solve_finite_chain(env, x, b, HitProbs(x)).at(b - 1)
        beta = wx * solve_finite_chain(env, x, b, HitProbs(b)).at(x + 1)
    return ExcursionLawParams(alpha, beta)


def oracle_escape_parameter(env: Environment, b: int, i: int) -> float:
    """``omega_b P_{b+1}(T(i) < T(b))`` by window solve."""
    if not 1 <= b < i:
        raise BadOrdering(f"need 1 <= b < i, got b={b}, i={i}")
    return env.omega_at(b) * solve_finite_chain(env, b, i, HitProbs(i)).at(b + 1)
