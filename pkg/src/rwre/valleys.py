"""Valley decomposition of the potential.

A single forward pass over ``V`` emits, in order, ``eta_0, b_0`` and then
for each ``k >= 1`` the stopping times and extremes

    theta_k   first i > eta_{k-1} with V(i) <= V(b_{k-1})
    H_{k-1}^+ max V on [eta_{k-1}, theta_k] minus V(b_{k-1})
    m_k       first i > eta_{k-1} in [eta_{k-1}, theta_k] at the max level of V there;
              eta_{k-1} itself when the max is attained only at eta_{k-1}
    eta_k     first i > theta_k with V(i) - min_{j<=i} V(j) >= H_{k-1}^+
    b_k       last argmin of V on [theta_k, eta_k]
    H_k^-     V(m_k) - V(b_k)

Valley ``k`` occupies ``[m_k, m_{k+1})``; valley 0 is ``[0, m_1)``.  The
effective width ``Lambda_k = sum_{[m_k, m_{k+1})} exp(-(V(i) - V(b_k)))``
is accumulated during the same pass as a streaming log-sum-exp split into a
committed part and a part pending on the running argmax, so nothing but
O(1) state per valley is kept.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Optional

import numba as nb
import numpy as np

from .environment import Environment, neumaier_add, site_log_rho
from .errors import BeyondHorizon, HorizonTooSmall, IncompleteValley, ScanCapExceeded

DEFAULT_K0 = 5.0
SCAN_CAP = 10**10
_MAX_RECORDS = 512

# record columns (float64 table)
_M, _THETA, _B, _ETA, _VM, _VB, _HM, _HP, _LOGS, _VLO = range(10)
_NCOL = 10


@dataclass(frozen=True)
class Valley:
    k: int
    m: int
    theta: int
    b: Optional[int]
    eta: Optional[int]
    h_minus: Optional[float]
    h_plus: Optional[float]
    h: Optional[float]
    lam: Optional[float]
    complete: bool
    v_m: float = math.nan
    v_b: Optional[float] = None
    v_low: Optional[float] = None  # min of V over [m_k, m_{k+1})

    def row(self) -> dict:
        return {
            "k": self.k, "m": self.m, "theta": self.theta, "b": self.b,
            "eta": self.eta, "h_minus": self.h_minus, "h_plus": self.h_plus,
            "h": self.h, "lambda": self.lam, "complete": self.complete,
        }


@dataclass(frozen=True)
class ValleyDecomposition:
    k0: float
    valleys: tuple
    horizon: int
    resolved: int  # sites < resolved have a determined valley

    @property
    def complete(self) -> list:
        return [v for v in self.valleys if v.complete]

    @property
    def starts(self) -> list:
        return [v.m for v in self.valleys]

    def __len__(self) -> int:
        return len(self.valleys)

    def __getitem__(self, k: int) -> Valley:
        return self.valleys[k]

    def boundary(self, k: int) -> int:
        """``m_{k+1}``, the exclusive end of valley k."""
        if k + 1 < len(self.valleys) and self.valleys[k].complete:
            return self.valleys[k + 1].m
        raise IncompleteValley(f"valley {k} is not complete within horizon {self.horizon}")

    def restricted(self, horizon: int) -> "ValleyDecomposition":
        """Records whose completion was observed within ``horizon``."""
        keep = []
        for v in self.valleys:
            if v.complete and v.k + 1 < len(self.valleys) and self.valleys[v.k + 1].theta <= horizon:
                keep.append(v)
        return replace(self, valleys=tuple(keep), horizon=horizon)


@dataclass(frozen=True)
class DepthStats:
    max_rise_to_bottom: float       # max_{m_k <= y <= z < b_k} V(z) - V(y)
    max_fall_after_bottom: float    # max_{b_k <= y <= z < m_{k+1}} V(y) - V(z)
    min_gap_after_eta: float        # min_{[eta_k, m_{k+1})} V - V(b_k)
    max_fall_before_eta: float      # max_{b_k <= y <= z < eta_k} V(y) - V(z)


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True, inline="always")
def _lse_add(m, s, x):
    if x <= m:
        return m, s + math.exp(x - m)
    return x, s * math.exp(m - x) + 1.0


@nb.njit(cache=True, inline="always")
def _lse_merge(m1, s1, m2, s2):
    if s2 == 0.0:
        return m1, s1
    if s1 == 0.0:
        return m2, s2
    if m1 >= m2:
        return m1, s1 + s2 * math.exp(m2 - m1)
    return m2, s2 + s1 * math.exp(m1 - m2)


@nb.njit(cache=True)
def _scan(family, half_width, key, prefix, k0, horizon, stop_k, rec, widths):
    """Streaming decomposition.  Returns (n_records, phase, last_site, aux_site).

    phase 0: eta_0 not reached; 1: seeking theta; 2: seeking eta.
    aux_site is the running first-argmax in phase 1 (membership is resolved
    strictly below it), otherwise last_site + 1.  With ``widths`` false the
    log-sum-exp accumulators are skipped and the width column stays nan.
    """
    inf = np.inf
    s = 0.0
    c = 0.0
    v = 0.0
    phase = 0
    n = 0  # records started
    runmin = inf
    argmin = 0
    runmax = -inf
    argmax = 0
    eta_site = -1
    cm, cs = -inf, 0.0   # committed lse of -V
    pm, ps = -inf, 0.0   # pending lse of -V (from running argmax)
    clo, plo = inf, inf  # committed / pending min of V
    threshold = k0
    vb_prev = 0.0
    i = 0
    while True:
        if i > 0:
            s, c = neumaier_add(s, c, site_log_rho(family, half_width, key, prefix, i))
            v = s + c
        if phase == 0:
            if i > 0 and v - runmin >= threshold:
                rec[0, 0] = 0.0
                rec[0, 1] = 0.0
                rec[0, 2] = argmin
                rec[0, 3] = i
                rec[0, 4] = 0.0
                rec[0, 5] = runmin
                rec[0, 6] = np.nan
                n = 1
                vb_prev = runmin
                phase = 1
                runmax = v
                argmax = i
                eta_site = i
                pm, ps = -v, 1.0
                plo = v
            else:
                if v <= runmin:
                    runmin = v
                    argmin = i
                if widths:
                    cm, cs = _lse_add(cm, cs, -v)
                if v < clo:
                    clo = v
        elif phase == 1:
            if v <= vb_prev:
                j = n - 1
                rec[j, 7] = runmax - vb_prev
                rec[j, 8] = cm + math.log(cs) if widths else np.nan
                rec[j, 9] = clo
                if n >= rec.shape[0]:
                    return n, phase, i, argmax
                rec[n, 0] = argmax
                rec[n, 1] = i
                rec[n, 4] = runmax
                threshold = runmax - vb_prev
                n += 1
                cm, cs = pm, ps
                if widths:
                    cm, cs = _lse_add(cm, cs, -v)
                clo = min(plo, v)
                pm, ps = -inf, 0.0
                plo = inf
                phase = 2
                runmin = v
                argmin = i
                if j == stop_k:
                    return n, phase, i, i + 1
            elif v > runmax or (v == runmax and argmax == eta_site):
                # m_k is the first site strictly after eta_{k-1} at the max level
                if widths:
                    cm, cs = _lse_merge(cm, cs, pm, ps)
                if plo < clo:
                    clo = plo
                pm, ps = -v, 1.0
                plo = v
                runmax = v
                argmax = i
            else:
                if widths:
                    pm, ps = _lse_add(pm, ps, -v)
                if v < plo:
                    plo = v
        else:
            if v - runmin >= threshold:
                j = n - 1
                rec[j, 2] = argmin
                rec[j, 3] = i
                rec[j, 5] = runmin
                rec[j, 6] = rec[j, 4] - runmin
                vb_prev = runmin
                phase = 1
                runmax = v
                argmax = i
                eta_site = i
                pm, ps = -v, 1.0
                plo = v
            else:
                if v <= runmin:
                    runmin = v
                    argmin = i
                if widths:
                    cm, cs = _lse_add(cm, cs, -v)
                if v < clo:
                    clo = v
        if i >= horizon:
            break
        i += 1
    # partial bookkeeping for the open record
    if phase == 1:
        j = n - 1
        rec[j, 7] = runmax - vb_prev  # lower bound only
        rec[j, 8] = np.nan
        rec[j, 9] = min(clo, plo)
        return n, phase, i, argmax
    if phase == 2:
        j = n - 1
        rec[j, 2] = argmin
        rec[j, 5] = runmin
        return n, phase, i, i + 1
    rec[0, 2] = argmin
    rec[0, 5] = runmin
    return n, phase, i, 0


@nb.njit(cache=True)
def _rho_valley(family, half_width, key, prefix, rho, cap):
    """Returns (b, eta, log_width); eta = -1 if cap reached."""
    s = 0.0
    c = 0.0
    runmin = 0.0
    argmin = 0
    m, sm = 0.0, 1.0  # lse of -V over [0, i); V(0) = 0
    for i in range(1, cap + 1):
        s, c = neumaier_add(s, c, site_log_rho(family, half_width, key, prefix, i))
        v = s + c
        if v - runmin >= rho:
            return argmin, i, m + math.log(sm) + runmin
        if v <= runmin:
            runmin = v
            argmin = i
        m, sm = _lse_add(m, sm, -v)
    return argmin, -1, np.nan


@nb.njit(cache=True)
def _window_depths(family, half_width, key, prefix, start, v_start, stop, b, eta, v_b):
    """Depth statistics over [start, stop) with V(start) = v_start given.

    The window is regenerated from the site stream; the returned V values
    therefore carry plain (not compensated) summation from v_start.
    """
    inf = np.inf
    rise = 0.0
    lo = inf
    fall_all = 0.0
    fall_eta = 0.0
    hi_all = -inf
    hi_eta = -inf
    gap = inf
    v = v_start
    for x in range(start, stop):
        if x > start:
            v += site_log_rho(family, half_width, key, prefix, x)
        if x < b:
            if v < lo:
                lo = v
            if v - lo > rise:
                rise = v - lo
        else:
            if v > hi_all:
                hi_all = v
            if hi_all - v > fall_all:
                fall_all = hi_all - v
            if x < eta:
                if v > hi_eta:
                    hi_eta = v
                if hi_eta - v > fall_eta:
                    fall_eta = hi_eta - v
            else:
                if v - v_b < gap:
                    gap = v - v_b
    return rise, fall_all, gap, fall_eta


# ---------------------------------------------------------------- API


def _build(k0, rec, n, phase, last, aux) -> ValleyDecomposition:
    valleys = []
    for j in range(n):
        r = rec[j]
        complete = j < n - 1
        k = j
        known = complete or phase == 1
        b = int(r[_B]) if known else None
        eta = int(r[_ETA]) if known else None
        h_minus = None if k == 0 or (eta is None) else float(r[_HM])
        h_plus = float(r[_HP]) if complete else None
        h = None
        if complete and h_minus is not None:
            h = min(h_minus, h_plus)
        v_b = float(r[_VB]) if b is not None else None
        lam = None
        v_low = None
        if complete:
            lam = math.exp(r[_LOGS] + r[_VB]) if not math.isnan(r[_LOGS]) else None
            v_low = float(r[_VLO])
        valleys.append(Valley(
            k=k, m=int(r[_M]), theta=int(r[_THETA]), b=b, eta=eta,
            h_minus=h_minus, h_plus=h_plus, h=h, lam=lam, complete=complete,
            v_m=float(r[_VM]), v_b=v_b, v_low=v_low))
    return ValleyDecomposition(k0=float(k0), valleys=tuple(valleys), horizon=int(last), resolved=int(aux))


def decompose(env: Environment, k0: float = DEFAULT_K0, horizon: int = 10**6,
              stop_after: Optional[int] = None, widths: bool = True) -> ValleyDecomposition:
    """Valley decomposition of ``env`` scanned over sites ``0..horizon``.

    ``stop_after=k`` ends the scan as soon as valley ``k`` is complete
    (``theta_{k+1}`` observed), which bounds the work for adaptive callers.
    ``widths=False`` skips the effective widths (``lam`` is None), which
    makes long scans several times faster.
    """
    if not k0 > 0:
        raise ValueError("k0 must be positive")
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rec = np.full((_MAX_RECORDS, _NCOL), np.nan)
    stop_k = -1 if stop_after is None else int(stop_after)
    n, phase, last, aux = _scan(*env.kernel_args, float(k0), horizon, stop_k, rec, bool(widths))
    if phase == 0:
        raise HorizonTooSmall(f"eta_0 not reached within horizon {horizon}")
    return _build(k0, rec, n, phase, last, aux)


def effective_width(env: Environment, dec: ValleyDecomposition, k: int) -> float:
    """``Lambda_k``; valley 0 uses the synthetic window ``[0, m_1)``."""
    v = dec.valleys[k] if k < len(dec.valleys) else None
    if v is None or not v.complete:
        raise IncompleteValley(f"valley {k} has no observed right end")
    return v.lam


def effective_width_direct(env: Environment, dec: ValleyDecomposition, k: int) -> float:
    """``Lambda_k`` recomputed from an explicit potential window (O(width) memory)."""
    from scipy.special import logsumexp
    v = dec.valleys[k]
    end = dec.boundary(k)
    vals = env.potential_window(v.m, end - 1)
    return float(math.exp(logsumexp(-(vals - v.v_b))))


def valley_of_site(dec: ValleyDecomposition, x: int) -> int:
    if x < 0:
        raise ValueError("sites are nonnegative")
    if x > dec.horizon or x >= dec.resolved:
        raise BeyondHorizon(f"site {x} is not resolved by this decomposition "
                            f"(horizon {dec.horizon}, resolved below {dec.resolved})")
    return bisect.bisect_right(dec.starts, x) - 1


def valley_index_array(dec: ValleyDecomposition, upto: int) -> np.ndarray:
    """Valley index of every site in ``0..upto``."""
    if upto > dec.horizon or upto >= dec.resolved:
        raise BeyondHorizon(f"site {upto} is not resolved by this decomposition")
    starts = np.asarray(dec.starts, dtype=np.int64)
    return np.searchsorted(starts, np.arange(upto + 1), side="right") - 1


def depth_diagnostics(env: Environment, dec: ValleyDecomposition, k: int) -> DepthStats:
    v = dec.valleys[k]
    end = dec.boundary(k)
    rise, fall_all, gap, fall_eta = _window_depths(
        *env.kernel_args, v.m, v.v_m if k > 0 else 0.0, end, v.b, v.eta, v.v_b)
    return DepthStats(float(rise), float(fall_all), float(gap), float(fall_eta))


def rho_valley(env: Environment, rho: float, cap: int = SCAN_CAP):
    """First-passage valley of depth ``rho`` from site 0.

    Returns ``(b, eta, width)`` with ``width = sum_{i<eta} exp(-(V(i) - V(b)))``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    b, eta, logw = _rho_valley(*env.kernel_args, float(rho), int(cap))
    if eta < 0:
        raise ScanCapExceeded(f"rise of {rho} not reached within {cap} sites")
    return int(b), int(eta), float(math.exp(logw))


def decompose_covering(env: Environment, k0: float, site: int,
                       horizon: Optional[int] = None) -> ValleyDecomposition:
    """Decomposition whose resolved range contains ``site`` (horizon grown x4 as needed)."""
    h = max(int(horizon or 0), 4 * site + 1024)
    while True:
        dec = decompose(env, k0, h)
        if site < dec.resolved and site <= dec.horizon:
            return dec
        if h >= SCAN_CAP:
            raise ScanCapExceeded(f"site {site} unresolved within {SCAN_CAP} sites")
        h = min(4 * h, SCAN_CAP)
