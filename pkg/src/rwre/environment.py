"""I.i.d. environments on the positive integers and their potential.

An environment is an unbounded stream of right-step probabilities
``omega_x`` (x >= 1).  Site values are never stored: each one is a pure
function of ``(seed, x)``::

    h       = mix64(mix64(seed) ^ x)
    u       = (h >> 11) * 2**-53
    log_rho = inverse CDF of the family at u
    omega   = 1 / (1 + exp(log_rho))

The potential ``V(x) = sum_{i<=x} log_rho_i`` is accumulated with
Neumaier compensated summation, in the same operation order everywhere
(the valley scan and the walk kernels reuse ``neumaier_add``), so every
consumer sees bit-identical potentials.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Union

import numba as nb
import numpy as np

from .errors import InvalidSpec
from .hashing import as_u64, mix64, to_unit

TWO_POINT = 0
UNIFORM = 1

_CACHE_MAX = 1 << 22
LOG_OVERFLOW = 700.0
_S63 = np.uint64(63)


@dataclass(frozen=True)
class TwoPoint:
    """``log rho = -a`` or ``+a`` with probability 1/2 each."""

    a: float = 1.0

    name = "twopoint"

    @property
    def delta(self) -> float:
        return 1.0 / (1.0 + math.exp(self.a))

    @property
    def half_width(self) -> float:
        return float(self.a)


@dataclass(frozen=True)
class UniformSymmetric:
    """``log rho`` uniform on ``[-A, A]`` with ``A = log((1 - delta) / delta)``."""

    delta: float = 0.2

    name = "uniform"

    @property
    def half_width(self) -> float:
        return math.log((1.0 - self.delta) / self.delta)


Family = Union[TwoPoint, UniformSymmetric]


@dataclass(frozen=True)
class EnvironmentSpec:
    family: Family = field(default_factory=TwoPoint)
    seed: int = 0
    length_hint: int = 0

    def validate(self) -> None:
        fam = self.family
        if isinstance(fam, TwoPoint):
            if not (math.isfinite(fam.a) and fam.a > 0):
                raise InvalidSpec(f"TwoPoint requires a > 0, got {fam.a!r}")
            if fam.a > 700:
                raise InvalidSpec(f"TwoPoint a={fam.a!r} overflows exp")
        elif isinstance(fam, UniformSymmetric):
            if not (0.0 < fam.delta < 0.5):
                raise InvalidSpec(f"UniformSymmetric requires delta in (0, 1/2), got {fam.delta!r}")
        else:
            raise InvalidSpec(f"unknown environment family {fam!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpec(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.length_hint < 0:
            raise InvalidSpec("length_hint must be nonnegative")

    def with_seed(self, seed: int) -> "EnvironmentSpec":
        return EnvironmentSpec(self.family, int(seed), self.length_hint)

    def to_dict(self) -> dict:
        fam = self.family
        d = {"family": fam.name, "seed": int(self.seed)}
        if isinstance(fam, TwoPoint):
            d["a"] = float(fam.a)
        else:
            d["delta"] = float(fam.delta)
        return d

    @classmethod
    def from_dict(cls, d: dict, seed: int = None) -> "EnvironmentSpec":
        """Inverse of :meth:`to_dict`; ``seed`` overrides the stored one."""
        name = d.get("family", "twopoint")
        if name == TwoPoint.name:
            fam = TwoPoint(float(d.get("a", 1.0)))
        elif name == UniformSymmetric.name:
            fam = UniformSymmetric(float(d.get("delta", 0.2)))
        else:
            raise InvalidSpec(f"unknown environment family {name!r}")
        spec = cls(fam, int(d.get("seed", 0) if seed is None else seed))
        spec.validate()
        return spec


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True, inline="always")
def site_log_rho(family, half_width, key, prefix, x):
    """log rho at site ``x >= 1``; sites covered by ``prefix`` are forced."""
    if x <= prefix.size:
        return prefix[x - 1]
    h = mix64(key ^ np.uint64(x))
    if family == TWO_POINT:
        # top bit set <=> u >= 1/2; branch-free on purpose
        return half_width * (2.0 * np.float64(h >> _S63) - 1.0)
    return -half_width + 2.0 * half_width * to_unit(h)


@nb.njit(cache=True, inline="always")
def neumaier_add(s, c, d):
    t = s + d
    if abs(s) >= abs(d):
        c += (s - t) + d
    else:
        c += (d - t) + s
    return t, c


@nb.njit(cache=True)
def _fill_log_rho(family, half_width, key, prefix, start, out):
    for j in range(out.size):
        out[j] = site_log_rho(family, half_width, key, prefix, start + j)


@nb.njit(cache=True)
def _fill_omega(family, half_width, key, prefix, start, out):
    for j in range(out.size):
        out[j] = 1.0 / (1.0 + np.exp(site_log_rho(family, half_width, key, prefix, start + j)))


@nb.njit(cache=True)
def _extend_potential(family, half_width, key, prefix, s, c, start, out):
    """Write V(start..start+len(out)-1) continuing from compensated state (s, c) at start-1."""
    for j in range(out.size):
        s, c = neumaier_add(s, c, site_log_rho(family, half_width, key, prefix, start + j))
        out[j] = s + c
    return s, c


@nb.njit(cache=True)
def _advance_potential(family, half_width, key, prefix, s, c, start, stop):
    for x in range(start, stop + 1):
        s, c = neumaier_add(s, c, site_log_rho(family, half_width, key, prefix, x))
    return s, c


# ---------------------------------------------------------------- environment


class Environment:
    """Quenched environment: immutable site stream plus a synchronized prefix cache."""

    def __init__(self, spec: EnvironmentSpec, prefix=None):
        spec.validate()
        self.spec = spec
        fam = spec.family
        self.family_code = TWO_POINT if isinstance(fam, TwoPoint) else UNIFORM
        self.half_width = float(fam.half_width)
        self.delta = 1.0 / (1.0 + math.exp(self.half_width))
        # C = |log delta - log(1 - delta)| equals the half-width of log rho
        self.increment_bound = self.half_width
        self.key = np.uint64(mix64(as_u64(spec.seed)))
        pre = np.asarray([] if prefix is None else prefix, dtype=np.float64)
        if pre.ndim != 1 or not np.all(np.isfinite(pre)):
            raise InvalidSpec("forced prefix must be a finite 1-d sequence")
        if pre.size and np.max(np.abs(pre)) > self.increment_bound + 1e-12:
            raise InvalidSpec("forced increments exceed the family's bound C")
        pre.setflags(write=False)
        self.prefix = pre
        self._lock = threading.Lock()
        self._v = np.zeros(1)
        self._s = 0.0
        self._c = 0.0

    def __repr__(self) -> str:
        extra = f", forced_prefix={self.prefix.size}" if self.prefix.size else ""
        return f"Environment({self.spec!r}{extra})"

    @property
    def kernel_args(self):
        return self.family_code, self.half_width, self.key, self.prefix

    # --- site queries
    def log_rho(self, x: int) -> float:
        if x < 1:
            raise ValueError("log_rho is defined for sites x >= 1")
        out = np.empty(1)
        _fill_log_rho(*self.kernel_args, int(x), out)
        return float(out[0])

    def omega_at(self, x: int) -> float:
        return float(self.omega_block(x, x + 1)[0])

    def log_rho_block(self, start: int, stop: int) -> np.ndarray:
        """log rho for sites ``start..stop-1`` (start >= 1)."""
        if start < 1 or stop < start:
            raise ValueError("need 1 <= start <= stop")
        out = np.empty(stop - start)
        _fill_log_rho(*self.kernel_args, int(start), out)
        return out

    def omega_block(self, start: int, stop: int) -> np.ndarray:
        """omega for sites ``start..stop-1`` (start >= 1)."""
        if start < 1 or stop < start:
            raise ValueError("need 1 <= start <= stop")
        out = np.empty(stop - start)
        _fill_omega(*self.kernel_args, int(start), out)
        return out

    # --- potential
    def potential_prefix(self, n: int) -> np.ndarray:
        """Array ``V[0..n]`` (read-only view when served from the cache)."""
        n = int(n)
        if n < 0:
            raise ValueError("n must be nonnegative")
        with self._lock:
            have = self._v.size - 1
            if n > have and n <= _CACHE_MAX:
                grow = min(max(n, 2 * have, 1024), _CACHE_MAX)
                ext = np.empty(grow - have)
                self._s, self._c = _extend_potential(
                    *self.kernel_args, self._s, self._c, have + 1, ext)
                self._v = np.concatenate([self._v, ext])
                self._v.setflags(write=False)
            if n <= self._v.size - 1:
                return self._v[: n + 1]
            v, s, c = self._v, self._s, self._c
        ext = np.empty(n - (v.size - 1))
        _extend_potential(*self.kernel_args, s, c, v.size, ext)
        return np.concatenate([v, ext])

    def _state_after(self, x: int):
        """Compensated summation state (s, c) once sites 1..x are added."""
        self.potential_prefix(min(x, _CACHE_MAX))
        with self._lock:
            have, s, c = self._v.size - 1, self._s, self._c
        if x >= have:
            return _advance_potential(*self.kernel_args, s, c, have + 1, x)
        return _advance_potential(*self.kernel_args, 0.0, 0.0, 1, x)

    def potential(self, x: int) -> float:
        x = int(x)
        if x < 0:
            raise ValueError("potential is defined for x >= 0")
        if x <= _CACHE_MAX:
            return float(self.potential_prefix(x)[x])
        s, c = self._state_after(x)
        return s + c

    def potential_window(self, start: int, stop: int) -> np.ndarray:
        """V on ``start..stop`` inclusive."""
        if not 0 <= start <= stop:
            raise ValueError("need 0 <= start <= stop")
        if stop <= _CACHE_MAX:
            return np.array(self.potential_prefix(stop)[start:])
        s, c = self._state_after(start)
        out = np.empty(stop - start + 1)
        out[0] = s + c
        _extend_potential(*self.kernel_args, s, c, start + 1, out[1:])
        return out

    # --- electrical network
    def log_conductance(self, x: int) -> float:
        return -self.potential(x)

    def conductance(self, x: int) -> float:
        lc = self.log_conductance(x)
        if abs(lc) > LOG_OVERFLOW:
            raise OverflowError("|V(x)| > 700: use log_conductance")
        return math.exp(lc)

    def log_reversible_measure(self, x: int) -> float:
        if x == 0:
            return 0.0
        v = self.potential_prefix(x)[x - 1: x + 1] if x <= _CACHE_MAX else \
            np.array([self.potential(x - 1), self.potential(x)])
        return float(np.logaddexp(-v[1], -v[0]))

    def reversible_measure(self, x: int) -> float:
        lm = self.log_reversible_measure(x)
        if abs(lm) > LOG_OVERFLOW:
            raise OverflowError("measure outside float range: use log_reversible_measure")
        return math.exp(lm)


def make_environment(spec: EnvironmentSpec, prefix=None) -> Environment:
    """Build an environment; ``prefix`` forces log-rho increments on sites 1..len(prefix)."""
    return Environment(spec, prefix)


def omega_at(env: Environment, x: int) -> float:
    return env.omega_at(x)


def log_rho(env: Environment, x: int) -> float:
    return env.log_rho(x)


def potential(env: Environment, x: int) -> float:
    return env.potential(x)


def conductance(env: Environment, x: int) -> float:
    return env.conductance(x)


def log_conductance(env: Environment, x: int) -> float:
    return env.log_conductance(x)


def reversible_measure(env: Environment, x: int) -> float:
    return env.reversible_measure(x)


def log_reversible_measure(env: Environment, x: int) -> float:
    return env.log_reversible_measure(x)
