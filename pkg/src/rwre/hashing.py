"""Stateless 64-bit mixing hash and the counter streams built on it.

Every random quantity in the package is derived from ``mix64``, the
SplitMix64 finalizer:

* environment site ``x`` of seed ``s``: ``mix64(mix64(s) ^ x)``
* walk replica ``r`` of walk seed ``w``: a SplitMix64 sequence whose initial
  state is ``stream_key(w, r) = mix64(mix64(w) ^ ((r + 1) * GOLDEN))``;
  draw ``j`` (1-based) is ``mix64(state0 + j * GOLDEN)``.

Uniforms take the top 53 bits: ``(h >> 11) * 2**-53`` in ``[0, 1)``.
"""

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_INT = 0x9E3779B97F4A7C15
_M1_INT = 0xBF58476D1CE4E5B9
_M2_INT = 0x94D049BB133111EB

GOLDEN = np.uint64(GOLDEN_INT)
_M1 = np.uint64(_M1_INT)
_M2 = np.uint64(_M2_INT)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
INV53 = 1.0 / 9007199254740992.0  # 2**-53
ONE53 = np.uint64(1 << 53)


@nb.njit(nb.uint64(nb.uint64), cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, inline="always")
def to_unit(h):
    return np.float64(h >> _S11) * INV53


@nb.njit(nb.uint64(nb.uint64, nb.uint64), cache=True)
def stream_key(seed, index):
    return mix64(mix64(seed) ^ ((index + np.uint64(1)) * GOLDEN))


def mix64_py(z: int) -> int:
    """Pure-Python ``mix64``; used to cross-check the compiled version."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1_INT) & MASK64
    z = ((z ^ (z >> 27)) * _M2_INT) & MASK64
    return z ^ (z >> 31)


def as_u64(value: int) -> np.uint64:
    if not 0 <= int(value) <= MASK64:
        raise ValueError(f"seed {value} is not a 64-bit unsigned integer")
    return np.uint64(int(value))


def derive_seeds(master: int, label: str, count: int) -> list[int]:
    """Disjoint seed block for a study: ``count`` seeds keyed by (master, label)."""
    salt = 0
    for ch in label.encode():
        salt = mix64_py(salt ^ ch)
    base = mix64_py(int(master) ^ salt)
    return [mix64_py(base ^ mix64_py(i + 1)) for i in range(count)]
