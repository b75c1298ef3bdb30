"""Counter-based Gaussian stream used by every noise consumer.

Each draw is a pure function of ``(key, counter)``; there is no generator
state, so any cell of any replica can be produced in any order, on any
thread, and comes out bit-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numba import njit, uint64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53


@njit(uint64(uint64), cache=True, inline="always")
def mix64(x):
    x = x ^ (x >> uint64(30))
    x = x * _M1
    x = x ^ (x >> uint64(27))
    x = x * _M2
    return x ^ (x >> uint64(31))


@njit(cache=True, inline="always")
def uniform_open(key, counter):
    """Uniform on the open interval (0, 1) for one (key, counter) pair."""
    k = uint64(key)
    h = mix64(mix64(k ^ (uint64(counter) * _GOLDEN)) + k)
    return (float(h >> uint64(11)) + 0.5) * _TWO_M53


@njit(cache=True, inline="always")
def ndtri(p):
    # Wichura, AS241 (PPND16): relative accuracy about 1e-16.
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                    + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                  + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                  + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True, inline="always")
def normal_at(key, counter):
    return ndtri(uniform_open(key, counter))


@njit(cache=True)
def fill_normals(key, start, out):
    """Write the standard normals for counters start, start+1, ... into ``out``."""
    flat = out.ravel()
    for i in range(flat.size):
        flat[i] = normal_at(key, uint64(start + i))


def _digest64(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def replica_key(seed: int, replica_id: int) -> np.uint64:
    """Stream key for one replica; distinct (seed, replica) pairs never share a stream."""
    return np.uint64(_digest64("replica", int(seed), int(replica_id)))


def derive_seed(master_seed: int, scope: str) -> int:
    """Scope a master seed, e.g. by experiment name, so streams are never reused."""
    return _digest64("scope", int(master_seed), scope) >> 1
