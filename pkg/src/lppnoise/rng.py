"""Deterministic keyed randomness.

Every random quantity in this package is a pure function of a structured
key: ``(master_seed, site, index, stream_tag)``.  There is no generator
state.  Two evaluations of the same key give the same value, values for
distinct keys are statistically independent, and whole fields can be
regenerated lazily from their keys instead of being stored.

The key is hashed into 64 bits with a splitmix64-style chain (one
finalizer round per absorbed field), which is a counter-based PRF of
adequate statistical quality for Monte Carlo work.  Uniform variates
keep the full 53-bit double resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "Stream",
    "RngKey",
    "uniform01",
    "bernoulli",
    "exponential1",
    "uniform_array",
    "exponential_array",
    "geometric_array",
    "derive_seed",
]

_U64 = np.uint64
_MASK64 = (1 << 64) - 1

# Odd constants for field absorption (splitmix64 increment and two
# arbitrary large odd multipliers).
_GOLDEN = 0x9E3779B97F4A7C15
_MUL_A = 0xD6E8FEB86659FD93
_MUL_B = 0xA3AAC6CB67C5E0ED


class Stream(IntEnum):
    """Independent named randomness streams.

    BIT_X            base Bernoulli bits encoding a geometric weight
    BIT_XPRIME       replacement bits used when a clock has rung
    CLOCK_U          per-bit exponential resampling clocks
    SITE_CLOCK       per-site exponential resampling clocks
    BOUNDARY_V       boundary weights of stationary fields
    BOUNDARY_ARRIVAL arrival variables of the two-parameter queue coupling
    REPLICA          per-replica sub-seed derivation
    GENERIC          everything else (walks, synthetic data, bootstrap seeds)
    """

    BIT_X = 1
    BIT_XPRIME = 2
    CLOCK_U = 3
    SITE_CLOCK = 4
    BOUNDARY_V = 5
    BOUNDARY_ARRIVAL = 6
    REPLICA = 7
    GENERIC = 8


@dataclass(frozen=True)
class RngKey:
    """Structured key addressing one random variate.

    ``site`` is an absolute lattice coordinate (may be negative); keys
    with no natural site use ``site=(0, 0)`` and a distinguishing tag.
    """

    master_seed: int
    site: tuple[int, int]
    index: int
    stream_tag: Stream


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps mod 2**64.
    z = z ^ (z >> _U64(30))
    z = z * _U64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> _U64(27))
    z = z * _U64(0x94D049BB133111EB)
    z = z ^ (z >> _U64(31))
    return z


def _as_u64(x) -> np.ndarray:
    # Accept signed ints/arrays; two's complement reinterpretation.
    return np.asarray(x, dtype=np.int64).astype(np.uint64)


def _hash_key(seed: int, tag: int, sx, sy, index) -> np.ndarray:
    """Vectorized keyed hash; broadcasts sx, sy, index."""
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        h = _mix(_U64((seed + _GOLDEN * (tag + 1)) & _MASK64))
        h = _mix(h ^ (_as_u64(sx) * _U64(_MUL_A)))
        h = _mix(h ^ (_as_u64(sy) * _U64(_MUL_B)))
        h = _mix(h ^ (_as_u64(index) * _U64(_GOLDEN)))
    return h


def uniform_array(seed: int, tag: Stream, sx, sy, index) -> np.ndarray:
    """Uniform[0, 1) variates for the broadcast key arrays."""
    h = _hash_key(int(seed), int(tag), sx, sy, index)
    return (h >> _U64(11)) * (2.0 ** -53)


def exponential_array(seed: int, tag: Stream, sx, sy, index) -> np.ndarray:
    """Exp(1) variates, ``-log(1 - U)``."""
    u = uniform_array(seed, tag, sx, sy, index)
    return -np.log1p(-u)


def geometric_array(seed: int, tag: Stream, sx, sy, index, p: float) -> np.ndarray:
    """Geom(p) variates on {0, 1, ...} via inversion, P(k) = p(1-p)^k."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    u = uniform_array(seed, tag, sx, sy, index)
    return np.floor(np.log1p(-u) / np.log1p(-p)).astype(np.int64)


def uniform01(key: RngKey) -> float:
    """Uniform[0, 1) value of a single key (53-bit resolution)."""
    return float(uniform_array(key.master_seed, key.stream_tag,
                               key.site[0], key.site[1], key.index))


def bernoulli(key: RngKey, p: float) -> bool:
    """Bernoulli(p) value of a single key."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return uniform01(key) < p


def exponential1(key: RngKey) -> float:
    """Exp(1) value of a single key; 0.0 exactly when the uniform is 0."""
    return float(-np.log1p(-uniform01(key)))


def derive_seed(seed: int, tag: Stream, index: int) -> int:
    """Derive an independent 64-bit sub-seed (replicas, sub-fields)."""
    return int(_hash_key(int(seed), int(tag), 0, 0, int(index)))
