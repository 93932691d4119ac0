"""Lattice weight fields and their resampling dynamics.

A site weight is geometric with parameter p, encoded by a Bernoulli bit
stream: ``omega_v = min{i >= 0 : X_{v,i} = 1}`` with ``X_{v,i} ~ Ber(p)``
drawn from the keyed stream ``BIT_X``.  Nothing is stored; every bit,
clock and replacement bit is recomputed from its key on demand, so a
field and all of its noisy versions are pure functions of
``(seed, p, region)``.

Three dynamics produce a time-t partner of a field:

* ``BIT``: each bit carries an Exp(1) clock ``U_{v,i}`` (stream
  ``CLOCK_U``) and is replaced by a fresh bit (stream ``BIT_XPRIME``)
  when ``t >= U_{v,i}``.
* ``SITE``: each site carries one Exp(1) clock (stream ``SITE_CLOCK``)
  and the whole weight is replaced by an independent geometric (decoded
  from the ``BIT_XPRIME`` stream) when the clock has rung.
* ``COUPLED``: the comparison construction with cap ``M``.  The site
  clock is ``U~_v = M * min_{0<=i<M} U_{v,i}``, reusing the per-bit
  clocks, so every bit among the first M that is resampled at time t in
  the BIT dynamics is also resampled at time ``M*t`` in the site
  dynamics.  Both capped (``min(., M)``) and uncapped fields are
  exposed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import Stream, exponential_array, uniform_array

__all__ = [
    "SCAN_CAP",
    "RngIntegrityError",
    "Rect",
    "WeightConfig",
    "NoiseKind",
    "NoisyPair",
    "CoupledFields",
    "weights",
    "weight_at",
    "noisy_weights",
    "noisy_weight_at",
    "coupled_fields",
    "coupled_cap",
    "site_bits",
]

SCAN_CAP = 10 ** 6


class RngIntegrityError(RuntimeError):
    """A bit scan ran past the safety cap; the bit stream is broken."""


@dataclass(frozen=True)
class Rect:
    """Closed lattice rectangle with inclusive corners ``lo <= hi``."""

    lo: tuple[int, int]
    hi: tuple[int, int]

    def __post_init__(self) -> None:
        if self.lo[0] > self.hi[0] or self.lo[1] > self.hi[1]:
            raise ValueError(f"empty rectangle: lo={self.lo} hi={self.hi}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.hi[0] - self.lo[0] + 1, self.hi[1] - self.lo[1] + 1)

    def contains(self, v: tuple[int, int]) -> bool:
        return (self.lo[0] <= v[0] <= self.hi[0]
                and self.lo[1] <= v[1] <= self.hi[1])

    def coord_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Absolute coordinates of all sites, shaped like the field array."""
        xs = np.arange(self.lo[0], self.hi[0] + 1, dtype=np.int64)
        ys = np.arange(self.lo[1], self.hi[1] + 1, dtype=np.int64)
        return np.meshgrid(xs, ys, indexing="ij")


@dataclass(frozen=True)
class WeightConfig:
    """A geometric weight field: parameter, master seed and region."""

    p: float
    seed: int
    region: Rect

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")


class NoiseKind(Enum):
    BIT = "bit"
    SITE = "site"
    COUPLED = "coupled"


@dataclass(frozen=True)
class NoisyPair:
    """A base field together with a noise time and dynamics kind.

    ``cap`` is required for COUPLED and ignored otherwise.
    """

    base: WeightConfig
    t: float
    kind: NoiseKind
    cap: int | None = None

    def __post_init__(self) -> None:
        if self.t < 0.0:
            raise ValueError(f"noise time must be >= 0, got {self.t}")
        if self.kind is NoiseKind.COUPLED:
            if self.cap is None or self.cap < 1:
                raise ValueError("COUPLED dynamics needs a cap M >= 1")


def _scan_first_one(n_sites: int, bit_fn) -> np.ndarray:
    """First index i with ``bit_fn(alive_idx, i)`` true, per site.

    ``bit_fn`` receives flat site indices still unresolved and the round
    number, and returns a boolean array.  Raises RngIntegrityError if a
    scan exceeds SCAN_CAP rounds.
    """
    out = np.empty(n_sites, dtype=np.int64)
    alive = np.arange(n_sites)
    i = 0
    while alive.size:
        if i > SCAN_CAP:
            raise RngIntegrityError(
                f"bit scan exceeded {SCAN_CAP} rounds; keyed stream damaged")
        hit = bit_fn(alive, i)
        out[alive[hit]] = i
        alive = alive[~hit]
        i += 1
    return out


def _base_bits(cfg: WeightConfig, sx, sy, alive, i) -> np.ndarray:
    u = uniform_array(cfg.seed, Stream.BIT_X, sx[alive], sy[alive], i)
    return u < cfg.p


def _replacement_bits(cfg: WeightConfig, sx, sy, alive, i) -> np.ndarray:
    u = uniform_array(cfg.seed, Stream.BIT_XPRIME, sx[alive], sy[alive], i)
    return u < cfg.p


def _bit_clocks(cfg: WeightConfig, sx, sy, alive, i) -> np.ndarray:
    return exponential_array(cfg.seed, Stream.CLOCK_U, sx[alive], sy[alive], i)


def weights(cfg: WeightConfig) -> np.ndarray:
    """The full weight array of the region, decoded from the bit streams."""
    gx, gy = cfg.region.coord_grids()
    sx, sy = gx.ravel(), gy.ravel()
    w = _scan_first_one(sx.size, lambda alive, i: _base_bits(cfg, sx, sy, alive, i))
    return w.reshape(cfg.region.shape)


def weight_at(cfg: WeightConfig, v: tuple[int, int]) -> int:
    """Weight of a single site (regenerated, never stored)."""
    if not cfg.region.contains(v):
        raise ValueError(f"site {v} outside region {cfg.region}")
    one = WeightConfig(cfg.p, cfg.seed, Rect(v, v))
    return int(weights(one)[0, 0])


def _bit_member(pair: NoisyPair) -> np.ndarray:
    """Weights read from the bit-resampled streams at time t."""
    cfg = pair.base
    gx, gy = cfg.region.coord_grids()
    sx, sy = gx.ravel(), gy.ravel()
    t = pair.t
    if t == 0.0:
        bit_fn = lambda alive, i: _base_bits(cfg, sx, sy, alive, i)
    else:
        def bit_fn(alive, i):
            rung = _bit_clocks(cfg, sx, sy, alive, i) <= t
            bits = _base_bits(cfg, sx, sy, alive, i)
            if rung.any():
                repl = _replacement_bits(cfg, sx, sy, alive, i)
                bits = np.where(rung, repl, bits)
            return bits
    w = _scan_first_one(sx.size, bit_fn)
    return w.reshape(cfg.region.shape)


def _replacement_weights(cfg: WeightConfig) -> np.ndarray:
    """Independent geometric field decoded from the replacement stream."""
    gx, gy = cfg.region.coord_grids()
    sx, sy = gx.ravel(), gy.ravel()
    w = _scan_first_one(sx.size,
                        lambda alive, i: _replacement_bits(cfg, sx, sy, alive, i))
    return w.reshape(cfg.region.shape)


def _site_member(pair: NoisyPair) -> np.ndarray:
    """Whole-site resampling with one Exp(1) clock per site."""
    cfg = pair.base
    base = weights(cfg)
    if pair.t == 0.0:
        return base
    gx, gy = cfg.region.coord_grids()
    rung = exponential_array(cfg.seed, Stream.SITE_CLOCK, gx, gy, 0) <= pair.t
    if not rung.any():
        return base
    return np.where(rung, _replacement_weights(cfg), base)


@dataclass(frozen=True)
class CoupledFields:
    """The comparison pair: base, bit-resampled at t, site-resampled at M*t.

    The site clock is ``U~_v = M * min_{i<M} U_{v,i}``; ``site_mt`` is
    the site dynamics run to time ``M*t`` with that clock.  Capped
    variants truncate every weight at M.
    """

    base: np.ndarray
    bit_t: np.ndarray
    site_mt: np.ndarray
    cap: int

    @property
    def base_capped(self) -> np.ndarray:
        return np.minimum(self.base, self.cap)

    @property
    def bit_t_capped(self) -> np.ndarray:
        return np.minimum(self.bit_t, self.cap)

    @property
    def site_mt_capped(self) -> np.ndarray:
        return np.minimum(self.site_mt, self.cap)


def coupled_fields(pair: NoisyPair) -> CoupledFields:
    if pair.kind is not NoiseKind.COUPLED:
        raise ValueError("coupled_fields needs a COUPLED pair")
    cfg, t, m = pair.base, pair.t, int(pair.cap)
    base = weights(cfg)
    bit_t = _bit_member(NoisyPair(cfg, t, NoiseKind.BIT))
    if t == 0.0:
        return CoupledFields(base, bit_t, base.copy(), m)
    gx, gy = cfg.region.coord_grids()
    # min over the first M per-bit clocks; U~ <= M*t iff the min <= t
    umin = exponential_array(cfg.seed, Stream.CLOCK_U, gx, gy, 0)
    for i in range(1, m):
        np.minimum(umin,
                   exponential_array(cfg.seed, Stream.CLOCK_U, gx, gy, i),
                   out=umin)
    rung = umin <= t
    site_mt = np.where(rung, _replacement_weights(cfg), base)
    return CoupledFields(base, bit_t, site_mt, m)


def noisy_weights(pair: NoisyPair) -> np.ndarray:
    """Time-t partner field; for COUPLED, the site member at time M*t."""
    if pair.kind is NoiseKind.BIT:
        return _bit_member(pair)
    if pair.kind is NoiseKind.SITE:
        return _site_member(pair)
    return coupled_fields(pair).site_mt


def noisy_weight_at(pair: NoisyPair, v: tuple[int, int]) -> int:
    """Noisy weight of a single site."""
    if not pair.base.region.contains(v):
        raise ValueError(f"site {v} outside region {pair.base.region}")
    one = NoisyPair(WeightConfig(pair.base.p, pair.base.seed, Rect(v, v)),
                    pair.t, pair.kind, pair.cap)
    return int(noisy_weights(one)[0, 0])


def coupled_cap(n: int, p: float) -> int:
    """Cap M with ``n**2 * (1-p)**M <= n**-3``: M = ceil(5 ln n / ln 1/(1-p))."""
    if n < 2:
        raise ValueError(f"cap needs n >= 2, got {n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return int(np.ceil(5.0 * np.log(n) / -np.log1p(-p)))


def site_bits(cfg: WeightConfig, v: tuple[int, int], count: int) -> np.ndarray:
    """First ``count`` encoding bits of one site (for bit-level surgery)."""
    idx = np.arange(count, dtype=np.int64)
    u = uniform_array(cfg.seed, Stream.BIT_X, v[0], v[1], idx)
    return u < cfg.p
