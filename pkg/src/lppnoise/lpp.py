"""Directed last-passage times, geodesics and increment decompositions.

Fields are plain int64 arrays ``w[i, j]`` indexed by offsets from the
lower-left corner of their rectangle; ``i`` runs along e1 and ``j``
along e2.  The travel time from corner to corner is

    T = max over up/right paths of the path's weight sum,

computed by the recursion ``F[i,j] = w[i,j] + max(F[i-1,j], F[i,j-1])``.
Columns are filled with a prefix-maximum identity so the quadratic table
costs O(area) vector operations instead of a Python-level double loop.

``geodesic_report`` returns the exact geodesic set (as a vertex mask)
plus the upmost and downmost geodesics extracted greedily from the
forward/backward tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAX_TABLE_SIDE",
    "forward_table",
    "backward_table",
    "travel_time",
    "GeodesicReport",
    "geodesic_report",
    "path_above",
    "IncrementProfile",
    "increment_profile",
]

# Full-table analytics guard; travel_time itself streams rows and has no cap.
MAX_TABLE_SIDE = 4001


def _check_weights(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 2 or w.size == 0:
        raise ValueError(f"weight array must be 2-D and nonempty, got shape {w.shape}")
    return w.astype(np.int64, copy=False)


def _next_column(prev: np.ndarray, col: np.ndarray) -> np.ndarray:
    # c[i] = col[i] + max(prev[i], c[i-1]); unrolled to a prefix maximum:
    # c[i] = S[i] + max_{k<=i} (prev[k] - S[k-1]) with S the cumsum of col.
    s = np.cumsum(col)
    return s + np.maximum.accumulate(prev - (s - col))


def forward_table(w: np.ndarray) -> np.ndarray:
    """F[i,j] = travel time from (0,0) to (i,j)."""
    w = _check_weights(w)
    f = np.empty_like(w)
    f[:, 0] = np.cumsum(w[:, 0])
    for j in range(1, w.shape[1]):
        f[:, j] = _next_column(f[:, j - 1], w[:, j])
    return f


def backward_table(w: np.ndarray) -> np.ndarray:
    """B[i,j] = travel time from (i,j) to the top-right corner."""
    w = _check_weights(w)
    return forward_table(w[::-1, ::-1])[::-1, ::-1]


def travel_time(w: np.ndarray) -> int:
    """Corner-to-corner travel time with O(width) memory."""
    w = _check_weights(w)
    cur = np.cumsum(w[:, 0])
    for j in range(1, w.shape[1]):
        cur = _next_column(cur, w[:, j])
    return int(cur[-1])


@dataclass(frozen=True)
class GeodesicReport:
    """Exact geodesic structure of one field.

    ``member_mask[i,j]`` is true iff (i,j) lies on at least one
    geodesic; ``upmost``/``downmost`` are vertex lists of the two
    extreme geodesics in the path partial order.
    """

    value: int
    member_mask: np.ndarray
    upmost: np.ndarray
    downmost: np.ndarray


def _extract_path(f: np.ndarray, b: np.ndarray, total: int, prefer_up: bool) -> np.ndarray:
    n1, n2 = f.shape
    i = j = 0
    path = [(0, 0)]
    while (i, j) != (n1 - 1, n2 - 1):
        up_ok = j + 1 < n2 and f[i, j] + b[i, j + 1] == total
        right_ok = i + 1 < n1 and f[i, j] + b[i + 1, j] == total
        if prefer_up:
            if up_ok:
                j += 1
            else:
                assert right_ok
                i += 1
        else:
            if right_ok:
                i += 1
            else:
                assert up_ok
                j += 1
        path.append((i, j))
    return np.array(path, dtype=np.int64)


def geodesic_report(w: np.ndarray, allow_large: bool = False) -> GeodesicReport:
    """Geodesic set and extreme geodesics via forward/backward tables."""
    w = _check_weights(w)
    if max(w.shape) > MAX_TABLE_SIDE and not allow_large:
        raise ValueError(
            f"side {max(w.shape)} exceeds {MAX_TABLE_SIDE}; pass allow_large=True")
    f = forward_table(w)
    b = backward_table(w)
    total = int(f[-1, -1])
    mask = (f + b - w) == total
    upmost = _extract_path(f, b, total, prefer_up=True)
    downmost = _extract_path(f, b, total, prefer_up=False)
    return GeodesicReport(total, mask, upmost, downmost)


def _col_minima(path: np.ndarray) -> dict[int, int]:
    out: dict[int, int] = {}
    for i, j in path:
        if i not in out or j < out[i]:
            out[i] = j
    return out


def path_above(a: np.ndarray, b: np.ndarray) -> bool:
    """Path order: on every shared vertical line, a's lowest point is
    at least b's lowest point."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("paths must be nonempty")
    ma, mb = _col_minima(np.asarray(a)), _col_minima(np.asarray(b))
    shared = set(ma) & set(mb)
    if not shared:
        raise ValueError("paths share no vertical line")
    return all(ma[c] >= mb[c] for c in shared)


@dataclass(frozen=True)
class IncrementProfile:
    """Exact decomposition of the geodesic-through-origin event.

    For the rectangle from -v to w = n*e_+ - v let
    ``D_i = [T(-v,0) + T(e1,w)] - [T(-v,i e2) + T(e1+i e2,w)]``.  A
    geodesic leaves the column of the origin through the edge
    (0 -> e1) iff D_i >= 0 for every i, and D telescopes into the
    nonnegative increments ``delta_j = T(-v,j e2) - T(-v,(j-1) e2)`` and
    ``delta_prime_j = T(e1+(j-1)e2, w) - T(e1+j e2, w)``.

    Arrays are indexed by offset: ``D[i - i_lo]`` etc., with
    ``i_lo = -v2`` and ``i_hi = n - v2``; delta arrays start at
    ``i_lo + 1``.
    """

    v: tuple[int, int]
    n: int
    i_lo: int
    i_hi: int
    D: np.ndarray
    delta: np.ndarray
    delta_prime: np.ndarray
    value: int
    through_origin_edge: bool


def increment_profile(w: np.ndarray, v: tuple[int, int]) -> IncrementProfile:
    """Increment decomposition of the field covering R_{-v, n e_+ - v}.

    Two sweeps (one forward from -v, one backward from w) supply every
    needed travel time in O(area).
    """
    w = _check_weights(w)
    if w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square rectangle, got shape {w.shape}")
    n = w.shape[0] - 1
    v1, v2 = v
    if not (0 <= v1 <= n - 1 and 0 <= v2 <= n):
        raise ValueError(f"origin placement v={v} invalid for n={n} "
                         "(needs 0 <= v <= n*e_+ and v1 < n)")
    f = forward_table(w)
    b = backward_table(w)
    i_lo, i_hi = -v2, n - v2
    rows = np.arange(v2 + i_lo, v2 + i_hi + 1)       # = 0 .. n
    through = f[v1, rows] + b[v1 + 1, rows]          # column 0 -> 1 crossing scores
    d = (f[v1, v2] + b[v1 + 1, v2]) - through
    delta = np.diff(f[v1, :])
    delta_prime = -np.diff(b[v1 + 1, :])
    if (delta < 0).any() or (delta_prime < 0).any():
        raise AssertionError("travel-time increments must be nonnegative")
    total = int(f[-1, -1])
    return IncrementProfile(
        v=(v1, v2), n=n, i_lo=i_lo, i_hi=i_hi,
        D=d, delta=delta, delta_prime=delta_prime,
        value=total,
        through_origin_edge=bool(f[v1, v2] + b[v1 + 1, v2] == total),
    )
