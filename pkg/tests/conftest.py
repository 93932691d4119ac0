"""Shared brute-force oracles for small lattices.

Everything here is deliberately naive: monotone paths are enumerated
one by one and summed in Python, so the fast implementations in the
package are checked against code that shares none of their structure.
"""

import itertools

import numpy as np
import pytest


def monotone_paths(a, b):
    """All up/right vertex paths from (0, 0) to (a, b) as coordinate lists."""
    out = []
    for right_steps in itertools.combinations(range(a + b), a):
        i = j = 0
        path = [(0, 0)]
        rp = set(right_steps)
        for s in range(a + b):
            if s in rp:
                i += 1
            else:
                j += 1
            path.append((i, j))
        out.append(path)
    return out


def brute_travel(w):
    """Corner-to-corner last-passage time by full path enumeration."""
    w = np.asarray(w)
    a, b = w.shape[0] - 1, w.shape[1] - 1
    return max(sum(int(w[v]) for v in path) for path in monotone_paths(a, b))


def brute_geodesics(w):
    """(value, list of maximizing paths, union vertex mask) by enumeration."""
    w = np.asarray(w)
    a, b = w.shape[0] - 1, w.shape[1] - 1
    best = None
    argmax = []
    for path in monotone_paths(a, b):
        s = sum(int(w[v]) for v in path)
        if best is None or s > best:
            best, argmax = s, [path]
        elif s == best:
            argmax.append(path)
    mask = np.zeros(w.shape, dtype=bool)
    for path in argmax:
        for v in path:
            mask[v] = True
    return best, argmax, mask


def random_small_fields(n_fields, max_side, seed, p_choices=(0.2, 0.5, 0.8)):
    """Independent geometric test fields of assorted shapes and biases."""
    rng = np.random.default_rng(seed)
    fields = []
    for _ in range(n_fields):
        shape = (rng.integers(1, max_side + 1), rng.integers(1, max_side + 1))
        p = p_choices[rng.integers(0, len(p_choices))]
        fields.append(rng.geometric(p, size=shape) - 1)
    return fields


@pytest.fixture
def small_fields():
    return random_small_fields(60, 5, seed=20250811)
