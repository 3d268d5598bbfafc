"""Shared instance builders for the test suite."""

import numpy as np

from deltakmeans.core import Instance


def random_masked(rng, n, d, delta, scale=1.0):
    """Values and mask with at most ``delta`` hidden entries per row."""
    values = scale * rng.standard_normal((n, d))
    defined = np.ones((n, d), dtype=bool)
    for row in defined:
        hide = rng.integers(0, delta + 1)
        row[rng.choice(d, size=hide, replace=False)] = False
    return values, defined


def random_instance(rng, n, d, delta, scale=1.0):
    return Instance(*random_masked(rng, n, d, delta, scale))


def naive_dist_sq(x, y, I):
    # plain loop over coordinates; independent of the vectorized kernels
    total = 0.0
    for i in I:
        if x[i] is None or y[i] is None:
            continue
        total += (x[i] - y[i]) ** 2
    return total


def rows_of(instance):
    return [[float(v) if m else None for v, m in zip(r, k)] for r, k in zip(instance.values, instance.defined)]
