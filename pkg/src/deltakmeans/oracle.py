"""Brute-force solvers for tiny instances, used as ground truth."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Center, Instance
from .partial import ClusteringSolution, PartialClustering, solution_from_labels

__all__ = [
    "OracleLimit",
    "LimitExceeded",
    "canonical_assignments",
    "exact_kmeans",
    "best_partition_value",
    "partial_clustering_value",
]

_CHUNK = 20_000


class LimitExceeded(ValueError):
    pass


@dataclass(frozen=True)
class OracleLimit:
    max_points: int = 12
    max_k: int = 4

    def __post_init__(self):
        if self.max_points < 1 or self.max_k < 1:
            raise ValueError("oracle limits must be positive")

    def check(self, n: int, k: int) -> None:
        if n > self.max_points:
            raise LimitExceeded(f"exact solver limited to {self.max_points} points (got {n})")
        if k > self.max_k:
            raise LimitExceeded(f"exact solver limited to k <= {self.max_k} (got {k})")


def canonical_assignments(n: int, k: int) -> np.ndarray:
    """All labelings of ``n`` points with at most ``k`` labels, up to relabeling.

    A labeling is canonical when labels appear in first-occurrence order
    (0 first, then 1, ...).  Rows come out in lexicographic order.
    """
    rows = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)  # highest label used so far
    for _ in range(1, n):
        allowed = np.minimum(top + 2, k)  # labels 0..top+1, capped at k
        reps = allowed.astype(int)
        base = np.repeat(rows, reps, axis=0)
        nxt = np.concatenate([np.arange(a, dtype=np.int8) for a in reps])
        rows = np.column_stack([base, nxt])
        top = np.maximum(np.repeat(top, reps), nxt)
    return rows


def _partition_costs(values, defined, filled, labels: np.ndarray, k: int, pinned=None) -> np.ndarray:
    """Objective of each labelling row with associated centers.

    A cluster's center equals ``pinned[i]`` on the pinned coordinates and the
    cluster mean elsewhere.  Residuals are taken around the centers directly
    rather than via sum-of-squares shortcuts.
    """
    m = labels.shape[0]
    total = np.zeros(m)
    dmask = defined.astype(float)
    for i in range(k):
        w = (labels == i).astype(float)  # (m, n)
        counts = w @ dmask  # (m, d)
        sums = w @ filled
        with np.errstate(invalid="ignore", divide="ignore"):
            centers = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
        if pinned is not None and pinned[i] is not None:
            pv, pdf = pinned[i]
            centers = np.where(pdf, np.where(pdf, pv, 0.0), centers)
        diff = np.where(defined[None, :, :], filled[None, :, :] - centers[:, None, :], 0.0)
        total += np.einsum("mnd,mnd,mn->m", diff, diff, w)
    return total


def exact_kmeans(instance: Instance, k: int, limit: OracleLimit = OracleLimit()) -> ClusteringSolution:
    """Optimal partition by full enumeration; ties go to the first canonical labelling.

    Empty clusters are allowed.  Centers are the per-cluster means.
    """
    n = instance.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    limit.check(n, k)
    rows = canonical_assignments(n, k)
    best_cost, best_row = np.inf, None
    for lo in range(0, rows.shape[0], _CHUNK):
        chunk = rows[lo : lo + _CHUNK]
        costs = _partition_costs(instance.values, instance.defined, instance.filled, chunk, k)
        j = int(np.argmin(costs))
        if costs[j] < best_cost:
            best_cost, best_row = costs[j], chunk[j]
    return solution_from_labels(
        instance, best_row.astype(int), k, {"algorithm": "exact", "enumerated": int(rows.shape[0])}
    )


def best_partition_value(
    instance: Instance,
    k: int,
    fixed: Mapping[int, int] | None = None,
    limit: OracleLimit = OracleLimit(),
    pinned: Sequence[Center | None] | None = None,
) -> float:
    """Minimum objective over every completion of a partial labelling.

    ``fixed`` maps point positions to labels.  ``pinned[i]``, when given, fixes
    cluster ``i``'s center on that center's defined coordinates; the remaining
    coordinates use the cluster mean.  Every labelling of the free points is
    tried, with no symmetry reduction.
    """
    n = instance.n
    limit.check(n, k)
    fixed = dict(fixed or {})
    if any(not 0 <= lab < k for lab in fixed.values()):
        raise ValueError("fixed label out of range")
    free = [p for p in range(n) if p not in fixed]
    pins = None
    if pinned is not None:
        if len(pinned) != k:
            raise ValueError("one pinned entry per cluster")
        pins = [None if c is None else (c.values, c.defined) for c in pinned]
    base = np.zeros(n, dtype=np.int8)
    for p, lab in fixed.items():
        base[p] = lab
    best = np.inf
    combos = itertools.product(range(k), repeat=len(free))
    while True:
        block = list(itertools.islice(combos, _CHUNK))
        if not block:
            break
        rows = np.tile(base, (len(block), 1))
        if free:
            rows[:, free] = np.asarray(block, dtype=np.int8)
        costs = _partition_costs(instance.values, instance.defined, instance.filled, rows, k, pins)
        best = min(best, float(costs.min()))
    return best


def partial_clustering_value(pc: PartialClustering, limit: OracleLimit = OracleLimit()) -> float:
    """OPT of a partial clustering: the cheapest extension with associated centers."""
    fixed = {int(p): int(pc.labels[p]) for p in np.flatnonzero(pc.labels >= 0)}
    pinned = [pc.center(i) for i in range(pc.k)]
    return best_partition_value(pc.instance, pc.k, fixed, limit, pinned)
