"""Partial clusterings: the state the approximation algorithm grows step by step.

Per cluster ``i`` the state keeps

* ``n_steps[i]`` -- how many sampling steps produced the current center estimate,
* ``fixed[i]``   -- boolean mask of the coordinates already fixed (the set I_i),
* ``u[i]``       -- the partially known center, NaN outside ``fixed[i]``,

and ``labels`` records the assigned sets H_i (``labels[x] == i``) with ``-1``
marking the unassigned pool R.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Center,
    Instance,
    InvariantViolation,
    labelled_cost,
    masked_mean,
    masked_sq_dists,
)

__all__ = [
    "PartialClustering",
    "ClusteringSolution",
    "Extension",
    "new_empty",
    "associated_centers",
    "assign_fully_determined",
    "is_complete",
    "finalize",
    "solution_from_labels",
]


@dataclass
class ClusteringSolution:
    """A partition of the instance together with one center per cluster.

    ``labels[p]`` is the cluster of the point at position ``p``; ``meta`` carries
    algorithm-specific bookkeeping (repetitions, failures, iterations, ...).
    """

    instance: Instance
    labels: np.ndarray
    centers: tuple[Center, ...]
    cost: float
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def assignment(self) -> dict:
        return {pid: int(lab) for pid, lab in zip(self.instance.ids, self.labels)}

    def parts(self) -> list[list]:
        return [self.instance.subset(np.flatnonzero(self.labels == i)) for i in range(self.k)]

    def recompute_cost(self) -> float:
        cv = np.stack([c.values for c in self.centers])
        cd = np.stack([c.defined for c in self.centers])
        return labelled_cost(self.instance.values, self.instance.defined, self.labels, cv, cd)


def solution_from_labels(instance: Instance, labels, k: int, meta=None) -> ClusteringSolution:
    """Solution whose centers are the per-cluster means (optimal for the partition)."""
    labels = np.asarray(labels, dtype=int)
    centers = []
    for i in range(k):
        members = labels == i
        means, has = masked_mean(instance.values[members], instance.defined[members])
        centers.append(Center(means, has))
    sol = ClusteringSolution(instance, labels, tuple(centers), 0.0, dict(meta or {}))
    sol.cost = sol.recompute_cost()
    return sol


@dataclass
class PartialClustering:
    instance: Instance
    k: int
    n_steps: np.ndarray
    fixed: np.ndarray
    u: np.ndarray
    labels: np.ndarray

    def copy(self) -> "PartialClustering":
        return PartialClustering(
            self.instance,
            self.k,
            self.n_steps.copy(),
            self.fixed.copy(),
            self.u.copy(),
            self.labels.copy(),
        )

    @property
    def total_steps(self) -> int:
        return int(self.n_steps.sum())

    def pool(self) -> np.ndarray:
        """Positions of the unassigned points R."""
        return np.flatnonzero(self.labels < 0)

    def members(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.labels == i).tolist())

    def index_set(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.fixed[i]).tolist())

    def center(self, i: int) -> Center:
        return Center(self.u[i], self.fixed[i])

    def validate(self) -> None:
        """Raise ``InvariantViolation`` unless every partial-clustering invariant holds."""
        inst = self.instance
        d, delta = inst.d, inst.delta
        if self.labels.shape != (inst.n,) or self.labels.min(initial=0) < -1 or self.labels.max(initial=-1) >= self.k:
            raise InvariantViolation("labels out of range")
        sizes = self.fixed.sum(axis=1)
        n = self.n_steps
        bad = np.flatnonzero((n < 0) | (n > delta + 1))
        if bad.size:
            i = bad[0]
            raise InvariantViolation(f"cluster {i}: n_i={n[i]} outside [0, {delta + 1}]")
        bad = np.flatnonzero((n > 0) & (sizes < d - delta + n - 1))
        if bad.size:
            i = bad[0]
            raise InvariantViolation(f"cluster {i}: |I_i|={sizes[i]} too small for n_i={n[i]}")
        populated = np.bincount(self.labels[self.labels >= 0], minlength=self.k) > 0
        bad = np.flatnonzero((n == 0) & ((sizes > 0) | populated))
        if bad.size:
            raise InvariantViolation(f"cluster {bad[0]}: n_i=0 but I_i or H_i nonempty")
        bad = np.flatnonzero((np.isfinite(self.u) != self.fixed).any(axis=1))
        if bad.size:
            raise InvariantViolation(f"cluster {bad[0]}: Dom(u_i) != I_i")


@dataclass(frozen=True)
class Extension:
    """A full partition of the instance that keeps every assigned set H_i."""

    labels: np.ndarray

    def check(self, pc: PartialClustering) -> None:
        labels = np.asarray(self.labels)
        if labels.shape != (pc.instance.n,):
            raise ValueError("an extension labels every point")
        if labels.min() < 0 or labels.max() >= pc.k:
            raise ValueError("extension label out of range")
        assigned = pc.labels >= 0
        if not np.array_equal(labels[assigned], pc.labels[assigned]):
            raise ValueError("extension does not contain every H_i")


def new_empty(instance: Instance, k: int) -> PartialClustering:
    if not 1 <= k <= instance.n:
        raise ValueError(f"k={k} must lie in [1, {instance.n}]")
    d = instance.d
    return PartialClustering(
        instance,
        k,
        np.zeros(k, dtype=int),
        np.zeros((k, d), dtype=bool),
        np.full((k, d), np.nan),
        np.full(instance.n, -1, dtype=int),
    )


def associated_centers(pc: PartialClustering, ext: Extension) -> list[Center]:
    """u_i on I_i, the extension's cluster mean on the remaining coordinates."""
    ext.check(pc)
    inst = pc.instance
    out = []
    for i in range(pc.k):
        members = ext.labels == i
        means, has = masked_mean(inst.values[members], inst.defined[members])
        vals = np.where(pc.fixed[i], pc.u[i], means)
        out.append(Center(vals, pc.fixed[i] | has))
    return out


def _center_dists(pc: PartialClustering, rows: np.ndarray) -> np.ndarray:
    # (len(rows), k) squared distances to every u_i over all coordinates
    inst = pc.instance
    both = inst.defined[rows][:, None, :] & pc.fixed[None, :, :]
    u0 = np.where(pc.fixed, pc.u, 0.0)
    diff = (inst.filled[rows][:, None, :] - u0[None, :, :]) * both
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign_fully_determined(pc: PartialClustering) -> PartialClustering:
    """Move every pooled point whose domain lies in all I_i to its nearest u_i.

    Ties go to the smallest cluster index.  Returns a new state.
    """
    out = pc.copy()
    common = pc.fixed.all(axis=0)
    ready = np.nonzero((pc.labels < 0) & ~(pc.instance.defined & ~common).any(axis=1))[0]
    if ready.size:
        out.labels[ready] = np.argmin(_center_dists(pc, ready), axis=1)
    return out


def is_complete(pc: PartialClustering) -> bool:
    return bool((pc.labels >= 0).all())


def _finalize_arrays(pc: PartialClustering):
    inst = pc.instance
    k, d = pc.k, inst.d
    onehot = (pc.labels[None, :] == np.arange(k)[:, None]).astype(float)  # (k, n)
    counts = onehot @ inst.defined
    sums = onehot @ inst.filled
    has = counts > 0
    means = np.where(has, sums / np.maximum(counts, 1.0), 0.0)
    u0 = np.where(pc.fixed, pc.u, 0.0)
    own = onehot.T.astype(bool)  # (n, k)

    def per_cluster(centers, cdef):
        diff = (inst.filled[:, None, :] - centers[None, :, :]) * (inst.defined[:, None, :] & cdef[None, :, :])
        return np.einsum("nkd,nkd,nk->k", diff, diff, own)

    cost_u = per_cluster(u0, pc.fixed)
    cost_mean = per_cluster(means, has)
    take_mean = cost_mean < cost_u
    cv = np.where(take_mean[:, None], np.where(has, means, np.nan), pc.u)
    cd = np.where(take_mean[:, None], has, pc.fixed)
    return float(np.where(take_mean, cost_mean, cost_u).sum()), cv, cd


def finalize(pc: PartialClustering) -> ClusteringSolution:
    """Turn a complete state into a solution.

    Each cluster keeps u_i or switches to the mean of H_i, whichever is cheaper
    on H_i (u_i wins ties).
    """
    if not is_complete(pc):
        raise ValueError("finalize needs every point assigned")
    cost, cv, cd = _finalize_arrays(pc)
    centers = tuple(Center(v, m) for v, m in zip(cv, cd))
    return ClusteringSolution(pc.instance, pc.labels.copy(), centers, cost)
