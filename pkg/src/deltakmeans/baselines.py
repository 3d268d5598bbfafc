"""Lloyd-style alternating minimization for points with missing coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Center, Instance, labelled_cost, masked_mean, masked_sq_dists
from .partial import ClusteringSolution

__all__ = ["LloydConfig", "seed_centers", "lloyd", "SEED_MODES"]

SEED_MODES = ("random-points", "spread")


@dataclass(frozen=True)
class LloydConfig:
    max_iters: int = 100
    tol: float = 1e-9
    init: str = "random-points"
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.init not in SEED_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")


def _seed_arrays(instance: Instance, k: int, mode: str, rng: np.random.Generator):
    n = instance.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if mode == "random-points":
        chosen = rng.choice(n, size=k, replace=False)
    elif mode == "spread":
        chosen = [int(rng.integers(n))]
        nearest = masked_sq_dists(instance.values, instance.defined, instance.values[chosen[0]], instance.defined[chosen[0]])
        for _ in range(1, k):
            nearest[chosen] = -1.0  # never re-pick a chosen point
            nxt = int(np.argmax(nearest))
            chosen.append(nxt)
            nearest = np.minimum(
                nearest, masked_sq_dists(instance.values, instance.defined, instance.values[nxt], instance.defined[nxt])
            )
        chosen = np.asarray(chosen)
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return instance.values[chosen].copy(), instance.defined[chosen].copy()


def seed_centers(instance: Instance, k: int, mode: str, rng: np.random.Generator) -> list[Center]:
    """Pick ``k`` distinct points as initial centers (missing entries stay missing).

    ``spread`` starts from a random point and then repeatedly takes the point
    farthest from the centers chosen so far; ties go to the smallest position.
    """
    values, defined = _seed_arrays(instance, k, mode, rng)
    return [Center(v, m) for v, m in zip(values, defined)]


def _assign(instance: Instance, cv: np.ndarray, cd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dists = np.stack(
        [masked_sq_dists(instance.values, instance.defined, cv[i], cd[i]) for i in range(cv.shape[0])], axis=1
    )
    labels = np.argmin(dists, axis=1)
    return labels, dists[np.arange(instance.n), labels]


def _repair_empty(labels: np.ndarray, own_dist: np.ndarray, k: int) -> None:
    for j in range(k):
        if (labels == j).any():
            continue
        sizes = np.bincount(labels, minlength=k)
        candidates = np.flatnonzero(sizes[labels] >= 2)
        # farthest from its current center, smallest position on ties
        p = candidates[np.argmax(own_dist[candidates])]
        labels[p] = j
        own_dist[p] = 0.0


def _update(instance: Instance, labels: np.ndarray, k: int):
    cv = np.full((k, instance.d), np.nan)
    cd = np.zeros((k, instance.d), dtype=bool)
    for i in range(k):
        members = labels == i
        cv[i], cd[i] = masked_mean(instance.values[members], instance.defined[members])
    return cv, cd


def lloyd(instance: Instance, k: int, cfg: LloydConfig = LloydConfig()) -> ClusteringSolution:
    """Alternate nearest-center assignment and per-cluster means.

    Stops when the relative improvement drops below ``cfg.tol``, when labels stop
    changing, or after ``cfg.max_iters`` iterations.  A center coordinate that
    becomes defined only after new members join can raise the cost; such an
    iteration is rejected and the previous solution returned, so the accepted
    cost history never increases.
    """
    if not 1 <= k <= instance.n:
        raise ValueError(f"k={k} must lie in [1, {instance.n}]")
    rng = np.random.default_rng(cfg.seed)
    cv, cd = _seed_arrays(instance, k, cfg.init, rng)
    labels = None
    cost = np.inf
    history: list[float] = []
    rejected = False
    iterations = 0
    for _ in range(cfg.max_iters):
        new_labels, own = _assign(instance, cv, cd)
        _repair_empty(new_labels, own, k)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        new_cv, new_cd = _update(instance, new_labels, k)
        new_cost = labelled_cost(instance.values, instance.defined, new_labels, new_cv, new_cd)
        if new_cost > cost:
            rejected = True
            break
        improvement = cost - new_cost
        labels, cv, cd, cost = new_labels, new_cv, new_cd, new_cost
        history.append(cost)
        iterations += 1
        if np.isfinite(improvement) and improvement < cfg.tol * (cost + improvement):
            break
    centers = tuple(Center(v, m) for v, m in zip(cv, cd))
    meta = {"algorithm": "lloyd", "iterations": iterations, "history": history, "rejected_increase": rejected}
    return ClusteringSolution(instance, labels, centers, float(cost), meta)
