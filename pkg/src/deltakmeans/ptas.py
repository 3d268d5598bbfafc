"""Randomized (1+eps)-approximation for k-means on points with missing coordinates.

One repetition starts from the empty partial clustering and applies guessed
steps until every point is assigned.  Each step either copies information
between clusters or samples from the pool R minus an exclusion set B, and
always raises the total step counter, so a repetition takes at most k(Δ+1)
steps.  ``run`` executes many independent repetitions and keeps the cheapest.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import LloydConfig, lloyd
from .core import Instance, InvariantViolation, masked_sq_dists
from .partial import (
    ClusteringSolution,
    PartialClustering,
    _finalize_arrays,
    assign_fully_determined,
    finalize,
    is_complete,
    new_empty,
)

__all__ = [
    "PtasConfig",
    "Constants",
    "StepTrace",
    "StepFailed",
    "derive_constants",
    "default_repetitions",
    "guess_exclusion_set",
    "sample_mean",
    "step",
    "run_once",
    "run",
]

MAX_DEFAULT_REPETITIONS = 100_000


class StepFailed(Exception):
    """A guessed branch turned out infeasible; the repetition is abandoned."""


@dataclass(frozen=True)
class Constants:
    alpha: float
    q: float
    t: int
    t_prime: int
    delta_small: float


@dataclass(frozen=True)
class PtasConfig:
    """Knobs of the approximation scheme.

    ``repetitions=None`` picks ``default_repetitions(n, k)``.  ``q``, ``t``,
    ``t_prime`` and ``delta_small`` replace the derived constants when given.
    ``validate`` checks the partial-clustering invariants after every step.
    """

    epsilon: float = 0.5
    repetitions: int | None = None
    master_seed: int = 0
    q: float | None = None
    t: int | None = None
    t_prime: int | None = None
    delta_small: float | None = None
    validate: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.repetitions is not None and self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for name in ("q", "t", "t_prime", "delta_small"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} override must be positive")


@dataclass
class StepTrace:
    case: str
    clusters: tuple = ()
    coordinate: int | None = None
    radius_ranks: dict = field(default_factory=dict)
    sample_ids: tuple = ()
    total_steps: int = 0


def _ceil(x: float) -> int:
    # 8 / (q * delta) can land a few ulps above an integer
    return math.ceil(round(x, 9))


def derive_constants(k: int, delta: int, epsilon: float) -> Constants:
    alpha = (1.0 + epsilon) ** (1.0 / (k * (delta + 1))) - 1.0
    guard = max(delta, 1)
    q = min(alpha / 3.0, 1.0 / (128 * guard**3))
    delta_small = 1.0 / (2 * guard)
    return Constants(alpha, q, _ceil(8.0 / (q * delta_small)), _ceil(2.0 / q), delta_small)


def _constants(cfg: PtasConfig, k: int, delta: int) -> Constants:
    c = derive_constants(k, delta, cfg.epsilon)
    q = cfg.q if cfg.q is not None else c.q
    ds = cfg.delta_small if cfg.delta_small is not None else c.delta_small
    t = cfg.t if cfg.t is not None else _ceil(8.0 / (q * ds))
    tp = cfg.t_prime if cfg.t_prime is not None else _ceil(2.0 / q)
    return Constants(c.alpha, q, int(t), int(tp), ds)


def default_repetitions(n: int, k: int) -> int:
    base = 10 * math.ceil(math.log2(n) ** k) if n > 1 else 10
    return max(1, min(base, MAX_DEFAULT_REPETITIONS))


def _rep_rng(master_seed: int, rep_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(rep_index,)))


def _radius_range(n: int) -> int:
    return max(1, int(math.floor(math.log2(n))))


def _exclusion_mask(pc: PartialClustering, i: int, r: int) -> np.ndarray:
    inst = pc.instance
    n = inst.n
    pooled = pc.labels < 0
    full = pooled & ~(inst.defined & ~pc.fixed[i]).any(axis=1)
    idx = np.flatnonzero(full)
    out = np.zeros(n, dtype=bool)
    if idx.size == 0:
        return out
    keep = min(-(-n // 2 ** (r - 1)), idx.size)
    dists = masked_sq_dists(inst.values[idx], inst.defined[idx], pc.u[i], pc.fixed[i])
    # farthest first; on equal distances the larger position is excluded first
    order = np.lexsort((idx, -dists))
    out[idx[order[keep:]]] = True
    return out


def guess_exclusion_set(pc: PartialClustering, i: int, r: int) -> frozenset[int]:
    """Pooled points fully defined on I_i, minus the ceil(n/2^(r-1)) farthest from u_i."""
    if not pc.fixed[i].any():
        raise ValueError(f"cluster {i} has no fixed coordinates")
    if not 1 <= r <= _radius_range(pc.instance.n):
        raise ValueError(f"radius rank {r} out of range")
    return frozenset(np.flatnonzero(_exclusion_mask(pc, i, r)).tolist())


def sample_mean(values: np.ndarray, defined: np.ndarray, t: int, rng: np.random.Generator):
    """Mean of ``t`` uniform draws with replacement from the rows of ``values``.

    Works column-wise over the draws defined at each column.  Returns
    ``(means, covered)`` where ``covered`` marks the columns hit by at least one
    defined draw.  Only the draw multiplicities matter, so they are drawn at once
    from the matching multinomial law.
    """
    m = values.shape[0]
    counts = rng.multinomial(t, np.full(m, 1.0 / m)).astype(float)
    hits = counts @ defined
    sums = counts @ np.where(defined, values, 0.0)
    covered = hits > 0
    means = np.full(values.shape[1], np.nan)
    means[covered] = sums[covered] / hits[covered]
    return means, covered


def _feasible_pairs(pc: PartialClustering, delta: int):
    has = pc.fixed.any(axis=1)
    copy_center, copy_coord = [], []
    for i in np.flatnonzero(has):
        for j in range(pc.k):
            if j == i:
                continue
            if not has[j]:
                copy_center.append((int(i), j))
            elif pc.n_steps[j] <= delta and (pc.fixed[i] & ~pc.fixed[j]).any():
                copy_coord.append((int(i), j))
    return copy_center, copy_coord


def step(pc: PartialClustering, consts: Constants, rng: np.random.Generator, trace: list | None = None,
         validate: bool = False) -> PartialClustering:
    """Apply one guessed step and absorb the points it makes fully determined.

    Raises ``StepFailed`` when the guess leads nowhere (empty sampling pool, no
    draw defined at a needed coordinate).
    """
    inst = pc.instance
    n, d, delta, k = inst.n, inst.d, inst.delta, pc.k
    before = pc.total_steps
    out = pc.copy()
    copy_center, copy_coord = _feasible_pairs(pc, delta)
    branches = [b for b, ok in (("copy-center", copy_center), ("copy-coordinate", copy_coord)) if ok]
    branches.append("sample")
    branch = branches[int(rng.integers(len(branches)))]
    record = StepTrace(branch)

    if branch == "copy-center":
        i, j = copy_center[int(rng.integers(len(copy_center)))]
        out.fixed[j] = pc.fixed[i]
        out.u[j] = pc.u[i]
        out.n_steps[j] = pc.n_steps[i]
        record.clusters = (i, j)
    elif branch == "copy-coordinate":
        i, j = copy_coord[int(rng.integers(len(copy_coord)))]
        choices = np.flatnonzero(pc.fixed[i] & ~pc.fixed[j])
        c = int(choices[rng.integers(choices.size)])
        out.u[j, c] = pc.u[i, c]
        out.fixed[j, c] = True
        out.n_steps[j] += 1
        record.clusters, record.coordinate = (i, j), c
    else:
        excluded = np.zeros(n, dtype=bool)
        top = _radius_range(n)
        for i in np.flatnonzero(pc.fixed.any(axis=1)):
            r = int(rng.integers(1, top + 1))
            record.radius_ranks[int(i)] = r
            excluded |= _exclusion_mask(pc, int(i), r)
        pool = np.flatnonzero((pc.labels < 0) & ~excluded)
        targets = np.flatnonzero(~pc.fixed.all(axis=1))
        target = int(targets[rng.integers(targets.size)])
        record.clusters = (target,)
        if pool.size == 0:
            raise StepFailed("sampling pool R - B is empty")
        pv, pdef = inst.values[pool], inst.defined[pool]
        if not pc.fixed[target].any():
            record.case = "sample-new"
            x = int(pool[rng.integers(pool.size)])
            J = inst.defined[x]
            means, covered = sample_mean(pv, pdef, consts.t, rng)
            u = np.where(J & covered, means, np.nan)
            for a in np.flatnonzero(J & ~covered):
                col, hit = sample_mean(pv[:, [a]], pdef[:, [a]], consts.t, rng)
                if not hit[0]:
                    raise StepFailed(f"no draw defined at coordinate {a}")
                u[a] = col[0]
            out.fixed[target] = J
            out.u[target] = u
            out.n_steps[target] = 1
            record.sample_ids = (inst.ids[x],)
        else:
            record.case = "sample-extend"
            free = np.flatnonzero(~pc.fixed[target])
            j = int(free[rng.integers(free.size)])
            col, hit = sample_mean(pv[:, [j]], pdef[:, [j]], consts.t_prime, rng)
            if not hit[0]:
                raise StepFailed(f"no draw defined at coordinate {j}")
            out.u[target, j] = col[0]
            out.fixed[target, j] = True
            out.n_steps[target] += 1
            record.coordinate = j

    out = assign_fully_determined(out)
    if out.total_steps <= before:
        raise InvariantViolation("a step must raise the total step count")
    if validate:
        out.validate()
    if trace is not None:
        record.total_steps = out.total_steps
        trace.append(record)
    return out


def _attempt(instance, k, cfg, rep_index, consts, trace=None):
    rng = _rep_rng(cfg.master_seed, rep_index)
    limit = k * (instance.delta + 1)
    pc = assign_fully_determined(new_empty(instance, k))
    if cfg.validate:
        pc.validate()
    steps = 0
    while not is_complete(pc):
        if steps >= limit:
            raise InvariantViolation(f"repetition exceeded {limit} steps")
        try:
            pc = step(pc, consts, rng, trace, cfg.validate)
        except StepFailed:
            return None
        steps += 1
    return pc, steps


def run_once(instance: Instance, k: int, cfg: PtasConfig, rep_index: int, consts: Constants | None = None,
             trace: list | None = None) -> ClusteringSolution | None:
    """One repetition; ``None`` when a guessed step fails."""
    if consts is None:
        consts = _constants(cfg, k, instance.delta)
    done = _attempt(instance, k, cfg, rep_index, consts, trace)
    if done is None:
        return None
    pc, steps = done
    sol = finalize(pc)
    sol.meta["steps"] = steps
    return sol


def _run_block(instance, k, cfg, consts, reps):
    best = None  # (cost, rep, pc)
    failures = 0
    max_steps = 0
    for rep in reps:
        done = _attempt(instance, k, cfg, rep, consts)
        if done is None:
            failures += 1
            continue
        pc, steps = done
        max_steps = max(max_steps, steps)
        cost = _finalize_arrays(pc)[0]
        if best is None or cost < best[0]:
            best = (cost, rep, pc)
    return best, failures, max_steps


def run(instance: Instance, k: int, cfg: PtasConfig = PtasConfig()) -> ClusteringSolution:
    """Best of ``cfg.repetitions`` independent repetitions.

    Repetition ``r`` draws from a stream seeded by ``(master_seed, r)`` only, so
    the result does not depend on ``cfg.workers`` and adding repetitions can only
    lower the cost.  Ties go to the earliest repetition.  When every repetition
    fails the Lloyd baseline answers instead and ``meta["fallback"]`` is set.
    """
    if not 1 <= k <= instance.n:
        raise ValueError(f"k={k} must lie in [1, {instance.n}]")
    reps = cfg.repetitions or default_repetitions(instance.n, k)
    consts = _constants(cfg, k, instance.delta)
    if cfg.workers == 1:
        blocks = [_run_block(instance, k, cfg, consts, range(reps))]
    else:
        bounds = np.linspace(0, reps, cfg.workers + 1).astype(int)
        with ThreadPoolExecutor(cfg.workers) as pool:
            futures = [
                pool.submit(_run_block, instance, k, cfg, consts, range(lo, hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
            ]
            blocks = [f.result() for f in futures]

    best = None
    failures = sum(b[1] for b in blocks)
    max_steps = max(b[2] for b in blocks)
    for cand, _, _ in blocks:
        if cand is not None and (best is None or cand[:2] < best[:2]):
            best = cand
    meta = {
        "algorithm": "ptas",
        "repetitions": reps,
        "failures": failures,
        "max_steps": max_steps,
        "constants": consts,
        "fallback": best is None,
    }
    if best is None:
        sol = lloyd(instance, k, LloydConfig(seed=cfg.master_seed))
        sol.meta = {**sol.meta, **meta, "fallback_algorithm": "lloyd"}
        return sol
    _, rep, pc = best
    sol = finalize(pc)
    sol.meta = {**meta, "best_repetition": rep}
    return sol
