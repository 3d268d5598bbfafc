"""Masked-vector geometry for points with missing coordinates.

A point lives in H^d: every coordinate is either a real number or ``MISSING``.
Internally a point is a pair of arrays: ``values`` (float64) and ``defined``
(bool).  Entries of ``values`` where ``defined`` is False hold NaN and are never
read without a guard, so an unguarded read shows up as NaN instead of silently
biasing a mean.

Index sets are ``frozenset`` objects of 0-based coordinate indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

__all__ = [
    "MISSING",
    "Center",
    "DeltaPoint",
    "Instance",
    "InvariantViolation",
    "dom",
    "fd",
    "pd",
    "dist_sq",
    "mean_on",
    "cost_on",
    "clustering_value",
    "index_mask",
    "full_index",
]


class InvariantViolation(AssertionError):
    """A structural invariant of the algorithm state was broken."""


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "?"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


def _parse_entries(entries: Iterable) -> tuple[np.ndarray, np.ndarray]:
    vals = []
    mask = []
    for e in entries:
        if e is MISSING or e is None:
            vals.append(np.nan)
            mask.append(False)
            continue
        v = float(e)
        if math.isnan(v):
            # NaN at the boundary means "unknown"; it is never kept as a value.
            vals.append(np.nan)
            mask.append(False)
        elif math.isinf(v):
            raise ValueError("coordinates must be finite")
        else:
            vals.append(v)
            mask.append(True)
    return np.asarray(vals, dtype=float), np.asarray(mask, dtype=bool)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Center:
    """An element of H^d; may have any number of missing entries."""

    values: np.ndarray
    defined: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        defined = np.asarray(self.defined, dtype=bool)
        if values.ndim != 1 or values.shape != defined.shape:
            raise ValueError("values and defined must be 1-D arrays of equal length")
        values = np.where(defined, values, np.nan)
        if not np.all(np.isfinite(values[defined])):
            raise ValueError("defined coordinates must be finite")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "defined", _freeze(defined))

    @classmethod
    def of(cls, entries: Iterable, **kw) -> "Center":
        vals, mask = _parse_entries(entries)
        return cls(vals, mask, **kw)

    @classmethod
    def all_missing(cls, d: int) -> "Center":
        return cls(np.full(d, np.nan), np.zeros(d, dtype=bool))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.d

    def __getitem__(self, i: int):
        return float(self.values[i]) if self.defined[i] else MISSING

    def __iter__(self):
        return (self[i] for i in range(self.d))

    def tolist(self) -> list:
        """Coordinates as floats, with ``None`` for missing entries."""
        return [float(v) if m else None for v, m in zip(self.values, self.defined)]

    def same_as(self, other: "Center") -> bool:
        return bool(
            np.array_equal(self.defined, other.defined)
            and np.array_equal(self.values[self.defined], other.values[other.defined])
        )

    def __eq__(self, other):
        if not isinstance(other, Center):
            return NotImplemented
        return self.same_as(other)

    __hash__ = None

    def __repr__(self) -> str:
        body = ", ".join("?" if v is None else f"{v:g}" for v in self.tolist())
        return f"{type(self).__name__}({body})"


@dataclass(frozen=True, eq=False)
class DeltaPoint(Center):
    """A data point: nonempty domain, stable identifier."""

    id: Hashable = None

    def __post_init__(self):
        super().__post_init__()
        if not self.defined.any():
            raise ValueError("a point needs at least one defined coordinate")

    @property
    def n_missing(self) -> int:
        return int(self.d - self.defined.sum())

    def __repr__(self) -> str:
        body = ", ".join("?" if v is None else f"{v:g}" for v in self.tolist())
        return f"DeltaPoint({body}; id={self.id!r})"


def index_mask(I: Iterable[int], d: int) -> np.ndarray:
    mask = np.zeros(d, dtype=bool)
    idx = list(I)
    if idx:
        if min(idx) < 0 or max(idx) >= d:
            raise IndexError(f"index set {sorted(idx)} out of range for d={d}")
        mask[idx] = True
    return mask


def full_index(d: int) -> frozenset[int]:
    return frozenset(range(d))


def dom(x: Center) -> frozenset[int]:
    return frozenset(np.flatnonzero(x.defined).tolist())


def fd(S: Iterable[Center], I: Iterable[int]) -> list:
    """Points of ``S`` fully defined on ``I`` (domain contained in ``I``)."""
    I = frozenset(I)
    return [x for x in S if dom(x) <= I]


def pd(S: Iterable[Center], I: Iterable[int]) -> list:
    """Points of ``S`` partially defined on ``I`` (domain meets ``I``)."""
    I = frozenset(I)
    return [x for x in S if dom(x) & I]


def dist_sq(x: Center, y: Center, I: Iterable[int] | None = None) -> float:
    """Squared restricted distance; a term with a missing operand is 0.

    ``I=None`` means all coordinates.
    """
    both = x.defined & y.defined
    if I is not None:
        both &= index_mask(I, x.d)
    diff = x.values[both] - y.values[both]
    return float(np.dot(diff, diff))


def _stack(points: Sequence[Center], d: int | None):
    if len(points) == 0:
        if d is None:
            raise ValueError("dimension required for an empty point set")
        return np.zeros((0, d)), np.zeros((0, d), dtype=bool)
    values = np.stack([p.values for p in points])
    defined = np.stack([p.defined for p in points])
    return values, defined


def masked_mean(values: np.ndarray, defined: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means over defined entries; returns (means, has_any)."""
    counts = defined.sum(axis=0)
    sums = np.where(defined, values, 0.0).sum(axis=0)
    has = counts > 0
    means = np.full(values.shape[1], np.nan)
    means[has] = sums[has] / counts[has]
    return means, has


def mean_on(P: Sequence[Center], I: Iterable[int], d: int | None = None) -> Center:
    """Coordinate-wise mean of ``P`` over defined entries, restricted to ``I``.

    Coordinate ``i`` in ``I`` is missing when no point of ``P`` is defined there;
    coordinates outside ``I`` are always missing.  ``d`` is needed only when
    ``P`` is empty.
    """
    P = list(P)
    values, defined = _stack(P, d)
    dim = values.shape[1]
    means, has = masked_mean(values, defined)
    has &= index_mask(I, dim)
    return Center(means, has)


def cost_on(X: Iterable[Center], y: Center, I: Iterable[int] | None = None) -> float:
    X = list(X)
    if not X:
        return 0.0
    values, defined = _stack(X, y.d)
    return float(masked_sq_dists(values, defined, y.values, y.defined, None if I is None else index_mask(I, y.d)).sum())


def clustering_value(parts: Sequence[Sequence[Center]], centers: Sequence[Center]) -> float:
    if len(parts) != len(centers):
        raise ValueError(f"{len(parts)} parts but {len(centers)} centers")
    return float(sum(cost_on(p, c) for p, c in zip(parts, centers)))


# -- array kernels ---------------------------------------------------------


def masked_sq_dists(values, defined, c_values, c_defined, cols=None) -> np.ndarray:
    """Row-wise squared distances from ``values`` rows to one center."""
    both = defined & c_defined
    if cols is not None:
        both = both & cols
    diff = np.where(both, values - np.where(c_defined, c_values, 0.0), 0.0)
    return np.einsum("ij,ij->i", diff, diff)


def labelled_cost(values, defined, labels, center_values, center_defined) -> float:
    """Objective of a labelled partition with one center row per label."""
    cv = center_values[labels]
    both = defined & center_defined[labels]
    diff = np.where(both, values - np.where(both, cv, 0.0), 0.0)
    return float(np.einsum("ij,ij->", diff, diff))


@dataclass(frozen=True, eq=False)
class Instance:
    """An ordered set of Δ-points in H^d.

    ``values`` is ``(n, d)`` with NaN at missing entries and ``defined`` is the
    matching boolean mask.  ``ids`` defaults to ``0..n-1``.
    """

    values: np.ndarray
    defined: np.ndarray
    ids: tuple = field(default=None)

    def __post_init__(self):
        defined = np.asarray(self.defined, dtype=bool)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != defined.shape:
            raise ValueError("values and defined must be (n, d) arrays of equal shape")
        n, d = values.shape
        if n == 0 or d == 0:
            raise ValueError("an instance needs at least one point and one coordinate")
        values = np.where(defined, values, np.nan)
        if not np.all(np.isfinite(values[defined])):
            raise ValueError("defined coordinates must be finite")
        empty = np.flatnonzero(~defined.any(axis=1))
        if empty.size:
            raise ValueError(f"point {int(empty[0])} has no defined coordinate")
        ids = tuple(range(n)) if self.ids is None else tuple(self.ids)
        if len(ids) != n:
            raise ValueError("one id per point required")
        if len(set(ids)) != n:
            raise ValueError("point ids must be unique")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "defined", _freeze(defined))
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "filled", _freeze(np.where(defined, values, 0.0)))
        object.__setattr__(self, "_delta", int((~defined).sum(axis=1).max()))

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable], ids=None) -> "Instance":
        parsed = [_parse_entries(r) for r in rows]
        if not parsed:
            raise ValueError("no rows")
        widths = {len(v) for v, _ in parsed}
        if len(widths) != 1:
            raise ValueError("rows have different lengths")
        return cls(np.stack([v for v, _ in parsed]), np.stack([m for _, m in parsed]), ids)

    @classmethod
    def from_points(cls, points: Sequence[DeltaPoint]) -> "Instance":
        values, defined = _stack(points, None)
        ids = [p.id if p.id is not None else i for i, p in enumerate(points)]
        return cls(values, defined, ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def delta(self) -> int:
        return self._delta

    def point(self, i: int) -> DeltaPoint:
        return DeltaPoint(self.values[i], self.defined[i], self.ids[i])

    @property
    def points(self) -> tuple[DeltaPoint, ...]:
        return tuple(self.point(i) for i in range(self.n))

    def subset(self, idx: Iterable[int]) -> list[DeltaPoint]:
        return [self.point(int(i)) for i in idx]

    def __len__(self) -> int:
        return self.n
