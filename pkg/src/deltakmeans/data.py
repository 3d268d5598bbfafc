"""CSV ingestion and planted-cluster instance generation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Instance

__all__ = ["InputError", "GeneratorSpec", "load_csv", "parse_csv", "write_csv", "generate"]

MISSING_MARKERS = ("?", "")
MAX_CENTER_DRAWS = 10_000


class InputError(ValueError):
    """Malformed user input (file contents, generator spec, flags)."""


def _is_number(field: str) -> bool:
    try:
        v = float(field)
    except ValueError:
        return False
    return math.isfinite(v)


def parse_csv(text: str) -> Instance:
    """Parse comma-separated rows; ``?`` or an empty field is a missing entry.

    The first row is a header when any of its fields is neither numeric nor a
    missing marker.  Point ids are 0-based data-row indices.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if rows and any(f.strip() not in MISSING_MARKERS and not _is_number(f.strip()) for f in rows[0]):
        rows = rows[1:]
    if not rows:
        raise InputError("no data rows")
    d = len(rows[0])
    values = np.full((len(rows), d), np.nan)
    defined = np.zeros((len(rows), d), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != d:
            raise InputError(f"row {i}: expected {d} fields, found {len(row)}")
        for j, raw in enumerate(row):
            field = raw.strip()
            if field in MISSING_MARKERS:
                continue
            if not _is_number(field):
                raise InputError(f"row {i}, column {j}: cannot parse {raw!r}")
            values[i, j] = float(field)
            defined[i, j] = True
        if not defined[i].any():
            raise InputError(f"row {i}: every entry is missing")
    return Instance(values, defined)


def load_csv(path) -> Instance:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_csv(text)


def write_csv(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for v, m in zip(instance.values, instance.defined):
            out.writerow([repr(float(x)) if ok else "?" for x, ok in zip(v, m)])


_ALIASES = {"k": "k_true", "miss": "miss_prob", "sep": "separation"}


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic instance with ``k_true`` planted clusters."""

    k_true: int = 2
    n: int = 6
    d: int = 2
    delta: int = 1
    sigma: float = 0.01
    miss_prob: float = 0.2
    separation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k_true < 1 or self.n < self.k_true:
            raise InputError("need 1 <= k <= n")
        if self.d < 1:
            raise InputError("d must be >= 1")
        if not 0 <= self.delta < self.d:
            raise InputError("delta must satisfy 0 <= delta < d")
        if self.sigma < 0:
            raise InputError("sigma must be >= 0")
        if not 0 <= self.miss_prob < 1:
            raise InputError("miss must lie in [0, 1)")
        if self.separation < 0:
            raise InputError("separation must be >= 0")
        if self.seed < 0:
            raise InputError("seed must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "GeneratorSpec":
        """Read ``key=value`` pairs such as ``k=2,n=6,d=2,sigma=0.01,miss=0.2,delta=1,seed=7``."""
        types = {"k_true": int, "n": int, "d": int, "delta": int, "seed": int,
                 "sigma": float, "miss_prob": float, "separation": float}
        kw = {}
        for item in filter(None, (s.strip() for s in text.split(","))):
            key, eq, val = item.partition("=")
            key = _ALIASES.get(key.strip(), key.strip())
            if not eq or key not in types:
                raise InputError(f"bad generator field {item!r}")
            try:
                kw[key] = types[key](val.strip())
            except ValueError:
                raise InputError(f"bad value in {item!r}") from None
        return cls(**kw)

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return GeneratorSpec(**{**asdict(self), "seed": seed})

    def describe(self) -> str:
        return (f"k={self.k_true},n={self.n},d={self.d},delta={self.delta},sigma={self.sigma!r},"
                f"miss={self.miss_prob!r},sep={self.separation!r},seed={self.seed}")


def _draw_centers(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    for _ in range(MAX_CENTER_DRAWS):
        centers = rng.random((spec.k_true, spec.d))
        gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        gaps[np.diag_indices(spec.k_true)] = np.inf
        if gaps.min() >= spec.separation:
            return centers
    raise InputError(f"could not place {spec.k_true} centers {spec.separation} apart in [0,1]^{spec.d}")


def _draw_mask(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    while True:
        hidden = rng.random(spec.d) < spec.miss_prob
        if hidden.sum() <= spec.delta:
            return ~hidden


def generate(spec: GeneratorSpec) -> tuple[Instance, np.ndarray]:
    """Planted instance and its ground-truth labels; a pure function of ``spec``.

    Points are dealt to clusters round-robin and then shuffled, so every
    planted cluster is nonempty.
    """
    rng = np.random.default_rng(spec.seed)
    centers = _draw_centers(spec, rng)
    labels = rng.permutation(np.arange(spec.n) % spec.k_true)
    values = centers[labels] + spec.sigma * rng.standard_normal((spec.n, spec.d))
    defined = np.stack([_draw_mask(spec, rng) for _ in range(spec.n)])
    return Instance(values, defined), labels
