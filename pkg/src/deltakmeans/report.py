"""Schema-versioned run reports with cost cross-checks at emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict

import numpy as np

from .core import Instance, InvariantViolation, labelled_cost
from .partial import ClusteringSolution

__all__ = ["REPORT_VERSION", "result_entry", "build_report", "check_report", "dumps_json", "dumps_csv"]

REPORT_VERSION = 1
COST_RTOL = 1e-6
CSV_FIELDS = ("cell", "algorithm", "cost", "repetitions", "failures", "iterations", "fallback", "wall_ms")


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= COST_RTOL * max(abs(a), abs(b), 1.0)


def _center_arrays(centers, d):
    cv = np.array([[np.nan if v is None else v for v in c] for c in centers], dtype=float).reshape(-1, d)
    return cv, np.isfinite(cv)


def recompute(instance: Instance, assignment, centers) -> float:
    """Objective of an emitted (assignment, centers) pair, from scratch."""
    labels = np.asarray(assignment, dtype=int)
    if labels.shape != (instance.n,):
        raise InvariantViolation("assignment length does not match the instance")
    cv, cd = _center_arrays(centers, instance.d)
    if labels.min() < 0 or labels.max() >= cv.shape[0]:
        raise InvariantViolation("assignment refers to a missing center")
    return labelled_cost(instance.values, instance.defined, labels, cv, cd)


def result_entry(sol: ClusteringSolution, wall_ms: float) -> dict:
    meta = sol.meta
    entry = {
        "algorithm": meta.get("algorithm", "unknown"),
        "cost": float(sol.cost),
        "centers": [c.tolist() for c in sol.centers],
        "assignment": [int(v) for v in sol.labels],
        "repetitions": meta.get("repetitions"),
        "failures": meta.get("failures"),
        "iterations": meta.get("iterations"),
        "wall_ms": round(wall_ms, 3),
    }
    if "fallback" in meta:
        entry["fallback"] = bool(meta["fallback"])
    if "constants" in meta:
        entry["constants"] = asdict(meta["constants"])
    if "max_steps" in meta:
        entry["max_steps"] = meta["max_steps"]
    return entry


def check_results(instance: Instance, results: list[dict]) -> None:
    """Raise ``InvariantViolation`` on a cost mismatch or an exact cost above another."""
    for r in results:
        again = recompute(instance, r["assignment"], r["centers"])
        if not _close(again, r["cost"]):
            raise InvariantViolation(f"{r['algorithm']}: reported cost {r['cost']!r} but recomputed {again!r}")
    exact = [r["cost"] for r in results if r["algorithm"] == "exact"]
    if exact:
        for r in results:
            if r["cost"] < exact[0] and not _close(r["cost"], exact[0]):
                raise InvariantViolation(f"{r['algorithm']} cost {r['cost']!r} is below the exact optimum {exact[0]!r}")


def instance_block(instance: Instance, source: str) -> dict:
    return {
        "n": instance.n,
        "d": instance.d,
        "delta": instance.delta,
        "source": source,
        "points": [[float(v) if m else None for v, m in zip(row, mask)]
                   for row, mask in zip(instance.values, instance.defined)],
    }


def build_report(instance: Instance, source: str, config: dict, results: list[dict]) -> dict:
    check_results(instance, results)
    return {"version": REPORT_VERSION, "instance": instance_block(instance, source), "config": config,
            "results": results}


def instance_from_block(block: dict) -> Instance:
    pts = block["points"]
    values = np.array([[np.nan if v is None else v for v in row] for row in pts], dtype=float)
    return Instance(values, np.isfinite(values))


def check_report(report: dict) -> list[str]:
    """Re-validate a parsed report; returns one line per checked item."""
    if report.get("version") != REPORT_VERSION:
        raise InvariantViolation(f"unsupported report version {report.get('version')!r}")
    cells = report["cells"] if "cells" in report else [report]
    lines = []
    for cell in cells:
        inst = instance_from_block(cell["instance"])
        meta = cell["instance"]
        if (inst.n, inst.d, inst.delta) != (meta["n"], meta["d"], meta["delta"]):
            raise InvariantViolation("instance metadata does not match its points")
        check_results(inst, cell["results"])
        for r in cell["results"]:
            lines.append(f"ok {meta.get('source', '?')} {r['algorithm']} cost={r['cost']!r}")
    return lines


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise InvariantViolation("non-finite number in report")
    if isinstance(obj, dict):
        for v in obj.values():
            _finite(v)
    elif isinstance(obj, list):
        for v in obj:
            _finite(v)


def dumps_json(report: dict) -> str:
    _finite(report)
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def dumps_csv(report: dict) -> str:
    cells = report["cells"] if "cells" in report else [report]
    buf = io.StringIO()
    out = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n", extrasaction="ignore")
    out.writeheader()
    for cell in cells:
        for r in cell["results"]:
            out.writerow({**{k: ("" if r.get(k) is None else r[k]) for k in CSV_FIELDS[1:]},
                          "cell": cell["instance"].get("source", "")})
    return buf.getvalue()
