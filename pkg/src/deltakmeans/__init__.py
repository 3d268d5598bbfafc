"""k-means clustering for points with a bounded number of missing coordinates."""

from .baselines import LloydConfig, lloyd
from .core import MISSING, Center, DeltaPoint, Instance, InvariantViolation
from .oracle import OracleLimit, exact_kmeans
from .partial import ClusteringSolution, PartialClustering
from .ptas import PtasConfig, run

__all__ = [
    "MISSING",
    "Center",
    "DeltaPoint",
    "Instance",
    "InvariantViolation",
    "ClusteringSolution",
    "PartialClustering",
    "PtasConfig",
    "run",
    "LloydConfig",
    "lloyd",
    "OracleLimit",
    "exact_kmeans",
]
