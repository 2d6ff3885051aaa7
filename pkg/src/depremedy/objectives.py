"""Risk weighting and the lexicographic objective vector."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

from .depgraph import DependencyGraph
from .ecosystem import EcosystemIndex, LibraryId, VulnerabilityRecord
from .reachability import CallGraph, ReachabilityClass, classify_record
from .versions import ChangeKind, Version, classify_change, distance

OBJECTIVE_ORDER = ("f_vul", "f_dev", "f_major", "f_minor", "f_span")


@lru_cache(maxsize=None)
def exact(x: float) -> Fraction:
    """Decimal-exact rational for a float literal such as 0.1 or 7.5."""
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class RiskWeights:
    theta_reachable: float = 1.0
    theta_unknown: float = 0.5
    theta_unreachable: float = 0.1

    def __post_init__(self) -> None:
        if not self.theta_reachable > self.theta_unknown > self.theta_unreachable > 0:
            raise ValueError("weights must satisfy reachable > unknown > unreachable > 0")

    def theta(self, cls: ReachabilityClass) -> Fraction:
        if cls is ReachabilityClass.REACHABLE:
            return exact(self.theta_reachable)
        if cls is ReachabilityClass.UNKNOWN:
            return exact(self.theta_unknown)
        return exact(self.theta_unreachable)

    def floor(self, record: VulnerabilityRecord) -> Fraction:
        """Smallest weight the record can get under any call graph."""
        if record.vulnerable_methods is None:
            return exact(self.theta_unknown)
        return exact(self.theta_unreachable)

    @classmethod
    def parse(cls, text: str) -> RiskWeights:
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights must be three comma-separated numbers r,u,n")
        return cls(*parts)

    def as_list(self) -> list[float]:
        return [self.theta_reachable, self.theta_unknown, self.theta_unreachable]


DEFAULT_WEIGHTS = RiskWeights()


@dataclass(frozen=True, order=True)
class ObjectiveVector:
    f_vul: Fraction = Fraction(0)
    f_dev: int = 0
    f_major: int = 0
    f_minor: int = 0
    f_span: int = 0

    def __add__(self, other: ObjectiveVector) -> ObjectiveVector:
        return ObjectiveVector(self.f_vul + other.f_vul, self.f_dev + other.f_dev,
                               self.f_major + other.f_major, self.f_minor + other.f_minor,
                               self.f_span + other.f_span)

    def __sub__(self, other: ObjectiveVector) -> ObjectiveVector:
        return ObjectiveVector(self.f_vul - other.f_vul, self.f_dev - other.f_dev,
                               self.f_major - other.f_major, self.f_minor - other.f_minor,
                               self.f_span - other.f_span)

    def to_json(self) -> dict:
        return {"f_vul": round(float(self.f_vul), 6), "f_dev": self.f_dev, "f_major": self.f_major,
                "f_minor": self.f_minor, "f_span": self.f_span}


def record_risk(record: VulnerabilityRecord, cg: CallGraph, weights: RiskWeights) -> Fraction:
    return weights.theta(classify_record(record, cg)) * exact(record.cvss)


def vertex_risk(lib: LibraryId, v: Version, cg: CallGraph, index: EcosystemIndex,
                weights: RiskWeights) -> Fraction:
    total = Fraction(0)
    for rec in index.records(lib):
        if rec.affects(v):
            total += record_risk(rec, cg, weights)
    return total


def risk_of(dg: DependencyGraph, cg: CallGraph, index: EcosystemIndex,
            weights: RiskWeights = DEFAULT_WEIGHTS) -> Fraction:
    """Sum over vertices and their active vulnerabilities of weight(class) * cvss."""
    total = Fraction(0)
    for lib, v in dg.vertices.items():
        if index.vulnerabilities.get(lib):
            total += vertex_risk(lib, v, cg, index, weights)
    return total


def change_vector(lib_versions: tuple[Version, ...], old: Version, new: Version) -> ObjectiveVector:
    """Secondary objective counts for one library moving from ``old`` to ``new``."""
    if old == new:
        return ObjectiveVector()
    kind = classify_change(old, new)
    return ObjectiveVector(
        Fraction(0),
        f_dev=int(not old.is_prerelease and new.is_prerelease),
        f_major=int(kind is ChangeKind.MAJOR),
        f_minor=int(kind is ChangeKind.MINOR),
        f_span=distance(lib_versions, old, new),
    )


def objective_vector(assignment: Mapping[LibraryId, Version], baseline: DependencyGraph,
                     index: EcosystemIndex, weights: RiskWeights = DEFAULT_WEIGHTS,
                     originals: Mapping[LibraryId, Version] | None = None) -> ObjectiveVector:
    """Objective of applying ``assignment`` on top of ``baseline``.

    Secondary terms count the assigned libraries that are still present after
    re-resolution, measured against ``originals`` (default: baseline versions).
    """
    from .depgraph import apply_assignment
    from .reachability import build_callgraph

    dg = apply_assignment(baseline, index, assignment)
    cg = build_callgraph(dg, baseline.manifest, index)
    originals = originals if originals is not None else baseline.vertices
    vec = ObjectiveVector(risk_of(dg, cg, index, weights))
    for lib in sorted(assignment):
        if lib in dg.vertices and lib in originals:
            vec = vec + change_vector(index.versions(lib), originals[lib], dg.vertices[lib])
    return vec
