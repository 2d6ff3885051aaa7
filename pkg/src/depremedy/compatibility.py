"""Syntactic-breaking and dependency-conflict checks, and candidate filtering."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .depgraph import DependencyGraph
from .ecosystem import EcosystemIndex, LibraryId, MethodId
from .reachability import CallGraph, required_methods
from .versions import Version, VersionRequirement, allowed_versions


class Mark(str, enum.Enum):
    BREAKING = "breaking"
    CONFLICTING = "conflicting"
    UNPREFERRABLE = "unpreferrable"


@dataclass(frozen=True)
class Grandfathered:
    """Defects already present before remediation; never blamed on a candidate."""

    missing: frozenset[tuple[LibraryId, MethodId]] = frozenset()
    conflicts: frozenset[tuple[LibraryId, Version]] = frozenset()

    def missing_for(self, lib: LibraryId) -> frozenset[MethodId]:
        return frozenset(m for l, m in self.missing if l == lib)


NOTHING = Grandfathered()


@dataclass(frozen=True)
class CompatibilityVerdict:
    syntactic_breaking: bool = False
    offending_methods: tuple[MethodId, ...] = ()
    dependency_conflict: bool = False
    conflict_sources: tuple[tuple[LibraryId, VersionRequirement], ...] = ()

    @property
    def ok(self) -> bool:
        return not (self.syntactic_breaking or self.dependency_conflict)


def check_syntactic(cg: CallGraph, index: EcosystemIndex, lib: LibraryId, candidate: Version,
                    grandfathered: Grandfathered = NOTHING) -> CompatibilityVerdict:
    surface = index.entry(lib, candidate).methods
    missing = required_methods(cg, lib) - surface
    if missing and grandfathered.missing:
        missing -= grandfathered.missing_for(lib)
    return CompatibilityVerdict(syntactic_breaking=bool(missing), offending_methods=tuple(sorted(missing)))


def check_conflicts(dg: DependencyGraph, index: EcosystemIndex, lib: LibraryId, candidate: Version,
                    grandfathered: Grandfathered = NOTHING) -> CompatibilityVerdict:
    sources = tuple((p, r) for p, r in dg.requirements.get(lib, ()) if r.is_hard)
    if not sources or (lib, candidate) in grandfathered.conflicts:
        return CompatibilityVerdict()
    if all(r.contains(candidate) for _, r in sources):
        return CompatibilityVerdict()
    return CompatibilityVerdict(dependency_conflict=True, conflict_sources=sources)


def check_vertex(cg: CallGraph, dg: DependencyGraph, index: EcosystemIndex, lib: LibraryId,
                 candidate: Version, grandfathered: Grandfathered = NOTHING) -> CompatibilityVerdict:
    syn = check_syntactic(cg, index, lib, candidate, grandfathered)
    dc = check_conflicts(dg, index, lib, candidate, grandfathered)
    return replace(syn, dependency_conflict=dc.dependency_conflict, conflict_sources=dc.conflict_sources)


def vertex_ok(cg: CallGraph, dg: DependencyGraph, index: EcosystemIndex, lib: LibraryId,
              grandfathered: Grandfathered = NOTHING) -> bool:
    """Whether the library's currently selected version satisfies both constraints."""
    v = dg.vertices[lib]
    req = cg.required.get(lib)
    if req:
        missing = req - index.entry(lib, v).methods
        if missing and (not grandfathered.missing or missing - grandfathered.missing_for(lib)):
            return False
    for _, r in dg.requirements.get(lib, ()):
        if r.is_hard and not r.contains(v):
            return (lib, v) in grandfathered.conflicts
    return True


def conflicting_hard_ranges(dg: DependencyGraph, index: EcosystemIndex, lib: LibraryId) -> bool:
    hard = [r for _, r in dg.requirements.get(lib, ()) if r.is_hard]
    return bool(hard) and not allowed_versions(hard, index.versions(lib))


class DeadEnd(Exception):
    """No candidate version of a library survives the constraints."""

    def __init__(self, library: LibraryId | None, message: str = ""):
        self.library = library
        super().__init__(message or f"no compatible version left for {library}")


@dataclass(frozen=True)
class CandidateState:
    library: LibraryId
    original: Version
    surviving: tuple[Version, ...]
    marks: Mapping[Version, frozenset[Mark]] = field(default_factory=dict)

    @classmethod
    def initial(cls, index: EcosystemIndex, lib: LibraryId, original: Version) -> CandidateState:
        return cls(lib, original, index.versions(lib), {})

    def mark(self, version: Version, *marks: Mark) -> CandidateState:
        new = dict(self.marks)
        new[version] = new.get(version, frozenset()) | frozenset(marks)
        drop = {Mark.BREAKING, Mark.CONFLICTING} & set(marks)
        surviving = tuple(v for v in self.surviving if not (drop and v == version))
        return replace(self, surviving=surviving, marks=new)

    def without(self, excluded: Iterable[Version]) -> CandidateState:
        ex = set(excluded)
        return replace(self, surviving=tuple(v for v in self.surviving if v not in ex))


def filter_candidates(state: CandidateState, cg: CallGraph, dg: DependencyGraph, index: EcosystemIndex,
                      grandfathered: Grandfathered = NOTHING) -> CandidateState:
    """Drop candidates that break reachable usage or conflict with the current dependents.

    Raises DeadEnd when nothing survives.
    """
    lib = state.library
    surviving = []
    marks = dict(state.marks)
    for v in state.surviving:
        verdict = check_vertex(cg, dg, index, lib, v, grandfathered)
        if verdict.ok:
            surviving.append(v)
            continue
        new = set()
        if verdict.syntactic_breaking:
            new.add(Mark.BREAKING)
        if verdict.dependency_conflict:
            new.add(Mark.CONFLICTING)
        marks[v] = marks.get(v, frozenset()) | frozenset(new)
    result = replace(state, surviving=tuple(surviving), marks=marks)
    if not surviving:
        raise DeadEnd(lib)
    return result
