"""Dependency graph resolution, levels, and vertical/horizontal partitioning."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .ecosystem import ROOT, EcosystemIndex, LibraryId, RootManifest, UnknownCoordinate
from .versions import Version, VersionRequirement, allowed_versions


class ResolutionError(Exception):
    pass


class DependencyConflict(ResolutionError):
    """The hard ranges demanded by the dependents of a library do not intersect."""

    def __init__(self, lib: LibraryId, sources: list[tuple[LibraryId, VersionRequirement]]):
        self.lib = lib
        self.sources = sources
        detail = "; ".join(f"{p} requires {r}" for p, r in sources)
        super().__init__(f"dependency conflict on {lib}: {detail}")


Requirement = tuple[LibraryId, VersionRequirement]


@dataclass(frozen=True, eq=False)
class DependencyGraph:
    vertices: Mapping[LibraryId, Version]
    edges: frozenset[tuple[LibraryId, LibraryId]]
    levels: Mapping[LibraryId, int]
    # every non-test requirement on a library from a present dependent, in BFS order
    requirements: Mapping[LibraryId, tuple[Requirement, ...]] = field(default_factory=dict)
    manifest: RootManifest | None = field(default=None, repr=False)
    overrides: Mapping[LibraryId, Version] = field(default_factory=dict, repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DependencyGraph):
            return NotImplemented
        return (dict(self.vertices) == dict(other.vertices) and self.edges == other.edges
                and dict(self.levels) == dict(other.levels))

    __hash__ = None  # type: ignore[assignment]

    def parents(self, lib: LibraryId) -> list[LibraryId]:
        return sorted({p for p, _ in self.requirements.get(lib, ())})

    def children(self, lib: LibraryId) -> list[LibraryId]:
        return sorted(c for p, c in self.edges if p == lib)

    def __contains__(self, lib: object) -> bool:
        return lib in self.vertices


def resolve(
    manifest: RootManifest,
    index: EcosystemIndex,
    overrides: Mapping[LibraryId, Version] | None = None,
) -> DependencyGraph:
    """Breadth-first, nearest-wins mediation with declaration-order tiebreak.

    Overrides force a library's version wherever it appears.  Test-scoped
    dependencies are pruned.  Raises DependencyConflict when the hard ranges
    on some present library have an empty intersection.
    """
    overrides = dict(overrides or {})
    vertices: dict[LibraryId, Version] = {}
    levels: dict[LibraryId, int] = {}
    edges: set[tuple[LibraryId, LibraryId]] = set()
    reqs: dict[LibraryId, list[Requirement]] = {}

    queue: deque[LibraryId] = deque([ROOT])
    while queue:
        parent = queue.popleft()
        if parent == ROOT:
            deps = manifest.direct_dependencies
            depth = 0
        else:
            deps = index.entry(parent, vertices[parent]).dependencies
            depth = levels[parent]
        for dep in deps:
            if dep.scope == "test":
                continue
            if not index.has(dep.lib):
                raise UnknownCoordinate(f"unknown library {dep.lib} required by {parent}")
            reqs.setdefault(dep.lib, []).append((parent, dep.requirement))
            edges.add((parent, dep.lib))
            if dep.lib in vertices:
                continue
            vertices[dep.lib] = _select(dep.lib, dep.requirement, index, overrides, parent)
            levels[dep.lib] = depth + 1
            queue.append(dep.lib)

    for lib, sources in reqs.items():
        hard = [r for _, r in sources if r.is_hard]
        if hard and not allowed_versions(hard, index.versions(lib)):
            raise DependencyConflict(lib, [(p, r) for p, r in sources if r.is_hard])

    return DependencyGraph(
        vertices=vertices,
        edges=frozenset(edges),
        levels=levels,
        requirements={k: tuple(v) for k, v in reqs.items()},
        manifest=manifest,
        overrides=overrides,
    )


def _select(lib, requirement, index, overrides, parent) -> Version:
    if lib in overrides:
        v = overrides[lib]
        if not index.has(lib, v):
            raise UnknownCoordinate(f"override {lib}={v} is not a published version")
        return v
    if requirement.is_hard:
        allowed = allowed_versions([requirement], index.versions(lib))
        if not allowed:
            raise DependencyConflict(lib, [(parent, requirement)])
        return allowed[-1]
    pin = requirement.pin
    if not index.has(lib, pin):
        raise UnknownCoordinate(f"{parent} pins unpublished version {lib}={pin}")
    # return the published object so original_text is the dataset's spelling
    versions = index.versions(lib)
    return versions[versions.index(pin)]


def apply_assignment(
    dg: DependencyGraph, index: EcosystemIndex, changes: Mapping[LibraryId, Version]
) -> DependencyGraph:
    """Re-resolve from the root with ``changes`` layered over earlier overrides."""
    for lib in changes:
        if lib not in dg.vertices:
            raise KeyError(f"{lib} is not in the dependency graph")
    if dg.manifest is None:
        raise ValueError("graph was not produced by resolve()")
    merged = dict(dg.overrides)
    merged.update(changes)
    return resolve(dg.manifest, index, merged)


def bfs_levels(dg: DependencyGraph) -> dict[LibraryId, int]:
    """Shortest hop count from the root, recomputed from the edge set alone."""
    adj: dict[LibraryId, list[LibraryId]] = {}
    for p, c in dg.edges:
        adj.setdefault(p, []).append(c)
    dist = {ROOT: 0}
    queue = deque([ROOT])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    del dist[ROOT]
    return dist


# -- partitioning --------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    member_vertices: frozenset[LibraryId]

    @property
    def key(self) -> LibraryId:
        return min(self.member_vertices)

    def roots(self, dg: DependencyGraph) -> list[LibraryId]:
        return sorted(v for v in self.member_vertices if (ROOT, v) in dg.edges)


def vertical_partitions(dg: DependencyGraph) -> list[Partition]:
    """Connected components of the graph once the root and its edges are removed."""
    adj: dict[LibraryId, set[LibraryId]] = {v: set() for v in dg.vertices}
    for p, c in dg.edges:
        if p == ROOT:
            continue
        adj[p].add(c)
        adj[c].add(p)
    seen: set[LibraryId] = set()
    parts = []
    for start in sorted(dg.vertices):
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in comp:
                    comp.add(nxt)
                    stack.append(nxt)
        seen |= comp
        parts.append(Partition(frozenset(comp)))
    return sorted(parts, key=lambda p: p.key)


def horizontal_windows(p: Partition, dg: DependencyGraph) -> list[frozenset[LibraryId]]:
    """Adjacent-level vertex groups of a partition, emitted top-down."""
    by_level: dict[int, set[LibraryId]] = {}
    for v in p.member_vertices:
        by_level.setdefault(dg.levels[v], set()).add(v)
    if not by_level:
        return []
    lo, hi = min(by_level), max(by_level)
    if hi - lo < 2:
        return [frozenset(p.member_vertices)]
    return [
        frozenset(by_level.get(k, set()) | by_level.get(k + 1, set()))
        for k in range(lo, hi)
    ]
