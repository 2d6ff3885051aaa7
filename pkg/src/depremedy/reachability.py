"""Modular call graph assembled from per-library call facts, and reachability queries."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .depgraph import DependencyGraph, apply_assignment
from .ecosystem import ROOT, EcosystemIndex, LibraryId, MethodId, RootManifest
from .versions import Version

Node = tuple[LibraryId, MethodId]
Edge = tuple[Node, Node]
# (calling node, target library, target method) for a call whose target is missing
Dangling = tuple[Node, LibraryId, MethodId]


class ReachabilityClass(str, enum.Enum):
    REACHABLE = "reachable"
    UNREACHABLE = "unreachable"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class _Fragment:
    nodes: frozenset[Node]
    edges: frozenset[Edge]
    dangling: frozenset[Dangling]
    targets: frozenset[LibraryId]


@dataclass(frozen=True, eq=False)
class CallGraph:
    nodes: frozenset[Node]
    edges: frozenset[Edge]
    entry_points: frozenset[Node]
    dangling: frozenset[Dangling]
    reachable: frozenset[Node] = field(default=frozenset())
    fragments: Mapping[LibraryId, _Fragment] = field(default_factory=dict, repr=False)
    versions: Mapping[LibraryId, Version] = field(default_factory=dict, repr=False)
    invoked: Mapping[LibraryId, frozenset[MethodId]] = field(default_factory=dict, repr=False)
    required: Mapping[LibraryId, frozenset[MethodId]] = field(default_factory=dict, repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CallGraph):
            return NotImplemented
        return (self.nodes == other.nodes and self.edges == other.edges
                and self.entry_points == other.entry_points and self.dangling == other.dangling)

    __hash__ = None  # type: ignore[assignment]

    def edge_list(self) -> list[str]:
        """Sorted, human-readable edge list (debug output and golden tests)."""
        lines = [f"{_fmt(s)} -> {_fmt(t)}" for s, t in self.edges]
        lines += [f"{_fmt(s)} -> {lib}/{m} [missing]" for s, lib, m in self.dangling]
        return sorted(lines)


def _fmt(node: Node) -> str:
    return f"{node[0]}/{node[1]}"


def _fragment(lib: LibraryId, dg: DependencyGraph, manifest: RootManifest, index: EcosystemIndex) -> _Fragment:
    if lib == ROOT:
        surface = manifest.methods
        invocations = manifest.invocations
    else:
        entry = index.entry(lib, dg.vertices[lib])
        surface = entry.methods
        invocations = entry.invocations
    nodes = frozenset((lib, m) for m in surface)
    edges = []
    dangling = []
    for inv in invocations:
        src = (lib, inv.caller)
        target = inv.target_library
        if target == lib:
            present = inv.target_method in surface
        elif target in dg.vertices:
            present = inv.target_method in index.entry(target, dg.vertices[target]).methods
        else:
            present = False
        if present:
            edges.append((src, (target, inv.target_method)))
        else:
            dangling.append((src, target, inv.target_method))
    targets = frozenset(inv.target_library for inv in invocations)
    return _Fragment(nodes, frozenset(edges), frozenset(dangling), targets)


def _assemble(fragments: dict[LibraryId, _Fragment], manifest: RootManifest,
              versions: Mapping[LibraryId, Version]) -> CallGraph:
    nodes: set[Node] = set()
    edges: set[Edge] = set()
    dangling: set[Dangling] = set()
    adj: dict[Node, list[Node]] = {}
    for frag in fragments.values():
        nodes |= frag.nodes
        edges |= frag.edges
        dangling |= frag.dangling
        for s, t in frag.edges:
            adj.setdefault(s, []).append(t)
    entry_methods = manifest.entry_points if manifest.entry_points is not None else manifest.methods
    entry = frozenset((ROOT, m) for m in entry_methods)
    seen = set(entry)
    queue = deque(entry)
    while queue:
        for nxt in adj.get(queue.popleft(), ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    invoked: dict[LibraryId, set[MethodId]] = {}
    required: dict[LibraryId, set[MethodId]] = {}
    for s, t in edges:
        if s in seen and s[0] != t[0]:
            invoked.setdefault(t[0], set()).add(t[1])
            required.setdefault(t[0], set()).add(t[1])
    for s, lib, m in dangling:
        if s in seen and s[0] != lib:
            required.setdefault(lib, set()).add(m)
    return CallGraph(
        nodes=frozenset(nodes),
        edges=frozenset(edges),
        entry_points=entry,
        dangling=frozenset(dangling),
        reachable=frozenset(seen),
        fragments=fragments,
        versions=dict(versions),
        invoked={k: frozenset(v) for k, v in invoked.items()},
        required={k: frozenset(v) for k, v in required.items()},
    )


def build_callgraph(dg: DependencyGraph, manifest: RootManifest, index: EcosystemIndex) -> CallGraph:
    fragments = {ROOT: _fragment(ROOT, dg, manifest, index)}
    for lib in dg.vertices:
        fragments[lib] = _fragment(lib, dg, manifest, index)
    return _assemble(fragments, manifest, dg.vertices)


def refresh_callgraph(cg: CallGraph, dg: DependencyGraph, manifest: RootManifest,
                      index: EcosystemIndex) -> CallGraph:
    """Rebuild only the fragments touched by version or presence changes."""
    old = cg.versions
    changed = {lib for lib in set(old) | set(dg.vertices) if old.get(lib) != dg.vertices.get(lib)}
    fragments: dict[LibraryId, _Fragment] = {}
    for lib in [ROOT, *dg.vertices]:
        frag = cg.fragments.get(lib)
        if frag is None or lib in changed or frag.targets & changed:
            frag = _fragment(lib, dg, manifest, index)
        fragments[lib] = frag
    return _assemble(fragments, manifest, dg.vertices)


def update_after_swap(cg: CallGraph, dg: DependencyGraph, index: EcosystemIndex,
                      lib: LibraryId, new_version: Version) -> CallGraph:
    """Swap one library's version, re-resolve, and patch the call graph.

    The result equals ``build_callgraph`` on the swapped graph.
    """
    if not index.has(lib, new_version):
        raise KeyError(f"unknown version {new_version} of {lib}")
    new_dg = apply_assignment(dg, index, {lib: new_version})
    return refresh_callgraph(cg, new_dg, dg.manifest, index)


def classify_record(record, cg: CallGraph) -> ReachabilityClass:
    if record.vulnerable_methods is None:
        return ReachabilityClass.UNKNOWN
    lib = record.library
    if any((lib, m) in cg.reachable for m in record.vulnerable_methods):
        return ReachabilityClass.REACHABLE
    return ReachabilityClass.UNREACHABLE


def classify_vulnerabilities(cg: CallGraph, dg: DependencyGraph,
                             index: EcosystemIndex) -> dict[str, ReachabilityClass]:
    out = {}
    for lib in sorted(dg.vertices):
        v = dg.vertices[lib]
        for rec in index.records(lib):
            if rec.affects(v):
                out[rec.id] = classify_record(rec, cg)
    return out


def reachable_invocations_into(cg: CallGraph, lib: LibraryId) -> frozenset[MethodId]:
    """Methods of ``lib`` called, along existing edges, by reachable code outside it."""
    if lib not in cg.versions:
        raise KeyError(f"{lib} is not in the dependency graph")
    return cg.invoked.get(lib, frozenset())


def required_methods(cg: CallGraph, lib: LibraryId) -> frozenset[MethodId]:
    """Like reachable_invocations_into, but also counting reachable calls that dangle."""
    return cg.required.get(lib, frozenset())
