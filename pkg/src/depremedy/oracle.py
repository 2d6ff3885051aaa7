"""Ground-truth checkers: exhaustive search and a simulated compile.

Everything here is deliberately naive.  Graphs are rebuilt from scratch for
every assignment, and reachability and constraint checks are re-derived
locally instead of going through the optimizer's cached paths.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .depgraph import DependencyGraph, ResolutionError, resolve
from .ecosystem import ROOT, EcosystemIndex, LibraryId, MethodId, RootManifest, UnknownCoordinate, library_closure
from .objectives import DEFAULT_WEIGHTS, ObjectiveVector, RiskWeights, change_vector, exact
from .versions import Version, allowed_versions


class OracleRefusal(Exception):
    """The instance exceeds the enumeration bound."""


@dataclass(frozen=True)
class OracleLimits:
    max_combinations: int = 100_000


@dataclass(frozen=True)
class CompileReport:
    missing_calls: tuple[tuple[str, str], ...] = ()
    conflicts: tuple[tuple[LibraryId, tuple[tuple[LibraryId, str], ...]], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.missing_calls and not self.conflicts


@dataclass
class OracleResult:
    assignment: dict[LibraryId, Version]
    vector: ObjectiveVector
    explored: int = 0
    tie: tuple = field(default=())


# -- independent checks --------------------------------------------------------


def _reachable_nodes(dg: DependencyGraph, manifest: RootManifest, index: EcosystemIndex):
    """Reachable (lib, method) nodes plus every reachable call (caller, target lib, target method)."""
    calls: dict[tuple[LibraryId, MethodId], list[tuple[LibraryId, MethodId]]] = {}
    surface = {ROOT: manifest.methods}
    invocations = {ROOT: manifest.invocations}
    for lib, v in dg.vertices.items():
        e = index.entry(lib, v)
        surface[lib] = e.methods
        invocations[lib] = e.invocations
    for lib, invs in invocations.items():
        for inv in invs:
            calls.setdefault((lib, inv.caller), []).append((inv.target_library, inv.target_method))
    entry = manifest.entry_points if manifest.entry_points is not None else manifest.methods
    seen = {(ROOT, m) for m in entry}
    queue = deque(seen)
    made = []
    while queue:
        node = queue.popleft()
        for target in calls.get(node, ()):
            made.append((node, target))
            lib, m = target
            if lib in surface and m in surface[lib] and target not in seen:
                seen.add(target)
                queue.append(target)
    return seen, made, surface


def _missing(dg, manifest, index) -> set[tuple[tuple[LibraryId, MethodId], LibraryId, MethodId]]:
    _, made, surface = _reachable_nodes(dg, manifest, index)
    return {(src, lib, m) for src, (lib, m) in made
            if src[0] != lib and (lib not in surface or m not in surface[lib])}


def _conflicts(dg: DependencyGraph) -> set[tuple[LibraryId, Version]]:
    out = set()
    for lib, v in dg.vertices.items():
        for _, r in dg.requirements.get(lib, ()):
            if r.is_hard and not r.contains(v):
                out.add((lib, v))
    return out


@dataclass(frozen=True)
class Baseline:
    """Defects of the original resolution, which a plan is never blamed for."""

    missing: frozenset[tuple[LibraryId, MethodId]]
    conflicts: frozenset[tuple[LibraryId, Version]]
    originals: Mapping[LibraryId, Version]

    @classmethod
    def of(cls, manifest: RootManifest, index: EcosystemIndex) -> Baseline:
        dg0 = resolve(manifest, index)
        missing = frozenset((lib, m) for _, lib, m in _missing(dg0, manifest, index))
        return cls(missing, frozenset(_conflicts(dg0)), dict(dg0.vertices))


def simulate_compile(dg: DependencyGraph, manifest: RootManifest, index: EcosystemIndex,
                     baseline: Baseline | None = None) -> CompileReport:
    """Would the project still build: reachable calls resolve and hard ranges hold."""
    if baseline is None:
        baseline = Baseline.of(manifest, index)
    missing = sorted(
        (f"{src[0]}/{src[1]}", f"{lib}/{m}")
        for src, lib, m in _missing(dg, manifest, index)
        if (lib, m) not in baseline.missing
    )
    conflicts = []
    for lib, v in sorted(_conflicts(dg)):
        if (lib, v) in baseline.conflicts:
            continue
        sources = tuple((p, str(r)) for p, r in dg.requirements.get(lib, ()) if r.is_hard)
        conflicts.append((lib, sources))
    return CompileReport(tuple(dict.fromkeys(missing)), tuple(conflicts))


def _feasible(dg, manifest, index, baseline: Baseline, libs=None) -> bool:
    libs = set(dg.vertices) if libs is None else set(libs) & set(dg.vertices)
    for src, lib, m in _missing(dg, manifest, index):
        if lib in libs and (lib, m) not in baseline.missing:
            return False
    return all(pair in baseline.conflicts for pair in _conflicts(dg) if pair[0] in libs)


def _risk(dg: DependencyGraph, manifest, index, weights: RiskWeights) -> Fraction:
    reachable, _, _ = _reachable_nodes(dg, manifest, index)
    total = Fraction(0)
    for lib, v in dg.vertices.items():
        for r in index.records(lib):
            if not r.affects(v):
                continue
            if r.vulnerable_methods is None:
                w = weights.theta_unknown
            elif any((lib, m) in reachable for m in r.vulnerable_methods):
                w = weights.theta_reachable
            else:
                w = weights.theta_unreachable
            total += exact(w) * exact(r.cvss)
    return total


def _vector(dg, manifest, index, weights, originals, libs) -> ObjectiveVector:
    vec = ObjectiveVector(_risk(dg, manifest, index, weights))
    for lib in sorted(libs):
        if lib in dg.vertices and lib in originals:
            vec = vec + change_vector(index.versions(lib), originals[lib], dg.vertices[lib])
    return vec


def _tie(assign: Mapping[LibraryId, Version], index: EcosystemIndex) -> tuple:
    return tuple((lib, index.versions(lib).index(assign[lib])) for lib in sorted(assign))


# -- exhaustive window search --------------------------------------------------


def exhaustive_window(manifest: RootManifest, index: EcosystemIndex, variables: Sequence[LibraryId],
                      domains: Mapping[LibraryId, Sequence[Version]], checked, *,
                      base: Mapping[LibraryId, Version] | None = None, baseline: Baseline | None = None,
                      originals: Mapping[LibraryId, Version] | None = None,
                      weights: RiskWeights = DEFAULT_WEIGHTS,
                      limits: OracleLimits = OracleLimits()) -> OracleResult | None:
    """Enumerate the whole Cartesian product of window candidates."""
    total = 1
    for x in variables:
        total *= len(domains[x])
    if total > limits.max_combinations:
        raise OracleRefusal(f"{total} combinations exceed the bound of {limits.max_combinations}")
    baseline = baseline or Baseline.of(manifest, index)
    originals = baseline.originals if originals is None else originals
    best = None
    explored = 0
    for combo in itertools.product(*(domains[x] for x in variables)):
        assign = dict(zip(variables, combo))
        overrides = dict(base or {})
        overrides.update(assign)
        explored += 1
        try:
            dg = resolve(manifest, index, overrides)
        except (ResolutionError, UnknownCoordinate):
            continue
        if not _feasible(dg, manifest, index, baseline, checked):
            continue
        key = (_vector(dg, manifest, index, weights, originals, variables), _tie(assign, index))
        if best is None or key < best[0]:
            best = (key, assign)
    if best is None:
        return None
    return OracleResult(best[1], best[0][0], explored, best[0][1])


# -- global brute force --------------------------------------------------------


def _walk(manifest: RootManifest, index: EcosystemIndex, overrides: Mapping[LibraryId, Version]):
    """Present libraries in breadth-first discovery order; a version is None when unselectable."""
    order: list[LibraryId] = []
    chosen: dict[LibraryId, Version | None] = {}
    queue = deque([(ROOT, None)])
    while queue:
        lib, v = queue.popleft()
        deps = manifest.direct_dependencies if lib == ROOT else index.entry(lib, v).dependencies
        for d in deps:
            if d.scope == "test" or d.lib in chosen:
                continue
            if d.lib in overrides:
                pick = overrides[d.lib]
            elif d.requirement.is_hard:
                allowed = allowed_versions([d.requirement], index.versions(d.lib))
                pick = allowed[-1] if allowed else None
            else:
                pick = d.requirement.pin if index.has(d.lib, d.requirement.pin) else None
            chosen[d.lib] = pick
            order.append(d.lib)
            if pick is not None:
                queue.append((d.lib, pick))
    return order, chosen


def assignment_space(manifest: RootManifest, index: EcosystemIndex) -> int:
    reach = library_closure(index.libraries)
    libs = set()
    for d in manifest.direct_dependencies:
        if d.scope != "test":
            libs |= reach[d.lib]
    total = 1
    for lib in libs:
        total *= len(index.versions(lib))
    return total


def brute_force_optimum(manifest: RootManifest, index: EcosystemIndex, weights: RiskWeights = DEFAULT_WEIGHTS,
                        limits: OracleLimits = OracleLimits()) -> OracleResult:
    """Global lexicographic optimum over every version assignment of the libraries that can appear.

    Secondary terms are measured against the original resolution.  Raises
    OracleRefusal when the raw assignment space exceeds the bound.
    """
    space = assignment_space(manifest, index)
    if space > limits.max_combinations:
        raise OracleRefusal(f"{space} global assignments exceed the bound of {limits.max_combinations}")
    baseline = Baseline.of(manifest, index)
    best = None
    explored = 0
    stack: list[dict[LibraryId, Version]] = [{}]
    while stack:
        fixed = stack.pop()
        order, chosen = _walk(manifest, index, fixed)
        open_ = next((lib for lib in order if lib not in fixed), None)
        if open_ is not None:
            for v in reversed(index.versions(open_)):
                stack.append({**fixed, open_: v})
            continue
        explored += 1
        try:
            dg = resolve(manifest, index, fixed)
        except (ResolutionError, UnknownCoordinate):
            continue
        if not _feasible(dg, manifest, index, baseline):
            continue
        assign = dict(dg.vertices)
        key = (_vector(dg, manifest, index, weights, baseline.originals, assign), _tie(assign, index))
        if best is None or key < best[0]:
            best = (key, assign)
    # the original resolution is always feasible, so best is set
    return OracleResult(best[1], best[0][0], explored, best[0][1])
