"""Remediation strategies: the partitioned engine and the comparison baselines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .depgraph import DependencyGraph, ResolutionError, resolve
from .ecosystem import ROOT, EcosystemIndex, LibraryId, RootManifest, UnknownCoordinate
from .engine import BacktrackEvent, Engine, EngineConfig, WindowRecord
from .objectives import change_vector, vertex_risk
from .reachability import CallGraph, ReachabilityClass, build_callgraph, classify_record, refresh_callgraph
from .versions import Version


@dataclass
class Outcome:
    strategy: str
    dg0: DependencyGraph
    cg0: CallGraph
    dg: DependencyGraph
    cg: CallGraph
    failures: list[str] = field(default_factory=list)
    backtrack_log: list[BacktrackEvent] = field(default_factory=list)
    windows: list[WindowRecord] = field(default_factory=list)
    budget_exhausted: bool = False


Chooser = Callable[[LibraryId, DependencyGraph, CallGraph], "Version | None"]


def _top_down(manifest: RootManifest, index: EcosystemIndex, choose: Chooser,
              only: Callable[[LibraryId, DependencyGraph], bool] = lambda lib, dg: True):
    """Visit libraries shallowest first and apply each choice that still resolves."""
    dg = resolve(manifest, index)
    cg = build_callgraph(dg, manifest, index)
    overrides: dict[LibraryId, Version] = {}
    visited: set[LibraryId] = set()
    while True:
        pending = sorted((l for l in dg.vertices if l not in visited and only(l, dg)),
                         key=lambda l: (dg.levels[l], l))
        if not pending:
            return dg, cg
        lib = pending[0]
        visited.add(lib)
        v = choose(lib, dg, cg)
        if v is None or v == dg.vertices[lib]:
            continue
        trial = {**overrides, lib: v}
        try:
            new = resolve(manifest, index, trial)
        except (ResolutionError, UnknownCoordinate):
            continue
        overrides = {k: x for k, x in trial.items() if k in new.vertices}
        dg = new
        cg = refresh_callgraph(cg, dg, manifest, index)


def _vulnerable(index: EcosystemIndex, lib: LibraryId, v: Version) -> bool:
    return any(r.affects(v) for r in index.records(lib))


def latest(manifest, index, config) -> tuple[DependencyGraph, CallGraph]:
    """Move every vulnerable library to its newest release, compatibility unchecked."""
    def choose(lib, dg, cg):
        if _vulnerable(index, lib, dg.vertices[lib]):
            return index.versions(lib)[-1]
        return None
    return _top_down(manifest, index, choose)


def greedy_security(manifest, index, config) -> tuple[DependencyGraph, CallGraph]:
    """Per library, the version with the fewest reachable or unknown vulnerabilities, even if it breaks."""
    weights = config.weights
    dg0 = resolve(manifest, index)

    def choose(lib, dg, cg):
        if not _vulnerable(index, lib, dg.vertices[lib]):
            return None
        versions = index.versions(lib)
        orig = dg0.vertices.get(lib, dg.vertices[lib])

        def key(v):
            serious = sum(1 for r in index.records(lib) if r.affects(v)
                          and classify_record(r, cg) is not ReachabilityClass.UNREACHABLE)
            return serious, vertex_risk(lib, v, cg, index, weights), change_vector(versions, orig, v), versions.index(v)
        return min(versions, key=key)
    return _top_down(manifest, index, choose)


def direct_nonmajor(manifest, index, config) -> tuple[DependencyGraph, CallGraph]:
    """Bump vulnerable direct dependencies to their newest clean release in the same major line."""
    def choose(lib, dg, cg):
        cur = dg.vertices[lib]
        if not _vulnerable(index, lib, cur):
            return None
        same = [v for v in index.versions(lib)
                if v.segment(0) == cur.segment(0) and v > cur and not _vulnerable(index, lib, v)]
        return same[-1] if same else None
    return _top_down(manifest, index, choose, only=lambda lib, dg: (ROOT, lib) in dg.edges)


BASELINES = {"latest": latest, "greedy_security": greedy_security, "direct_nonmajor": direct_nonmajor}


def run_strategy(manifest: RootManifest, index: EcosystemIndex, config: EngineConfig = EngineConfig()) -> Outcome:
    if config.strategy in ("engine", "unpartitioned"):
        engine = Engine(manifest, index, config)
        st = engine.run()
        return Outcome(config.strategy, engine.dg0, engine.cg0, st.dg, st.cg, list(st.failures),
                       list(st.backtrack_log), list(st.windows), st.budget_exhausted)
    dg0 = resolve(manifest, index)
    cg0 = build_callgraph(dg0, manifest, index)
    dg, cg = BASELINES[config.strategy](manifest, index, config)
    return Outcome(config.strategy, dg0, cg0, dg, cg)
