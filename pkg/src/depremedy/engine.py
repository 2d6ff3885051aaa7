"""Partitioned remediation: top-down windows, exact window solves, hard and soft backtracking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .compatibility import (
    CandidateState,
    DeadEnd,
    Grandfathered,
    Mark,
    conflicting_hard_ranges,
    filter_candidates,
    vertex_ok,
)
from .depgraph import DependencyGraph, Partition, ResolutionError, resolve, vertical_partitions
from .ecosystem import ROOT, EcosystemIndex, LibraryId, RootManifest, UnknownCoordinate
from .objectives import DEFAULT_WEIGHTS, RiskWeights, risk_of, vertex_risk
from .reachability import CallGraph, build_callgraph, refresh_callgraph
from .solver import Context, Solution, WindowProblem, solve_window
from .versions import Version

log = logging.getLogger(__name__)

STRATEGIES = ("engine", "latest", "greedy_security", "unpartitioned", "direct_nonmajor")


@dataclass(frozen=True)
class EngineConfig:
    weights: RiskWeights = DEFAULT_WEIGHTS
    budget: int = 8
    strategy: str = "engine"
    seed: int = 0
    soft_backtracking: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")


@dataclass
class BacktrackEvent:
    kind: str
    target: LibraryId
    trigger: LibraryId
    attempted: tuple[Version, ...]
    saved_f_vul: Fraction | None
    outcome: str


@dataclass
class WindowRecord:
    number: int
    variables: tuple[LibraryId, ...]
    filtered: dict[LibraryId, tuple[int, int]]
    selected: dict[LibraryId, Version]


@dataclass
class EngineState:
    dg: DependencyGraph
    cg: CallGraph
    overrides: dict[LibraryId, Version] = field(default_factory=dict)
    candidates: dict[LibraryId, CandidateState] = field(default_factory=dict)
    processed: set[LibraryId] = field(default_factory=set)
    backtrack_log: list[BacktrackEvent] = field(default_factory=list)
    budget: int = 0
    in_soft: bool = False
    windows: list[WindowRecord] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    budget_exhausted: bool = False


class PartitionFailure(Exception):
    pass


def original_defects(dg: DependencyGraph, cg: CallGraph, index: EcosystemIndex) -> Grandfathered:
    """Missing reachable callees and range conflicts already present before remediation."""
    missing = set()
    for lib, methods in cg.required.items():
        if lib == ROOT:
            continue
        present = index.entry(lib, dg.vertices[lib]).methods if lib in dg.vertices else frozenset()
        missing |= {(lib, m) for m in methods - present}
    conflicts = set()
    for lib, v in dg.vertices.items():
        for _, r in dg.requirements.get(lib, ()):
            if r.is_hard and not r.contains(v):
                conflicts.add((lib, v))
    return Grandfathered(frozenset(missing), frozenset(conflicts))


class Engine:
    def __init__(self, manifest: RootManifest, index: EcosystemIndex, config: EngineConfig = EngineConfig()):
        self.manifest = manifest
        self.index = index
        self.config = config
        self.weights = config.weights
        self.dg0 = resolve(manifest, index)
        self.cg0 = build_callgraph(self.dg0, manifest, index)
        self.grandfathered = original_defects(self.dg0, self.cg0, index)
        self.originals: dict[LibraryId, Version] = dict(self.dg0.vertices)
        self.state = EngineState(self.dg0, self.cg0, budget=config.budget)
        self.evaluations = 0

    # -- helpers ---------------------------------------------------------------

    def _order(self, libs: Iterable[LibraryId]) -> list[LibraryId]:
        levels = self.state.dg.levels
        return sorted(libs, key=lambda l: (levels.get(l, 1 << 30), l))

    def _context(self, base: Mapping[LibraryId, Version] | None = None) -> Context:
        return Context(self.manifest, self.index, self.weights,
                       base=self.state.overrides if base is None else base,
                       grandfathered=self.grandfathered, originals=self.originals,
                       base_cg=self.state.cg)

    def _ensure_state(self, lib: LibraryId) -> CandidateState:
        st = self.state.candidates.get(lib)
        if st is None:
            self.originals.setdefault(lib, self.state.dg.vertices[lib])
            st = CandidateState.initial(self.index, lib, self.originals[lib])
            self.state.candidates[lib] = st
        return st

    def _risk(self) -> Fraction:
        return risk_of(self.state.dg, self.state.cg, self.index, self.weights)

    def _snapshot(self):
        s = self.state
        return (dict(s.overrides), s.dg, s.cg, dict(s.candidates), set(s.processed))

    def _restore(self, snap) -> None:
        s = self.state
        s.overrides, s.dg, s.cg, s.candidates, s.processed = dict(snap[0]), snap[1], snap[2], dict(snap[3]), set(snap[4])

    def _set_overrides(self, overrides: dict[LibraryId, Version]) -> None:
        s = self.state
        dg = resolve(self.manifest, self.index, overrides)
        s.overrides = {k: v for k, v in overrides.items() if k in dg.vertices}
        s.dg = dg
        s.cg = refresh_callgraph(s.cg, dg, self.manifest, self.index)

    def _apply(self, assignment: Mapping[LibraryId, Version]) -> None:
        merged = dict(self.state.overrides)
        merged.update(assignment)
        self._set_overrides(merged)

    def _solve(self, variables: list[LibraryId], domains: Mapping[LibraryId, tuple[Version, ...]],
               base: Mapping[LibraryId, Version] | None = None,
               extra_checked: Iterable[LibraryId] = ()) -> Solution | None:
        ctx = self._context(base)
        problem = WindowProblem(tuple(variables), dict(domains),
                                frozenset(self.state.processed) | frozenset(variables) | frozenset(extra_checked))
        sol = solve_window(ctx, problem)
        self.evaluations += ctx.evaluations
        return sol

    def _descendants(self, lib: LibraryId) -> set[LibraryId]:
        adj: dict[LibraryId, list[LibraryId]] = {}
        for p, c in self.state.dg.edges:
            adj.setdefault(p, []).append(c)
        seen = {lib}
        stack = [lib]
        while stack:
            for nxt in adj.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    def _lowest_parents(self, lib: LibraryId) -> list[LibraryId]:
        levels = self.state.dg.levels
        parents = [p for p in self.state.dg.parents(lib) if p != ROOT and p in self.state.dg.vertices]
        return sorted(parents, key=lambda p: (-levels[p], p))

    # -- windows ---------------------------------------------------------------

    def process_window(self, window: Iterable[LibraryId]) -> None:
        s = self.state
        W = self._order(u for u in set(window) if u in s.dg.vertices)
        if not W:
            return
        record = WindowRecord(len(s.windows) + 1, tuple(W), {}, {})
        s.windows.append(record)
        dead = None
        for u in W:
            st = self._ensure_state(u)
            before = len(st.surviving)
            try:
                st = filter_candidates(st, s.cg, s.dg, self.index, self.grandfathered)
            except DeadEnd:
                # keep filtering the rest so a backtrack searches narrowed domains
                record.filtered[u] = (before, 0)
                dead = dead or u
                continue
            s.candidates[u] = st
            record.filtered[u] = (before, len(st.surviving))
        sol = None
        if dead is None:
            sol = self._solve(W, {u: s.candidates[u].surviving for u in W})
            if sol is None:
                dead = next((u for u in W if s.dg.vertices[u] not in s.candidates[u].surviving), W[0])
        if sol is None:
            if s.in_soft:
                raise DeadEnd(dead)
            sol, W = self.hard_backtrack(W, dead)
        self._apply(sol.assignment)
        record.selected = {u: s.dg.vertices[u] for u in W if u in s.dg.vertices}
        s.processed |= set(W)
        if self.config.soft_backtracking and not s.in_soft:
            self._soft_pass(W)

    def hard_backtrack(self, window: list[LibraryId], dead: LibraryId) -> tuple[Solution, list[LibraryId]]:
        """Re-open the lowest-level parent of a dead vertex with its current version excluded."""
        s = self.state
        attempts = []
        for p in self._lowest_parents(dead):
            if s.budget <= 0:
                s.budget_exhausted = True
                break
            s.budget -= 1
            current = s.dg.vertices[p]
            variables = self._order(set(window) | {p})
            reopened = self._descendants(p)
            domains = {}
            for u in variables:
                self._ensure_state(u)
                if u == p:
                    domains[u] = tuple(v for v in s.candidates[p].surviving if v != current)
                elif u in reopened:
                    domains[u] = self.index.versions(u)
                else:
                    domains[u] = s.candidates[u].surviving
            sol = self._solve(variables, domains)
            attempts.append(current)
            s.backtrack_log.append(BacktrackEvent("hard", p, dead, (current,), None,
                                                  "resolved" if sol else "dead_end"))
            if sol is not None:
                for u in reopened & set(variables):
                    if u != p:
                        s.candidates[u] = CandidateState.initial(self.index, u, self.originals[u])
                return sol, variables
        raise PartitionFailure(f"dead end at {dead}: no compatible version after "
                               f"{len(attempts)} hard backtrack attempt(s)")

    def _soft_pass(self, window: list[LibraryId]) -> None:
        s = self.state
        done: set[LibraryId] = set()
        for u in window:
            if u in done or u not in s.dg.vertices:
                continue
            chosen = s.dg.vertices[u]
            contribution = vertex_risk(u, chosen, s.cg, self.index, self.weights)
            if contribution == 0:
                continue
            best = min(vertex_risk(u, v, s.cg, self.index, self.weights) for v in self.index.versions(u))
            if contribution <= best:
                continue
            parents = self._lowest_parents(u)
            if not parents:
                continue
            done.add(u)
            self.soft_backtrack(window, u, parents[0])

    def soft_backtrack(self, window: list[LibraryId], vertex: LibraryId, parent: LibraryId) -> bool:
        """Try every other version of ``parent``; adopt the run with the least total risk.

        The parent's current version is only marked unpreferrable, so it wins
        whenever no alternative run does strictly better.
        """
        s = self.state
        current = s.dg.vertices[parent]
        st = self._ensure_state(parent).mark(current, Mark.UNPREFERRABLE)
        s.candidates[parent] = st
        saved = self._risk()
        snap = self._snapshot()
        runs = []
        attempted = []
        variables = [u for u in window if u != parent and u in s.dg.vertices]
        s.in_soft = True
        try:
            for alt in st.surviving:
                if alt == current:
                    continue
                attempted.append(alt)
                result = self._soft_run(variables, parent, alt)
                self._restore(snap)
                if result is not None:
                    runs.append((result.vector.f_vul, result.vector, self.index.versions(parent).index(alt),
                                 alt, result.assignment))
        finally:
            s.in_soft = False
        runs.sort(key=lambda r: (r[0], r[1], r[2]))
        adopted = bool(runs) and runs[0][0] < saved
        s.backtrack_log.append(BacktrackEvent("soft", parent, vertex, tuple(attempted), saved,
                                              f"adopted {runs[0][3]}" if adopted else "kept"))
        if adopted:
            _, _, _, alt, assignment = runs[0]
            self._apply({parent: alt, **assignment})
            s.processed |= set(variables) | {parent}
        return adopted

    def _soft_run(self, variables: list[LibraryId], parent: LibraryId, alt: Version) -> Solution | None:
        s = self.state
        base = dict(s.overrides)
        base[parent] = alt
        try:
            dg = resolve(self.manifest, self.index, base)
        except (ResolutionError, UnknownCoordinate):
            return None
        cg = refresh_callgraph(s.cg, dg, self.manifest, self.index)
        present = [u for u in variables if u in dg.vertices]
        reopened = self._descendants(parent)
        domains = {}
        for u in present:
            self._ensure_state(u)
            st = s.candidates[u]
            if u in reopened:
                st = CandidateState.initial(self.index, u, self.originals[u])
            try:
                st = filter_candidates(st, cg, dg, self.index, self.grandfathered)
            except DeadEnd:
                return None
            domains[u] = st.surviving
        prev = s.dg, s.cg
        s.dg, s.cg = dg, cg
        try:
            sol = self._solve(self._order(present), domains, base=base, extra_checked=[parent])
        finally:
            s.dg, s.cg = prev
        # None means this parent choice would need a hard backtrack: the run is discarded
        return sol

    # -- partitions ------------------------------------------------------------

    def _members(self, roots: Iterable[LibraryId]) -> set[LibraryId]:
        adj: dict[LibraryId, list[LibraryId]] = {}
        for p, c in self.state.dg.edges:
            adj.setdefault(p, []).append(c)
        seen = {r for r in roots if r in self.state.dg.vertices}
        stack = list(seen)
        while stack:
            for nxt in adj.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    def run_partition(self, part: Partition, label: str) -> None:
        s = self.state
        roots = part.roots(self.dg0)
        snap = self._snapshot()
        before = self._risk()
        s.budget = self.config.budget
        try:
            if self.config.strategy == "unpartitioned":
                self.process_window(self._members(roots))
            else:
                k = 1
                while True:
                    members = self._members(roots)
                    if not members:
                        break
                    top = max(s.dg.levels[m] for m in members)
                    if k > max(1, top - 1):
                        break
                    self.process_window([m for m in members if s.dg.levels[m] in (k, k + 1)])
                    k += 1
            for _ in range(4):
                left = [m for m in self._members(roots) if m not in s.processed]
                if not left:
                    break
                self.process_window(left)
        except PartitionFailure as e:
            self._restore(snap)
            s.processed |= self._members(roots)
            s.failures.append(f"partition {label}: {e}; original versions retained")
            log.info("partition %s failed: %s", label, e)
            return
        if self._risk() > before:
            self._restore(snap)
            s.processed |= self._members(roots)

    def run(self) -> EngineState:
        s = self.state
        if self.config.strategy == "unpartitioned":
            parts = [Partition(frozenset(self.dg0.vertices))] if self.dg0.vertices else []
        else:
            parts = vertical_partitions(self.dg0)
        for i, part in enumerate(parts, 1):
            self.run_partition(part, f"{i} ({part.key})")
        if not self.verify():
            s.failures.append("final verification failed; all original versions retained")
            self._set_overrides({})
        return s

    def verify(self) -> bool:
        s = self.state
        return all(vertex_ok(s.cg, s.dg, self.index, lib, self.grandfathered) for lib in s.dg.vertices) \
            and not any(conflicting_hard_ranges(s.dg, self.index, lib) for lib in s.dg.vertices)
