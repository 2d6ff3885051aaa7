"""Exact lexicographic optimization over a window of library versions.

The search conditions on one variable at a time (shallowest first) and, after
each choice, splits the remaining variables into groups whose downstream
closures do not overlap; such groups cannot influence each other's risk or
constraints and are solved independently.  Branches whose lexicographic
lower bound already exceeds the incumbent are pruned.  Nothing is
approximated: the result equals exhaustive enumeration, including the
tie-break on (library id, version index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .compatibility import NOTHING, Grandfathered, vertex_ok
from .depgraph import DependencyConflict, ResolutionError, resolve
from .ecosystem import EcosystemIndex, LibraryId, RootManifest, UnknownCoordinate
from .objectives import DEFAULT_WEIGHTS, ObjectiveVector, RiskWeights, change_vector, exact, vertex_risk
from .reachability import CallGraph, build_callgraph, refresh_callgraph
from .versions import Version, VersionRequirement, allowed_versions

Assignment = dict[LibraryId, Version]


@dataclass(frozen=True)
class Evaluation:
    """What the search needs from one resolved assignment; graphs are dropped to keep the memo small."""

    vertices: Mapping[LibraryId, Version]
    risk: Fraction
    risks: Mapping[LibraryId, Fraction]
    broken: frozenset[LibraryId]


class Context:
    """Fixed surroundings of a search: dataset, overrides, and bookkeeping caches."""

    def __init__(self, manifest: RootManifest, index: EcosystemIndex, weights: RiskWeights = DEFAULT_WEIGHTS,
                 base: Mapping[LibraryId, Version] | None = None, grandfathered: Grandfathered = NOTHING,
                 originals: Mapping[LibraryId, Version] | None = None, base_cg: CallGraph | None = None):
        self.manifest = manifest
        self.index = index
        self.weights = weights
        self.base = dict(base or {})
        self.grandfathered = grandfathered
        self.originals = dict(originals or {})
        self.base_cg = base_cg
        self.evaluations = 0
        self.resolved = 0  # evaluations (cached or not) that produced a graph
        self._cache: dict[tuple, Evaluation | None] = {}
        self._conflicts: dict[tuple, LibraryId] = {}
        self._targets: dict[tuple[LibraryId, Version], frozenset[LibraryId]] = {}
        self._floor: dict[tuple[LibraryId, Version], Fraction] = {}
        self._hard: dict[LibraryId, tuple[VersionRequirement, ...]] | None = None
        self._select: dict[tuple, Version | None] = {}
        self._declared: dict[tuple[LibraryId, Version], frozenset[LibraryId]] = {}

    def evaluate(self, assign: Mapping[LibraryId, Version]) -> Evaluation | None:
        key = tuple(sorted(assign.items()))
        if key in self._cache:
            hit = self._cache[key]
            self.resolved += hit is not None
            return hit
        overrides = dict(self.base)
        overrides.update(assign)
        self.evaluations += 1
        try:
            dg = resolve(self.manifest, self.index, overrides)
        except DependencyConflict as e:
            self._conflicts[key] = e.lib
            result = None
        except (ResolutionError, UnknownCoordinate):
            result = None
        else:
            if self.base_cg is not None:
                cg = refresh_callgraph(self.base_cg, dg, self.manifest, self.index)
            else:
                cg = build_callgraph(dg, self.manifest, self.index)
                self.base_cg = cg
            risks = {lib: vertex_risk(lib, v, cg, self.index, self.weights)
                     for lib, v in dg.vertices.items() if self.index.vulnerabilities.get(lib)}
            broken = frozenset(lib for lib in dg.vertices
                               if not vertex_ok(cg, dg, self.index, lib, self.grandfathered))
            result = Evaluation(dg.vertices, sum(risks.values(), Fraction(0)), risks, broken)
        self._cache[key] = result
        self.resolved += result is not None
        return result

    def conflict(self, assign: Mapping[LibraryId, Version]) -> LibraryId | None:
        """The library whose hard ranges clashed when ``assign`` failed to resolve."""
        if self.evaluate(assign) is not None:
            return None
        return self._conflicts.get(tuple(sorted(assign.items())))

    def feasible(self, ev: Evaluation, libs: Iterable[LibraryId]) -> bool:
        for lib in libs:
            if lib in ev.broken:
                return False
        return True

    def targets(self, lib: LibraryId, v: Version) -> frozenset[LibraryId]:
        """Libraries a version can touch directly: declared dependencies and call targets."""
        key = (lib, v)
        out = self._targets.get(key)
        if out is None:
            entry = self.index.entry(lib, v)
            out = frozenset({d.lib for d in entry.dependencies if d.scope != "test"}
                            | {i.target_library for i in entry.invocations} - {lib})
            self._targets[key] = out
        return out

    def select(self, lib: LibraryId, req: VersionRequirement) -> Version | None:
        """Version a declaration picks when it wins mediation (None if it cannot resolve)."""
        key = (lib, req)
        if key not in self._select:
            published = self.index.versions(lib) if self.index.has(lib) else ()
            if req.is_hard:
                allowed = allowed_versions([req], published)
                out = allowed[-1] if allowed else None
            else:
                out = req.pin if self.index.has(lib, req.pin) else None
            self._select[key] = out
        return self._select[key]

    def declared(self, lib: LibraryId, v: Version) -> frozenset[LibraryId]:
        key = (lib, v)
        out = self._declared.get(key)
        if out is None:
            out = frozenset(d.lib for d in self.index.entry(lib, v).dependencies if d.scope != "test")
            self._declared[key] = out
        return out

    def floor(self, lib: LibraryId, v: Version) -> Fraction:
        """Least risk a version can carry whatever the call graph looks like."""
        key = (lib, v)
        out = self._floor.get(key)
        if out is None:
            out = sum((self.weights.floor(r) * exact(r.cvss) for r in self.index.records(lib) if r.affects(v)),
                      Fraction(0))
            self._floor[key] = out
        return out

    def hard_requirements(self, lib: LibraryId) -> tuple[VersionRequirement, ...]:
        """Every hard range any published version (or the project) places on ``lib``."""
        if self._hard is None:
            found: dict[LibraryId, set[VersionRequirement]] = {}
            decls = [d for e in self.index.libraries.values() for entry in e for d in entry.dependencies]
            for d in [*decls, *self.manifest.direct_dependencies]:
                if d.requirement.is_hard and d.scope != "test":
                    found.setdefault(d.lib, set()).add(d.requirement)
            self._hard = {k: tuple(sorted(v, key=str)) for k, v in found.items()}
        return self._hard.get(lib, ())

    def signature(self, lib: LibraryId, v: Version, overridden: frozenset[LibraryId]) -> tuple:
        """Everything about ``lib`` at ``v`` that other libraries or constraints can observe,
        apart from its secondary objective terms."""
        e = self.index.entry(lib, v)
        deps = tuple((d.lib, d.requirement if d.requirement.is_hard or d.lib not in overridden else None)
                     for d in e.dependencies if d.scope != "test")
        records = frozenset(r.id for r in self.index.records(lib) if r.affects(v))
        ranges = tuple(r.contains(v) for r in self.hard_requirements(lib))
        return deps, e.methods, frozenset(e.invocations), records, ranges, (lib, v) in self.grandfathered.conflicts

    def secondary(self, lib: LibraryId, v: Version) -> ObjectiveVector:
        orig = self.originals.get(lib)
        if orig is None:
            return ObjectiveVector()
        return change_vector(self.index.versions(lib), orig, v)


@dataclass(frozen=True)
class _Analysis:
    options: Mapping[LibraryId, tuple[Version, ...]]
    sure: frozenset[LibraryId]


@dataclass
class Solution:
    assignment: Assignment
    vector: ObjectiveVector
    tie: tuple = field(default=())


@dataclass(frozen=True)
class WindowProblem:
    variables: tuple[LibraryId, ...]
    domains: Mapping[LibraryId, tuple[Version, ...]]
    checked: frozenset[LibraryId]


def tie_key(assign: Mapping[LibraryId, Version], index: EcosystemIndex) -> tuple:
    return tuple((lib, index.versions(lib).index(assign[lib])) for lib in sorted(assign))


def window_vector(ctx: Context, ev: Evaluation, variables: Iterable[LibraryId],
                  assign: Mapping[LibraryId, Version]) -> ObjectiveVector:
    vec = ObjectiveVector(ev.risk)
    for lib in variables:
        if lib in ev.vertices:
            vec = vec + ctx.secondary(lib, assign[lib])
    return vec


class WindowSolver:
    def __init__(self, ctx: Context, problem: WindowProblem):
        self.ctx = ctx
        self.problem = problem
        self.order = {v: i for i, v in enumerate(problem.variables)}
        self.nodes = 0
        self._analysis: dict[tuple, _Analysis] = {}
        # Versions that look identical to everything but their own secondary terms are
        # interchangeable; search one representative per class (the best present choice)
        # and fall back to the lowest-index member when the library drops out.
        overridden = frozenset(problem.variables) | frozenset(ctx.base)
        self.domains: dict[LibraryId, tuple[Version, ...]] = {}
        self.absent_choice: dict[tuple[LibraryId, Version], Version] = {}
        for x in problem.variables:
            classes: dict[tuple, list[Version]] = {}
            for v in problem.domains[x]:
                classes.setdefault(ctx.signature(x, v, overridden), []).append(v)
            reps = []
            for members in classes.values():
                rep = min(members, key=lambda m: (ctx.secondary(x, m), ctx.index.versions(x).index(m)))
                low = min(members, key=ctx.index.versions(x).index)
                reps.append(rep)
                self.absent_choice[(x, rep)] = low
            self.domains[x] = tuple(sorted(reps))

    # -- reachable configurations ---------------------------------------------

    def analyze(self, free: frozenset[LibraryId], assigned: Mapping[LibraryId, Version]) -> _Analysis:
        """Over-approximate the versions every library can take in any completion.

        A library that is not fixed (free, assigned or overridden) can only end up at a
        version selected by one of its possible parents' declarations, so the option
        sets follow from a fixpoint over declarations starting at the project.
        """
        key = (free, tuple(sorted(assigned.items())))
        hit = self._analysis.get(key)
        if hit is not None:
            return hit
        ctx = self.ctx
        options: dict[LibraryId, set[Version]] = {}
        work: list[tuple[LibraryId, Version]] = []

        # Unassigned variables sit at their default until searched, so the default is an
        # option too.  It is known exactly when the defaults resolve; otherwise anything a
        # declaration could pick is assumed.
        current = ctx.evaluate(assigned)

        def fixed(lib):
            if lib in free:
                if current is not None and lib in current.vertices:
                    return (*self.domains[lib], current.vertices[lib])
                return self.domains[lib]
            if lib in assigned:
                return (assigned[lib],)
            if lib in ctx.base:
                return (ctx.base[lib],)
            return None

        def touch(lib, req):
            f = fixed(lib)
            if f is not None:
                if lib not in options:
                    options[lib] = set(f)
                    work.extend((lib, v) for v in f)
                if lib not in free or current is not None:
                    return
            v = ctx.select(lib, req)
            if v is not None:
                seen = options.setdefault(lib, set())
                if v not in seen:
                    seen.add(v)
                    work.append((lib, v))

        for d in ctx.manifest.direct_dependencies:
            if d.scope != "test":
                touch(d.lib, d.requirement)
        while work:
            lib, v = work.pop()
            for d in ctx.index.entry(lib, v).dependencies:
                if d.scope != "test":
                    touch(d.lib, d.requirement)

        sure = {d.lib for d in ctx.manifest.direct_dependencies if d.scope != "test"}
        stack = list(sure)
        while stack:
            lib = stack.pop()
            common = None
            for v in options.get(lib, ()):
                deps = ctx.declared(lib, v)
                common = deps if common is None else common & deps
            for nxt in common or ():
                if nxt not in sure:
                    sure.add(nxt)
                    stack.append(nxt)
        result = _Analysis({k: tuple(sorted(v)) for k, v in options.items()}, frozenset(sure))
        self._analysis[key] = result
        return result

    def closure(self, seeds: Iterable[LibraryId], info: _Analysis) -> set[LibraryId]:
        """Every library whose version, presence or reachability the seeds can affect."""
        ctx = self.ctx
        seen = set(seeds)
        stack = list(seen)
        while stack:
            lib = stack.pop()
            for v in info.options.get(lib, ()):
                for nxt in ctx.targets(lib, v):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        return seen

    def components(self, free: frozenset[LibraryId], info: _Analysis) -> list[list[LibraryId]]:
        vars_ = sorted(free, key=self.order.__getitem__)
        closures = {v: self.closure([v], info) for v in vars_}
        parent = {v: v for v in vars_}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, a in enumerate(vars_):
            for b in vars_[i + 1:]:
                if find(a) != find(b) and not closures[a].isdisjoint(closures[b]):
                    parent[find(b)] = find(a)
        groups: dict[LibraryId, list[LibraryId]] = {}
        for v in vars_:
            groups.setdefault(find(v), []).append(v)
        return sorted(groups.values(), key=lambda g: self.order[g[0]])

    # -- bounds ----------------------------------------------------------------

    def lower_bound(self, free: frozenset[LibraryId], assigned: Assignment
                    ) -> tuple[ObjectiveVector, set[LibraryId], _Analysis] | None:
        """Componentwise lower bound on (risk, secondaries of ``free``) over all completions."""
        ctx = self.ctx
        ev = ctx.evaluate(assigned)
        if ev is None:
            return None
        info = self.analyze(free, assigned)
        cl = self.closure(free, info)
        risk = Fraction(0)
        sec = ObjectiveVector()
        for lib, r in ev.risks.items():
            if lib not in cl:
                risk += r
        for lib in cl & info.sure:
            # a searched variable ends on a domain value, never on its default
            options = self.domains[lib] if lib in free else info.options.get(lib, ())
            if not options:
                continue
            if ctx.index.vulnerabilities.get(lib):
                risk += min(ctx.floor(lib, o) for o in options)
            if lib in free:
                sec = sec + min(ctx.secondary(lib, o) for o in options)
        return ObjectiveVector(risk) + sec, cl, info

    # -- search ----------------------------------------------------------------

    def solve(self) -> Solution | None:
        free = frozenset(self.problem.variables)
        for v in free:
            if not self.domains[v]:
                return None
        sol = self._solve(free, {}, None)
        if sol is None:
            return None
        ev = self.ctx.evaluate(sol.assignment)
        if ev is None or not self.ctx.feasible(ev, self.problem.checked):
            return None
        return sol

    def _finish(self, free, assigned, assign, bound, check) -> Solution | None:
        full = dict(assigned)
        full.update(assign)
        ev = self.ctx.evaluate(full)
        if ev is None or not self.ctx.feasible(ev, check):
            return None
        vec = window_vector(self.ctx, ev, free, full)
        if bound is not None and vec > bound:
            return None
        assign = {x: v if x in ev.vertices else self.absent_choice.get((x, v), v) for x, v in assign.items()}
        return Solution(assign, vec, tie_key(assign, self.ctx.index))

    def _solve_groups(self, groups: list[list[LibraryId]], assigned: Assignment) -> Assignment | None | bool:
        """Solve independent groups one by one.

        Returns the merged assignment, False when some group is infeasible, or None when
        that cannot be decided this way.  A group is searched with the others at their
        defaults.  If nothing in its search resolved, those defaults may clash among
        themselves, so it is retried once the others are fixed at their solutions.
        """
        solved: Assignment = {}
        deferred = []
        for g in groups:
            seen = self.ctx.resolved
            part = self._solve(frozenset(g), assigned, None)
            if part is not None:
                solved.update(part.assignment)
            elif self.ctx.resolved > seen:
                return False
            else:
                deferred.append(g)
        if deferred and not solved:
            return None
        for g in deferred:
            part = self._solve(frozenset(g), {**assigned, **solved}, None)
            if part is None:
                return False
            solved.update(part.assignment)
        return solved

    def _solve(self, free: frozenset[LibraryId], assigned: Assignment,
               bound: ObjectiveVector | None) -> Solution | None:
        self.nodes += 1
        info = self.analyze(free, assigned)
        cl = self.closure(free, info)
        clash = self.ctx.conflict(assigned)
        if clash is not None and clash not in cl:
            return None  # no choice of the free variables touches the clash
        groups = self.components(free, info)
        check = cl & self.problem.checked
        if not groups:
            return self._finish(free, assigned, {}, bound, check)
        if len(groups) > 1:
            assign = self._solve_groups(groups, assigned)
            if assign is False:
                return None
            if assign is not None:
                return self._finish(free, assigned, assign, bound, check)

        first = groups[0][0]
        rest = free - {first}
        best: Solution | None = None
        # promising values first so the incumbent tightens early; the result does not depend on this
        values = sorted(self.domains[first], key=lambda c: (self.ctx.floor(first, c), self.ctx.secondary(first, c)))
        for c in values:
            ctx2 = dict(assigned)
            ctx2[first] = c
            limit = best.vector if best is not None else bound
            sec_first = ObjectiveVector()
            if limit is not None:
                bounded = self.lower_bound(rest, ctx2)
                if bounded is not None:
                    lb, cl_rest, info2 = bounded
                    present = first in info2.sure if first in cl_rest else \
                        first in self.ctx.evaluate(ctx2).vertices
                    if present:
                        sec_first = self.ctx.secondary(first, c)
                    if lb + sec_first > limit:
                        continue
            if rest:
                sub = self._solve(rest, ctx2, None if limit is None else limit - sec_first)
                if sub is None:
                    continue
                assign = {first: c, **sub.assignment}
            else:
                assign = {first: c}
            cand = self._finish(free, assigned, assign, limit, check)
            if cand is None:
                continue
            if best is None or (cand.vector, cand.tie) < (best.vector, best.tie):
                best = cand
        return best


def solve_window(ctx: Context, problem: WindowProblem) -> Solution | None:
    return WindowSolver(ctx, problem).solve()
