from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from builders import MAIN, build, version
from conftest import load_fixture
from depremedy.compatibility import (
    CandidateState,
    DeadEnd,
    Grandfathered,
    Mark,
    check_conflicts,
    check_syntactic,
    conflicting_hard_ranges,
    filter_candidates,
)
from depremedy.depgraph import resolve
from depremedy.ecosystem import LibraryId, MethodId
from depremedy.engine import original_defects
from depremedy.generator import GeneratorParams, generate_ecosystem
from depremedy.reachability import build_callgraph, required_methods
from depremedy.versions import parse_version as V

L, M = LibraryId.parse, MethodId.parse
A, C = L("g:a"), L("g:c")


def _graph(libs, deps, calls=()):
    index, man = build(libs, [], deps, calls)
    dg = resolve(man, index)
    return index, man, dg, build_callgraph(dg, man, index)


SURFACES = {"g:a": [version("1.0", methods=["A.f()", "A.g()", "A.h()"]),
                    version("1.1", methods=["A.f()", "A.h()"]),
                    version("1.2", methods=["A.f()", "A.g()"])]}


def test_syntactic_examples():
    index, man, dg, cg = _graph(SURFACES, [("g:a", "1.0")], [(MAIN, "g:a", "A.f()"), (MAIN, "g:a", "A.g()")])
    assert not check_syntactic(cg, index, A, V("1.0")).syntactic_breaking
    verdict = check_syntactic(cg, index, A, V("1.1"))
    assert verdict.syntactic_breaking and verdict.offending_methods == (M("A.g()"),)
    # A.h disappears in 1.2 but nobody calls it
    assert not check_syntactic(cg, index, A, V("1.2")).syntactic_breaking


RANGED = {
    "g:p": [version("1.0", deps=[("g:c", "[1.0,2.0)")])],
    "g:q": [version("1.0", deps=[("g:c", "[1.5,3.0)")])],
    "g:r": [version("1.0", deps=[("g:c", "[2.0,3.0)")])],
    "g:s": [version("1.0", deps=[("g:c", "1.0")])],
    "g:c": [version(v) for v in ("1.0", "1.5", "1.9", "2.5")],
}


def test_conflict_examples():
    index, man, dg, cg = _graph(RANGED, [("g:p", "1.0"), ("g:q", "1.0")])
    assert not check_conflicts(dg, index, C, V("1.9")).dependency_conflict
    verdict = check_conflicts(dg, index, C, V("2.5"))
    assert verdict.dependency_conflict and [p for p, _ in verdict.conflict_sources] == [L("g:p"), L("g:q")]
    index, man, dg, cg = _graph(RANGED, [("g:s", "1.0")])
    assert not any(check_conflicts(dg, index, C, v).dependency_conflict for v in index.versions(C))


def test_disjoint_ranges_conflict_everywhere():
    index, man = build(RANGED, [], [("g:p", "1.0"), ("g:q", "1.0")])
    dg = resolve(man, index)
    # resolution itself refuses disjoint ranges, so graft a second dependent's range on
    r = next(d.requirement for d in index.entry(L("g:r"), V("1.0")).dependencies)
    dg = replace(dg, requirements={**dg.requirements, C: (*dg.requirements[C], (L("g:r"), r))})
    assert conflicting_hard_ranges(dg, index, C)
    assert all(check_conflicts(dg, index, C, v).dependency_conflict for v in index.versions(C))


def test_layered_filters_seven_to_three():
    index, man = load_fixture("layered")
    dg = resolve(man, index)
    cg = build_callgraph(dg, man, index)
    lib3 = L("lay:lib3")
    state = CandidateState.initial(index, lib3, dg.vertices[lib3])
    assert len(state.surviving) == 7
    out = filter_candidates(state, cg, dg, index)
    assert len(out.surviving) == 3
    assert all(Mark.BREAKING in out.marks[v] for v in index.versions(lib3) if v not in out.surviving)


def test_all_breaking_is_dead_end():
    index, man, dg, cg = _graph(SURFACES, [("g:a", "1.0")], [(MAIN, "g:a", "A.f()"), (MAIN, "g:a", "A.g()")])
    state = CandidateState.initial(index, A, V("1.0")).without([V("1.0"), V("1.2")])
    with pytest.raises(DeadEnd) as exc:
        filter_candidates(state, cg, dg, index)
    assert exc.value.library == A


def test_vacuous_constraints_keep_everything():
    index, man, dg, cg = _graph(SURFACES, [("g:a", "1.0")])
    state = CandidateState.initial(index, A, V("1.0"))
    assert filter_candidates(state, cg, dg, index).surviving == state.surviving


def test_unpreferrable_stays():
    index, man, dg, cg = _graph(SURFACES, [("g:a", "1.0")])
    state = CandidateState.initial(index, A, V("1.0")).mark(V("1.1"), Mark.UNPREFERRABLE)
    assert V("1.1") in state.surviving
    state = state.mark(V("1.2"), Mark.BREAKING)
    assert V("1.2") not in state.surviving


def test_grandfathered_missing_is_not_blamed():
    libs = {"g:a": [version("1.0", methods=["A.f()"]), version("1.1", methods=["A.f()"]), version("1.2")]}
    index, man, dg, cg = _graph(libs, [("g:a", "1.0")], [(MAIN, "g:a", "A.f()"), (MAIN, "g:a", "A.gone()")])
    gf = original_defects(dg, cg, index)
    assert gf.missing == {(A, M("A.gone()"))}
    assert not check_syntactic(cg, index, A, V("1.1"), gf).syntactic_breaking
    verdict = check_syntactic(cg, index, A, V("1.2"), gf)
    assert verdict.offending_methods == (M("A.f()"),)


def _generated(seed):
    index, man = generate_ecosystem(GeneratorParams(seed=seed, library_count=10, breaking_change_rate=0.5,
                                                    hard_range_rate=0.3))
    dg = resolve(man, index)
    return index, dg, build_callgraph(dg, man, index)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_filter_idempotent_and_exact(seed):
    index, dg, cg = _generated(seed)
    gf = original_defects(dg, cg, index)
    for lib in sorted(dg.vertices):
        state = CandidateState.initial(index, lib, dg.vertices[lib])
        try:
            once = filter_candidates(state, cg, dg, index, gf)
        except DeadEnd:
            continue
        assert filter_candidates(once, cg, dg, index, gf).surviving == once.surviving
        # survivors are exactly the versions whose surface covers every non-grandfathered requirement
        need = required_methods(cg, lib) - gf.missing_for(lib)
        hard = [r for _, r in dg.requirements.get(lib, ()) if r.is_hard]
        expected = tuple(v for v in index.versions(lib)
                         if need <= index.entry(lib, v).methods
                         and ((lib, v) in gf.conflicts or all(r.contains(v) for r in hard)))
        assert once.surviving == expected


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.data())
def test_syntactic_monotone_in_reachability(seed, data):
    index, dg, cg = _generated(seed)
    for lib in sorted(dg.vertices):
        req = sorted(required_methods(cg, lib))
        if not req:
            continue
        keep = frozenset(data.draw(st.sets(st.sampled_from(req))))
        smaller = type(cg)(cg.nodes, cg.edges, cg.entry_points, cg.dangling, cg.reachable,
                           required={lib: keep})
        for v in index.versions(lib):
            if not check_syntactic(cg, index, lib, v, Grandfathered()).syntactic_breaking:
                assert not check_syntactic(smaller, index, lib, v, Grandfathered()).syntactic_breaking
