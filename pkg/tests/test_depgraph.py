from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from builders import build, version
from depremedy.depgraph import (
    DependencyConflict,
    apply_assignment,
    bfs_levels,
    horizontal_windows,
    resolve,
    vertical_partitions,
)
from depremedy.ecosystem import ROOT, LibraryId, UnknownCoordinate
from depremedy.generator import GeneratorParams, generate_ecosystem
from depremedy.versions import parse_version as V

L = LibraryId.parse


def test_diamond_nearest_then_declaration_order():
    index, man = build({
        "g:a": [version("1.0", deps=[("g:c", "1.0")])],
        "g:b": [version("1.0", deps=[("g:c", "2.0")])],
        "g:c": [version("1.0"), version("2.0")],
    }, [], [("g:a", "1.0"), ("g:b", "1.0")])
    dg = resolve(man, index)
    assert dg.vertices[L("g:c")] == V("1.0")
    assert dg.levels == {L("g:a"): 1, L("g:b"): 1, L("g:c"): 2}
    assert dg.parents(L("g:c")) == [L("g:a"), L("g:b")]


def test_nearest_beats_declaration_order():
    index, man = build({
        "g:a": [version("1.0", deps=[("g:x", "1.0")])],
        "g:x": [version("1.0", deps=[("g:c", "1.0")])],
        "g:b": [version("1.0", deps=[("g:c", "2.0")])],
        "g:c": [version("1.0"), version("2.0")],
    }, [], [("g:a", "1.0"), ("g:b", "1.0")])
    assert resolve(man, index).vertices[L("g:c")] == V("2.0")


def test_single_dependency_and_test_scope():
    index, man = build({"g:a": [version("1.0")], "g:t": [version("1.0")]}, [],
                       [("g:a", "1.0"), ("g:t", "1.0", "test")])
    dg = resolve(man, index)
    assert dict(dg.vertices) == {L("g:a"): V("1.0")}
    assert dg.levels[L("g:a")] == 1
    assert dg.edges == {(ROOT, L("g:a"))}


def test_hard_range_picks_highest_and_overrides_win():
    index, man = build({"g:a": [version(v) for v in ("1.0", "1.5", "2.0")]}, [], [("g:a", "[1.0,2.0)")])
    assert resolve(man, index).vertices[L("g:a")] == V("1.5")
    assert resolve(man, index, {L("g:a"): V("1.0")}).vertices[L("g:a")] == V("1.0")


def test_dependency_conflict_names_sources():
    index, man = build({
        "g:a": [version("1.0", deps=[("g:c", "[1.0,1.2)")])],
        "g:b": [version("1.0", deps=[("g:c", "[2.0,3.0)")])],
        "g:c": [version("1.0"), version("2.5")],
    }, [], [("g:a", "1.0"), ("g:b", "1.0")])
    with pytest.raises(DependencyConflict) as exc:
        resolve(man, index)
    assert exc.value.lib == L("g:c")
    assert [p for p, _ in exc.value.sources] == [L("g:a"), L("g:b")]


def test_unknown_library_errors():
    index, man = build({"g:a": [version("1.0", deps=[("g:b", "1.0")])], "g:b": [version("1.0")]}, [],
                       [("g:a", "1.0")])
    with pytest.raises(UnknownCoordinate):
        resolve(man, index, {L("g:b"): V("9.0")})


CHAIN = {
    "g:a": [version("1.0", deps=[("g:c", "1.0")]), version("2.0", deps=[("g:d", "1.0")])],
    "g:c": [version("1.0")],
    "g:d": [version("1.0")],
}


def test_apply_assignment_ripples():
    index, man = build(CHAIN, [], [("g:a", "1.0")])
    dg = resolve(man, index)
    assert apply_assignment(dg, index, {}) == dg
    new = apply_assignment(dg, index, {L("g:a"): V("2.0")})
    assert L("g:c") not in new.vertices
    assert new.levels[L("g:d")] == new.levels[L("g:a")] + 1
    with pytest.raises(KeyError):
        apply_assignment(dg, index, {L("g:d"): V("1.0")})


def _shape(libs_deps):
    libs = {name: [version("1.0", deps=[(d, "1.0") for d in deps])] for name, deps in libs_deps.items()}
    return libs


def test_two_independent_subtrees_give_two_partitions():
    index, man = build(_shape({"g:a": ["g:c"], "g:b": ["g:d"], "g:c": [], "g:d": []}), [],
                       [("g:a", "1.0"), ("g:b", "1.0")])
    parts = vertical_partitions(resolve(man, index))
    assert [sorted(p.member_vertices) for p in parts] == [[L("g:a"), L("g:c")], [L("g:b"), L("g:d")]]


def test_shared_transitive_gives_one_partition():
    index, man = build(_shape({"g:a": ["g:c"], "g:b": ["g:c"], "g:c": []}), [], [("g:a", "1.0"), ("g:b", "1.0")])
    assert len(vertical_partitions(resolve(man, index))) == 1


def test_empty_graph():
    index, man = build({"g:a": [version("1.0")]}, [], [])
    dg = resolve(man, index)
    assert vertical_partitions(dg) == []


def test_windows():
    index, man = build(_shape({"g:a": ["g:b"], "g:b": ["g:c"], "g:c": ["g:d"], "g:d": []}), [], [("g:a", "1.0")])
    dg = resolve(man, index)
    (part,) = vertical_partitions(dg)
    wins = horizontal_windows(part, dg)
    assert wins == [frozenset({L("g:a"), L("g:b")}), frozenset({L("g:b"), L("g:c")}),
                    frozenset({L("g:c"), L("g:d")})]
    index, man = build(_shape({"g:a": ["g:b"], "g:b": ["g:c"], "g:c": []}), [], [("g:a", "1.0")])
    dg = resolve(man, index)
    (part,) = vertical_partitions(dg)
    assert horizontal_windows(part, dg) == [frozenset({L("g:a"), L("g:b")}), frozenset({L("g:b"), L("g:c")})]
    index, man = build(_shape({"g:a": []}), [], [("g:a", "1.0")])
    dg = resolve(man, index)
    (part,) = vertical_partitions(dg)
    assert horizontal_windows(part, dg) == [frozenset({L("g:a")})]


def _levels_oracle(dg):
    dist = {ROOT: 0}
    queue = deque([ROOT])
    while queue:
        u = queue.popleft()
        for p, c in sorted(dg.edges):
            if p == u and c not in dist:
                dist[c] = dist[u] + 1
                queue.append(c)
    dist.pop(ROOT)
    return dist


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 30))
def test_graph_properties_on_generated_ecosystems(seed, n):
    index, man = generate_ecosystem(GeneratorParams(seed=seed, library_count=n))
    dg = resolve(man, index)
    assert dict(dg.levels) == _levels_oracle(dg) == bfs_levels(dg)
    assert apply_assignment(dg, index, {}) == dg
    parts = vertical_partitions(dg)
    members = [p.member_vertices for p in parts]
    assert set().union(*members) == set(dg.vertices) if members else not dg.vertices
    assert sum(len(m) for m in members) == len(dg.vertices)
    owner = {lib: i for i, m in enumerate(members) for lib in m}
    for p, c in dg.edges:
        if p != ROOT:
            assert owner[p] == owner[c]
