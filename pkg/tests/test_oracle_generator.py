import pytest
from hypothesis import given, settings, strategies as st

from builders import MAIN, build, version
from conftest import load_fixture
from depremedy.depgraph import resolve
from depremedy.ecosystem import LibraryId, dumps_canonical
from depremedy.engine import Engine
from depremedy.generator import (
    GeneratorParams,
    generate_document,
    generate_ecosystem,
    planted_expectations,
)
from depremedy.objectives import risk_of
from depremedy.oracle import (
    OracleLimits,
    OracleRefusal,
    assignment_space,
    brute_force_optimum,
    simulate_compile,
)
from depremedy.strategies import latest
from depremedy.engine import EngineConfig
from depremedy.versions import parse_version as V
from instances import small_params

L = LibraryId.parse


def test_generation_is_deterministic():
    p = GeneratorParams(seed=42, fix_stories=1)
    a, b = generate_document(p), generate_document(p)
    assert dumps_canonical(a[0]) == dumps_canonical(b[0])
    assert dumps_canonical(a[1]) == dumps_canonical(b[1])
    assert dumps_canonical(generate_document(GeneratorParams(seed=43))[0]) != dumps_canonical(a[0])


def test_zero_density_means_no_records():
    index, _ = generate_ecosystem(GeneratorParams(seed=5, library_count=20, vulnerability_density=0.0))
    assert not any(index.vulnerabilities.values())


def test_params_validation():
    for bad in (dict(library_count=0), dict(max_versions=0), dict(vulnerability_density=1.5),
                dict(hard_range_rate=-0.1), dict(fix_stories=-1), dict(seed=1 << 70)):
        with pytest.raises(ValueError):
            GeneratorParams(**bad)


def test_eight_by_four_is_enumerable():
    index, man = generate_ecosystem(GeneratorParams(seed=1, library_count=8, max_versions=4))
    assert assignment_space(man, index) <= 4 ** 8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_generated_graphs_respect_depth_and_originals_compile(seed, levels):
    index, man = generate_ecosystem(GeneratorParams(seed=seed, library_count=20, max_levels=levels, fix_stories=1))
    dg = resolve(man, index)
    assert max(dg.levels.values(), default=0) <= levels
    assert simulate_compile(dg, man, index).ok


def test_planted_expectations_listing():
    index, _ = generate_ecosystem(GeneratorParams(seed=3, fix_stories=2))
    exp = planted_expectations(index)
    assert len(exp) == 8
    assert exp["CVE-STORY-FIXABLE-0"] == "fixed"
    assert exp["CVE-STORY-ALL-VULN-1"] == "unfixable:all_versions_vulnerable"
    assert exp["CVE-STORY-SECURE-INCOMPAT-0"] == "unfixable:secure_versions_incompatible"
    assert exp["CVE-STORY-TRADEOFF-0"] == "unfixable:soft_backtrack_tradeoff"


def test_single_library_single_version():
    index, man = build({"g:a": [version("1.0")]}, [], [("g:a", "1.0")])
    res = brute_force_optimum(man, index)
    assert res.assignment == {L("g:a"): V("1.0")}


def test_layered_oracle_selects_v6():
    index, man = load_fixture("layered")
    assert brute_force_optimum(man, index).assignment[L("lay:lib3")] == V("1.6")


def test_refusal_beyond_bound():
    index, man = generate_ecosystem(GeneratorParams(seed=2, library_count=30, max_versions=8))
    with pytest.raises(OracleRefusal):
        brute_force_optimum(man, index, limits=OracleLimits(1000))


LIBS = {
    "g:a": [version("1.0", deps=[("g:c", "[1.0,2.0)")], methods=["A.f()"], calls=[("A.f()", "g:c", "C.x()")]),
            version("1.1", deps=[("g:c", "[1.0,2.0)")], methods=["A.f()"])],
    "g:c": [version("1.0"), version("1.5", methods=["C.x()"]), version("2.0", methods=["C.x()"])],
}


def test_simulate_compile_cases():
    index, man = build(LIBS, [], [("g:a", "1.0")], [(MAIN, "g:a", "A.f()")])
    assert simulate_compile(resolve(man, index), man, index).ok
    # a version without the reachable callee
    removed = simulate_compile(resolve(man, index, {L("g:c"): V("1.0")}), man, index)
    assert removed.missing_calls == (("g:a/A.f()", "g:c/C.x()"),)
    assert not removed.ok and removed.conflicts == ()
    # a version outside the dependent's hard range
    outside = simulate_compile(resolve(man, index, {L("g:c"): V("2.0")}), man, index)
    assert outside.missing_calls == ()
    assert [lib for lib, _ in outside.conflicts] == [L("g:c")]
    assert outside.conflicts[0][1] == ((L("g:a"), "[1.0,2.0)"),)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_oracle_never_worse_than_engine(seed):
    index, man = generate_ecosystem(small_params(seed))
    eng = Engine(man, index)
    state = eng.run()
    oracle = brute_force_optimum(man, index)
    assert oracle.vector.f_vul <= risk_of(state.dg, state.cg, index)
    assert simulate_compile(resolve(man, index, oracle.assignment), man, index).ok


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_latest_is_feasible_without_breaks_or_ranges(seed):
    p = GeneratorParams(seed=seed, library_count=15, breaking_change_rate=0.0, hard_range_rate=0.0)
    index, man = generate_ecosystem(p)
    dg, _ = latest(man, index, EngineConfig(strategy="latest"))
    assert simulate_compile(dg, man, index).ok
