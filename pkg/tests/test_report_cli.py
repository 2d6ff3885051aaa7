import json
from collections import deque

import pytest

from conftest import fixture_paths, load_fixture
from depremedy.cli import EXIT_INPUT, EXIT_OK, EXIT_PARTIAL, EXIT_REFUSED, main
from depremedy.depgraph import resolve
from depremedy.ecosystem import ROOT, dumps_canonical
from depremedy.engine import EngineConfig
from depremedy.generator import generate_document
from depremedy.report import REASONS, remediate
from depremedy.versions import classify_change
from instances import small_params, suite_params


def _cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _write_instance(tmp_path, params):
    dataset, manifest = generate_document(params)
    d, m = tmp_path / "dataset.json", tmp_path / "manifest.json"
    d.write_text(dumps_canonical(dataset))
    m.write_text(dumps_canonical(manifest))
    return str(d), str(m)


def test_clean_fixture_exit_ok(capsys):
    d, m = fixture_paths("clean")
    code, out, _ = _cli(capsys, "remediate", "--dataset", d, "--manifest", m, "--format", "json")
    assert code == EXIT_OK
    plan = json.loads(out)
    assert plan["changes"] == [] and plan["failures"] == [] and plan["compile_ok"] is True


def test_layered_plan_moves_lib3_to_v6(capsys, tmp_path):
    d, m = fixture_paths("layered")
    code, out, _ = _cli(capsys, "remediate", "--dataset", d, "--manifest", m, "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    assert "lay:lib3: 1.1 -> 1.6" in out
    plan = json.loads((tmp_path / "plan.json").read_text())
    change = next(c for c in plan["changes"] if c["lib"] == "lay:lib3")
    assert (change["old"], change["new"]) == ("1.1", "1.6")
    assert plan["config"]["order"] == ["f_vul", "f_dev", "f_major", "f_minor", "f_span"]
    assert plan["config"]["weights"] == [1.0, 0.5, 0.1]
    assert "elapsed" not in plan["metrics"]
    assert "elapsed_seconds" in json.loads((tmp_path / "timing.json").read_text())


def test_malformed_dataset_exit_input(capsys, tmp_path):
    doc = json.loads(open(fixture_paths("layered")[0]).read())
    doc["vulnerabilities"][0]["cvss"] = 11
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = _cli(capsys, "remediate", "--dataset", str(bad), "--manifest", fixture_paths("layered")[1])
    assert code == EXIT_INPUT
    assert "$.vulnerabilities[0].cvss" in err
    bad.write_text("{not json")
    code, _, err = _cli(capsys, "remediate", "--dataset", str(bad), "--manifest", fixture_paths("layered")[1])
    assert code == EXIT_INPUT and "invalid JSON" in err
    code, _, _ = _cli(capsys, "remediate", "--dataset", str(tmp_path / "missing.json"),
                      "--manifest", fixture_paths("layered")[1])
    assert code == EXIT_INPUT


def test_partition_failure_exit_partial(capsys):
    d, m = fixture_paths("hard_backtrack")
    code, out, _ = _cli(capsys, "remediate", "--dataset", d, "--manifest", m, "--budget", "0")
    assert code == EXIT_PARTIAL
    assert "failure: partition" in out


def test_unknown_strategy_is_usage_error(capsys):
    d, m = fixture_paths("layered")
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--dataset", d, "--manifest", m, "--strategy", "engine,bogus"])
    assert exc.value.code == 2
    assert "bogus" in capsys.readouterr().err


def test_bad_weights_rejected(capsys):
    d, m = fixture_paths("layered")
    with pytest.raises(SystemExit):
        main(["remediate", "--dataset", d, "--manifest", m, "--weights", "0.1,0.5,1.0"])


def test_compare_outputs(capsys, tmp_path):
    d, m = fixture_paths("layered")
    code, out, _ = _cli(capsys, "compare", "--dataset", d, "--manifest", m, "--format", "csv",
                        "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    lines = out.strip().splitlines()
    assert lines[0].startswith("strategy,fixed_count")
    assert [line.split(",")[0] for line in lines[1:]] == ["engine", "latest", "greedy_security",
                                                         "unpartitioned", "direct_nonmajor"]
    assert (tmp_path / "compare.csv").read_text() == out
    assert set(json.loads((tmp_path / "timing.json").read_text())["elapsed_seconds"]) == {
        "engine", "latest", "greedy_security", "unpartitioned", "direct_nonmajor"}


def test_oracle_check(capsys, tmp_path):
    d, m = fixture_paths("layered")
    code, out, _ = _cli(capsys, "oracle-check", "--dataset", d, "--manifest", m)
    assert code == EXIT_OK and "verdict: match" in out
    code, _, err = _cli(capsys, "oracle-check", "--dataset", d, "--manifest", m, "--max-combinations", "10")
    assert code == EXIT_REFUSED and "refused" in err
    # an instance where windowing gives up some risk reduction
    d, m = _write_instance(tmp_path, small_params(84))
    code, out, _ = _cli(capsys, "oracle-check", "--dataset", d, "--manifest", m, "--format", "json")
    report = json.loads(out)
    assert code == EXIT_OK and report["f_vul_match"] is False
    assert report["oracle"]["f_vul"] < report["engine"]["f_vul"]


def test_generate_and_callgraph(capsys, tmp_path):
    code, _, _ = _cli(capsys, "generate", "--seed", "7", "--fix-stories", "1", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    stories = json.loads((tmp_path / "stories.json").read_text())
    assert len(stories) == 4
    code, out, _ = _cli(capsys, "callgraph", "--dataset", str(tmp_path / "dataset.json"),
                        "--manifest", str(tmp_path / "manifest.json"))
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines == sorted(lines) and any(line.startswith("<root>") for line in lines)


def test_repeated_runs_are_byte_identical(capsys, tmp_path):
    d, m = _write_instance(tmp_path, suite_params(11))
    outputs = []
    for run in range(2):
        out_dir = tmp_path / f"run{run}"
        assert main(["remediate", "--dataset", d, "--manifest", m, "--out-dir", str(out_dir / "r")]) in (0, 3)
        assert main(["compare", "--dataset", d, "--manifest", m, "--out-dir", str(out_dir / "c")]) == 0
        outputs.append({p.relative_to(out_dir).as_posix(): p.read_bytes()
                        for p in sorted(out_dir.rglob("*")) if p.is_file() and p.name != "timing.json"})
    capsys.readouterr()
    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"r/plan.json", "r/plan.txt", "c/compare.csv", "c/compare.txt", "c/compare.json"}


def _reachable(dg, manifest, index):
    calls = {}
    for inv in manifest.invocations:
        calls.setdefault((ROOT, inv.caller), []).append((inv.target_library, inv.target_method))
    for lib, v in dg.vertices.items():
        for inv in index.entry(lib, v).invocations:
            calls.setdefault((lib, inv.caller), []).append((inv.target_library, inv.target_method))
    entry = manifest.entry_points if manifest.entry_points is not None else manifest.methods
    seen = {(ROOT, mth) for mth in entry}
    queue = deque(seen)
    while queue:
        for lib, mth in calls.get(queue.popleft(), ()):
            if lib in dg.vertices and mth in index.entry(lib, dg.vertices[lib]).methods and (lib, mth) not in seen:
                seen.add((lib, mth))
                queue.append((lib, mth))
    return seen


@pytest.mark.parametrize("seed", [1, 4, 9, 23])
@pytest.mark.parametrize("strategy", ["engine", "greedy_security"])
def test_metrics_recompute(seed, strategy):
    dataset, manifest = generate_document(suite_params(seed))
    from depremedy.ecosystem import parse_dataset, parse_manifest
    index, man = parse_dataset(dataset), parse_manifest(manifest)
    plan = remediate(man, index, EngineConfig(strategy=strategy))
    m = plan.metrics
    assert m.libs_changed == len(plan.changes)
    spans = [abs(index.versions(c.library).index(c.old) - index.versions(c.library).index(c.new))
             for c in plan.changes]
    assert m.total_version_span == sum(spans) == sum(c.span for c in plan.changes)
    kinds = [classify_change(c.old, c.new).value for c in plan.changes]
    assert m.count_major == kinds.count("major")
    assert m.count_minor == kinds.count("minor")
    assert m.count_dev == sum(1 for c in plan.changes if not c.old.is_prerelease and c.new.is_prerelease)

    def active(dg):
        reach = _reachable(dg, man, index)
        out = {}
        for lib, v in dg.vertices.items():
            for r in index.records(lib):
                if r.affects(v):
                    if r.vulnerable_methods is None:
                        out[r.id] = "unknown"
                    else:
                        out[r.id] = "reachable" if any((lib, x) in reach for x in r.vulnerable_methods) \
                            else "unreachable"
        return out

    before = active(resolve(man, index))
    after = active(resolve(man, index, plan.final))
    assert m.fixed_count == len(before) - len(after)
    assert (m.vul_reachable, m.vul_unknown, m.vul_unreachable) == tuple(
        list(after.values()).count(k) for k in ("reachable", "unknown", "unreachable"))
    for c in plan.per_cve:
        if c.status.startswith("unfixable:"):
            assert c.status.split(":", 1)[1] in REASONS
            assert strategy == "engine"
        assert (c.status == "fixed") == (c.id not in after)


def test_plan_reasons_on_fixture():
    index, man = load_fixture("soft_backtrack")
    plan = remediate(man, index)
    # c only appears mid-run, so only p's record is tracked
    assert {c.id: c.status for c in plan.per_cve} == {"CVE-SB-P": "fixed"}
