"""Seeded random ecosystems with a known-consistent original resolution."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .ecosystem import EcosystemIndex, RootManifest, parse_dataset, parse_manifest

STORY_GROUP = "story"
STORY_KINDS = ("fixable", "all_vuln", "secure_incompat", "tradeoff")
EXPECTED_STATUS = {
    "fixable": "fixed",
    "all_vuln": "unfixable:all_versions_vulnerable",
    "secure_incompat": "unfixable:secure_versions_incompatible",
    "tradeoff": "unfixable:soft_backtrack_tradeoff",
}


@dataclass(frozen=True)
class GeneratorParams:
    seed: int = 0
    library_count: int = 12
    max_versions: int = 6
    max_deps_per_version: int = 3
    max_levels: int = 4
    vulnerability_density: float = 0.3
    breaking_change_rate: float = 0.3
    hard_range_rate: float = 0.1
    min_versions: int = 1
    fix_stories: int = 0  # sets of planted stories (one library per kind per set)

    def __post_init__(self) -> None:
        for name in ("library_count", "max_versions", "max_deps_per_version", "max_levels", "min_versions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.min_versions > self.max_versions:
            raise ValueError("min_versions must not exceed max_versions")
        for name in ("vulnerability_density", "breaking_change_rate", "hard_range_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.fix_stories < 0:
            raise ValueError("fix_stories must be >= 0")
        if not -(1 << 63) <= self.seed < (1 << 64):
            raise ValueError("seed must fit in 64 bits")


def _version_strings(rng: random.Random, count: int) -> list[str]:
    major, minor, patch = 1, 0, 0
    out = ["1.0.0"]
    pre = False
    beta = 0
    while len(out) < count:
        if pre:
            out.append(f"{major}.{minor}.{patch}")
            pre = False
            continue
        r = rng.random()
        if r < 0.60:
            patch += 1
        elif r < 0.85:
            minor, patch = minor + 1, 0
        elif r < 0.95:
            major, minor, patch = major + 1, 0, 0
        else:
            minor, patch = minor + 1, 0
            beta += 1
            out.append(f"{major}.{minor}.{patch}-beta{beta}")
            pre = True
            continue
        out.append(f"{major}.{minor}.{patch}")
    return out


def _method(lib_name: str, k: int) -> str:
    return f"gen.{lib_name.capitalize()}.m{k}()"


def generate_document(params: GeneratorParams) -> tuple[dict, dict]:
    """Build the dataset and manifest documents (JSON-shaped dicts)."""
    rng = random.Random(params.seed)
    n = params.library_count
    names = [f"lib{i:02d}" for i in range(n)]
    ids = [f"gen:{name}" for name in names]

    # levels: non-decreasing, every level below the top is populated
    levels = [1]
    for _ in range(1, n):
        levels.append(rng.randint(levels[-1], min(params.max_levels, levels[-1] + 1)))
    by_level: dict[int, list[int]] = {}
    for i, lv in enumerate(levels):
        by_level.setdefault(lv, []).append(i)

    versions = [_version_strings(rng, rng.randint(params.min_versions, params.max_versions)) for _ in range(n)]
    original = [rng.randrange(0, (len(v) + 1) // 2) for v in versions]

    # method surfaces per version
    surfaces: list[list[list[int]]] = []
    for i in range(n):
        pool = rng.randint(3, 5)
        base = list(range(pool))
        per_version = []
        gone: set[int] = set()
        for j, text in enumerate(versions[i]):
            if j and text.rsplit(".", 1)[0] != versions[i][j - 1].rsplit(".", 1)[0] and rng.random() < 0.3:
                base.append(pool)
                pool += 1
            drop = set()
            if j and rng.random() < params.breaking_change_rate:
                victim = rng.choice(base)
                if rng.random() < 0.5:
                    gone.add(victim)
                else:
                    drop.add(victim)
            per_version.append(sorted(set(base) - gone - drop) or [base[-1]])
        surfaces.append(per_version)

    # base children: each library below level 1 gets at least one parent one level up
    children: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        if levels[i] > 1:
            parent = rng.choice(by_level[levels[i] - 1])
            children[parent].append(i)
    for i in range(n):
        below = [c for c in range(n) if levels[i] < levels[c] <= levels[i] + 2 and c not in children[i]]
        room = params.max_deps_per_version - len(children[i])
        if below and room > 0:
            for c in rng.sample(below, min(len(below), rng.randint(0, room))):
                children[i].append(c)
        children[i] = sorted(children[i])[: max(params.max_deps_per_version, 1)]

    # dependency declarations and call sites change only between release series
    series = []
    for i in range(n):
        cur, out = 0, []
        for j, text in enumerate(versions[i]):
            if j and text.rsplit(".", 1)[0] != versions[i][j - 1].rsplit(".", 1)[0]:
                cur += 1
            out.append(cur)
        series.append(out)
    calls = []
    for i in range(n):
        pool = sorted({k for s in surfaces[i] for k in s})
        per_child = {}
        for c in range(n):
            targets = surfaces[c][original[c]]
            per_child[c] = [(rng.choice(pool), rng.choice(targets)) for _ in range(rng.randint(1, 2))]
        internal = tuple(rng.sample(pool, 2)) if len(pool) > 1 and rng.random() < 0.5 else None
        calls.append((per_child, internal))

    lib_docs = []
    for i in range(n):
        v_docs = []
        so = series[i][original[i]]
        plans = {}
        for j, text in enumerate(versions[i]):
            sj = series[i][j]
            if sj not in plans:
                kids = list(children[i])
                if sj != so and rng.random() < 0.15:
                    if kids and rng.random() < 0.5:
                        kids.remove(rng.choice(kids))
                    else:
                        extra = [c for c in range(n) if levels[c] == levels[i] + 1 and c not in kids]
                        if extra and len(kids) < params.max_deps_per_version:
                            kids.append(rng.choice(extra))
                deps = []
                for c in sorted(kids):
                    nc = len(versions[c])
                    pin = min(max(original[c] + (sj - so), 0), nc - 1)
                    if rng.random() < params.hard_range_rate:
                        lo = max(pin - rng.randint(0, 2), 0)
                        hi = pin if sj == so else min(pin + rng.randint(0, 1), nc - 1)
                        req = f"[{versions[c][lo]},{versions[c][hi]}]"
                    else:
                        req = versions[c][pin]
                    deps.append((c, req))
                plans[sj] = deps
            deps = plans[sj]
            surface_ids = set(surfaces[i][j])
            surface = [_method(names[i], k) for k in surfaces[i][j]]
            invocations = []
            per_child, internal = calls[i]
            for c, _ in deps:
                for caller, target in per_child[c]:
                    if caller in surface_ids:
                        invocations.append({"caller": _method(names[i], caller), "target_lib": ids[c],
                                            "target_method": _method(names[c], target)})
            if internal and set(internal) <= surface_ids:
                invocations.append({"caller": _method(names[i], internal[0]), "target_lib": ids[i],
                                    "target_method": _method(names[i], internal[1])})
            v_docs.append({"version": text,
                           "dependencies": [{"lib": ids[c], "requirement": r, "scope": "compile"} for c, r in deps],
                           "methods": surface, "invocations": _dedupe(invocations)})
        lib_docs.append({"id": ids[i], "versions": v_docs})

    vulns = []
    counter = 0
    for i in range(n):
        if rng.random() >= params.vulnerability_density:
            continue
        nv = len(versions[i])
        for _ in range(rng.randint(1, 2)):
            counter += 1
            if rng.random() < 0.7:
                a, b = rng.randint(0, original[i]), rng.randint(original[i], nv - 1)
            else:
                a = rng.randrange(nv)
                b = rng.randint(a, nv - 1)
            rec = {"id": f"CVE-GEN-{counter:04d}", "lib": ids[i],
                   "affected": f"[{versions[i][a]},{versions[i][b]}]",
                   "cvss": round(rng.uniform(2.0, 10.0), 1)}
            if rng.random() >= 0.4:
                pool = sorted({k for s in surfaces[i] for k in s})
                rec["vulnerable_methods"] = sorted(_method(names[i], k) for k in rng.sample(pool, min(len(pool), rng.randint(1, 2))))
            vulns.append(rec)

    root_methods = ["app.Main.main()", "app.Main.run()"]
    direct = []
    root_calls = []
    for i in by_level[1]:
        direct.append({"lib": ids[i], "requirement": versions[i][original[i]], "scope": "compile"})
        for _ in range(rng.randint(1, 2)):
            root_calls.append({"caller": rng.choice(root_methods), "target_lib": ids[i],
                               "target_method": _method(names[i], rng.choice(surfaces[i][original[i]]))})

    for s in range(params.fix_stories):
        for kind in STORY_KINDS:
            _plant_story(kind, s, lib_docs, vulns, direct, root_calls)

    dataset = {"libraries": sorted(lib_docs, key=lambda d: d["id"]), "vulnerabilities": vulns}
    manifest = {"name": f"generated-{params.seed}", "methods": root_methods,
                "direct_dependencies": direct, "invocations": _dedupe(root_calls)}
    return dataset, manifest


def _dedupe(items: list[dict]) -> list[dict]:
    seen = set()
    out = []
    for it in items:
        key = tuple(sorted(it.items()))
        if key not in seen:
            seen.add(key)
            out.append(it)
    return out


def _plant_story(kind: str, s: int, lib_docs, vulns, direct, root_calls) -> None:
    lib = f"{STORY_GROUP}:{kind.replace('_', '-')}-{s}"
    owner = f"st.{kind.title().replace('_', '')}{s}"
    a, b = f"{owner}.a()", f"{owner}.b()"
    full = [a, b]
    surfaces = {"1.0.0": full, "1.0.1": full, "1.1.0": [b] if kind == "secure_incompat" else full}
    lib_docs.append({"id": lib, "versions": [
        {"version": v, "dependencies": [], "methods": m, "invocations": []} for v, m in surfaces.items()]})
    direct.append({"lib": lib, "requirement": "1.0.0", "scope": "compile"})
    root_calls.append({"caller": "app.Main.main()", "target_lib": lib, "target_method": a})
    cve = f"CVE-STORY-{kind.upper().replace('_', '-')}-{s}"
    if kind == "fixable":
        vulns.append({"id": cve, "lib": lib, "affected": "[1.0.0,1.0.0]", "cvss": 7.5, "vulnerable_methods": [a]})
    elif kind == "all_vuln":
        vulns.append({"id": cve, "lib": lib, "affected": "[1.0.0,1.1.0]", "cvss": 6.0, "vulnerable_methods": [a]})
    elif kind == "secure_incompat":
        vulns.append({"id": cve, "lib": lib, "affected": "[1.0.0,1.0.1]", "cvss": 8.0, "vulnerable_methods": [a]})
    else:
        vulns.append({"id": cve, "lib": lib, "affected": "[1.0.0,1.0.0]", "cvss": 4.0})
        vulns.append({"id": f"{cve}-B", "lib": lib, "affected": "[1.0.1,1.1.0]", "cvss": 9.0,
                      "vulnerable_methods": [a]})


def generate_ecosystem(params: GeneratorParams) -> tuple[EcosystemIndex, RootManifest]:
    dataset, manifest = generate_document(params)
    return parse_dataset(dataset), parse_manifest(manifest)


def planted_expectations(index: EcosystemIndex) -> dict[str, str]:
    """Expected per-CVE status for every planted story vulnerability (the extra -B records excluded)."""
    out = {}
    for lib, records in index.vulnerabilities.items():
        if lib.group != STORY_GROUP:
            continue
        kind = lib.artifact.rsplit("-", 1)[0].replace("-", "_")
        for r in records:
            if not r.id.endswith("-B"):
                out[r.id] = EXPECTED_STATUS[kind]
    return out
