"""Compact constructors for hand-written datasets and manifests."""

from depremedy.ecosystem import parse_dataset, parse_manifest

MAIN = "app.Main.main()"


def version(v, deps=(), methods=(), calls=()):
    """deps: (lib, requirement[, scope]); calls: (caller, target_lib, target_method)."""
    methods = list(dict.fromkeys([*methods, *(c[0] for c in calls)]))
    return {
        "version": v,
        "dependencies": [{"lib": d[0], "requirement": d[1], "scope": d[2] if len(d) > 2 else "compile"}
                         for d in deps],
        "methods": methods,
        "invocations": [{"caller": c, "target_lib": t, "target_method": m} for c, t, m in calls],
    }


def vuln(cid, lib, affected, cvss, methods=None):
    doc = {"id": cid, "lib": lib, "affected": affected, "cvss": cvss}
    if methods is not None:
        doc["vulnerable_methods"] = list(methods)
    return doc


def dataset(libs, vulns=()):
    return {"libraries": [{"id": lib, "versions": vers} for lib, vers in libs.items()],
            "vulnerabilities": list(vulns)}


def manifest(deps, calls=(), methods=(MAIN,), entry_points=None):
    methods = list(dict.fromkeys([*methods, *(c[0] for c in calls)]))
    doc = {"name": "app", "methods": methods,
           "direct_dependencies": [{"lib": d[0], "requirement": d[1], "scope": d[2] if len(d) > 2 else "compile"}
                                   for d in deps],
           "invocations": [{"caller": c, "target_lib": t, "target_method": m} for c, t, m in calls]}
    if entry_points is not None:
        doc["entry_points"] = list(entry_points)
    return doc


def build(libs, vulns, deps, calls=(), **kw):
    return parse_dataset(dataset(libs, vulns)), parse_manifest(manifest(deps, calls, **kw))
