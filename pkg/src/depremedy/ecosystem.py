"""Declarative ecosystem dataset: libraries, versions, call facts and vulnerabilities."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from .versions import (
    Version,
    VersionError,
    VersionRequirement,
    parse_requirement,
    parse_version,
)

SCOPES = ("compile", "runtime", "provided", "test")


class DatasetError(ValueError):
    """A dataset or manifest violates the schema; ``path`` is a JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class UnknownCoordinate(KeyError):
    pass


@dataclass(frozen=True, order=True)
class LibraryId:
    group: str
    artifact: str

    def __str__(self) -> str:
        if not self.group:
            return self.artifact
        return f"{self.group}:{self.artifact}"

    @classmethod
    def parse(cls, text: str) -> LibraryId:
        group, sep, artifact = text.partition(":")
        if not sep or not group or not artifact or ":" in artifact:
            raise ValueError(f"library id must be 'group:artifact', got {text!r}")
        return cls(group, artifact)


# Sentinel for the user's project; sorts before every real library.
ROOT = LibraryId("", "<root>")

_METHOD = re.compile(r"^(?P<owner>[^()\s]+)\.(?P<name>[^.()\s]+)(?P<desc>\(.*)$")


@dataclass(frozen=True, order=True)
class MethodId:
    owner_class: str
    name: str
    descriptor: str

    def __str__(self) -> str:
        return f"{self.owner_class}.{self.name}{self.descriptor}"

    @classmethod
    def parse(cls, text: str) -> MethodId:
        m = _METHOD.match(text)
        if not m:
            raise ValueError(f"method must look like 'pkg.Class.name(desc)', got {text!r}")
        return cls(m.group("owner"), m.group("name"), m.group("desc"))


@dataclass(frozen=True)
class Dependency:
    lib: LibraryId
    requirement: VersionRequirement
    scope: str = "compile"


@dataclass(frozen=True)
class Invocation:
    caller: MethodId
    target_library: LibraryId
    target_method: MethodId


@dataclass(frozen=True)
class VersionEntry:
    version: Version
    dependencies: tuple[Dependency, ...] = ()
    methods: frozenset[MethodId] = frozenset()
    invocations: tuple[Invocation, ...] = ()


@dataclass(frozen=True)
class VulnerabilityRecord:
    id: str
    library: LibraryId
    affected: VersionRequirement
    cvss: float
    vulnerable_methods: frozenset[MethodId] | None = None

    def affects(self, v: Version) -> bool:
        return self.affected.contains(v)


@dataclass(frozen=True, eq=False)
class EcosystemIndex:
    libraries: Mapping[LibraryId, tuple[VersionEntry, ...]]
    vulnerabilities: Mapping[LibraryId, tuple[VulnerabilityRecord, ...]]
    _entries: dict = field(default_factory=dict, repr=False)
    _published: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for lib, entries in self.libraries.items():
            self._published[lib] = tuple(e.version for e in entries)
            for e in entries:
                self._entries[(lib, e.version)] = e

    def versions(self, lib: LibraryId) -> tuple[Version, ...]:
        try:
            return self._published[lib]
        except KeyError:
            raise UnknownCoordinate(f"unknown library {lib}") from None

    def entry(self, lib: LibraryId, v: Version) -> VersionEntry:
        try:
            return self._entries[(lib, v)]
        except KeyError:
            if lib not in self._published:
                raise UnknownCoordinate(f"unknown library {lib}") from None
            raise UnknownCoordinate(f"unknown version {v} of {lib}") from None

    def has(self, lib: LibraryId, v: Version | None = None) -> bool:
        if v is None:
            return lib in self._published
        return (lib, v) in self._entries

    def records(self, lib: LibraryId) -> tuple[VulnerabilityRecord, ...]:
        return self.vulnerabilities.get(lib, ())


def vulnerabilities_of(index: EcosystemIndex, lib: LibraryId, v: Version) -> list[VulnerabilityRecord]:
    index.entry(lib, v)
    return [r for r in index.records(lib) if r.affects(v)]


def method_surface(index: EcosystemIndex, lib: LibraryId, v: Version) -> frozenset[MethodId]:
    return index.entry(lib, v).methods


# -- loading -----------------------------------------------------------------


def _expect_keys(obj: Any, path: str, required: Iterable[str], optional: Iterable[str] = ()) -> None:
    if not isinstance(obj, dict):
        raise DatasetError(path, "expected an object")
    required = tuple(required)
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise DatasetError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in obj:
            raise DatasetError(f"{path}.{key}", "missing required field")


def _expect_list(obj: Any, path: str) -> list:
    if not isinstance(obj, list):
        raise DatasetError(path, "expected a list")
    return obj


def _expect_str(obj: Any, path: str) -> str:
    if not isinstance(obj, str) or not obj:
        raise DatasetError(path, "expected a non-empty string")
    return obj


def _lib(obj: Any, path: str) -> LibraryId:
    try:
        return LibraryId.parse(_expect_str(obj, path))
    except ValueError as e:
        raise DatasetError(path, str(e)) from None


def _method(obj: Any, path: str) -> MethodId:
    try:
        return MethodId.parse(_expect_str(obj, path))
    except ValueError as e:
        raise DatasetError(path, str(e)) from None


def _version(obj: Any, path: str) -> Version:
    try:
        return parse_version(_expect_str(obj, path))
    except VersionError as e:
        raise DatasetError(path, str(e)) from None


def _requirement(obj: Any, path: str) -> VersionRequirement:
    try:
        return parse_requirement(_expect_str(obj, path))
    except VersionError as e:
        raise DatasetError(path, str(e)) from None


def _dependencies(items: Any, path: str) -> tuple[Dependency, ...]:
    deps = []
    seen: set[LibraryId] = set()
    for i, d in enumerate(_expect_list(items, path)):
        p = f"{path}[{i}]"
        _expect_keys(d, p, ("lib", "requirement"), ("scope",))
        lib = _lib(d["lib"], f"{p}.lib")
        if lib in seen:
            raise DatasetError(f"{p}.lib", f"duplicate dependency on {lib}")
        seen.add(lib)
        scope = d.get("scope", "compile")
        if scope not in SCOPES:
            raise DatasetError(f"{p}.scope", f"scope must be one of {', '.join(SCOPES)}")
        deps.append(Dependency(lib, _requirement(d["requirement"], f"{p}.requirement"), scope))
    return tuple(deps)


def _invocations(items: Any, path: str, methods: frozenset[MethodId] | None) -> tuple[Invocation, ...]:
    out = []
    for i, inv in enumerate(_expect_list(items, path)):
        p = f"{path}[{i}]"
        _expect_keys(inv, p, ("caller", "target_lib", "target_method"))
        caller = _method(inv["caller"], f"{p}.caller")
        if methods is not None and caller not in methods:
            raise DatasetError(f"{p}.caller", f"caller {caller} is not a declared method")
        out.append(Invocation(caller, _lib(inv["target_lib"], f"{p}.target_lib"),
                              _method(inv["target_method"], f"{p}.target_method")))
    return tuple(out)


def parse_dataset(doc: Any) -> EcosystemIndex:
    _expect_keys(doc, "$", ("libraries", "vulnerabilities"))
    libraries: dict[LibraryId, tuple[VersionEntry, ...]] = {}
    for li, lib_doc in enumerate(_expect_list(doc["libraries"], "$.libraries")):
        lp = f"$.libraries[{li}]"
        _expect_keys(lib_doc, lp, ("id", "versions"))
        lib = _lib(lib_doc["id"], f"{lp}.id")
        if lib in libraries:
            raise DatasetError(f"{lp}.id", f"duplicate library {lib}")
        entries: list[VersionEntry] = []
        for vi, v_doc in enumerate(_expect_list(lib_doc["versions"], f"{lp}.versions")):
            vp = f"{lp}.versions[{vi}]"
            _expect_keys(v_doc, vp, ("version",), ("dependencies", "methods", "invocations"))
            version = _version(v_doc["version"], f"{vp}.version")
            if entries and not entries[-1].version < version:
                raise DatasetError(f"{vp}.version", "versions must be sorted ascending without duplicates")
            methods = frozenset(
                _method(m, f"{vp}.methods[{mi}]")
                for mi, m in enumerate(_expect_list(v_doc.get("methods", []), f"{vp}.methods"))
            )
            entries.append(VersionEntry(
                version,
                _dependencies(v_doc.get("dependencies", []), f"{vp}.dependencies"),
                methods,
                _invocations(v_doc.get("invocations", []), f"{vp}.invocations", methods),
            ))
        if not entries:
            raise DatasetError(f"{lp}.versions", "a library needs at least one version")
        libraries[lib] = tuple(entries)

    _check_references(doc, libraries)

    vulns: dict[LibraryId, list[VulnerabilityRecord]] = {}
    seen_ids: set[str] = set()
    for ri, r_doc in enumerate(_expect_list(doc["vulnerabilities"], "$.vulnerabilities")):
        rp = f"$.vulnerabilities[{ri}]"
        _expect_keys(r_doc, rp, ("id", "lib", "affected", "cvss"), ("vulnerable_methods",))
        rid = _expect_str(r_doc["id"], f"{rp}.id")
        if rid in seen_ids:
            raise DatasetError(f"{rp}.id", f"duplicate vulnerability id {rid}")
        seen_ids.add(rid)
        lib = _lib(r_doc["lib"], f"{rp}.lib")
        if lib not in libraries:
            raise DatasetError(f"{rp}.lib", f"unknown library {lib}")
        affected = _requirement(r_doc["affected"], f"{rp}.affected")
        if not affected.is_hard:
            raise DatasetError(f"{rp}.affected", "affected versions must be a range set")
        cvss = r_doc["cvss"]
        if isinstance(cvss, bool) or not isinstance(cvss, (int, float)) or not 0 <= cvss <= 10:
            raise DatasetError(f"{rp}.cvss", "cvss must be a number in [0, 10]")
        vm = None
        if "vulnerable_methods" in r_doc:
            vm = frozenset(
                _method(m, f"{rp}.vulnerable_methods[{mi}]")
                for mi, m in enumerate(_expect_list(r_doc["vulnerable_methods"], f"{rp}.vulnerable_methods"))
            )
        vulns.setdefault(lib, []).append(VulnerabilityRecord(rid, lib, affected, float(cvss), vm))

    return EcosystemIndex(
        MappingProxyType(libraries),
        MappingProxyType({k: tuple(v) for k, v in vulns.items()}),
    )


def _check_references(doc: dict, libraries: dict[LibraryId, tuple[VersionEntry, ...]]) -> None:
    reach = library_closure(libraries)
    for li, lib_doc in enumerate(doc["libraries"]):
        lib = LibraryId.parse(lib_doc["id"])
        for vi, entry in enumerate(libraries[lib]):
            for di, dep in enumerate(entry.dependencies):
                if dep.lib not in libraries:
                    raise DatasetError(
                        f"$.libraries[{li}].versions[{vi}].dependencies[{di}].lib",
                        f"unknown library {dep.lib}")
            declared = {lib} | {d for dep in entry.dependencies for d in reach.get(dep.lib, {dep.lib})}
            for ii, inv in enumerate(entry.invocations):
                p = f"$.libraries[{li}].versions[{vi}].invocations[{ii}].target_lib"
                if inv.target_library not in libraries:
                    raise DatasetError(p, f"invocation {inv.caller} -> {inv.target_method} "
                                          f"targets unknown library {inv.target_library}")
                if inv.target_library not in declared:
                    raise DatasetError(p, f"{inv.target_library} is not a dependency of {lib}")


def library_closure(libraries: Mapping[LibraryId, Iterable[VersionEntry]]) -> dict[LibraryId, frozenset[LibraryId]]:
    """Libraries reachable from each library through any version's declarations."""
    direct = {
        lib: {d.lib for e in entries for d in e.dependencies if d.scope != "test"}
        for lib, entries in libraries.items()
    }
    out: dict[LibraryId, frozenset[LibraryId]] = {}
    for lib in direct:
        seen = {lib}
        stack = [lib]
        while stack:
            for nxt in direct.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        out[lib] = frozenset(seen)
    return out


def load_dataset(path: str | Path) -> EcosystemIndex:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetError("$", f"invalid JSON: {e}") from None
    return parse_dataset(doc)


# -- serialization -----------------------------------------------------------


def dataset_to_json(index: EcosystemIndex) -> dict:
    libs = []
    for lib in sorted(index.libraries):
        versions = []
        for e in index.libraries[lib]:
            versions.append({
                "version": str(e.version),
                "dependencies": [
                    {"lib": str(d.lib), "requirement": str(d.requirement), "scope": d.scope}
                    for d in e.dependencies
                ],
                "methods": sorted(str(m) for m in e.methods),
                "invocations": [
                    {"caller": str(i.caller), "target_lib": str(i.target_library),
                     "target_method": str(i.target_method)}
                    for i in e.invocations
                ],
            })
        libs.append({"id": str(lib), "versions": versions})
    vulns = []
    for lib in sorted(index.vulnerabilities):
        for r in index.vulnerabilities[lib]:
            item: dict[str, Any] = {"id": r.id, "lib": str(lib), "affected": str(r.affected), "cvss": r.cvss}
            if r.vulnerable_methods is not None:
                item["vulnerable_methods"] = sorted(str(m) for m in r.vulnerable_methods)
            vulns.append(item)
    return {"libraries": libs, "vulnerabilities": vulns}


def dumps_canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# -- root manifest -----------------------------------------------------------


@dataclass(frozen=True)
class RootManifest:
    name: str
    methods: frozenset[MethodId]
    direct_dependencies: tuple[Dependency, ...]
    invocations: tuple[Invocation, ...] = ()
    entry_points: frozenset[MethodId] | None = None


def parse_manifest(doc: Any) -> RootManifest:
    _expect_keys(doc, "$", ("name", "methods", "direct_dependencies"), ("entry_points", "invocations"))
    methods = frozenset(_method(m, f"$.methods[{i}]") for i, m in enumerate(_expect_list(doc["methods"], "$.methods")))
    entry = None
    if "entry_points" in doc and doc["entry_points"] is not None:
        entry = frozenset(_method(m, f"$.entry_points[{i}]")
                          for i, m in enumerate(_expect_list(doc["entry_points"], "$.entry_points")))
        for m in entry:
            if m not in methods:
                raise DatasetError("$.entry_points", f"entry point {m} is not a declared method")
    return RootManifest(
        name=_expect_str(doc["name"], "$.name"),
        methods=methods,
        direct_dependencies=_dependencies(doc["direct_dependencies"], "$.direct_dependencies"),
        invocations=_invocations(doc.get("invocations", []), "$.invocations", methods),
        entry_points=entry,
    )


def load_manifest(path: str | Path) -> RootManifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetError("$", f"invalid JSON: {e}") from None
    return parse_manifest(doc)


def manifest_to_json(manifest: RootManifest) -> dict:
    doc: dict[str, Any] = {
        "name": manifest.name,
        "methods": sorted(str(m) for m in manifest.methods),
        "direct_dependencies": [
            {"lib": str(d.lib), "requirement": str(d.requirement), "scope": d.scope}
            for d in manifest.direct_dependencies
        ],
        "invocations": [
            {"caller": str(i.caller), "target_lib": str(i.target_library), "target_method": str(i.target_method)}
            for i in manifest.invocations
        ],
    }
    if manifest.entry_points is not None:
        doc["entry_points"] = sorted(str(m) for m in manifest.entry_points)
    return doc


def validate_manifest(manifest: RootManifest, index: EcosystemIndex) -> None:
    """Cross-check a manifest against an index (libraries must exist)."""
    reach = library_closure(index.libraries)
    declared = set()
    for i, dep in enumerate(manifest.direct_dependencies):
        if not index.has(dep.lib):
            raise DatasetError(f"$.direct_dependencies[{i}].lib", f"unknown library {dep.lib}")
        declared |= reach[dep.lib]
    for i, inv in enumerate(manifest.invocations):
        if inv.target_library not in declared:
            raise DatasetError(f"$.invocations[{i}].target_lib",
                               f"{inv.target_library} is not a dependency of the project")
