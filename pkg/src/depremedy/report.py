"""Remediation plans, metrics and their canonical renderings."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Any, Iterable

from .depgraph import DependencyGraph, ResolutionError, resolve
from .ecosystem import EcosystemIndex, LibraryId, RootManifest, UnknownCoordinate, dumps_canonical
from .engine import EngineConfig
from .objectives import OBJECTIVE_ORDER, ObjectiveVector, change_vector, risk_of
from .oracle import Baseline, simulate_compile
from .reachability import CallGraph, ReachabilityClass, classify_record
from .strategies import Outcome, run_strategy
from .versions import ChangeKind, Version, classify_change, distance

REASONS = ("all_versions_vulnerable", "secure_versions_incompatible", "soft_backtrack_tradeoff")


@dataclass(frozen=True)
class Change:
    library: LibraryId
    old: Version
    new: Version
    kind: ChangeKind
    span: int

    def to_json(self) -> dict:
        return {"lib": str(self.library), "old": str(self.old), "new": str(self.new),
                "kind": self.kind.value, "span": self.span}


@dataclass
class Metrics:
    vul_reachable: int = 0
    vul_unreachable: int = 0
    vul_unknown: int = 0
    fixed_count: int = 0
    libs_changed: int = 0
    total_version_span: int = 0
    count_dev: int = 0
    count_major: int = 0
    count_minor: int = 0
    elapsed: float = 0.0

    def to_json(self) -> dict:
        # elapsed lives in the timing sidecar so plans stay byte-stable
        return {k: v for k, v in self.__dict__.items() if k != "elapsed"}


@dataclass(frozen=True)
class CveStatus:
    id: str
    library: LibraryId
    before: ReachabilityClass | None
    after: ReachabilityClass | None
    status: str

    def to_json(self) -> dict:
        return {"id": self.id, "lib": str(self.library),
                "before": self.before.value if self.before else None,
                "after": self.after.value if self.after else None,
                "status": self.status}


@dataclass
class RemediationPlan:
    strategy: str
    config: EngineConfig
    changes: list[Change]
    added: list[tuple[LibraryId, Version]]
    removed: list[tuple[LibraryId, Version]]
    metrics: Metrics
    per_cve: list[CveStatus]
    failures: list[str]
    before: ObjectiveVector
    after: ObjectiveVector
    compile_ok: bool
    backtracks: list[dict] = field(default_factory=list)
    final: dict[LibraryId, Version] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "config": {"weights": self.config.weights.as_list(), "order": list(OBJECTIVE_ORDER),
                       "seed": self.config.seed, "budget": self.config.budget},
            "changes": [c.to_json() for c in self.changes],
            "added": [{"lib": str(l), "version": str(v)} for l, v in self.added],
            "removed": [{"lib": str(l), "version": str(v)} for l, v in self.removed],
            "metrics": self.metrics.to_json(),
            "per_cve": [c.to_json() for c in self.per_cve],
            "failures": list(self.failures),
            "objective": {"before": self.before.to_json(), "after": self.after.to_json()},
            "compile_ok": self.compile_ok,
            "backtracks": self.backtracks,
            "final": {str(l): str(v) for l, v in sorted(self.final.items())},
        }

    def canonical(self) -> str:
        return dumps_canonical(self.to_json())

    def status_of(self, cve_id: str) -> str | None:
        return next((c.status for c in self.per_cve if c.id == cve_id), None)


def _active(dg: DependencyGraph, cg: CallGraph, index: EcosystemIndex) -> dict[str, tuple]:
    out = {}
    for lib, v in dg.vertices.items():
        for r in index.records(lib):
            if r.affects(v):
                out[r.id] = (r, classify_record(r, cg))
    return out


def global_vector(dg: DependencyGraph, cg: CallGraph, index: EcosystemIndex, config: EngineConfig,
                  originals: dict[LibraryId, Version]) -> ObjectiveVector:
    vec = ObjectiveVector(risk_of(dg, cg, index, config.weights))
    for lib, v in sorted(dg.vertices.items()):
        if lib in originals:
            vec = vec + change_vector(index.versions(lib), originals[lib], v)
    return vec


def _secure_version_feasible(manifest: RootManifest, index: EcosystemIndex, final: DependencyGraph,
                             record, baseline: Baseline) -> bool:
    lib = record.library
    pinned = dict(final.vertices)
    for v in index.versions(lib):
        if record.affects(v):
            continue
        try:
            dg = resolve(manifest, index, {**pinned, lib: v})
        except (ResolutionError, UnknownCoordinate):
            continue
        if simulate_compile(dg, manifest, index, baseline).ok:
            return True
    return False


def unfixable_reason(manifest: RootManifest, index: EcosystemIndex, final: DependencyGraph,
                     record, baseline: Baseline) -> str:
    if all(record.affects(v) for v in index.versions(record.library)):
        return "all_versions_vulnerable"
    if not _secure_version_feasible(manifest, index, final, record, baseline):
        return "secure_versions_incompatible"
    return "soft_backtrack_tradeoff"


def compute_metrics(dg0, cg0, dg, cg, index: EcosystemIndex) -> tuple[Metrics, list[Change]]:
    changes = []
    for lib in sorted(set(dg0.vertices) & set(dg.vertices)):
        old, new = dg0.vertices[lib], dg.vertices[lib]
        if old != new:
            versions = index.versions(lib)
            changes.append(Change(lib, old, new, classify_change(old, new), distance(versions, old, new)))
    m = Metrics()
    before = _active(dg0, cg0, index)
    after = _active(dg, cg, index)
    for _, cls in after.values():
        if cls is ReachabilityClass.REACHABLE:
            m.vul_reachable += 1
        elif cls is ReachabilityClass.UNKNOWN:
            m.vul_unknown += 1
        else:
            m.vul_unreachable += 1
    m.fixed_count = len(before) - len(after)
    m.libs_changed = len(changes)
    m.total_version_span = sum(c.span for c in changes)
    for c in changes:
        vec = change_vector(index.versions(c.library), c.old, c.new)
        m.count_dev += vec.f_dev
        m.count_major += vec.f_major
        m.count_minor += vec.f_minor
    return m, changes


def build_plan(manifest: RootManifest, index: EcosystemIndex, outcome: Outcome, config: EngineConfig,
               elapsed: float = 0.0) -> RemediationPlan:
    dg0, cg0, dg, cg = outcome.dg0, outcome.cg0, outcome.dg, outcome.cg
    metrics, changes = compute_metrics(dg0, cg0, dg, cg, index)
    metrics.elapsed = elapsed
    baseline = Baseline.of(manifest, index)
    before = _active(dg0, cg0, index)
    after = _active(dg, cg, index)
    explain = outcome.strategy in ("engine", "unpartitioned")
    per_cve = []
    for cid in sorted(set(before) | set(after)):
        rec = (before.get(cid) or after.get(cid))[0]
        cls_before = before[cid][1] if cid in before else None
        cls_after = after[cid][1] if cid in after else None
        if cid not in after:
            status = "fixed"
        elif explain:
            status = "unfixable:" + unfixable_reason(manifest, index, dg, rec, baseline)
        else:
            status = "remaining"
        per_cve.append(CveStatus(cid, rec.library, cls_before, cls_after, status))
    originals = dict(dg0.vertices)
    backtracks = [
        {"kind": b.kind, "target": str(b.target), "trigger": str(b.trigger),
         "attempted": [str(v) for v in b.attempted],
         "saved_f_vul": None if b.saved_f_vul is None else round(float(b.saved_f_vul), 6),
         "outcome": b.outcome}
        for b in outcome.backtrack_log
    ]
    return RemediationPlan(
        strategy=outcome.strategy,
        config=config,
        changes=changes,
        added=sorted((l, v) for l, v in dg.vertices.items() if l not in dg0.vertices),
        removed=sorted((l, v) for l, v in dg0.vertices.items() if l not in dg.vertices),
        metrics=metrics,
        per_cve=per_cve,
        failures=list(outcome.failures),
        before=global_vector(dg0, cg0, index, config, originals),
        after=global_vector(dg, cg, index, config, originals),
        compile_ok=simulate_compile(dg, manifest, index, baseline).ok,
        backtracks=backtracks,
        final=dict(dg.vertices),
    )


def remediate(manifest: RootManifest, index: EcosystemIndex, config: EngineConfig = EngineConfig()) -> RemediationPlan:
    start = time.monotonic()
    outcome = run_strategy(manifest, index, config)
    return build_plan(manifest, index, outcome, config, time.monotonic() - start)


# -- renderings ----------------------------------------------------------------


def plan_text(plan: RemediationPlan) -> str:
    m = plan.metrics
    lines = [f"strategy: {plan.strategy}",
             f"risk: {float(plan.before.f_vul):.6f} -> {float(plan.after.f_vul):.6f}",
             f"fixed: {m.fixed_count}  remaining: reachable={m.vul_reachable} unknown={m.vul_unknown} "
             f"unreachable={m.vul_unreachable}",
             f"changed: {m.libs_changed} libraries, span {m.total_version_span}, "
             f"dev {m.count_dev}, major {m.count_major}, minor {m.count_minor}",
             f"compile: {'ok' if plan.compile_ok else 'FAILED'}"]
    for c in plan.changes:
        lines.append(f"  {c.library}: {c.old} -> {c.new} ({c.kind.value}, span {c.span})")
    for c in plan.per_cve:
        lines.append(f"  {c.id} [{c.library}]: {c.status}")
    for f in plan.failures:
        lines.append(f"  failure: {f}")
    return "\n".join(lines) + "\n"


COMPARE_COLUMNS = ("strategy", "fixed_count", "vul_reachable", "vul_unknown", "vul_unreachable",
                   "libs_changed", "total_version_span", "count_dev", "count_major", "count_minor",
                   "f_vul_after", "compile_ok")


def compare_rows(plans: Iterable[RemediationPlan]) -> list[dict[str, Any]]:
    rows = []
    for p in plans:
        row = {"strategy": p.strategy, **p.metrics.to_json(),
               "f_vul_after": round(float(p.after.f_vul), 6), "compile_ok": p.compile_ok}
        rows.append({k: row[k] for k in COMPARE_COLUMNS})
    return rows


def rows_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: str(v).lower() if isinstance(v, bool) else v for k, v in r.items()})
    return buf.getvalue()


def rows_text(rows: list[dict[str, Any]]) -> str:
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in COMPARE_COLUMNS}
    out = ["  ".join(c.ljust(widths[c]) for c in COMPARE_COLUMNS)]
    for r in rows:
        out.append("  ".join(str(r[c]).ljust(widths[c]) for c in COMPARE_COLUMNS))
    return "\n".join(out) + "\n"
