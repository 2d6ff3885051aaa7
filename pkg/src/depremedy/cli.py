"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .depgraph import ResolutionError, resolve
from .ecosystem import (
    DatasetError,
    UnknownCoordinate,
    dumps_canonical,
    load_dataset,
    load_manifest,
    validate_manifest,
)
from .engine import STRATEGIES, EngineConfig
from .generator import GeneratorParams, generate_document, planted_expectations
from .objectives import RiskWeights
from .oracle import OracleLimits, OracleRefusal, brute_force_optimum
from .reachability import build_callgraph
from .report import compare_rows, plan_text, remediate, rows_csv, rows_text
from .versions import VersionError

EXIT_OK, EXIT_INPUT, EXIT_PARTIAL, EXIT_REFUSED = 0, 2, 3, 4


def _weights(text: str) -> RiskWeights:
    try:
        return RiskWeights.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _strategies(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    for n in names:
        if n not in STRATEGIES:
            raise argparse.ArgumentTypeError(f"unknown strategy {n!r} (choose from {', '.join(STRATEGIES)})")
    return names


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="ecosystem dataset JSON")
    p.add_argument("--manifest", required=True, help="root project manifest JSON")


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", type=_weights, default=RiskWeights(), help="theta weights r,u,n (default 1.0,0.5,0.1)")
    p.add_argument("--budget", type=int, default=8, help="hard backtrack attempts per partition")
    p.add_argument("--seed", type=int, default=0, help="echoed in the plan; generation only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depremedy", description="Remediate vulnerable library versions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("remediate", help="compute a remediation plan")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--strategy", choices=STRATEGIES, default="engine")
    p.add_argument("--out-dir", help="write plan.json, plan.txt and timing.json here")
    p.add_argument("--format", choices=("json", "text", "csv"), default="text")

    p = sub.add_parser("compare", help="run several strategies side by side")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--strategy", type=_strategies, default=list(STRATEGIES),
                   help="comma-separated strategies (default: all)")
    p.add_argument("--out-dir", help="write compare.csv, compare.txt and timing.json here")
    p.add_argument("--format", choices=("json", "text", "csv"), default="text")

    p = sub.add_parser("generate", help="write a random ecosystem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    for name, default in (("library-count", 12), ("max-versions", 6), ("max-deps-per-version", 3),
                          ("max-levels", 4), ("fix-stories", 0)):
        p.add_argument(f"--{name}", type=int, default=default)
    for name, default in (("vulnerability-density", 0.3), ("breaking-change-rate", 0.3), ("hard-range-rate", 0.1)):
        p.add_argument(f"--{name}", type=float, default=default)

    p = sub.add_parser("oracle-check", help="compare the engine with exhaustive search")
    _add_inputs(p)
    _add_config(p)
    p.add_argument("--max-combinations", type=int, default=OracleLimits().max_combinations)
    p.add_argument("--format", choices=("json", "text"), default="text")

    p = sub.add_parser("callgraph", help="print the original resolution's call graph edges")
    _add_inputs(p)
    return parser


def _load(args):
    index = load_dataset(args.dataset)
    manifest = load_manifest(args.manifest)
    validate_manifest(manifest, index)
    return index, manifest


def _write(out_dir: str | None, files: dict[str, str]) -> None:
    if not out_dir:
        return
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (d / name).write_text(text, encoding="utf-8")


def _config(args, strategy: str) -> EngineConfig:
    return EngineConfig(weights=args.weights, budget=args.budget, strategy=strategy, seed=args.seed)


def cmd_remediate(args) -> int:
    index, manifest = _load(args)
    plan = remediate(manifest, index, _config(args, args.strategy))
    canonical = plan.canonical()
    text = plan_text(plan)
    timing = dumps_canonical({"elapsed_seconds": round(plan.metrics.elapsed, 6), "strategy": plan.strategy})
    _write(args.out_dir, {"plan.json": canonical, "plan.txt": text, "timing.json": timing})
    if args.format == "json":
        sys.stdout.write(canonical)
    elif args.format == "csv":
        sys.stdout.write(rows_csv(compare_rows([plan])))
    else:
        sys.stdout.write(text)
    return EXIT_PARTIAL if plan.failures else EXIT_OK


def cmd_compare(args) -> int:
    index, manifest = _load(args)
    plans = []
    timing = {}
    for name in args.strategy:
        plan = remediate(manifest, index, _config(args, name))
        plans.append(plan)
        timing[name] = round(plan.metrics.elapsed, 6)
    rows = compare_rows(plans)
    csv_text = rows_csv(rows)
    text = rows_text(rows)
    _write(args.out_dir, {"compare.csv": csv_text, "compare.txt": text,
                          "compare.json": dumps_canonical(rows),
                          "timing.json": dumps_canonical({"elapsed_seconds": timing})})
    sys.stdout.write({"json": dumps_canonical(rows), "csv": csv_text, "text": text}[args.format])
    return EXIT_OK


def cmd_generate(args) -> int:
    params = GeneratorParams(
        seed=args.seed, library_count=args.library_count, max_versions=args.max_versions,
        max_deps_per_version=args.max_deps_per_version, max_levels=args.max_levels,
        vulnerability_density=args.vulnerability_density, breaking_change_rate=args.breaking_change_rate,
        hard_range_rate=args.hard_range_rate, fix_stories=args.fix_stories)
    dataset, manifest = generate_document(params)
    from .ecosystem import parse_dataset
    stories = planted_expectations(parse_dataset(dataset))
    _write(args.out_dir, {"dataset.json": dumps_canonical(dataset), "manifest.json": dumps_canonical(manifest),
                          "stories.json": dumps_canonical(stories)})
    print(f"wrote {args.out_dir}/dataset.json, manifest.json, stories.json")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    index, manifest = _load(args)
    limits = OracleLimits(args.max_combinations)
    try:
        oracle = brute_force_optimum(manifest, index, args.weights, limits)
    except OracleRefusal as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_REFUSED
    plan = remediate(manifest, index, _config(args, "engine"))
    match = plan.after.f_vul == oracle.vector.f_vul
    doc = {"engine": plan.after.to_json(), "oracle": oracle.vector.to_json(),
           "f_vul_match": match, "vector_match": plan.after == oracle.vector,
           "explored": oracle.explored}
    if args.format == "json":
        sys.stdout.write(dumps_canonical(doc))
    else:
        print(f"engine: {json.dumps(doc['engine'], sort_keys=True)}")
        print(f"oracle: {json.dumps(doc['oracle'], sort_keys=True)}")
        print("verdict: " + ("match" if match else "mismatch (partitioning cost)"))
    return EXIT_OK


def cmd_callgraph(args) -> int:
    index, manifest = _load(args)
    dg = resolve(manifest, index)
    for line in build_callgraph(dg, manifest, index).edge_list():
        print(line)
    return EXIT_OK


COMMANDS = {"remediate": cmd_remediate, "compare": cmd_compare, "generate": cmd_generate,
            "oracle-check": cmd_oracle_check, "callgraph": cmd_callgraph}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DEPREMEDY_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        code = COMMANDS[args.command](args)
    except (DatasetError, VersionError, UnknownCoordinate, ResolutionError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    logging.getLogger(__name__).info("%s finished in %.3fs", args.command, time.monotonic() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
