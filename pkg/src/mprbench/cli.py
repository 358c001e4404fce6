"""Command-line entry point: ``mprbench <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .dataset import BundleConfig, LlmTextGen, build_bundle, load_bundle, save_bundle, validate_bundle
from .defaults import SCALES, default_meta
from .graph import load_meta
from .implicit import (
    AdapterRegistry,
    ClusterAssignment,
    build_ask_corpus,
    build_mask_corpus,
    export_cluster_corpora,
    kmeans_cluster,
    route,
    write_jsonl,
)
from .memory import KINDS, retrieve
from .pipeline import build_backend, hybrid_paths, memory_factory
from .providers import (
    HashingEmbedder,
    RemoteEmbedder,
    RemoteProvider,
    ScriptedProvider,
    gold_echo_rules,
)
from .reasoning import STRUCTURES, ReasoningConfig
from .evaluation import emit_report, evaluate, load_report, render_report

log = logging.getLogger("mprbench")


def _embedder(name: str):
    return HashingEmbedder() if name == "hashing" else RemoteEmbedder()


def _provider(args, bundle=None):
    if args.provider == "remote":
        return RemoteProvider()
    if args.provider == "gold-echo":
        return ScriptedProvider(gold_echo_rules(bundle.tasks if bundle else []), default="UNKNOWN")
    if args.provider == "unknown":
        return ScriptedProvider((), default="UNKNOWN")
    if not args.script:
        raise SystemExit("--provider scripted needs --script FILE")
    return ScriptedProvider.from_file(args.script)


def _users(bundle, user: str | None):
    return [bundle.user(user)] if user else bundle.sub_datasets


def hop_range(text: str) -> tuple[int, int]:
    """``"2..10"`` or ``"4"``."""
    lo, sep, hi = text.partition("..")
    try:
        return (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None


def cmd_gen(args) -> int:
    meta = load_meta(args.meta) if args.meta else default_meta()
    hop_min, hop_max = args.hops if args.hops else (args.hop_min, args.hop_max)
    cfg = BundleConfig(
        users=args.users, hop_min=hop_min, hop_max=hop_max, per_hop=args.per_hop,
        seed=args.seed, scale=SCALES[args.scale],
    )
    gen = None
    if args.textgen == "llm":
        gen = LlmTextGen(RemoteProvider(), model=args.model)
    bundle = build_bundle(meta, cfg, gen)
    save_bundle(bundle, args.out)
    print(f"wrote {len(bundle.tasks)} tasks for {len(bundle.sub_datasets)} users to {args.out}")
    return 0


def cmd_validate(args) -> int:
    report = validate_bundle(load_bundle(args.bundle))
    print(json.dumps({"checked": report.checked, "ok": report.ok, "failures": report.failures}, indent=2))
    return 0 if report.ok else 1


def cmd_corpus(args) -> int:
    bundle = load_bundle(args.bundle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for sd in _users(bundle, args.user):
        if args.scheme == "mask":
            examples = build_mask_corpus(sd.statements, sd.graph, args.seed, skip_unmatched=args.skip_unmatched)
        else:
            examples = build_ask_corpus(sd.statements, sd.graph)
        total += write_jsonl(examples, out / f"{sd.user_id}.{args.scheme}.jsonl")
    print(f"wrote {total} {args.scheme} examples to {out}")
    return 0


def cmd_cluster(args) -> int:
    bundle = load_bundle(args.bundle)
    embedder = _embedder(args.embedder)
    for sd in _users(bundle, args.user):
        clusters_path, adapters_path = hybrid_paths(args.out, sd.user_id)
        clusters_path.parent.mkdir(parents=True, exist_ok=True)
        assignment = kmeans_cluster(sd.statements, embedder, args.n, seed=args.seed, max_iters=args.max_iters)
        assignment.save(clusters_path)
        AdapterRegistry.for_clusters(args.n, args.base_model, prefix=f"{args.prefix}-{sd.user_id}").save(adapters_path)
        export_cluster_corpora(assignment, sd.statements, sd.graph, args.scheme, clusters_path.parent / "corpora", args.seed)
        print(f"{sd.user_id}: {args.n} clusters, sizes {assignment.sizes()}, inertia {assignment.inertia:.4f}")
    return 0


def cmd_route(args) -> int:
    bundle = load_bundle(args.bundle)
    sd = bundle.user(args.user) if args.user else bundle.sub_datasets[0]
    backend = build_backend(args.memory, sd, embedder=_embedder(args.embedder))
    clusters_path, adapters_path = hybrid_paths(args.hybrid, sd.user_id)
    hits = retrieve(backend, args.query, args.k)
    r = route(hits, ClusterAssignment.load(clusters_path), AdapterRegistry.load(adapters_path))
    print(json.dumps({"model": r.model, "cluster": r.cluster, "votes": r.votes, "fallback": r.fallback,
                      "retrieved": [h.statement_id for h in hits]}, indent=2))
    return 0


def cmd_run(args) -> int:
    bundle = load_bundle(args.bundle)
    provider = _provider(args, bundle)
    config = ReasoningConfig(
        structure=args.structure, max_steps=args.steps, branches=args.branches,
        max_subquestions=args.max_sub, k=args.k, model=args.model, selection=args.selection,
        branch_temperature=args.branch_temperature,
    )
    factory = memory_factory(
        args.memory, k=args.k, model=args.model, hybrid_dir=args.hybrid,
        embedder=_embedder(args.embedder), provider=provider,
        summarizer=args.summarizer, extractor=args.extractor, graph_threshold=args.graph_threshold,
    )
    name = args.memory + ("+hybrid" if args.hybrid else "")
    report, _ = evaluate(
        bundle, config, factory, provider, out_dir=args.out, backend=name, workers=args.workers,
        snapshot={"provider": args.provider, "embedder": args.embedder},
    )
    print(render_report(report, "md"), end="")
    return 0


def cmd_report(args) -> int:
    reports = []
    for d in args.runs:
        loaded = load_report(Path(d) / "report.json" if Path(d).is_dir() else d)
        reports.extend(loaded if isinstance(loaded, list) else [loaded])
    if args.out:
        emit_report(reports, args.format, args.out)
    else:
        print(render_report(reports, args.format), end="")
    return 0


def cmd_bench(args) -> int:
    from .bench import format_rows, run_benchmark

    print(f"active backend: {kernels.BACKEND}")
    print(format_rows(run_benchmark(n_docs=args.docs, n_points=args.points, repeat=args.repeat)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mprbench", description="Personalized multi-hop reasoning benchmark toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=2)
    p.add_argument("--hops", type=hop_range, help="hop range A..B (overrides --hop-min/--hop-max)")
    p.add_argument("--hop-min", type=int, default=2)
    p.add_argument("--hop-max", type=int, default=10)
    p.add_argument("--per-hop", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", choices=sorted(SCALES), default="desk")
    p.add_argument("--meta", help="meta graph JSON/YAML (default: bundled)")
    p.add_argument("--textgen", choices=("template", "llm"), default="template")
    p.add_argument("--model", default="default")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("validate", help="run the dataset oracle sweep")
    p.add_argument("--bundle", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("corpus", help="export MaskSFT / AskSFT corpora")
    p.add_argument("--bundle", required=True)
    p.add_argument("--scheme", choices=("mask", "ask"), default="mask")
    p.add_argument("--out", required=True)
    p.add_argument("--user")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-unmatched", action="store_true")
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("cluster", help="k-means statements and write adapters registry + corpora")
    p.add_argument("--bundle", required=True)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--user")
    p.add_argument("--scheme", choices=("mask", "ask"), default="mask")
    p.add_argument("--embedder", choices=("hashing", "remote"), default="hashing")
    p.add_argument("--base-model", default="default")
    p.add_argument("--prefix", default="lora")
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("route", help="show which adapter a query would be routed to")
    p.add_argument("--dry-run", dest="query", required=True, metavar="QUERY")
    p.add_argument("--bundle", required=True)
    p.add_argument("--hybrid", required=True, help="directory written by `cluster`")
    p.add_argument("--memory", choices=("sparse", "dense", "tree", "graph"), default="dense")
    p.add_argument("--embedder", choices=("hashing", "remote"), default="hashing")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--user")
    p.set_defaults(fn=cmd_route)

    p = sub.add_parser("run", help="evaluate one structure x memory configuration")
    p.add_argument("--bundle", required=True)
    p.add_argument("--structure", choices=STRUCTURES, default="NR")
    p.add_argument("--memory", choices=KINDS, default="sparse")
    p.add_argument("--hybrid", help="directory written by `cluster` to enable adapter routing")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--branches", type=int, default=2)
    p.add_argument("--max-sub", type=int, default=5)
    p.add_argument("--selection", choices=("llm", "round_robin"), default="llm")
    p.add_argument("--branch-temperature", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--provider", choices=("remote", "scripted", "gold-echo", "unknown"), default="remote")
    p.add_argument("--script", help="scripted rules JSON for --provider scripted")
    p.add_argument("--model", default="default")
    p.add_argument("--embedder", choices=("hashing", "remote"), default="hashing")
    p.add_argument("--summarizer", choices=("concat", "llm"), default="concat")
    p.add_argument("--extractor", choices=("metadata", "llm"), default="metadata")
    p.add_argument("--graph-threshold", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", help="combine run reports")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--format", choices=("md", "json", "csv"), default="md")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("bench", help="time compiled vs pure-Python kernels")
    p.add_argument("--docs", type=int, default=15000)
    p.add_argument("--points", type=int, default=15000)
    p.add_argument("--repeat", type=int, default=5)
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
