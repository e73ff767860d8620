"""Operator entry point: fleet runs, one-off evaluations, memory
inspection, synthetic world generation, the telemetry server, and
embedding/projection export.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from dataclasses import dataclass, field

from .agent import FleetConfig, FleetSummary, agent_config, run_agent, run_fleet
from .agent import LoopResources
from .analysis import export_matrix, export_projection, project_records
from .control import ControlBus
from .core import seed_template, validate_template
from .llm import Backend, backend_from_env, simulated_backend
from .memory import MemoryStore, StorageUnavailable, open_store, record_to_fields
from .oracle import (
    TrainConfig,
    load_dataset,
    relative_score,
    save_dataset,
)
from .sentinel import ExtractionCache
from .server import DEFAULT_BIND, ServerConfig, TelemetryServer, default_static_dir
from .simharness import (
    WorldSpec,
    build_world,
    load_corpus,
    load_truth,
    save_corpus,
    save_truth,
    sim_architect_behavior,
    sim_sentinel_behavior,
    world_from_files,
)

PROMPT_PREVIEW = 60


class OperationFailed(RuntimeError):
    pass


@dataclass
class RunSpec:
    """Parsed fleet config file: loop parameters plus file/backend wiring."""

    fleet: FleetConfig
    corpus_path: str
    dataset_path: str
    backend: str = "sim"
    truth_path: str = ""
    world_seed: int = 0
    raw: dict = field(default_factory=dict)


_FLEET_KEYS = {
    "n_agents": int,
    "max_generations": int,
    "epsilon": float,
    "sentinel_temperature": float,
    "architect_temperature": float,
    "budget": float,
    "dedup": lambda v: v.lower() in ("1", "true", "yes"),
    "rng_seed": int,
    "repeats": int,
    "eval_fraction": float,
    "hash_dim": int,
}


def parse_run_config(text: str, base_dir: str = ".") -> RunSpec:
    """Plain key=value lines; `#` starts a comment; `a<i>.key=value` sets a
    per-agent override. Paths are resolved against the config file's dir."""
    values: dict[str, str] = {}
    overrides: dict[str, dict[str, str]] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key = key.strip()
        value = value.strip()
        if "." in key:
            agent_id, _, sub = key.partition(".")
            overrides.setdefault(agent_id, {})[sub] = value
        else:
            values[key] = value

    def path_of(key: str, required: bool = True) -> str:
        value = values.get(key, "")
        if not value:
            if required:
                raise ValueError(f"config is missing required key {key!r}")
            return ""
        return value if os.path.isabs(value) else os.path.join(base_dir, value)

    fleet_kwargs: dict = {}
    for key, cast in _FLEET_KEYS.items():
        if key in values:
            target = "n_generations" if key == "max_generations" else key
            target = "wall_clock_budget" if key == "budget" else target
            fleet_kwargs[target] = cast(values[key])
    if "n_agents" not in fleet_kwargs:
        raise ValueError("config is missing required key 'n_agents'")
    fleet = FleetConfig(
        memory_path=path_of("memory"),
        control_path=path_of("control", required=False) or None,
        cache_dir=path_of("cache_dir", required=False) or None,
        overrides=overrides,
        **fleet_kwargs,
    )
    backend = values.get("backend", "sim")
    if backend not in ("sim", "http"):
        raise ValueError(f"backend must be sim or http, got {backend!r}")
    spec = RunSpec(
        fleet=fleet,
        corpus_path=path_of("corpus"),
        dataset_path=path_of("dataset"),
        backend=backend,
        truth_path=path_of("truth", required=False),
        world_seed=int(values.get("world_seed", "0")),
        raw=dict(values),
    )
    if backend == "sim" and not spec.truth_path:
        raise ValueError("backend=sim requires a truth= file")
    return spec


def _build_backends(spec: RunSpec) -> tuple[Backend, Backend]:
    if spec.backend == "http":
        return backend_from_env("sentinel"), backend_from_env("architect")
    world = world_from_files(
        spec.corpus_path, spec.dataset_path, spec.truth_path, seed=spec.world_seed
    )
    return (
        simulated_backend(spec.world_seed, sim_sentinel_behavior(world)),
        simulated_backend(spec.world_seed, sim_architect_behavior(world)),
    )


def _print_fleet_summary(summary: FleetSummary, as_json: bool, out) -> None:
    if as_json:
        payload = {
            "best_score": summary.best_score,
            "evaluations": summary.evaluations,
            "agents": [vars(a) for a in summary.agents],
        }
        print(json.dumps(payload, indent=2), file=out)
        return
    for a in summary.agents:
        best = "n/a" if a.best_score is None else f"{a.best_score:.6f}"
        line = (
            f"{a.agent_id}: generations={a.generations} evaluations={a.evaluations}"
            f" skipped={a.skipped} rejected={a.rejected} best={best}"
        )
        if a.aborted:
            line += f" ABORTED ({a.error})"
        print(line, file=out)
    best = summary.best_score
    print(
        f"fleet best relative_score: {'n/a' if best is None else f'{best:.6f}'}",
        file=out,
    )


def _cmd_run(args, out) -> int:
    try:
        text = open(args.config, "r", encoding="utf-8").read()
    except OSError as exc:
        raise OperationFailed(f"cannot read config: {exc}") from exc
    spec = parse_run_config(text, base_dir=os.path.dirname(os.path.abspath(args.config)))
    corpus = load_corpus(spec.corpus_path)
    dataset, _ = load_dataset(spec.dataset_path)
    if args.agent_index is not None:
        sentinel_backend, architect_backend = _build_backends(spec)
        fleet = spec.fleet
        cfg = agent_config(fleet, args.agent_index, seed_template())
        cache_dir = fleet.cache_dir or os.path.dirname(fleet.memory_path) or "."
        resources = LoopResources(
            memory=MemoryStore(fleet.memory_path),
            corpus=corpus,
            dataset=dataset,
            sentinel_backend=sentinel_backend,
            architect_backend=architect_backend,
            cache=ExtractionCache(os.path.join(cache_dir, f"cache-{cfg.agent_id}.jsonl")),
            oracle_config=TrainConfig(hash_dim=fleet.hash_dim, seed=fleet.rng_seed),
            repeats=fleet.repeats,
            eval_fraction=fleet.eval_fraction,
            control=ControlBus(fleet.control_path) if fleet.control_path else None,
            baseline_cache={},
        )
        summary = run_agent(cfg, resources)
        _print_fleet_summary(FleetSummary(agents=[summary]), args.json, out)
        return 1 if summary.aborted else 0

    if args.spawn_processes:
        procs = []
        for i in range(1, spec.fleet.n_agents + 1):
            cmd = [
                sys.executable,
                "-m",
                "featloop",
                "run",
                "-c",
                args.config,
                "--agent-index",
                str(i),
            ]
            procs.append(subprocess.Popen(cmd))
        failures = sum(1 for p in procs if p.wait() != 0)
        if failures:
            raise OperationFailed(f"{failures} agent process(es) failed")
        print(f"{len(procs)} agent processes completed", file=out)
        return 0

    sentinel_backend, architect_backend = _build_backends(spec)
    summary = run_fleet(
        spec.fleet, corpus, dataset, sentinel_backend, architect_backend
    )
    _print_fleet_summary(summary, args.json, out)
    return 1 if all(a.aborted for a in summary.agents) else 0


def _cmd_eval(args, out) -> int:
    dataset, _ = load_dataset(args.dataset)
    config = TrainConfig(hash_dim=args.hash_dim, seed=args.seed)
    if args.tags:
        column = load_truth(args.tags)
    else:
        if not (args.prompt and args.corpus and args.truth):
            raise OperationFailed(
                "--prompt evaluation needs --corpus and --truth (sim backend)"
            )
        template_text = open(args.prompt, "r", encoding="utf-8").read().strip()
        template = validate_template(template_text)
        corpus = load_corpus(args.corpus)
        world = world_from_files(args.corpus, args.dataset, args.truth, seed=args.seed)
        backend = simulated_backend(args.seed, sim_sentinel_behavior(world))
        cache = ExtractionCache(os.path.join(args.cache_dir, "eval-cache.jsonl")) \
            if args.cache_dir else ExtractionCache(args.dataset + ".eval-cache.jsonl")
        from .sentinel import extract_corpus

        column = extract_corpus(template, corpus, backend, cache).values
    result = relative_score(
        dataset, column, config, repeats=args.repeats, eval_fraction=args.eval_fraction
    )
    if args.json:
        payload = {
            "baseline_rig": result.baseline_rig,
            "extended_rig": result.extended_rig,
            "relative_score": result.relative_score,
            "eval_size": result.eval_size,
            "repeats": len(result.per_repeat),
            "per_repeat": [
                {"baseline_rig": r.baseline_rig, "extended_rig": r.extended_rig}
                for r in result.per_repeat
            ],
        }
        print(json.dumps(payload, indent=2), file=out)
    else:
        print(f"baseline_rig    {result.baseline_rig:.6f}", file=out)
        print(f"extended_rig    {result.extended_rig:.6f}", file=out)
        print(f"relative_score  {result.relative_score:.6f}", file=out)
        print(f"eval_size       {result.eval_size}", file=out)
        print(f"repeats         {len(result.per_repeat)}", file=out)
    return 0


def _preview(text: str) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= PROMPT_PREVIEW else flat[: PROMPT_PREVIEW - 3] + "..."


def _cmd_memory(args, out) -> int:
    store = open_store(args.path, durable=False)
    if args.action in ("top", "bottom"):
        records = store.top_k(args.k) if args.action == "top" else store.bottom_k(args.k)
        if args.json:
            print(json.dumps([record_to_fields(r) for r in records], indent=2), file=out)
        else:
            for r in records:
                print(
                    f"{r.seq}\t{r.agent_id}\t{r.relative_score:.6f}\t{r.status}"
                    f"\t{_preview(r.prompt_text)}",
                    file=out,
                )
        return 0
    records = store.read_all()
    sink = open(args.out, "w", encoding="utf-8") if args.out else out
    try:
        for r in records:
            print(json.dumps(record_to_fields(r)), file=sink)
    finally:
        if args.out:
            sink.close()
    if args.out:
        print(f"exported {len(records)} records to {args.out}", file=out)
    return 0


def _cmd_simulate(args, out) -> int:
    spec = WorldSpec(
        seed=args.seed,
        n_topics=args.topics,
        n_docs=args.docs,
        n_impressions=args.impressions,
        base_ctr=args.base_ctr,
    )
    world = build_world(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    corpus_path = os.path.join(args.out_dir, "corpus.tsv")
    dataset_path = os.path.join(args.out_dir, "dataset.tsv")
    truth_path = os.path.join(args.out_dir, "truth.tsv")
    save_corpus(world.corpus, corpus_path)
    save_dataset(world.dataset, dataset_path)
    save_truth(world.truth, truth_path)
    labels = [imp.label for imp in world.dataset.impressions]
    info = {
        "seed": args.seed,
        "docs": len(world.corpus),
        "impressions": len(labels),
        "empirical_ctr": sum(labels) / len(labels),
        "corpus": corpus_path,
        "dataset": dataset_path,
        "truth": truth_path,
    }
    if args.json:
        print(json.dumps(info, indent=2), file=out)
    else:
        for key, value in info.items():
            print(f"{key}: {value}", file=out)
    return 0


def _cmd_serve(args, out) -> int:
    agent_ids = tuple(a for a in (args.agents or "").split(",") if a)
    config = ServerConfig(
        memory_path=args.memory,
        control_path=args.control or args.memory + ".control",
        bind=args.bind,
        static_dir=args.static or default_static_dir(),
        agent_ids=agent_ids,
    )
    server = TelemetryServer(config)
    print(f"serving on http://{args.bind}/", file=out)
    server.serve_forever()
    return 0


def _cmd_project(args, out) -> int:
    store = open_store(args.memory, durable=False)
    records = store.read_all()
    wrote = False
    if args.matrix:
        n = export_matrix(records, args.matrix)
        print(f"wrote {n} embedding rows to {args.matrix}", file=out)
        wrote = True
    points, rank_deficient = project_records(records)
    if args.projection:
        n = export_projection(points, args.projection)
        print(f"wrote {n} projected points to {args.projection}", file=out)
        wrote = True
    if args.json:
        payload = {
            "rank_deficient": rank_deficient,
            "points": [vars(p) for p in points],
        }
        print(json.dumps(payload, indent=2), file=out)
    elif not wrote:
        for p in points:
            print(
                f"{p.prompt_id[:12]}\t{p.agent_id}\t{p.relative_score:.6f}"
                f"\t{p.x:.6f}\t{p.y:.6f}",
                file=out,
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featloop",
        description="Closed-loop discovery and scoring of multi-value text features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an agent fleet from a config file")
    p_run.add_argument("-c", "--config", required=True)
    p_run.add_argument("--spawn-processes", action="store_true")
    p_run.add_argument("--agent-index", type=int, default=None, help=argparse.SUPPRESS)
    p_run.add_argument("--json", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("eval", help="score one prompt or tag column")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--tags", help="doc_id->tags file to score directly")
    p_eval.add_argument("--prompt", help="file holding one prompt template")
    p_eval.add_argument("--corpus")
    p_eval.add_argument("--truth", help="truth file for the simulated extractor")
    p_eval.add_argument("--cache-dir")
    p_eval.add_argument("--repeats", type=int, default=3)
    p_eval.add_argument("--eval-fraction", type=float, default=0.2)
    p_eval.add_argument("--hash-dim", type=int, default=TrainConfig().hash_dim)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--json", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)

    p_mem = sub.add_parser("memory", help="inspect or export the memory log")
    p_mem.add_argument("action", choices=["top", "bottom", "export"])
    p_mem.add_argument("--path", required=True)
    p_mem.add_argument("-k", type=int, default=5)
    p_mem.add_argument("--out")
    p_mem.add_argument("--json", action="store_true")
    p_mem.set_defaults(func=_cmd_memory)

    p_sim = sub.add_parser("simulate", help="emit a synthetic world")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--topics", type=int, default=WorldSpec().n_topics)
    p_sim.add_argument("--docs", type=int, default=WorldSpec().n_docs)
    p_sim.add_argument("--impressions", type=int, default=WorldSpec().n_impressions)
    p_sim.add_argument("--base-ctr", type=float, default=WorldSpec().base_ctr)
    p_sim.add_argument("--json", action="store_true")
    p_sim.set_defaults(func=_cmd_simulate)

    p_serve = sub.add_parser("serve", help="telemetry and control service")
    p_serve.add_argument("--memory", required=True)
    p_serve.add_argument("--control")
    p_serve.add_argument("--bind", default=DEFAULT_BIND)
    p_serve.add_argument("--static")
    p_serve.add_argument("--agents", help="comma-separated agent ids to expose")
    p_serve.set_defaults(func=_cmd_serve)

    p_proj = sub.add_parser("project", help="emit embedding and projection files")
    p_proj.add_argument("--memory", required=True)
    p_proj.add_argument("--matrix")
    p_proj.add_argument("--projection")
    p_proj.add_argument("--json", action="store_true")
    p_proj.set_defaults(func=_cmd_project)

    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (OperationFailed, StorageUnavailable, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
