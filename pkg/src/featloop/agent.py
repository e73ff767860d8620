"""The per-agent closed loop and the fleet runner.

One generation = select a base prompt, ask the rewriter for a candidate,
evaluate it end to end (extract tags for the whole corpus, score the
column), append the resulting record. Agents share the memory store and
nothing else; control commands arrive through the control bus file.
"""

from __future__ import annotations

import math
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .architect import (
    DEFAULT_ARCHITECT_TEMPERATURE,
    DEFAULT_EPSILON,
    RefinementRejected,
    refine,
    select_base,
)
from .control import ControlBus, ControlPoller
from .core import (
    STATUS_EVAL_FAILED,
    STATUS_EXTRACTION_FAILED,
    STATUS_OK,
    Document,
    PromptTemplate,
    ScoreRecord,
    TemplateError,
    seed_template,
    utc_now,
    validate_template,
)
from .llm import Backend, BackendError
from .memory import MemoryStore, StorageUnavailable
from .oracle import (
    DEFAULT_EVAL_FRACTION,
    DEFAULT_REPEATS,
    CtrDataset,
    DegenerateEval,
    DegenerateLabels,
    LengthMismatch,
    NonFinite,
    TrainConfig,
    eval_slice_size,
    relative_score,
)
from .sentinel import (
    DEFAULT_SENTINEL_TEMPERATURE,
    ColumnFailed,
    ExtractionCache,
    extract_corpus,
)

POLL_INTERVAL = 0.05


@dataclass(frozen=True)
class AgentConfig:
    agent_id: str
    seed_prompt: PromptTemplate
    sentinel_temperature: float = DEFAULT_SENTINEL_TEMPERATURE
    architect_temperature: float = DEFAULT_ARCHITECT_TEMPERATURE
    epsilon: float = DEFAULT_EPSILON
    max_generations: int = 30
    wall_clock_budget: float = 3600.0
    dedup: bool = True
    paused: bool = False
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.agent_id:
            raise ValueError("agent_id must be nonempty")
        for t in (self.sentinel_temperature, self.architect_temperature):
            if not 0.0 <= t <= 2.0:
                raise ValueError("temperatures must be in [0,2]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0,1]")
        if self.max_generations < 1:
            raise ValueError("max_generations must be positive")
        if self.wall_clock_budget <= 0:
            raise ValueError("wall_clock_budget must be positive")


@dataclass
class LoopResources:
    """Everything one agent needs besides its own config. `memory` and
    `cache` must not be shared between concurrently running agents; backends
    may be shared (they are thread-safe)."""

    memory: MemoryStore
    corpus: Sequence[Document]
    dataset: CtrDataset
    sentinel_backend: Backend
    architect_backend: Backend
    cache: ExtractionCache
    oracle_config: TrainConfig = TrainConfig()
    repeats: int = DEFAULT_REPEATS
    eval_fraction: float = DEFAULT_EVAL_FRACTION
    control: ControlBus | None = None
    parallelism: int = 4
    baseline_cache: dict | None = None
    clock: Callable[[], float] = time.monotonic
    sleep: Callable[[float], None] = time.sleep


@dataclass
class AgentSummary:
    agent_id: str
    generations: int = 0
    evaluations: int = 0
    skipped: int = 0
    rejected: int = 0
    best_score: float | None = None
    aborted: bool = False
    error: str = ""


@dataclass
class FleetSummary:
    agents: list[AgentSummary] = field(default_factory=list)

    @property
    def best_score(self) -> float | None:
        scores = [a.best_score for a in self.agents if a.best_score is not None]
        return max(scores) if scores else None

    @property
    def evaluations(self) -> int:
        return sum(a.evaluations for a in self.agents)


def evaluate_prompt(
    template: PromptTemplate,
    corpus: Sequence[Document],
    dataset: CtrDataset,
    backend: Backend,
    cache: ExtractionCache,
    config: TrainConfig = TrainConfig(),
    *,
    agent_id: str = "",
    repeats: int = DEFAULT_REPEATS,
    eval_fraction: float = DEFAULT_EVAL_FRACTION,
    sentinel_temperature: float = DEFAULT_SENTINEL_TEMPERATURE,
    parallelism: int = 4,
    baseline_cache: dict | None = None,
) -> ScoreRecord:
    """Extract a tag column with `template`, score it, and encode every
    failure mode in the record status instead of raising."""

    def failed(status: str) -> ScoreRecord:
        return ScoreRecord(
            prompt_id=template.id,
            prompt_text=template.user_template,
            agent_id=agent_id or template.agent_id,
            baseline_rig=0.0,
            extended_rig=0.0,
            relative_score=0.0,
            eval_size=eval_slice_size(dataset, eval_fraction),
            repeats=repeats,
            status=status,
            created_at=utc_now(),
        )

    try:
        column = extract_corpus(
            template,
            corpus,
            backend,
            cache,
            parallelism,
            temperature=sentinel_temperature,
        )
    except ColumnFailed:
        return failed(STATUS_EXTRACTION_FAILED)

    try:
        result = relative_score(
            dataset,
            column,
            config,
            repeats=repeats,
            eval_fraction=eval_fraction,
            baseline_cache=baseline_cache,
        )
    except (DegenerateEval, DegenerateLabels, NonFinite, LengthMismatch, ValueError):
        return failed(STATUS_EVAL_FAILED)

    return ScoreRecord(
        prompt_id=template.id,
        prompt_text=template.user_template,
        agent_id=agent_id or template.agent_id,
        baseline_rig=result.baseline_rig,
        extended_rig=result.extended_rig,
        relative_score=result.extended_rig - result.baseline_rig,
        eval_size=result.eval_size,
        repeats=repeats,
        status=STATUS_OK,
        created_at=utc_now(),
    )


def _adopt(prompt_id: str, text: str, agent_id: str) -> PromptTemplate | None:
    """A prompt first seen through the shared store gets local generation 0;
    lineage depth is tracked per agent, not globally."""
    try:
        template = validate_template(text, parent_id=None, agent_id=agent_id, generation=0)
    except TemplateError:
        return None
    if prompt_id and template.id != prompt_id:
        return replace(template, id=prompt_id)
    return template


def run_agent(config: AgentConfig, resources: LoopResources) -> AgentSummary:
    summary = AgentSummary(agent_id=config.agent_id)
    memory = resources.memory
    rng = random.Random(config.rng_seed)
    registry: dict[str, PromptTemplate] = {config.seed_prompt.id: config.seed_prompt}
    poller = ControlPoller(resources.control, config.agent_id) if resources.control else None
    if poller is not None and config.paused:
        poller.control.paused = True
    deadline = resources.clock() + config.wall_clock_budget

    def note(record: ScoreRecord) -> None:
        summary.evaluations += 1
        if record.status == STATUS_OK and (
            summary.best_score is None or record.relative_score > summary.best_score
        ):
            summary.best_score = record.relative_score

    def evaluate_and_append(template: PromptTemplate) -> None:
        record = evaluate_prompt(
            template,
            resources.corpus,
            resources.dataset,
            resources.sentinel_backend,
            resources.cache,
            resources.oracle_config,
            agent_id=config.agent_id,
            repeats=resources.repeats,
            eval_fraction=resources.eval_fraction,
            sentinel_temperature=config.sentinel_temperature,
            parallelism=resources.parallelism,
            baseline_cache=resources.baseline_cache,
        )
        memory.append(record)
        note(record)

    def wait_while_paused() -> bool:
        while poller is not None and poller.paused:
            if resources.clock() >= deadline:
                return False
            resources.sleep(POLL_INTERVAL)
            poller.poll()
        return resources.clock() < deadline

    try:
        if poller is not None:
            poller.poll()
        if not wait_while_paused():
            return summary
        if not memory.contains(config.seed_prompt.id):
            evaluate_and_append(config.seed_prompt)

        while summary.generations < config.max_generations:
            if poller is not None:
                poller.poll()
                for cmd in poller.drain_seeds():
                    injected = _adopt("", cmd.user_template, config.agent_id)
                    if injected is None:
                        continue
                    registry[injected.id] = injected
                    if not (config.dedup and memory.contains(injected.id)):
                        evaluate_and_append(injected)
            if not wait_while_paused():
                break

            epsilon = config.epsilon
            temperature = config.architect_temperature
            if poller is not None:
                if poller.control.epsilon is not None:
                    epsilon = poller.control.epsilon
                if poller.control.temperature is not None:
                    temperature = poller.control.temperature

            base_choice = select_base(memory, rng, epsilon, config.seed_prompt)
            base = registry.get(base_choice.prompt_id)
            if base is None:
                base = _adopt(base_choice.prompt_id, base_choice.text, config.agent_id)
                if base is None:
                    base = config.seed_prompt
                registry[base.id] = base

            summary.generations += 1
            try:
                candidate = refine(
                    base,
                    memory,
                    resources.architect_backend,
                    temperature,
                    agent_id=config.agent_id,
                )
            except (RefinementRejected, BackendError):
                summary.rejected += 1
                continue
            registry[candidate.id] = candidate
            if config.dedup and memory.contains(candidate.id):
                summary.skipped += 1
                continue
            evaluate_and_append(candidate)
    except StorageUnavailable as exc:
        summary.aborted = True
        summary.error = str(exc)
    return summary


@dataclass(frozen=True)
class FleetConfig:
    n_agents: int
    memory_path: str
    n_generations: int = 30
    epsilon: float = DEFAULT_EPSILON
    sentinel_temperature: float = DEFAULT_SENTINEL_TEMPERATURE
    architect_temperature: float = DEFAULT_ARCHITECT_TEMPERATURE
    wall_clock_budget: float = 3600.0
    dedup: bool = True
    rng_seed: int = 0
    repeats: int = DEFAULT_REPEATS
    eval_fraction: float = DEFAULT_EVAL_FRACTION
    hash_dim: int = TrainConfig().hash_dim
    control_path: str | None = None
    cache_dir: str | None = None
    overrides: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")


def agent_ids(fleet: FleetConfig) -> list[str]:
    return [f"a{i}" for i in range(1, fleet.n_agents + 1)]


_OVERRIDE_CASTS: dict[str, Callable[[str], object]] = {
    "epsilon": float,
    "sentinel_temperature": float,
    "architect_temperature": float,
    "max_generations": int,
    "wall_clock_budget": float,
    "dedup": lambda v: v.lower() in ("1", "true", "yes"),
    "rng_seed": int,
}


def agent_config(fleet: FleetConfig, index: int, seed_prompt: PromptTemplate) -> AgentConfig:
    """Config for 1-based agent `index`, with per-agent overrides applied."""
    agent_id = f"a{index}"
    fields: dict = dict(
        agent_id=agent_id,
        seed_prompt=seed_prompt,
        sentinel_temperature=fleet.sentinel_temperature,
        architect_temperature=fleet.architect_temperature,
        epsilon=fleet.epsilon,
        max_generations=fleet.n_generations,
        wall_clock_budget=fleet.wall_clock_budget,
        dedup=fleet.dedup,
        rng_seed=fleet.rng_seed * 1000 + index,
    )
    for key, raw in fleet.overrides.get(agent_id, {}).items():
        if key not in _OVERRIDE_CASTS:
            raise ValueError(f"unknown per-agent override {key!r}")
        fields[key] = _OVERRIDE_CASTS[key](raw)
    return AgentConfig(**fields)


def run_fleet(
    fleet: FleetConfig,
    corpus: Sequence[Document],
    dataset: CtrDataset,
    sentinel_backend: Backend,
    architect_backend: Backend,
    seed_prompt: PromptTemplate | None = None,
    durable: bool = False,
) -> FleetSummary:
    """Run every agent as a thread sharing only the memory path (plus the
    optional control bus). Per-agent failures are isolated."""
    seed = seed_prompt or seed_template()
    oracle_config = TrainConfig(hash_dim=fleet.hash_dim, seed=fleet.rng_seed)
    summaries: list[AgentSummary | None] = [None] * fleet.n_agents
    threads = []

    def launch(i: int) -> None:
        agent_cfg = agent_config(fleet, i + 1, seed)
        cache_dir = fleet.cache_dir or os.path.dirname(fleet.memory_path) or "."
        cache_path = os.path.join(cache_dir, f"cache-{agent_cfg.agent_id}.jsonl")
        resources = LoopResources(
            memory=MemoryStore(fleet.memory_path, durable=durable),
            corpus=corpus,
            dataset=dataset,
            sentinel_backend=sentinel_backend,
            architect_backend=architect_backend,
            cache=ExtractionCache(cache_path),
            oracle_config=oracle_config,
            repeats=fleet.repeats,
            eval_fraction=fleet.eval_fraction,
            control=ControlBus(fleet.control_path) if fleet.control_path else None,
            baseline_cache={},
        )
        try:
            summaries[i] = run_agent(agent_cfg, resources)
        except Exception as exc:  # noqa: BLE001 - isolation is the contract
            summaries[i] = AgentSummary(
                agent_id=agent_cfg.agent_id, aborted=True, error=repr(exc)
            )

    for i in range(fleet.n_agents):
        t = threading.Thread(target=launch, args=(i,), name=f"agent-{i + 1}")
        t.start()
        threads.append(t)
    for t in threads:
        t.join()
    return FleetSummary(agents=[s for s in summaries if s is not None])


def best_so_far(records: Sequence[ScoreRecord]) -> list[float]:
    """Running maximum of ok relative scores over the log order."""
    trace = []
    best = -math.inf
    for record in sorted(records, key=lambda r: r.seq):
        if record.status == STATUS_OK:
            best = max(best, record.relative_score)
        if best != -math.inf:
            trace.append(best)
    return trace
