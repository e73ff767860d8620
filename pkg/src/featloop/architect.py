"""Prompt refinement: turn memory feedback plus a base prompt into a
rewriting instruction, call the strong backend, and extract a validated
candidate template from its reply."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from .core import (
    SYSTEM_PROMPT_TEXT,
    MissingPlaceholder,
    PromptTemplate,
    TemplateError,
    validate_template,
)
from .llm import Backend, ChatRequest, complete
from .memory import MemoryStore

FEEDBACK_K = 5
DEFAULT_EPSILON = 0.2
DEFAULT_ARCHITECT_TEMPERATURE = 0.7
EMPTY_CONTEXT_LINE = "No evaluated prompts yet."
REPAIR_SUFFIX = " <begin_raw_text> {raw_text} <end_raw_text>"

INSTRUCTION_TEMPLATE = (
    "You are tasked with rewriting the following USER prompt to achieve higher"
    " accuracy when extracting content for building click-through-rate models"
    " and any other comma-separated multi-value feature (topics, persona,"
    " etc.). Be creative, keep the output format unchanged. Think outside the"
    " scope of the existing prompts linked below. Think hard about the"
    " implications of your change. Only return the new USER prompt.\n"
    "{context_block}\n"
    "---\n"
    "Original USER prompt: {base_prompt}\n"
    "---"
)


class RefinementRejected(ValueError):
    def __init__(self, reply: str, reason: str) -> None:
        super().__init__(f"backend reply unusable as a template: {reason}")
        self.reply = reply
        self.reason = reason


@dataclass(frozen=True)
class FeedbackContext:
    best: tuple[tuple[float, str], ...]
    worst: tuple[tuple[float, str], ...]


@dataclass(frozen=True)
class BasePrompt:
    prompt_id: str
    text: str


def build_feedback(memory: MemoryStore, k: int = FEEDBACK_K) -> FeedbackContext:
    best = tuple((r.relative_score, r.prompt_text) for r in memory.top_k(k))
    worst = tuple((r.relative_score, r.prompt_text) for r in memory.bottom_k(k))
    return FeedbackContext(best=best, worst=worst)


def build_context_block(memory: MemoryStore, k: int = FEEDBACK_K) -> str:
    """Feedback for the rewriter: best then worst evaluated prompts, one
    `[score=...] text` entry per prompt with `---` between entries."""
    feedback = build_feedback(memory, k)
    if not feedback.best and not feedback.worst:
        return EMPTY_CONTEXT_LINE
    lines = ["BEST PROMPTS (score)"]
    lines.append(
        "\n---\n".join(f"[score={s:.6f}] {t}" for s, t in feedback.best)
    )
    lines.append("WORST PROMPTS (score)")
    lines.append(
        "\n---\n".join(f"[score={s:.6f}] {t}" for s, t in feedback.worst)
    )
    return "\n".join(lines)


_SUBST_RE = re.compile(r"\{context_block\}|\{base_prompt\}")


def build_instruction(base_prompt: str, context_block: str) -> str:
    """Single-pass substitution, so placeholder-like text inside either
    argument is never expanded again."""
    mapping = {"{context_block}": context_block, "{base_prompt}": base_prompt}
    return _SUBST_RE.sub(lambda m: mapping[m.group(0)], INSTRUCTION_TEMPLATE)


def select_base(
    memory: MemoryStore,
    rng: random.Random,
    epsilon: float,
    seed: PromptTemplate,
) -> BasePrompt:
    """Epsilon-greedy choice over distinct ok prompts; seed when none exist."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0,1]")
    seen: dict[str, BasePrompt] = {}
    for record in memory.read_since(0):
        if record.status == "ok" and record.prompt_id not in seen:
            seen[record.prompt_id] = BasePrompt(record.prompt_id, record.prompt_text)
    if not seen:
        return BasePrompt(seed.id, seed.user_template)
    if rng.random() < epsilon:
        return seen[rng.choice(sorted(seen))]
    best = memory.top_k(1)[0]
    return BasePrompt(best.prompt_id, best.prompt_text)


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)\n?```", re.DOTALL)
_LABEL_RE = re.compile(
    r"^(?:here is|here's)?\s*(?:the)?\s*(?:new|rewritten|improved|revised)?"
    r"\s*(?:user)?\s*prompt\s*[:\-]\s*",
    re.IGNORECASE,
)
_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"))


def extract_reply(reply: str) -> str:
    """Deterministic unwrapping of a model reply down to the bare template:
    one fence layer, then a leading label line, then one quote layer."""
    text = reply.strip()
    fenced = _FENCE_RE.search(text)
    if fenced:
        text = fenced.group(1).strip()
    text = _LABEL_RE.sub("", text, count=1).strip()
    for opener, closer in _QUOTE_PAIRS:
        if len(text) >= 2 and text.startswith(opener) and text.endswith(closer):
            text = text[1:-1].strip()
            break
    return text


def refine(
    base: PromptTemplate,
    memory: MemoryStore,
    backend: Backend,
    temperature: float = DEFAULT_ARCHITECT_TEMPERATURE,
    agent_id: str = "",
) -> PromptTemplate:
    """One rewriting round-trip; raises RefinementRejected when the reply is
    not a usable template even after appending the placeholder suffix."""
    instruction = build_instruction(base.user_template, build_context_block(memory))
    request = ChatRequest(
        system=SYSTEM_PROMPT_TEXT, user=instruction, temperature=temperature
    )
    reply = complete(backend, request).text
    candidate = extract_reply(reply)
    if not candidate:
        raise RefinementRejected(reply, "empty reply")
    kwargs = dict(
        parent_id=base.id,
        agent_id=agent_id or base.agent_id,
        generation=base.generation + 1,
    )
    try:
        return validate_template(candidate, **kwargs)
    except MissingPlaceholder:
        candidate = candidate + REPAIR_SUFFIX
        try:
            return validate_template(candidate, **kwargs)
        except TemplateError as exc:
            raise RefinementRejected(reply, str(exc)) from exc
    except TemplateError as exc:
        raise RefinementRejected(reply, str(exc)) from exc


__all__ = [
    "BasePrompt",
    "FeedbackContext",
    "INSTRUCTION_TEMPLATE",
    "RefinementRejected",
    "build_context_block",
    "build_feedback",
    "build_instruction",
    "extract_reply",
    "refine",
    "select_base",
]
