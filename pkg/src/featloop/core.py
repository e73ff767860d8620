"""Domain types and deterministic identity shared by every other module.

Prompt templates, tag lists, documents and score records are immutable
values; identity is a content hash so the same text always maps to the
same id regardless of which process produced it.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from types import MappingProxyType
from typing import Mapping

PLACEHOLDER = "{raw_text}"

MAX_TAGS = 10

UNSPECIFIED_TAG = "unspecified"

# Fixed system-role text for extraction calls. Never rewritten during a run.
SYSTEM_PROMPT_TEXT = (
    "You are a data scientist researcher. "
    "Your job is to extract comma-separated information from text."
)

# The generic starting template every agent refines from.
SEED_USER_TEMPLATE = (
    "Extract up to ten comma-separated pieces of information from the input text "
    "provided next. The information can be anything you deem relevant as a feature "
    "for building a recommender system. Here is the text for processing: "
    "<begin raw text input> {raw_text} <end raw text input>."
)

STATUS_OK = "ok"
STATUS_EXTRACTION_FAILED = "extraction_failed"
STATUS_EVAL_FAILED = "eval_failed"
STATUSES = (STATUS_OK, STATUS_EXTRACTION_FAILED, STATUS_EVAL_FAILED)

_SPACE_RUNS = re.compile(r"[ \t]+")


class TemplateError(ValueError):
    """Base class for template validation failures."""


class MissingPlaceholder(TemplateError):
    """The template contains no {raw_text} placeholder."""


class DuplicatePlaceholder(TemplateError):
    """The template contains more than one {raw_text} placeholder."""


def normalize_text(text: str) -> str:
    """Trim ends and collapse runs of spaces/tabs to a single space.

    Casing and newlines are preserved: prompts are case-sensitive
    instructions and may be deliberately multi-line.
    """
    return _SPACE_RUNS.sub(" ", text).strip()


def content_hash(text: str) -> str:
    """Deterministic digest of the normalized text as lowercase hex."""
    return hashlib.sha256(normalize_text(text).encode("utf-8")).hexdigest()


def utc_now() -> str:
    """Current wall-clock time as an RFC3339 timestamp."""
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class SystemPrompt:
    text: str = SYSTEM_PROMPT_TEXT


@dataclass(frozen=True)
class PromptTemplate:
    """A user-prompt template with a single {raw_text} placeholder.

    `id` is the content hash of the whitespace-normalized template, so two
    templates that differ only in space runs or end padding share an id.
    """

    id: str
    user_template: str
    parent_id: str | None = None
    agent_id: str = ""
    generation: int = 0
    created_at: str = field(default_factory=utc_now)

    def __post_init__(self) -> None:
        if self.generation < 0:
            raise ValueError("generation must be nonnegative")


def validate_template(
    text: str,
    *,
    parent_id: str | None = None,
    agent_id: str = "",
    generation: int = 0,
) -> PromptTemplate:
    """Build a PromptTemplate iff `text` contains exactly one placeholder.

    Raises MissingPlaceholder or DuplicatePlaceholder otherwise.
    """
    occurrences = text.count(PLACEHOLDER)
    if occurrences == 0:
        raise MissingPlaceholder(f"template contains no {PLACEHOLDER!r} placeholder")
    if occurrences > 1:
        raise DuplicatePlaceholder(
            f"template contains {occurrences} {PLACEHOLDER!r} placeholders"
        )
    return PromptTemplate(
        id=content_hash(text),
        user_template=text,
        parent_id=parent_id,
        agent_id=agent_id,
        generation=generation,
    )


def seed_template(agent_id: str = "") -> PromptTemplate:
    """The generation-0 template every agent starts from."""
    return validate_template(SEED_USER_TEMPLATE, agent_id=agent_id)


@dataclass(frozen=True)
class TagList:
    """One multi-value feature value: an ordered list of 1-10 clean tags."""

    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.tags) <= MAX_TAGS:
            raise ValueError(f"tag list must hold 1-{MAX_TAGS} tags, got {len(self.tags)}")
        seen: set[str] = set()
        for tag in self.tags:
            if not tag:
                raise ValueError("empty tag")
            if "," in tag:
                raise ValueError(f"tag contains a comma: {tag!r}")
            if tag != " ".join(tag.split()):
                raise ValueError(f"tag not whitespace-normalized: {tag!r}")
            key = tag.lower()
            if key in seen:
                raise ValueError(f"duplicate tag (case-insensitive): {tag!r}")
            seen.add(key)

    def is_unspecified(self) -> bool:
        return self.tags == (UNSPECIFIED_TAG,)


UNSPECIFIED = TagList((UNSPECIFIED_TAG,))


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    meta: Mapping[str, str] = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self) -> None:
        if not self.raw_text:
            raise ValueError("document raw_text must be nonempty")

    @classmethod
    def from_text(cls, raw_text: str, meta: Mapping[str, str] | None = None) -> "Document":
        return cls(
            id=content_hash(raw_text),
            raw_text=raw_text,
            meta=MappingProxyType(dict(meta or {})),
        )


@dataclass(frozen=True)
class ScoreRecord:
    """One prompt-score tuple, the unit of the shared memory.

    `seq` is assigned by the store; drafts carry seq=-1 until appended.
    For ok records relative_score is exactly extended_rig - baseline_rig.
    """

    prompt_id: str
    prompt_text: str
    agent_id: str
    baseline_rig: float
    extended_rig: float
    relative_score: float
    eval_size: int
    repeats: int
    status: str
    created_at: str = field(default_factory=utc_now)
    seq: int = -1

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status: {self.status!r}")
        if self.eval_size < 1:
            raise ValueError("eval_size must be positive")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")
        if self.baseline_rig > 1.0 or self.extended_rig > 1.0:
            raise ValueError("RIG values are bounded above by 1")
        if self.status == STATUS_OK:
            if self.relative_score != self.extended_rig - self.baseline_rig:
                raise ValueError("relative_score must equal extended_rig - baseline_rig")
