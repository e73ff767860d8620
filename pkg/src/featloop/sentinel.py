"""Tag extraction: ground a template per document, call the fast backend,
parse the comma-separated reply, and cache everything.

Running a template over a whole corpus yields one FeatureColumn: a
document-id -> TagList map the oracle can score.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import (
    Document,
    PLACEHOLDER,
    PromptTemplate,
    SYSTEM_PROMPT_TEXT,
    TagList,
    UNSPECIFIED,
    content_hash,
    utc_now,
)
from .llm import Backend, BackendError, ChatRequest
from .logio import LineLog, encode_line

MAX_TAG_WORDS = 6
DEFAULT_SENTINEL_TEMPERATURE = 0.2
FAILURE_THRESHOLD = 0.2

CACHE_FIELDS = ("template_id", "document_id", "tags", "created_at")


class ExtractionFailed(RuntimeError):
    def __init__(self, document_id: str, cause: str = ""):
        super().__init__(f"extraction failed for document {document_id[:12]}: {cause}")
        self.document_id = document_id


class ColumnFailed(RuntimeError):
    def __init__(self, failure_fraction: float):
        super().__init__(f"column failed: {failure_fraction:.2f} of documents errored")
        self.failure_fraction = failure_fraction


def ground(template: PromptTemplate, document: Document) -> str:
    """Substitute the document text into the template, exactly once.

    Single-pass: a literal placeholder inside the document text survives.
    """
    return template.user_template.replace(PLACEHOLDER, document.raw_text, 1)


def parse_tags(raw_output: str) -> TagList:
    """Normalize model output into a valid TagList; never raises.

    First nonempty line, split on commas, trimmed and whitespace-collapsed,
    empties and over-long pieces dropped, case-insensitive dedupe keeping
    the first occurrence, truncated to 10. Anything unusable degrades to
    the "unspecified" sentinel value.
    """
    line = ""
    for candidate in raw_output.splitlines():
        if candidate.strip():
            line = candidate
            break
    tags: list[str] = []
    seen: set[str] = set()
    for piece in line.split(","):
        tag = " ".join(piece.split())
        if not tag:
            continue
        if len(tag.split()) > MAX_TAG_WORDS:
            continue
        key = tag.lower()
        if key in seen:
            continue
        seen.add(key)
        tags.append(tag)
        if len(tags) == 10:
            break
    if not tags:
        return UNSPECIFIED
    return TagList(tuple(tags))


class ExtractionCache:
    """Persistent (template_id, document_id) -> TagList map.

    Backed by the same checksummed line format as the memory log; a hit
    bypasses the backend entirely. Safe for concurrent use from one
    process; each agent owns its own cache file.
    """

    def __init__(self, path: str, durable: bool = False):
        self._log = LineLog(path, durable=durable)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], TagList] = {}
        self._load()

    def _load(self) -> None:
        records, _ = self._log.read_valid(0)
        for fields in records:
            try:
                key = (fields["template_id"], fields["document_id"])
                tags = TagList(tuple(fields["tags"]))
            except (KeyError, TypeError, ValueError):
                continue
            self._entries[key] = tags

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, template_id: str, document_id: str) -> TagList | None:
        with self._lock:
            return self._entries.get((template_id, document_id))

    def put(self, template_id: str, document_id: str, tags: TagList) -> None:
        with self._lock:
            if (template_id, document_id) in self._entries:
                return
            self._entries[(template_id, document_id)] = tags
            line = encode_line(
                {
                    "template_id": template_id,
                    "document_id": document_id,
                    "tags": list(tags.tags),
                    "created_at": utc_now(),
                }
            )
            self._log.append_bytes(line)


@dataclass(frozen=True)
class FeatureColumn:
    """One feature: a TagList per corpus document, produced by one template."""

    template_id: str
    values: Mapping[str, TagList]
    coverage: float


def extract(
    template: PromptTemplate,
    document: Document,
    backend: Backend,
    cache: ExtractionCache,
    *,
    temperature: float = DEFAULT_SENTINEL_TEMPERATURE,
    system: str = SYSTEM_PROMPT_TEXT,
    model: str = "",
) -> TagList:
    """Tag one document, consulting the cache first."""
    hit = cache.get(template.id, document.id)
    if hit is not None:
        return hit
    request = ChatRequest(
        system=system,
        user=ground(template, document),
        temperature=temperature,
        model=model,
    )
    try:
        reply = backend.complete(request)
    except BackendError as exc:
        raise ExtractionFailed(document.id, str(exc)) from exc
    tags = parse_tags(reply.text)
    cache.put(template.id, document.id, tags)
    return tags


def extract_corpus(
    template: PromptTemplate,
    documents: Sequence[Document],
    backend: Backend,
    cache: ExtractionCache,
    parallelism: int = 4,
    *,
    temperature: float = DEFAULT_SENTINEL_TEMPERATURE,
    system: str = SYSTEM_PROMPT_TEXT,
    model: str = "",
    failure_threshold: float = FAILURE_THRESHOLD,
) -> FeatureColumn:
    """Tag every document with bounded parallelism.

    Per-document failures become "unspecified"; if more than
    `failure_threshold` of documents fail the whole column is rejected.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    unique: dict[str, Document] = {}
    for doc in documents:
        unique.setdefault(doc.id, doc)

    failures = 0
    values: dict[str, TagList] = {}

    def one(doc: Document) -> tuple[str, TagList | None]:
        try:
            return doc.id, extract(
                template, doc, backend, cache,
                temperature=temperature, system=system, model=model,
            )
        except ExtractionFailed:
            return doc.id, None

    docs = list(unique.values())
    with ThreadPoolExecutor(max_workers=min(parallelism, len(docs) or 1)) as pool:
        for doc_id, tags in pool.map(one, docs):
            if tags is None:
                failures += 1
                values[doc_id] = UNSPECIFIED
            else:
                values[doc_id] = tags

    fraction = failures / len(docs) if docs else 0.0
    if fraction > failure_threshold:
        raise ColumnFailed(fraction)
    informative = sum(1 for t in values.values() if not t.is_unspecified())
    coverage = informative / len(values) if values else 0.0
    return FeatureColumn(template_id=template.id, values=values, coverage=coverage)
