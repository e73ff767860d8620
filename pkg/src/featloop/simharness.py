"""Deterministic synthetic world for offline end-to-end runs.

Documents carry hidden topic tags that shift their click-through odds.
A simulated extractor recovers those tags with a fidelity that depends
only on which instruction keywords the candidate prompt mentions (plus a
length penalty), and a simulated rewriter mutates prompts toward more
keywords. The fitness landscape is therefore known in closed form and
the whole loop can be verified without any real model.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import PLACEHOLDER, UNSPECIFIED_TAG, Document, TagList
from .llm import Behavior, ChatRequest
from .oracle import CtrDataset, Impression, load_dataset

DEFAULT_KEYWORDS = (
    "topics",
    "entities",
    "intent",
    "audience",
)

TOPIC_WORDS = (
    "astronomy", "quilting", "espresso", "robotics", "surfing", "origami",
    "jazz", "mycology", "chess", "cycling", "pottery", "falconry",
    "gardening", "woodwork", "skiing", "poetry", "baking", "kayaking",
    "painting", "archery", "birdwatch", "calligraphy", "climbing", "dance",
)

FILLER_WORDS = (
    "the", "morning", "river", "stone", "window", "quiet", "garden",
    "letter", "coffee", "train", "shadow", "paper", "blue", "road",
    "evening", "cloud", "bridge", "lamp", "harbor", "meadow", "winter",
    "afternoon", "village", "market", "corner", "mountain", "valley",
)

NOISE_VOCAB = tuple(f"nz{i}" for i in range(24))

_WORD_RE = re.compile(r"[a-z0-9]+")
_REF_RE = re.compile(r"\bsimdoc(\d+)\b")

DEFAULT_TOPIC_COUNT = 8
DEFAULT_DOC_COUNT = 400
DEFAULT_IMPRESSIONS = 8000
DEFAULT_BASE_CTR = 0.35
KEYWORD_ADD_PROB = 0.7
NOISE_VS_DROP_PROB = 0.5
LENGTH_PENALTY_PER_100 = 0.05
LENGTH_THRESHOLD_WORDS = 200


@dataclass(frozen=True)
class WorldSpec:
    """Knobs for one synthetic world.

    The last `eval_fraction` of impressions draw from a disjoint pool of
    late-arriving documents. That cold-start structure is what separates a
    real multi-value feature (topics recur across documents, so their
    weights transfer) from any per-document memorization (useless on
    documents unseen in training).
    """

    seed: int = 0
    n_topics: int = DEFAULT_TOPIC_COUNT
    n_docs: int = DEFAULT_DOC_COUNT
    n_impressions: int = DEFAULT_IMPRESSIONS
    base_ctr: float = DEFAULT_BASE_CTR
    topic_lift: Mapping[str, float] | None = None
    keyword_set: tuple[str, ...] = DEFAULT_KEYWORDS
    eval_fraction: float = 0.2
    holdout_doc_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.n_topics < 1 or self.n_docs < 1 or self.n_impressions < 1:
            raise ValueError("world sizes must be positive")
        if not 0.0 < self.base_ctr < 1.0:
            raise ValueError("base_ctr must be in (0, 1)")
        if not self.keyword_set:
            raise ValueError("keyword_set must be nonempty")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError("eval_fraction must be in (0, 1)")
        if not 0.0 < self.holdout_doc_fraction < 1.0:
            raise ValueError("holdout_doc_fraction must be in (0, 1)")

    def lifts(self) -> dict[str, float]:
        # An explicit all-zero map is allowed: it builds a signal-free world
        # for calibration checks (empirical CTR must then match base_ctr).
        if self.topic_lift is not None:
            return dict(self.topic_lift)
        names = topic_names(self.n_topics)
        # Modest lifts: strong enough that topics beat the null bound by an
        # order of magnitude, weak enough that per-document memorization
        # cannot leak through shared noise tags onto fresh documents.
        return {
            name: (1.0 if i % 2 == 0 else -1.0) * (0.8 + 0.7 * (i % 5) / 4.0)
            for i, name in enumerate(names)
        }


def topic_names(n: int) -> list[str]:
    names = list(TOPIC_WORDS[:n])
    names.extend(f"subject{i}" for i in range(len(names), n))
    return names


@dataclass(frozen=True)
class World:
    spec: WorldSpec
    corpus: tuple[Document, ...]
    dataset: CtrDataset
    truth: Mapping[str, TagList]
    docs_by_ref: Mapping[str, Document] = field(repr=False, default_factory=dict)

    def find_document(self, text: str) -> Document | None:
        match = _REF_RE.search(text)
        if match is None:
            return None
        return self.docs_by_ref.get(match.group(0))


def _tokens(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def fidelity(prompt_text: str, keywords: Sequence[str]) -> float:
    """Fraction of keywords mentioned, minus 0.05 per 100 words over 200."""
    tokens = _tokens(prompt_text)
    present = sum(1 for kw in keywords if kw in tokens)
    words = len(prompt_text.split())
    penalty = LENGTH_PENALTY_PER_100 * max(
        0.0, (words - LENGTH_THRESHOLD_WORDS) / 100.0
    )
    return min(1.0, max(0.0, present / len(keywords) - penalty))


def _stable_rng(*parts: object) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def build_world(spec: WorldSpec) -> World:
    corpus, dataset, truth = gen_world(spec)
    by_ref = {}
    for doc in corpus:
        match = _REF_RE.search(doc.raw_text)
        by_ref[match.group(0)] = doc
    return World(
        spec=spec, corpus=corpus, dataset=dataset, truth=truth, docs_by_ref=by_ref
    )


def gen_world(spec: WorldSpec) -> tuple[tuple[Document, ...], CtrDataset, dict[str, TagList]]:
    """Corpus with topic tokens embedded in filler text, impressions with
    Bernoulli labels from the per-document topic lifts, and the truth column."""
    rng = np.random.default_rng(spec.seed)
    lifts = spec.lifts()
    names = list(lifts.keys())

    corpus = []
    truth: dict[str, TagList] = {}
    doc_logits = []
    for i in range(spec.n_docs):
        k = int(rng.integers(1, min(3, len(names)) + 1))
        picked = [names[j] for j in rng.choice(len(names), size=k, replace=False)]
        filler = [FILLER_WORDS[j] for j in rng.integers(0, len(FILLER_WORDS), size=30)]
        insert_at = sorted(rng.choice(31, size=k, replace=False))
        words = list(filler)
        for offset, (pos, topic) in enumerate(zip(insert_at, picked)):
            words.insert(pos + offset, topic)
        text = f"simdoc{i} " + " ".join(words)
        doc = Document.from_text(text)
        corpus.append(doc)
        truth[doc.id] = TagList(tuple(picked))
        doc_logits.append(sum(lifts[t] for t in picked))

    base_logit = float(np.log(spec.base_ctr / (1.0 - spec.base_ctr)))
    slots = ("s1", "s2", "s3")
    devices = ("mobile", "desktop", "tablet")
    hours = tuple(f"h{i}" for i in range(6))
    impressions = []
    # Early impressions use the first docs only; the holdout window uses
    # fresh docs, so nothing document-specific can be memorized into it.
    n_eval = math.ceil(spec.n_impressions * spec.eval_fraction)
    boundary = spec.n_impressions - n_eval
    n_fresh = 0
    if spec.n_docs >= 2 and boundary > 0:
        n_fresh = min(
            spec.n_docs - 1, max(1, round(spec.n_docs * spec.holdout_doc_fraction))
        )
    first_fresh = spec.n_docs - n_fresh
    doc_idx = rng.integers(0, spec.n_docs, size=spec.n_impressions)
    uniforms = rng.random(spec.n_impressions)
    ctx_draws = rng.integers(0, 1 << 30, size=(spec.n_impressions, 3))
    for t in range(spec.n_impressions):
        if n_fresh and t < boundary:
            i = int(doc_idx[t]) % first_fresh
        elif n_fresh:
            i = first_fresh + int(doc_idx[t]) % n_fresh
        else:
            i = int(doc_idx[t])
        p = 1.0 / (1.0 + np.exp(-(base_logit + doc_logits[i])))
        impressions.append(
            Impression(
                document_id=corpus[i].id,
                time_index=t,
                context={
                    "slot": slots[ctx_draws[t, 0] % 3],
                    "device": devices[ctx_draws[t, 1] % 3],
                    "hour": hours[ctx_draws[t, 2] % 6],
                },
                label=int(uniforms[t] < p),
            )
        )
    dataset = CtrDataset(
        impressions=tuple(impressions), base_fields=("slot", "device", "hour")
    )
    return tuple(corpus), dataset, truth


def random_column(world: World, seed: int = 0) -> dict[str, TagList]:
    """Label-independent noise tags; the null feature for separation checks."""
    rng = _stable_rng(seed, "random-column")
    column = {}
    for doc in world.corpus:
        k = rng.randint(1, 2)
        column[doc.id] = TagList(tuple(rng.sample(NOISE_VOCAB, k)))
    return column


def sim_sentinel_behavior(world: World) -> Behavior:
    """Tag extractor whose accuracy equals the prompt's keyword fidelity.

    Each true tag is kept with probability f; otherwise it is corrupted to
    a noise tag or dropped. Output depends only on (world seed, user text),
    so repeated calls agree with the extraction cache.
    """

    def behavior(request: ChatRequest, seed: int) -> str:
        doc = world.find_document(request.user)
        if doc is None:
            return UNSPECIFIED_TAG
        template_part = request.user.replace(doc.raw_text, " ")
        f = fidelity(template_part, world.spec.keyword_set)
        rng = _stable_rng(world.spec.seed, "sentinel", request.user)
        out = []
        for tag in world.truth[doc.id].tags:
            if rng.random() < f:
                out.append(tag)
            elif rng.random() < NOISE_VS_DROP_PROB:
                out.append(rng.choice(NOISE_VOCAB))
        return ", ".join(out) if out else UNSPECIFIED_TAG

    return behavior


_BEST_ENTRY_RE = re.compile(r"^\[score=(-?\d+\.\d{6})\] (.*)$")
_BASE_RE = re.compile(r"^Original USER prompt: (.*)$")


def _parse_instruction(instruction: str) -> tuple[str | None, str | None]:
    """(best context prompt, base prompt) out of a refinement instruction."""
    best = None
    base = None
    in_best = False
    for line in instruction.splitlines():
        if line.startswith("BEST PROMPTS"):
            in_best = True
            continue
        if line.startswith("WORST PROMPTS"):
            in_best = False
            continue
        entry = _BEST_ENTRY_RE.match(line)
        if entry and in_best and best is None:
            best = entry.group(2)
        base_match = _BASE_RE.match(line)
        if base_match:
            base = base_match.group(1)
    return best, base


def sim_architect_behavior(world: World) -> Behavior:
    """Prompt rewriter that mutates the best context prompt: usually adds a
    missing keyword, otherwise prunes one keyword-free sentence."""

    def behavior(request: ChatRequest, seed: int) -> str:
        best, base = _parse_instruction(request.user)
        target = best if best is not None else base
        if target is None:
            target = request.user
        rng = _stable_rng(world.spec.seed, "architect", request.user)
        tokens = _tokens(target)
        missing = [kw for kw in world.spec.keyword_set if kw not in tokens]
        if missing and rng.random() < KEYWORD_ADD_PROB:
            kw = rng.choice(missing)
            return f"{target} Focus on the {kw} of the text."
        sentences = [s for s in target.split(". ") if s]
        removable = [
            i
            for i, s in enumerate(sentences)
            if PLACEHOLDER not in s
            and not any(kw in _tokens(s) for kw in world.spec.keyword_set)
        ]
        if len(sentences) > 1 and removable:
            del sentences[rng.choice(removable)]
            return ". ".join(sentences)
        return target

    return behavior


def world_from_files(
    corpus_path: str,
    dataset_path: str,
    truth_path: str,
    seed: int = 0,
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS,
) -> World:
    """Rebuild a World around previously emitted files so simulated
    behaviors can run against them in another process."""
    corpus = tuple(load_corpus(corpus_path))
    dataset, _ = load_dataset(dataset_path)
    truth = load_truth(truth_path)
    spec = WorldSpec(
        seed=seed,
        n_docs=len(corpus),
        n_impressions=len(dataset.impressions),
        keyword_set=keywords,
    )
    by_ref = {}
    for doc in corpus:
        match = _REF_RE.search(doc.raw_text)
        if match:
            by_ref[match.group(0)] = doc
    return World(spec=spec, corpus=corpus, dataset=dataset, truth=truth, docs_by_ref=by_ref)


def save_truth(truth: Mapping[str, TagList], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("doc_id\ttags\n")
        for doc_id in sorted(truth):
            fh.write(f"{doc_id}\t" + "|".join(truth[doc_id].tags) + "\n")


def load_truth(path: str) -> dict[str, TagList]:
    truth = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["doc_id", "tags"]:
            raise ValueError(f"truth header must be ['doc_id', 'tags'], got {header}")
        for line in fh:
            doc_id, _, tags = line.rstrip("\n").partition("\t")
            truth[doc_id] = TagList(tuple(tags.split("|")))
    return truth


def save_corpus(corpus: Sequence[Document], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("doc_id\traw_text\n")
        for doc in corpus:
            fh.write(f"{doc.id}\t{doc.raw_text}\n")


def load_corpus(path: str) -> list[Document]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["doc_id", "raw_text"]:
            raise ValueError(f"corpus header must be ['doc_id', 'raw_text'], got {header}")
        for line in fh:
            doc_id, _, raw_text = line.rstrip("\n").partition("\t")
            doc = Document.from_text(raw_text)
            if doc.id != doc_id:
                doc = Document(id=doc_id, raw_text=doc.raw_text)
            docs.append(doc)
    return docs
