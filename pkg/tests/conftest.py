"""Shared fixtures: small synthetic worlds and record factories."""

from __future__ import annotations

import itertools

import pytest

from featloop.core import ScoreRecord, content_hash
from featloop.simharness import WorldSpec, World, build_world

_counter = itertools.count()


def make_record(
    score: float = 0.0,
    *,
    agent_id: str = "a1",
    status: str = "ok",
    text: str | None = None,
    seq: int = -1,
    baseline: float = 0.1,
) -> ScoreRecord:
    """A valid ScoreRecord with the given relative score."""
    if text is None:
        text = f"prompt {next(_counter)} {{raw_text}}"
    if status == "ok":
        # rel is the literal float difference, as the record type demands
        baseline_rig, extended_rig = baseline, baseline + score
        rel = extended_rig - baseline_rig
    else:
        baseline_rig = extended_rig = rel = 0.0
    return ScoreRecord(
        prompt_id=content_hash(text),
        prompt_text=text,
        agent_id=agent_id,
        baseline_rig=baseline_rig,
        extended_rig=extended_rig,
        relative_score=rel,
        eval_size=10,
        repeats=1,
        status=status,
        seq=seq,
    )


@pytest.fixture(scope="session")
def small_world() -> World:
    """A tiny world for plumbing tests where score quality is irrelevant."""
    return build_world(WorldSpec(seed=5, n_topics=4, n_docs=30, n_impressions=400))


@pytest.fixture(scope="session")
def default_world() -> World:
    """The stock world; built once because label generation dominates."""
    return build_world(WorldSpec(seed=1))
