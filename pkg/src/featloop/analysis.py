"""Offline views over the memory log: prompt embeddings, a deterministic
2D projection, and score histograms.

The embedder is a hashed character-trigram term-frequency vectorizer and
the projection is top-2 PCA by power iteration, so identical logs always
produce identical pictures; raw embeddings are exportable for anyone who
prefers external projection tooling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import STATUS_OK, ScoreRecord
from .oracle import hash_index

EMBED_DIM = 256
NGRAM = 3
NGRAM_FIELD = "g3"
POWER_ITERATIONS = 100
POWER_TOL = 1e-9


class RankDeficient(ArithmeticError):
    """All rows identical after centering; there is no direction to project onto."""


@dataclass(frozen=True)
class ProjectedPrompt:
    prompt_id: str
    agent_id: str
    relative_score: float
    x: float
    y: float


def _char_ngrams(text: str) -> list[str]:
    if len(text) < NGRAM:
        return [text]
    return [text[i : i + NGRAM] for i in range(len(text) - NGRAM + 1)]


def embed_prompts(prompts: Sequence[str]) -> np.ndarray:
    """n x 256 matrix of l2-normalized hashed trigram counts."""
    if not prompts:
        raise ValueError("need at least one prompt")
    matrix = np.zeros((len(prompts), EMBED_DIM), dtype=np.float64)
    memo: dict[str, int] = {}
    for row, text in enumerate(prompts):
        for gram in _char_ngrams(text):
            idx = memo.get(gram)
            if idx is None:
                idx = hash_index(NGRAM_FIELD, gram, EMBED_DIM)
                memo[gram] = idx
            matrix[row, idx] += 1.0
        norm = np.linalg.norm(matrix[row])
        if norm > 0.0:
            matrix[row] /= norm
    return matrix


def _power_component(
    cov: np.ndarray,
    start: np.ndarray,
    previous: Sequence[np.ndarray] = (),
) -> tuple[np.ndarray, float]:
    """Leading eigenvector of `cov` orthogonal to `previous`, by power
    iteration with a fixed budget.

    Re-orthogonalizing every iterate keeps deflation error from leaking the
    first component into the second; convergence is judged on the vector
    itself because the Rayleigh quotient settles quadratically faster than
    the direction does. Returns a zero vector when nothing remains (rank
    deficiency).
    """
    v = start / np.linalg.norm(start)
    for _ in range(POWER_ITERATIONS):
        w = cov @ v
        for prev in previous:
            w -= (w @ prev) * prev
        norm = float(np.linalg.norm(w))
        if norm <= 1e-30:
            return np.zeros_like(v), 0.0
        w /= norm
        if float(np.linalg.norm(w - v)) <= POWER_TOL:
            v = w
            break
        v = w
    largest = int(np.argmax(np.abs(v)))
    if v[largest] < 0.0:
        v = -v
    return v, float(v @ cov @ v)


def project_2d(matrix: np.ndarray) -> list[tuple[float, float]]:
    """Mean-centered coordinates along the two leading principal directions.

    Deterministic: fixed iteration budget, fixed start vector, and the sign
    of each component is fixed by making its largest-magnitude loading
    positive. Raises RankDeficient when every row is identical.
    """
    data = np.asarray(matrix, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a 2D matrix with at least 2 rows")
    centered = data - data.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-15):
        raise RankDeficient("all rows identical")
    cov = centered.T @ centered
    start = np.random.default_rng(0).standard_normal(data.shape[1])
    v1, lam1 = _power_component(cov, start)
    cov2 = cov - lam1 * np.outer(v1, v1)
    v2, _ = _power_component(cov2, start, previous=(v1,))
    coords = np.stack([centered @ v1, centered @ v2], axis=1)
    return [(float(x), float(y)) for x, y in coords]


def project_records(
    records: Iterable[ScoreRecord],
) -> tuple[list[ProjectedPrompt], bool]:
    """One projected point per distinct ok prompt, first occurrence wins.

    Returns (points, rank_deficient). Degenerate inputs (under 2 distinct
    prompts, or identical embeddings) place every point at the origin.
    """
    chosen: dict[str, ScoreRecord] = {}
    for record in records:
        if record.status == STATUS_OK and record.prompt_id not in chosen:
            chosen[record.prompt_id] = record
    ordered = sorted(chosen.values(), key=lambda r: r.seq)
    if not ordered:
        return [], False
    if len(ordered) == 1:
        r = ordered[0]
        return [ProjectedPrompt(r.prompt_id, r.agent_id, r.relative_score, 0.0, 0.0)], False
    try:
        coords = project_2d(embed_prompts([r.prompt_text for r in ordered]))
        flagged = False
    except RankDeficient:
        coords = [(0.0, 0.0)] * len(ordered)
        flagged = True
    points = [
        ProjectedPrompt(r.prompt_id, r.agent_id, r.relative_score, x, y)
        for r, (x, y) in zip(ordered, coords)
    ]
    return points, flagged


def score_histogram(
    records: Iterable[ScoreRecord],
    agent_id: str = "all",
    n_bins: int = 20,
) -> list[tuple[float, float, int]]:
    """Equal-width bins over [min, max] of ok scores in scope; every bin is
    right-open except the last, which is closed so the maximum counts."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    scores = [
        r.relative_score
        for r in records
        if r.status == STATUS_OK and (agent_id in ("all", "") or r.agent_id == agent_id)
    ]
    if not scores:
        return []
    lo = min(scores)
    hi = max(scores)
    width = (hi - lo) / n_bins
    counts = [0] * n_bins
    for s in scores:
        if width == 0.0:
            idx = n_bins - 1
        else:
            idx = min(int((s - lo) / width), n_bins - 1)
        counts[idx] += 1
    return [
        (lo + i * width, lo + (i + 1) * width if i < n_bins - 1 else hi, counts[i])
        for i in range(n_bins)
    ]


MATRIX_HEADER = ["prompt_id", "agent_id", "score"] + [f"v{i}" for i in range(EMBED_DIM)]
PROJECTION_HEADER = ["prompt_id", "agent_id", "score", "x", "y"]


def export_matrix(records: Iterable[ScoreRecord], path: str) -> int:
    """Raw embedding rows for external projection tools; returns row count."""
    chosen: dict[str, ScoreRecord] = {}
    for record in records:
        if record.status == STATUS_OK and record.prompt_id not in chosen:
            chosen[record.prompt_id] = record
    ordered = sorted(chosen.values(), key=lambda r: r.seq)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(MATRIX_HEADER) + "\n")
        if ordered:
            matrix = embed_prompts([r.prompt_text for r in ordered])
            for record, row in zip(ordered, matrix):
                cells = [record.prompt_id, record.agent_id, f"{record.relative_score:.12g}"]
                cells.extend(f"{value:.12g}" for value in row)
                fh.write("\t".join(cells) + "\n")
    return len(ordered)


def export_projection(points: Iterable[ProjectedPrompt], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(PROJECTION_HEADER) + "\n")
        for p in points:
            fh.write(
                f"{p.prompt_id}\t{p.agent_id}\t{p.relative_score:.12g}"
                f"\t{p.x:.12g}\t{p.y:.12g}\n"
            )
            n += 1
    return n
