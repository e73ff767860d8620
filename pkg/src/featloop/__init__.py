"""Closed-loop discovery of multi-value text features for CTR models.

A fleet of agents shares one append-only memory of prompt-score tuples.
Each agent grounds its current prompt template per document to extract
comma-separated tags (the sentinel role), scores the resulting feature
column by the relative information gain it adds to a hashed logistic
CTR model (the oracle role), and feeds best/worst prompts back into a
rewriting step (the architect role).
"""

from .core import (
    PLACEHOLDER,
    SEED_USER_TEMPLATE,
    SYSTEM_PROMPT_TEXT,
    Document,
    DuplicatePlaceholder,
    MissingPlaceholder,
    PromptTemplate,
    ScoreRecord,
    TagList,
    TemplateError,
    UNSPECIFIED,
    content_hash,
    normalize_text,
    seed_template,
    validate_template,
)
from .memory import MemoryStore, StorageUnavailable, open_store
from .oracle import (
    CtrDataset,
    EvalResult,
    Impression,
    TrainConfig,
    cross_entropy,
    relative_score,
    rig,
    train,
)
from .sentinel import ExtractionCache, FeatureColumn, extract_corpus, ground, parse_tags
from .architect import build_context_block, build_instruction, refine, select_base
from .agent import AgentConfig, FleetConfig, evaluate_prompt, run_agent, run_fleet
from .simharness import WorldSpec, build_world, gen_world
from .analysis import embed_prompts, project_2d, score_histogram
from .server import ServerConfig, TelemetryServer

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CtrDataset",
    "Document",
    "DuplicatePlaceholder",
    "EvalResult",
    "ExtractionCache",
    "FeatureColumn",
    "FleetConfig",
    "Impression",
    "MemoryStore",
    "MissingPlaceholder",
    "PLACEHOLDER",
    "PromptTemplate",
    "SEED_USER_TEMPLATE",
    "SYSTEM_PROMPT_TEXT",
    "ScoreRecord",
    "ServerConfig",
    "StorageUnavailable",
    "TagList",
    "TelemetryServer",
    "TemplateError",
    "TrainConfig",
    "UNSPECIFIED",
    "WorldSpec",
    "build_context_block",
    "build_instruction",
    "build_world",
    "content_hash",
    "cross_entropy",
    "embed_prompts",
    "evaluate_prompt",
    "extract_corpus",
    "gen_world",
    "ground",
    "normalize_text",
    "open_store",
    "parse_tags",
    "project_2d",
    "refine",
    "relative_score",
    "rig",
    "run_agent",
    "run_fleet",
    "score_histogram",
    "seed_template",
    "select_base",
    "train",
    "validate_template",
]
