"""Feature scoring: train a hashed logistic CTR model with and without the
candidate tag field and report the relative-information-gain delta on a
temporal holdout.

The relative score of a feature column is the mean over seeded repeats of
(extended RIG - baseline RIG), both models trained on the identical first
80% of impressions and evaluated on the identical last 20%, so the delta
isolates the feature.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import TagList

MV_FIELD = "mv"
PRED_CLAMP = 1e-6
DEFAULT_EVAL_FRACTION = 0.2
DEFAULT_REPEATS = 3


class DegenerateEval(ValueError):
    """The evaluation slice holds a single label class; RIG is undefined."""


class DegenerateLabels(ValueError):
    """Labels hold a single class; the constant-predictor CE is zero."""


class NonFinite(ArithmeticError):
    """Training diverged: a weight or the loss became non-finite."""


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Impression:
    document_id: str
    time_index: int
    context: Mapping[str, str]
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.time_index < 0:
            raise ValueError("time_index must be nonnegative")


@dataclass(frozen=True)
class CtrDataset:
    impressions: tuple[Impression, ...]
    base_fields: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.impressions:
            raise ValueError("dataset must be nonempty")
        times = [imp.time_index for imp in self.impressions]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("impressions must be sorted by unique time_index")


@dataclass(frozen=True)
class TrainConfig:
    hash_dim: int = 1 << 16
    learning_rate: float = 0.05
    epochs: int = 3
    l2: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError("hash_dim must be a power of two >= 2")


@dataclass
class CtrModel:
    weights: np.ndarray
    bias: float
    hash_dim: int
    config: TrainConfig
    loss_curve: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class RepeatResult:
    baseline_rig: float
    extended_rig: float

    @property
    def relative_score(self) -> float:
        return self.extended_rig - self.baseline_rig


@dataclass(frozen=True)
class EvalResult:
    baseline_rig: float
    extended_rig: float
    relative_score: float
    per_repeat: tuple[RepeatResult, ...]
    eval_size: int


def temporal_split(
    dataset: CtrDataset, eval_fraction: float = DEFAULT_EVAL_FRACTION
) -> tuple[list[Impression], list[Impression]]:
    """Last ceil(n * eval_fraction) impressions become the holdout; no shuffling."""
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1)")
    n = len(dataset.impressions)
    n_eval = math.ceil(n * eval_fraction)
    train = list(dataset.impressions[: n - n_eval])
    holdout = list(dataset.impressions[n - n_eval :])
    labels = {imp.label for imp in holdout}
    if len(labels) < 2:
        raise DegenerateEval("evaluation slice labels are all identical")
    return train, holdout


def hash_index(field_name: str, value: str, hash_dim: int) -> int:
    """Deterministic index for one (field, value) pair.

    The field name participates in the digest so every field gets its own
    namespace inside the shared weight vector.
    """
    if hash_dim < 2 or hash_dim & (hash_dim - 1):
        raise ValueError("hash_dim must be a power of two >= 2")
    digest = hashlib.sha256(f"{field_name}={value}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % hash_dim


def featurize(
    impression: Impression,
    tags: TagList | None,
    hash_dim: int,
    hasher: Callable[[str, str], int] | None = None,
) -> list[tuple[int, float]]:
    """Sparse (index, weight) list: context values at 1.0, tags l1-normalized
    under the "mv" namespace. Colliding indices are summed."""
    h = hasher or (lambda f, v: hash_index(f, v, hash_dim))
    acc: dict[int, float] = {}
    for name, value in impression.context.items():
        idx = h(name, value)
        acc[idx] = acc.get(idx, 0.0) + 1.0
    if tags is not None:
        weight = 1.0 / len(tags.tags)
        for tag in tags.tags:
            idx = h(MV_FIELD, tag)
            acc[idx] = acc.get(idx, 0.0) + weight
    return list(acc.items())


ColumnValues = Mapping[str, TagList]


def _column_values(column) -> ColumnValues | None:
    if column is None:
        return None
    values = getattr(column, "values", column)
    if callable(values):  # a plain dict's .values method, not a FeatureColumn
        return column
    return values


@dataclass
class _Matrix:
    """CSR-ish feature matrix: one row of (index, value) pairs per impression."""

    indices: np.ndarray
    values: np.ndarray
    indptr: np.ndarray
    rows: np.ndarray
    labels: np.ndarray
    n: int


def _build_matrix(
    impressions: Sequence[Impression],
    column: ColumnValues | None,
    hash_dim: int,
) -> _Matrix:
    memo: dict[tuple[str, str], int] = {}

    def h(field_name: str, value: str) -> int:
        key = (field_name, value)
        idx = memo.get(key)
        if idx is None:
            idx = hash_index(field_name, value, hash_dim)
            memo[key] = idx
        return idx

    indices: list[int] = []
    values: list[float] = []
    indptr = [0]
    labels = []
    for imp in impressions:
        tags = column.get(imp.document_id) if column is not None else None
        for idx, val in featurize(imp, tags, hash_dim, hasher=h):
            indices.append(idx)
            values.append(val)
        indptr.append(len(indices))
        labels.append(imp.label)
    indptr_arr = np.asarray(indptr, dtype=np.int64)
    counts = np.diff(indptr_arr)
    return _Matrix(
        indices=np.asarray(indices, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        indptr=indptr_arr,
        rows=np.repeat(np.arange(len(impressions), dtype=np.int64), counts),
        labels=np.asarray(labels, dtype=np.float64),
        n=len(impressions),
    )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def _predict_matrix(w: np.ndarray, b: float, mat: _Matrix) -> np.ndarray:
    contrib = w[mat.indices] * mat.values
    z = np.bincount(mat.rows, weights=contrib, minlength=mat.n) + b
    return _sigmoid(z)


def train(
    impressions: Sequence[Impression],
    column,
    config: TrainConfig,
) -> CtrModel:
    """Fit a logistic model by per-example SGD on log-loss with L2.

    Deterministic given config.seed: the per-epoch shuffle order is drawn
    from one seeded generator, so identical inputs give bit-identical
    weights.
    """
    if not impressions:
        raise ValueError("training set must be nonempty")
    mat = _build_matrix(impressions, _column_values(column), config.hash_dim)
    w = np.zeros(config.hash_dim, dtype=np.float64)
    b = 0.0
    lr = config.learning_rate
    l2 = config.l2
    rng = np.random.default_rng(config.seed)
    model = CtrModel(weights=w, bias=b, hash_dim=config.hash_dim, config=config)

    indices, values, indptr, y = mat.indices, mat.values, mat.indptr, mat.labels
    for _ in range(config.epochs):
        order = rng.permutation(mat.n)
        for i in order:
            s, e = indptr[i], indptr[i + 1]
            ix = indices[s:e]
            v = values[s:e]
            z = w[ix] @ v + b
            p = 1.0 / (1.0 + math.exp(-max(min(z, 35.0), -35.0)))
            g = p - y[i]
            w[ix] -= lr * (g * v + l2 * w[ix])
            b -= lr * g
        if not np.isfinite(w).all() or not math.isfinite(b):
            raise NonFinite("training diverged: non-finite weight after epoch")
        preds = np.clip(_predict_matrix(w, b, mat), PRED_CLAMP, 1.0 - PRED_CLAMP)
        model.loss_curve.append(cross_entropy(preds, y))
    model.bias = b
    return model


def predict(model: CtrModel, impression: Impression, tags: TagList | None = None) -> float:
    """sigma(w.x + b), clamped away from 0 and 1 so CE stays finite."""
    z = model.bias
    for idx, val in featurize(impression, tags, model.hash_dim):
        z += model.weights[idx] * val
    p = 1.0 / (1.0 + math.exp(-max(min(z, 35.0), -35.0)))
    return float(min(max(p, PRED_CLAMP), 1.0 - PRED_CLAMP))


def cross_entropy(preds: Iterable[float], labels: Iterable[float]) -> float:
    """Mean negative log-likelihood of binary labels under `preds`.

    Exact-match predictions (p equal to the label) contribute zero, so a
    perfect unclamped predictor scores exactly 0.
    """
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1 or p.size == 0:
        raise LengthMismatch(f"preds {p.shape} vs labels {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary")
    with np.errstate(divide="ignore"):
        ll = np.where(y == 1.0, np.log(p), np.log1p(-p))
    return float(-ll.mean())


def rig(preds: Iterable[float], labels: Iterable[float]) -> float:
    """1 - CE(preds, labels) / CE(constant mean-label predictor, labels).

    At most 1 (perfect prediction), 0 when matching the constant baseline,
    negative when worse than it.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.size == 0 or y.min() == y.max():
        raise DegenerateLabels("labels must contain both classes")
    p_bar = float(y.mean())
    ce_model = cross_entropy(preds, y)
    ce_const = cross_entropy(np.full(y.shape, p_bar), y)
    return 1.0 - ce_model / ce_const


def loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, np.ndarray, float]:
    """Full-batch log-loss with L2 and its analytic gradient.

    This is the objective the per-example SGD steps descend; the gradient
    check compares it against central finite differences.
    """
    z = features @ weights + bias
    p = _sigmoid(z)
    n = labels.shape[0]
    with np.errstate(divide="ignore"):
        ll = np.where(labels == 1.0, np.log(p), np.log1p(-p))
    loss = float(-ll.mean() + 0.5 * l2 * (weights @ weights))
    residual = p - labels
    grad_w = features.T @ residual / n + l2 * weights
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


def relative_score(
    dataset: CtrDataset,
    column,
    config: TrainConfig = TrainConfig(),
    repeats: int = DEFAULT_REPEATS,
    eval_fraction: float = DEFAULT_EVAL_FRACTION,
    baseline_cache: dict | None = None,
) -> EvalResult:
    """Paired RIG delta of the candidate column over seeded repeats.

    Baseline and extended models share the split and the per-repeat seed.
    `baseline_cache` (valid for one dataset/eval_fraction) lets callers
    reuse baseline RIGs across many candidate columns.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    train_imps, eval_imps = temporal_split(dataset, eval_fraction)
    if not train_imps:
        raise DegenerateEval("temporal split left no training impressions")
    col = _column_values(column)
    eval_labels = np.asarray([imp.label for imp in eval_imps], dtype=np.float64)
    eval_base = _build_matrix(eval_imps, None, config.hash_dim)
    eval_ext = _build_matrix(eval_imps, col, config.hash_dim) if col is not None else eval_base

    results = []
    for r in range(1, repeats + 1):
        repeat_cfg = TrainConfig(
            hash_dim=config.hash_dim,
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            l2=config.l2,
            seed=config.seed + r,
        )
        cache_key = (repeat_cfg.seed, eval_fraction, config.hash_dim,
                     config.learning_rate, config.epochs, config.l2)
        baseline_rig = baseline_cache.get(cache_key) if baseline_cache is not None else None
        if baseline_rig is None:
            base_model = train(train_imps, None, repeat_cfg)
            preds = np.clip(
                _predict_matrix(base_model.weights, base_model.bias, eval_base),
                PRED_CLAMP, 1.0 - PRED_CLAMP,
            )
            baseline_rig = rig(preds, eval_labels)
            if baseline_cache is not None:
                baseline_cache[cache_key] = baseline_rig
        ext_model = train(train_imps, col, repeat_cfg)
        preds = np.clip(
            _predict_matrix(ext_model.weights, ext_model.bias, eval_ext),
            PRED_CLAMP, 1.0 - PRED_CLAMP,
        )
        extended_rig = rig(preds, eval_labels)
        results.append(RepeatResult(baseline_rig=baseline_rig, extended_rig=extended_rig))

    baseline_mean = sum(r.baseline_rig for r in results) / repeats
    extended_mean = sum(r.extended_rig for r in results) / repeats
    score = sum(r.relative_score for r in results) / repeats
    return EvalResult(
        baseline_rig=baseline_mean,
        extended_rig=extended_mean,
        relative_score=score,
        per_repeat=tuple(results),
        eval_size=len(eval_imps),
    )


def eval_slice_size(dataset: CtrDataset, eval_fraction: float = DEFAULT_EVAL_FRACTION) -> int:
    return math.ceil(len(dataset.impressions) * eval_fraction)


# ---------------------------------------------------------------------------
# Dataset file format: UTF-8 TSV with header, columns time_index, label,
# doc_id, then one column per context field; a multi-value column uses "|"
# between tags inside a cell.

def save_dataset(
    dataset: CtrDataset,
    path: str,
    column: ColumnValues | None = None,
    column_name: str = MV_FIELD,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = ["time_index", "label", "doc_id", *dataset.base_fields]
        if column is not None:
            header.append(column_name)
        fh.write("\t".join(header) + "\n")
        for imp in dataset.impressions:
            row = [str(imp.time_index), str(imp.label), imp.document_id]
            row.extend(imp.context.get(name, "") for name in dataset.base_fields)
            if column is not None:
                tags = column.get(imp.document_id)
                row.append("|".join(tags.tags) if tags else "")
            fh.write("\t".join(row) + "\n")


def load_dataset(path: str) -> tuple[CtrDataset, ColumnValues | None]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        expected = ["time_index", "label", "doc_id"]
        if header[:3] != expected:
            raise ValueError(f"dataset header must start with {expected}, got {header[:3]}")
        has_mv = header[-1] == MV_FIELD
        field_names = header[3 : -1 if has_mv else len(header)]
        impressions = []
        column: dict[str, TagList] = {}
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            context = dict(zip(field_names, parts[3 : 3 + len(field_names)]))
            imp = Impression(
                document_id=parts[2],
                time_index=int(parts[0]),
                context=context,
                label=int(parts[1]),
            )
            impressions.append(imp)
            if has_mv and parts[-1]:
                column[imp.document_id] = TagList(tuple(parts[-1].split("|")))
    dataset = CtrDataset(impressions=tuple(impressions), base_fields=tuple(field_names))
    return dataset, (column or None)
