from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from featloop.core import TagList
from featloop.oracle import (
    CtrDataset,
    DegenerateEval,
    DegenerateLabels,
    EvalResult,
    Impression,
    LengthMismatch,
    TrainConfig,
    cross_entropy,
    eval_slice_size,
    featurize,
    hash_index,
    load_dataset,
    loss_and_gradient,
    predict,
    relative_score,
    rig,
    save_dataset,
    temporal_split,
    train,
)

# Hand case: labels [1,0,1,1], preds [.9,.2,.7,.6].
# -(ln .9 + ln .8 + ln .7 + ln .6)/4 summed term by term.
HAND_PREDS = [0.9, 0.2, 0.7, 0.6]
HAND_LABELS = [1, 0, 1, 1]
HAND_CE = 0.2990011586691898
HAND_RIG = 0.4682865520136136


def make_dataset(n=120, seed=0, tagged=True):
    """Small dataset where docs with tag "hot" click more often."""
    rnd = random.Random(seed)
    docs = [f"doc{i}" for i in range(8)]
    column = {}
    for i, doc in enumerate(docs):
        column[doc] = TagList(("hot",) if i % 2 else ("cold", "mild"))
    impressions = []
    for t in range(n):
        doc = docs[rnd.randrange(len(docs))]
        p = 0.7 if "hot" in column[doc].tags else 0.25
        impressions.append(
            Impression(
                document_id=doc,
                time_index=t,
                context={"slot": f"s{t % 3}", "device": f"d{t % 2}"},
                label=int(rnd.random() < p),
            )
        )
    dataset = CtrDataset(impressions=tuple(impressions), base_fields=("slot", "device"))
    return (dataset, column) if tagged else dataset


class TestDatasetTypes:
    def test_labels_must_be_binary(self):
        with pytest.raises(ValueError):
            Impression(document_id="d", time_index=0, context={}, label=2)

    def test_impressions_must_be_time_sorted(self):
        a = Impression(document_id="d", time_index=5, context={}, label=0)
        b = Impression(document_id="d", time_index=4, context={}, label=1)
        with pytest.raises(ValueError):
            CtrDataset(impressions=(a, b), base_fields=())

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            CtrDataset(impressions=(), base_fields=())

    def test_hash_dim_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            TrainConfig(hash_dim=1000)


class TestTemporalSplit:
    def test_holdout_is_the_ceil_tail(self):
        dataset, _ = make_dataset(n=101)
        train_part, holdout = temporal_split(dataset, 0.2)
        assert len(holdout) == math.ceil(101 * 0.2)
        assert len(train_part) + len(holdout) == 101
        assert max(i.time_index for i in train_part) < min(i.time_index for i in holdout)

    def test_single_class_holdout_is_degenerate(self):
        imps = tuple(
            Impression(document_id="d", time_index=t, context={}, label=int(t < 8))
            for t in range(10)
        )
        with pytest.raises(DegenerateEval):
            temporal_split(CtrDataset(impressions=imps, base_fields=()), 0.2)

    def test_fraction_bounds(self):
        dataset, _ = make_dataset(n=20)
        with pytest.raises(ValueError):
            temporal_split(dataset, 0.0)
        with pytest.raises(ValueError):
            temporal_split(dataset, 1.0)

    def test_eval_slice_size_matches_split(self):
        dataset, _ = make_dataset(n=101)
        _, holdout = temporal_split(dataset, 0.2)
        assert eval_slice_size(dataset, 0.2) == len(holdout)


class TestHashing:
    def test_stable_and_in_range(self):
        idx = hash_index("slot", "s1", 1 << 16)
        assert idx == hash_index("slot", "s1", 1 << 16)
        assert 0 <= idx < (1 << 16)

    def test_fields_are_namespaced(self):
        assert hash_index("slot", "x", 1 << 16) != hash_index("device", "x", 1 << 16)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            hash_index("slot", "x", 100)


class TestFeaturize:
    IMP = Impression(
        document_id="d", time_index=0, context={"slot": "s1", "device": "d0"}, label=1
    )

    def test_context_weights_are_one(self):
        pairs = dict(featurize(self.IMP, None, 1 << 16))
        assert sorted(pairs.values()) == [1.0, 1.0]

    def test_tags_share_unit_mass(self):
        tags = TagList(("a", "b", "c", "d"))
        pairs = featurize(self.IMP, tags, 1 << 16)
        total = sum(v for _, v in pairs)
        assert total == pytest.approx(len(self.IMP.context) + 1.0)
        assert {v for _, v in pairs if v != 1.0} == {0.25}

    def test_collisions_are_summed(self):
        tags = TagList(("a", "b"))
        pairs = featurize(self.IMP, tags, 2)  # everything lands in 2 buckets
        assert sum(v for _, v in pairs) == pytest.approx(3.0)
        assert len(pairs) <= 2


class TestCrossEntropy:
    def test_hand_case(self):
        assert cross_entropy(HAND_PREDS, HAND_LABELS) == pytest.approx(HAND_CE, abs=1e-12)

    def test_perfect_predictions_score_zero(self):
        assert cross_entropy([1.0, 0.0, 1.0], [1, 0, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            cross_entropy([0.5], [1, 0])

    def test_nonbinary_labels_rejected(self):
        with pytest.raises(ValueError):
            cross_entropy([0.5, 0.5], [0.3, 1.0])


class TestRig:
    def test_constant_mean_predictor_scores_zero(self):
        labels = [1, 0, 1, 1, 0, 1]
        p_bar = sum(labels) / len(labels)
        assert abs(rig([p_bar] * len(labels), labels)) < 1e-12

    def test_perfect_predictions_score_one(self):
        assert rig([1.0, 0.0, 1.0], [1, 0, 1]) == 1.0

    def test_hand_case(self):
        assert rig(HAND_PREDS, HAND_LABELS) == pytest.approx(HAND_RIG, abs=1e-12)

    def test_single_class_labels_rejected(self):
        with pytest.raises(DegenerateLabels):
            rig([0.5, 0.5], [1, 1])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.01, 0.99), st.integers(0, 1)),
                    min_size=4, max_size=40),
           st.randoms(use_true_random=False))
    def test_permutation_invariance(self, pairs, rnd):
        labels = [y for _, y in pairs]
        if len(set(labels)) < 2:
            labels[0] = 1 - labels[0]
        preds = [p for p, _ in pairs]
        value = rig(preds, labels)
        order = list(range(len(pairs)))
        rnd.shuffle(order)
        shuffled = rig([preds[i] for i in order], [labels[i] for i in order])
        assert shuffled == pytest.approx(value, abs=1e-12)


class TestTrain:
    def test_bit_identical_reruns(self):
        dataset, column = make_dataset()
        cfg = TrainConfig(hash_dim=1 << 10, seed=3)
        m1 = train(dataset.impressions, column, cfg)
        m2 = train(dataset.impressions, column, cfg)
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias
        assert m1.loss_curve == m2.loss_curve

    def test_seed_changes_the_model(self):
        dataset, column = make_dataset()
        m1 = train(dataset.impressions, column, TrainConfig(hash_dim=1 << 10, seed=1))
        m2 = train(dataset.impressions, column, TrainConfig(hash_dim=1 << 10, seed=2))
        assert not np.array_equal(m1.weights, m2.weights)

    def test_loss_curve_has_one_point_per_epoch(self):
        dataset, column = make_dataset()
        model = train(dataset.impressions, column, TrainConfig(hash_dim=1 << 10, epochs=4))
        assert len(model.loss_curve) == 4
        assert all(math.isfinite(x) for x in model.loss_curve)

    def test_learning_beats_initial_loss(self):
        dataset, column = make_dataset(n=300)
        model = train(dataset.impressions, column, TrainConfig(hash_dim=1 << 10, epochs=5))
        labels = [i.label for i in dataset.impressions]
        p_bar = sum(labels) / len(labels)
        start = cross_entropy([p_bar] * len(labels), labels)
        assert model.loss_curve[-1] < start

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train([], None, TrainConfig())

    def test_predict_stays_clamped(self):
        dataset, column = make_dataset()
        model = train(dataset.impressions, column, TrainConfig(hash_dim=1 << 10))
        for imp in dataset.impressions[:20]:
            p = predict(model, imp, column.get(imp.document_id))
            assert 1e-6 <= p <= 1 - 1e-6


class TestGradient:
    def test_matches_central_differences(self):
        rnd = np.random.default_rng(0)
        for _ in range(5):
            n, d = 12, 6
            X = rnd.standard_normal((n, d))
            y = (rnd.random(n) < 0.5).astype(float)
            w = rnd.standard_normal(d) * 0.5
            b = float(rnd.standard_normal())
            loss, grad_w, grad_b = loss_and_gradient(w, b, X, y, l2=0.01)
            eps = 1e-6
            for j in range(d):
                step = np.zeros(d)
                step[j] = eps
                hi, _, _ = loss_and_gradient(w + step, b, X, y, l2=0.01)
                lo, _, _ = loss_and_gradient(w - step, b, X, y, l2=0.01)
                numeric = (hi - lo) / (2 * eps)
                assert abs(numeric - grad_w[j]) <= 1e-5 * max(1.0, abs(numeric))
            hi, _, _ = loss_and_gradient(w, b + eps, X, y, l2=0.01)
            lo, _, _ = loss_and_gradient(w, b - eps, X, y, l2=0.01)
            assert abs((hi - lo) / (2 * eps) - grad_b) <= 1e-5


class TestRelativeScore:
    def test_informative_column_beats_baseline(self):
        dataset, column = make_dataset(n=400)
        result = relative_score(dataset, column, TrainConfig(hash_dim=1 << 10))
        assert isinstance(result, EvalResult)
        assert result.relative_score > 0.0
        assert result.eval_size == eval_slice_size(dataset)
        assert len(result.per_repeat) == 3

    def test_absent_column_scores_exactly_zero(self):
        dataset, _ = make_dataset(n=200)
        result = relative_score(dataset, None, TrainConfig(hash_dim=1 << 10))
        assert result.relative_score == 0.0
        for r in result.per_repeat:
            assert r.extended_rig == r.baseline_rig

    def test_score_is_mean_of_per_repeat_deltas(self):
        dataset, column = make_dataset(n=300)
        result = relative_score(dataset, column, TrainConfig(hash_dim=1 << 10), repeats=4)
        mean = sum(r.relative_score for r in result.per_repeat) / 4
        assert result.relative_score == pytest.approx(mean, abs=1e-15)

    def test_baseline_cache_is_filled_and_reused(self):
        dataset, column = make_dataset(n=200)
        cache: dict = {}
        first = relative_score(dataset, column, TrainConfig(hash_dim=1 << 10),
                               baseline_cache=cache)
        assert len(cache) == 3
        snapshot = dict(cache)
        second = relative_score(dataset, None, TrainConfig(hash_dim=1 << 10),
                                baseline_cache=cache)
        assert cache == snapshot
        assert first.baseline_rig == pytest.approx(second.baseline_rig)

    def test_repeats_must_be_positive(self):
        dataset, column = make_dataset()
        with pytest.raises(ValueError):
            relative_score(dataset, column, repeats=0)

    def test_plain_mapping_and_feature_column_agree(self):
        from featloop.sentinel import FeatureColumn

        dataset, column = make_dataset(n=200)
        wrapped = FeatureColumn(template_id="t", values=column, coverage=1.0)
        cfg = TrainConfig(hash_dim=1 << 10)
        assert (relative_score(dataset, column, cfg).relative_score
                == relative_score(dataset, wrapped, cfg).relative_score)


class TestDatasetFiles:
    def test_roundtrip_with_column(self, tmp_path):
        dataset, column = make_dataset(n=50)
        path = str(tmp_path / "data.tsv")
        save_dataset(dataset, path, column)
        loaded, loaded_column = load_dataset(path)
        assert loaded == dataset
        assert loaded_column == column

    def test_roundtrip_without_column(self, tmp_path):
        dataset, _ = make_dataset(n=30)
        path = str(tmp_path / "data.tsv")
        save_dataset(dataset, path)
        loaded, loaded_column = load_dataset(path)
        assert loaded == dataset
        assert loaded_column is None

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "data.tsv"
        path.write_text("a\tb\tc\n")
        with pytest.raises(ValueError):
            load_dataset(str(path))
