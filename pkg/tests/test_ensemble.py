from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from stfactor.ensemble import (
    EnsembleSpec,
    FusionStrategy,
    PredictionSet,
    derive_weights,
    fuse,
    read_predictions,
    write_predictions,
)
from stfactor.errors import ArithmeticDomainError, DataError, FormatError, UsageError


def preds(model_id: str, values: list[float], ids: list[str] | None = None) -> PredictionSet:
    ids = ids or [f"s{i}" for i in range(len(values))]
    return PredictionSet(model_id=model_id, sample_ids=tuple(ids), probabilities=tuple(values))


class TestWeights:
    def test_average(self):
        spec = derive_weights("average", m=4)
        assert spec.weights == (0.25,) * 4
        assert spec.strategy is FusionStrategy.average

    def test_validation_accuracy(self):
        spec = derive_weights(FusionStrategy.validation_accuracy, [0.8, 0.6])
        assert spec.weights == pytest.approx((4 / 7, 3 / 7))

    def test_zero_accuracies(self):
        with pytest.raises(ArithmeticDomainError):
            derive_weights("validation-accuracy", [0.0, 0.0])

    @pytest.mark.parametrize("accs", [[0.8, 0.0], [0.5, 1.2], [0.7, -0.1]])
    def test_accuracies_must_lie_in_half_open_unit_interval(self, accs):
        with pytest.raises(UsageError):
            derive_weights("validation-accuracy", accs)

    def test_perfect_accuracy_allowed(self):
        assert derive_weights("validation-accuracy", [1.0, 1.0]).weights == (0.5, 0.5)

    def test_explicit_needs_raw_weights(self):
        with pytest.raises(UsageError):
            derive_weights("explicit", [0.5])

    def test_raw_weights_are_normalized(self):
        assert EnsembleSpec.from_raw([2, 6]).weights == (0.25, 0.75)

    def test_raw_zero_sum(self):
        with pytest.raises(ArithmeticDomainError):
            EnsembleSpec.from_raw([0.0, 0.0])

    def test_negative_weight(self):
        with pytest.raises(UsageError):
            EnsembleSpec.from_raw([1.0, -0.5])

    def test_unnormalized_spec_rejected(self):
        with pytest.raises(ValidationError):
            EnsembleSpec(weights=(0.5, 0.6))


class TestFuse:
    def test_two_model_average(self):
        fused = fuse([preds("a", [0.6]), preds("b", [0.8])], EnsembleSpec(weights=(0.5, 0.5)))
        assert fused.probabilities[0] == pytest.approx(0.7)

    def test_three_model_weights(self):
        models = [preds("a", [1.0]), preds("b", [0.0]), preds("c", [1.0])]
        fused = fuse(models, EnsembleSpec(weights=(0.2, 0.3, 0.5)))
        assert fused.probabilities[0] == pytest.approx(0.7)

    def test_aligns_by_sample_id(self):
        a = preds("a", [0.2, 0.9], ["x", "y"])
        b = preds("b", [0.4, 0.1], ["y", "x"])
        fused = fuse([a, b], derive_weights("average", m=2))
        assert fused.sample_ids == ("x", "y")
        assert fused.probabilities == pytest.approx((0.15, 0.65))

    def test_mismatched_ids(self):
        with pytest.raises(DataError):
            fuse([preds("a", [0.1], ["x"]), preds("b", [0.1], ["z"])], EnsembleSpec(weights=(0.5, 0.5)))

    def test_duplicate_ids(self):
        with pytest.raises(DataError):
            fuse([preds("a", [0.1, 0.2], ["x", "x"])], EnsembleSpec(weights=(1.0,)))

    def test_weight_count_mismatch(self):
        with pytest.raises(UsageError):
            fuse([preds("a", [0.1]), preds("b", [0.2])], EnsembleSpec(weights=(1.0,)))

    def test_no_models(self):
        with pytest.raises(UsageError):
            fuse([], EnsembleSpec(weights=(1.0,)))

    def test_convex_and_permutation_invariant(self):
        gen = np.random.default_rng(42)
        for _ in range(1000):
            m = int(gen.integers(1, 5))
            n = int(gen.integers(1, 6))
            probs = gen.random((m, n))
            spec = EnsembleSpec.from_raw(list(gen.random(m) + 1e-3))
            models = [preds(f"m{i}", list(row)) for i, row in enumerate(probs)]
            fused = fuse(models, spec).as_array()
            assert np.all(fused >= probs.min(axis=0) - 1e-12)
            assert np.all(fused <= probs.max(axis=0) + 1e-12)
            perm = gen.permutation(m)
            shuffled = fuse([models[i] for i in perm], EnsembleSpec(weights=tuple(spec.weights[i] for i in perm)))
            assert np.allclose(shuffled.as_array(), fused, atol=1e-12)

    def test_many_samples_align_in_reverse_order(self):
        gen = np.random.default_rng(7)
        ids = [f"clip{i:04d}" for i in range(500)]
        first, second = gen.random(500), gen.random(500)
        a = preds("a", list(first), ids)
        b = preds("b", list(second[::-1]), ids[::-1])
        fused = fuse([a, b], EnsembleSpec(weights=(0.25, 0.75)))
        assert fused.sample_ids == tuple(ids)
        assert np.allclose(fused.as_array(), 0.25 * first + 0.75 * second, atol=1e-12)

    def test_rejects_out_of_range_probability(self):
        with pytest.raises(ValidationError):
            preds("a", [1.5])


class TestPredictionFiles:
    def test_round_trip(self, tmp_path):
        original = preds("model", [0.125, 1 / 3, 1.0], ["a", "b", "c"])
        path = tmp_path / "out" / "model.csv"
        write_predictions(path, original)
        assert path.read_text().splitlines()[0] == "sample_id,p_intoxicated"
        loaded = read_predictions(path)
        assert loaded == original

    def test_bad_header(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("id,p\na,0.5\n")
        with pytest.raises(FormatError):
            read_predictions(path)

    def test_out_of_range_value(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("sample_id,p_intoxicated\na,1.2\n")
        with pytest.raises(FormatError):
            read_predictions(path)

    def test_not_a_number(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("sample_id,p_intoxicated\na,high\n")
        with pytest.raises(FormatError):
            read_predictions(path)
