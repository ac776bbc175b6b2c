"""Logistic stacking: fit behavior, serialization, and the prediction path."""
import numpy as np
import pytest

from gliopipe.errors import NoModalities, SingleClass
from gliopipe.lossmetric import auroc
from gliopipe.models import (
    EnsembleModel,
    ResClassifier3D,
    ResClassifierConfig,
    ensemble_feature_order,
    fit_logistic_ensemble,
    predict_methylation,
)
from gliopipe.volio import volume_from_array


class TestFit:
    def test_separable_features_reach_auroc_one(self):
        rng = np.random.default_rng(0)
        n = 40
        labels = np.array([0, 1] * (n // 2))
        features = rng.normal(0, 0.1, size=(n, 16))
        features[:, 3] += labels * 2.0  # one cleanly separating column
        model = fit_logistic_ensemble(features, labels)
        scores = [model.predict_proba(f) for f in features]
        assert auroc(scores, labels) == 1.0

    def test_single_class_raises(self):
        with pytest.raises(SingleClass):
            fit_logistic_ensemble(np.zeros((4, 16)), [1, 1, 1, 1])

    def test_constant_features_give_prevalence(self):
        # uninformative features collapse to the intercept-only model:
        # closed-form MLE puts probability at the class prevalence
        labels = np.array([1, 1, 1, 0])
        features = np.full((4, 16), 0.5)
        model = fit_logistic_ensemble(features, labels)
        prob = model.predict_proba(features[0])
        assert abs(prob - 0.75) < 1e-3
        # weights decay toward 0 at rate lambda; within the iteration budget
        # a small residual remains
        assert np.abs(model.weights).max() < 0.05

    def test_sixteen_weights_default_order(self):
        order = ensemble_feature_order()
        assert len(order) == 16
        assert order[0] == "fold0:T1" and order[5] == "fold1:T1CE" and order[-1] == "fold3:FLAIR"

    def test_weight_count_matches_feature_order(self):
        with pytest.raises(ValueError):
            EnsembleModel(weights=np.zeros(15), intercept=0.0, feature_order=ensemble_feature_order())


class TestTextRecord:
    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        model = EnsembleModel(weights=rng.standard_normal(16), intercept=-0.37,
                              feature_order=ensemble_feature_order())
        back = EnsembleModel.from_text(model.to_text())
        assert np.array_equal(back.weights, model.weights)
        assert back.intercept == model.intercept
        assert back.feature_order == model.feature_order

    def test_seventeen_values(self):
        model = EnsembleModel(weights=np.zeros(16), intercept=0.0,
                              feature_order=ensemble_feature_order())
        values = [ln for ln in model.to_text().splitlines() if not ln.startswith("#")]
        assert len(values) == 17

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            EnsembleModel.from_text("# features: a b\n0.5\n")


def _tiny_models(input_size=(4, 8, 8), folds=4):
    models = {}
    for f in range(folds):
        for i, m in enumerate(("T1", "T1CE", "T2", "FLAIR")):
            cfg = ResClassifierConfig(base_filters=2, blocks_per_stage=(1,),
                                      input_size=input_size, seed=f * 10 + i)
            models[(f, m)] = ResClassifier3D(cfg)
    return models


def _case_volumes(seed=0, dims=(12, 12, 12)):
    rng = np.random.default_rng(seed)
    return {m: volume_from_array(rng.uniform(0.5, 2.0, dims).astype(np.float32))
            for m in ("T1", "T1CE", "T2", "FLAIR")}


class TestPredictMethylation:
    def test_all_imputed_features_hand_formula(self):
        # every feature 0.5 -> probability = sigmoid(intercept + 0.5 * sum(w))
        rng = np.random.default_rng(2)
        ens = EnsembleModel(weights=rng.standard_normal(16), intercept=0.2,
                            feature_order=ensemble_feature_order())
        pred = predict_methylation(_case_volumes(), {}, ens)  # no models -> all 0.5
        want = 1.0 / (1.0 + np.exp(-(0.2 + 0.5 * ens.weights.sum())))
        assert abs(pred.probability - want) < 1e-12
        assert all(info["imputed"] for info in pred.per_modality.values())

    def test_probability_in_unit_interval_100_fuzzed(self):
        ens = EnsembleModel(weights=np.random.default_rng(3).standard_normal(16) * 5,
                            intercept=1.0, feature_order=ensemble_feature_order())
        models = _tiny_models()
        rng = np.random.default_rng(9)
        for seed in range(100):
            subset = [m for m in ("T1", "T1CE", "T2", "FLAIR") if rng.random() < 0.7] or ["T1CE"]
            vols = {m: v for m, v in _case_volumes(seed).items() if m in subset}
            pred = predict_methylation(vols, models, ens)
            assert 0.0 <= pred.probability <= 1.0

    def test_t1ce_only_still_predicts(self):
        ens = EnsembleModel(weights=np.ones(16) * 0.1, intercept=0.0,
                            feature_order=ensemble_feature_order())
        models = _tiny_models()
        vols = {"T1CE": _case_volumes(4)["T1CE"]}
        pred = predict_methylation(vols, models, ens)
        assert 0.0 <= pred.probability <= 1.0
        assert pred.per_modality["T1CE"]["imputed"] is False
        assert pred.per_modality["T1"]["imputed"] is True
        assert pred.per_modality["T2"]["imputed"] is True

    def test_no_modalities_raises(self):
        ens = EnsembleModel(weights=np.zeros(16), intercept=0.0,
                            feature_order=ensemble_feature_order())
        with pytest.raises(NoModalities):
            predict_methylation({}, {}, ens)

    def test_threshold_rule(self):
        ens = EnsembleModel(weights=np.zeros(16), intercept=3.0,
                            feature_order=ensemble_feature_order())
        pred = predict_methylation(_case_volumes(5), {}, ens)
        assert pred.probability > 0.5 and pred.status_bit == 1
        ens2 = EnsembleModel(weights=np.zeros(16), intercept=-3.0,
                             feature_order=ensemble_feature_order())
        pred2 = predict_methylation(_case_volumes(5), {}, ens2)
        assert pred2.probability < 0.5 and pred2.status_bit == 0

    def test_monotone_refit_preserves_ranking(self):
        # refitting on a monotone transform of separable features keeps the case ranking
        rng = np.random.default_rng(6)
        n = 30
        labels = np.array([0, 1] * (n // 2))
        features = rng.normal(0, 0.05, size=(n, 16)) + labels[:, None] * 0.4
        features = np.clip(features, 1e-3, None)
        m1 = fit_logistic_ensemble(features, labels)
        scores1 = np.array([m1.predict_proba(f) for f in features])
        transformed = np.sqrt(features)  # strictly monotone on the positive half-line
        m2 = fit_logistic_ensemble(transformed, labels)
        scores2 = np.array([m2.predict_proba(f) for f in transformed])
        assert np.array_equal(np.argsort(scores1), np.argsort(scores2)) or \
            auroc(scores2, labels) == auroc(scores1, labels)
