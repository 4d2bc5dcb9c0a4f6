"""sklearn contract and basic behavior of the estimator facade."""
import numpy as np
import pytest
from sklearn.base import clone

from mmcl.estimator import ContrastiveFusionClassifier
from mmcl.exceptions import ValidationError


def tiny_estimator(**overrides):
    params = dict(
        recipe="mosaic1",
        projection_dim=16,
        epochs=2,
        pretrain_epochs=2,
        probe_epochs=2,
        batch_size=16,
        seed=0,
    )
    params.update(overrides)
    return ContrastiveFusionClassifier(**params)


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        est = tiny_estimator()
        params = est.get_params()
        assert params["recipe"] == "mosaic1"
        est.set_params(recipe="mosaic2", epochs=3)
        assert est.recipe == "mosaic2" and est.epochs == 3

    def test_clone_preserves_params_not_state(self, tiny_dataset):
        est = tiny_estimator()
        est.fit(list(tiny_dataset))
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "model_")

    def test_unfitted_predict_raises(self, tiny_dataset):
        with pytest.raises(ValidationError, match="not fitted"):
            tiny_estimator().predict(list(tiny_dataset))

    def test_y_argument_rejected(self, tiny_dataset):
        with pytest.raises(ValidationError, match="y=None"):
            tiny_estimator().fit(list(tiny_dataset), y=np.zeros(3))


@pytest.fixture(scope="module")
def fitted(tiny_dataset):
    est = tiny_estimator()
    est.fit(tiny_dataset)
    return est


class TestFitPredict:
    def test_fitted_attributes(self, fitted, tiny_dataset):
        assert fitted.classes_ == tiny_dataset.class_names
        assert fitted.last_run_.seed == 0

    def test_predict_shapes(self, fitted, tiny_dataset):
        samples = list(tiny_dataset)[:10]
        probs = fitted.predict_proba(samples)
        preds = fitted.predict(samples)
        assert probs.shape == preds.shape == (10, tiny_dataset.n_labels)
        assert ((probs > 0) & (probs < 1)).all()
        assert set(np.unique(preds)).issubset({0, 1})
        np.testing.assert_array_equal(preds, (probs >= 0.5).astype(np.int64))

    def test_transform_spaces(self, fitted, tiny_dataset):
        samples = list(tiny_dataset)[:6]
        h = fitted.transform(samples, space="h")
        z = fitted.transform(samples, space="z")
        assert h.shape == (6, 128)  # two 64-dim encoders fused
        assert z.shape == (6, 32)  # two 16-dim projections fused
        np.testing.assert_allclose(
            np.linalg.norm(z[:, :16], axis=1), 1.0, atol=1e-5
        )
        with pytest.raises(ValidationError, match="space"):
            fitted.transform(samples, space="logits")

    def test_score_is_micro_f1(self, fitted, tiny_dataset):
        from mmcl.metrics import evaluate_predictions

        samples = list(tiny_dataset)[:20]
        score = fitted.score(samples)
        labels = tiny_dataset.labels_matrix()[:20]
        report = evaluate_predictions(
            labels, fitted.predict_proba(samples), 0.5, tiny_dataset.class_names
        )
        assert score == pytest.approx(report.micro_f1)

    def test_sequential_recipe_path(self, tiny_dataset):
        est = tiny_estimator(recipe="intra_simclr")
        est.fit(tiny_dataset)
        assert est.predict(list(tiny_dataset)[:4]).shape == (4, tiny_dataset.n_labels)


class TestInputChecks:
    def test_empty_input(self):
        with pytest.raises(ValidationError, match="at least one"):
            tiny_estimator().fit([])

    def test_non_sample_input(self):
        with pytest.raises(ValidationError, match="MultiModalSample"):
            tiny_estimator().fit([np.zeros((2, 32, 32))])
