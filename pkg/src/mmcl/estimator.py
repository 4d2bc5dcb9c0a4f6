"""sklearn-style estimator facade over the dual-encoder training stack.

`ContrastiveFusionClassifier` exposes fit / predict / predict_proba /
transform / score with sklearn's get_params contract (so `sklearn.base.clone`
and grid-search tooling compose with it), while the heavy lifting stays in
:mod:`mmcl.training`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import MultiModalDataset, MultiModalSample
from .exceptions import ValidationError
from .training import (
    RECIPES,
    TrainConfig,
    predict_probabilities,
    resolve_recipe,
    train_joint,
    train_sequential,
)


def _as_dataset(samples, class_names=None) -> MultiModalDataset:
    if isinstance(samples, MultiModalDataset):
        return samples
    samples = list(samples)
    if not samples:
        raise ValidationError("need at least one sample")
    if not all(isinstance(s, MultiModalSample) for s in samples):
        raise ValidationError("samples must be MultiModalSample instances")
    if class_names is None:
        n = len(samples[0].labels)
        width = max(2, len(str(n - 1)))
        class_names = [f"class_{i:0{width}d}" for i in range(n)]
    return MultiModalDataset(samples, class_names)


class ContrastiveFusionClassifier(BaseEstimator):
    """Multi-label classifier over co-registered dual-modality patch pairs.

    Parameters mirror :class:`mmcl.training.TrainConfig`; ``recipe`` picks the
    training configuration (one of ``intra_simclr``, ``iai_simclr``,
    ``mosaic1``, ``mosaic2``). ``fit`` trains on every sample it is given;
    stratified label subsetting belongs to the experiment protocol, not the
    estimator.
    """

    def __init__(
        self,
        recipe: str = "mosaic1",
        encoder: str = "small_conv",
        projection_dim: int = 128,
        epochs: int = 30,
        pretrain_epochs: int = 20,
        probe_epochs: int = 10,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        temperature: float = 0.1,
        threshold: float = 0.5,
        seed: int = 0,
    ):
        self.recipe = recipe
        self.encoder = encoder
        self.projection_dim = projection_dim
        self.epochs = epochs
        self.pretrain_epochs = pretrain_epochs
        self.probe_epochs = probe_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.temperature = temperature
        self.threshold = threshold
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            recipe=self.recipe,
            epochs=self.epochs,
            pretrain_epochs=self.pretrain_epochs,
            probe_epochs=self.probe_epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            temperature=self.temperature,
            threshold=self.threshold,
            seed=self.seed,
            label_fraction=1.0,
        )

    def fit(self, samples, y=None, eval_samples=None):
        """Train on the given samples; labels ride along on the samples.

        ``y`` exists for sklearn signature compatibility and must be None.
        """
        if y is not None:
            raise ValidationError("labels travel on the samples; pass y=None")
        data = _as_dataset(samples)
        eval_data = _as_dataset(eval_samples) if eval_samples is not None else data
        config = self._config()
        recipe = resolve_recipe(config.recipe)
        if recipe.mode == "joint":
            result = train_joint(
                config, data, eval_data,
                encoder=self.encoder, projection_dim=self.projection_dim,
            )
        else:
            result = train_sequential(
                config, data, data, eval_data,
                encoder=self.encoder, projection_dim=self.projection_dim,
            )
        self.model_ = result.model
        self.classes_ = list(data.class_names)
        self.last_run_ = result
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise ValidationError("estimator is not fitted; call fit first")

    def predict_proba(self, samples) -> np.ndarray:
        self._require_fitted()
        data = _as_dataset(samples, self.classes_)
        return predict_probabilities(self.model_, data)

    def predict(self, samples) -> np.ndarray:
        return (self.predict_proba(samples) >= self.threshold).astype(np.int64)

    def transform(self, samples, space: str = "h") -> np.ndarray:
        """Fused embeddings: encoder features ("h") or normalized projections ("z")."""
        import torch

        self._require_fitted()
        if space not in ("h", "z"):
            raise ValidationError(f"space must be 'h' or 'z', got {space!r}")
        data = _as_dataset(samples, self.classes_)
        model = self.model_
        model.eval()
        outs = []
        with torch.no_grad():
            for start in range(0, len(data), 256):
                idx = list(range(start, min(start + 256, len(data))))
                x1 = torch.from_numpy(
                    np.stack([data[i].s1 for i in idx]).astype(np.float32)
                )
                x2 = torch.from_numpy(
                    np.stack([data[i].s2 for i in idx]).astype(np.float32)
                )
                if space == "h":
                    out = model.fuse(model.encode(x1, "s1"), model.encode(x2, "s2"))
                else:
                    out = torch.cat(
                        [model.embed(x1, "s1"), model.embed(x2, "s2")], dim=1
                    )
                outs.append(out.numpy())
        return np.concatenate(outs, axis=0)

    def score(self, samples, y=None) -> float:
        """Micro-F1 on the given samples."""
        from .training import evaluate_model

        self._require_fitted()
        data = _as_dataset(samples, self.classes_)
        return evaluate_model(self.model_, data, self.threshold).micro_f1

    @staticmethod
    def available_recipes() -> list[str]:
        return sorted(RECIPES)
