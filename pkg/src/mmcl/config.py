"""Experiment configuration: YAML file + CLI overrides -> one validated object.

A config file has four sections (``dataset``, ``model``, ``training``,
``metrics``) plus ``output_dir``. Every field has a default, so a missing
file or empty section still yields a runnable desk-scale experiment. CLI
flags override file values; the merged result is echoed to
``output_dir/config.yaml`` in canonical form so a run is reproducible from
its artifacts alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .data import AugmentPolicy, SyntheticSpec
from .exceptions import ConfigurationError
from .training import TrainConfig, resolve_recipe


@dataclass
class DatasetSection:
    """Exactly one source: a synthetic spec or an on-disk manifest."""

    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    manifest: str | None = None
    vocabulary: str | None = None
    eval_fraction: float = 0.2

    def validate(self) -> None:
        if (self.synthetic is None) == (self.manifest is None):
            raise ConfigurationError(
                "dataset section must name exactly one source: synthetic or manifest"
            )
        if self.synthetic is not None:
            self.synthetic.validate()
        if self.manifest is not None and not Path(self.manifest).exists():
            raise ConfigurationError(f"manifest file does not exist: {self.manifest}")
        if self.vocabulary is not None and not Path(self.vocabulary).exists():
            raise ConfigurationError(f"vocabulary file does not exist: {self.vocabulary}")
        if not (0.0 < self.eval_fraction < 1.0):
            raise ConfigurationError(
                f"eval_fraction must lie in (0, 1), got {self.eval_fraction!r}"
            )

    def to_dict(self) -> dict:
        return {
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "manifest": self.manifest,
            "vocabulary": self.vocabulary,
            "eval_fraction": self.eval_fraction,
        }


@dataclass
class ModelSection:
    encoder: str = "small_conv"
    projection_dim: int = 128

    def validate(self) -> None:
        if self.encoder not in ("small_conv", "resnet34"):
            raise ConfigurationError(
                f"encoder must be small_conv or resnet34, got {self.encoder!r}"
            )
        if self.projection_dim < 2:
            raise ConfigurationError("projection_dim must be >= 2")

    def to_dict(self) -> dict:
        return {"encoder": self.encoder, "projection_dim": self.projection_dim}


@dataclass
class MetricsSection:
    threshold: float = 0.5

    def validate(self) -> None:
        if not (0.0 <= self.threshold <= 1.0):
            raise ConfigurationError(f"threshold must lie in [0, 1], got {self.threshold!r}")

    def to_dict(self) -> dict:
        return {"threshold": self.threshold}


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    runs: int = 4
    output_dir: str = "runs/experiment"

    def validate(self) -> None:
        self.dataset.validate()
        self.model.validate()
        self.training.validate()
        self.metrics.validate()
        resolve_recipe(self.training.recipe)
        if self.runs < 1:
            raise ConfigurationError(f"runs must be >= 1, got {self.runs!r}")

    def to_dict(self) -> dict:
        train = {
            "recipe": self.training.recipe
            if isinstance(self.training.recipe, str)
            else self.training.recipe.name,
            "epochs": self.training.epochs,
            "pretrain_epochs": self.training.pretrain_epochs,
            "probe_epochs": self.training.probe_epochs,
            "batch_size": self.training.batch_size,
            "learning_rate": self.training.learning_rate,
            "probe_learning_rate": self.training.probe_learning_rate,
            "temperature": self.training.temperature,
            "seed": self.training.seed,
            "label_fraction": self.training.label_fraction,
            "eval_cadence": self.training.eval_cadence,
            "threshold": self.training.threshold,
        }
        return {
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "training": train,
            "metrics": self.metrics.to_dict(),
            "runs": self.runs,
            "output_dir": self.output_dir,
        }

    def canonical_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _dataclass_from_dict(cls, d: dict, what: str):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown {what} option(s): {unknown}")
    return cls(**d)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    known = {"dataset", "model", "training", "metrics", "runs", "output_dir"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {unknown}")

    ds_raw = dict(raw.get("dataset") or {})
    synth_raw = ds_raw.pop("synthetic", "unset")
    ds = _dataclass_from_dict(DatasetSection, ds_raw, "dataset")
    if synth_raw == "unset":
        ds.synthetic = None if ds.manifest else SyntheticSpec()
    elif synth_raw is None:
        ds.synthetic = None
    else:
        try:
            ds.synthetic = SyntheticSpec.from_dict(synth_raw)
        except TypeError as e:
            raise ConfigurationError(f"bad dataset.synthetic options: {e}") from e

    model = _dataclass_from_dict(ModelSection, dict(raw.get("model") or {}), "model")

    train_raw = dict(raw.get("training") or {})
    aug_raw = train_raw.pop("augment", None)
    if "augment_policy" in train_raw:
        raise ConfigurationError("augmentation settings belong under training.augment")
    training = _dataclass_from_dict(TrainConfig, train_raw, "training")
    if aug_raw is not None:
        try:
            training.augment_policy = AugmentPolicy(**aug_raw)
        except TypeError as e:
            raise ConfigurationError(f"bad training.augment options: {e}") from e

    metrics = _dataclass_from_dict(MetricsSection, dict(raw.get("metrics") or {}), "metrics")

    return ExperimentConfig(
        dataset=ds,
        model=model,
        training=training,
        metrics=metrics,
        runs=int(raw.get("runs", 4)),
        output_dir=str(raw.get("output_dir", "runs/experiment")),
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse a YAML config file; ``None`` yields pure defaults."""
    if path is None:
        return config_from_dict({})
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file does not exist: {p}")
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file {p} is not valid YAML: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {p} must contain a mapping at top level")
    return config_from_dict(raw)


def apply_overrides(
    config: ExperimentConfig,
    *,
    seed: int | None = None,
    output_dir: str | None = None,
    recipe: str | None = None,
    label_fraction: float | None = None,
    runs: int | None = None,
    epochs: int | None = None,
    threshold: float | None = None,
) -> ExperimentConfig:
    """CLI flags win over file values; unspecified flags leave them alone."""
    training = config.training
    if seed is not None:
        training = replace(training, seed=int(seed))
        if config.dataset.synthetic is not None:
            config = replace(
                config,
                dataset=replace(
                    config.dataset, synthetic=replace(config.dataset.synthetic, seed=int(seed))
                ),
            )
    if recipe is not None:
        training = replace(training, recipe=recipe)
    if label_fraction is not None:
        training = replace(training, label_fraction=float(label_fraction))
    if epochs is not None:
        training = replace(training, epochs=int(epochs))
    if threshold is not None:
        training = replace(training, threshold=float(threshold))
        config = replace(config, metrics=MetricsSection(threshold=float(threshold)))
    config = replace(config, training=training)
    if runs is not None:
        config = replace(config, runs=int(runs))
    if output_dir is not None:
        config = replace(config, output_dir=str(output_dir))
    return config
