"""Training configurations, step assembly, loops, and the multi-run protocol.

Four named recipes cover the training configurations under study:

* ``intra_simclr``  - per-modality NT-Xent only (sequential: contrastive
  pretraining, then a frozen-encoder linear probe).
* ``iai_simclr``    - adds the cross-modal InfoNCE term (sequential).
* ``mosaic1``       - per-modality NT-Xent + multi-label supervised
  contrastive on the fused projection + BCE (joint).
* ``mosaic2``       - cross-modal InfoNCE + per-modality view-wise
  multi-label supervised contrastive + BCE (joint).

All term weights are 1.0. ``build_step`` turns a recipe plus a batch into a
single differentiable composite, so one backward pass updates everything.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .data import AugmentPolicy, MultiModalDataset, augment, stratified_subsample
from .exceptions import ConfigurationError, InvalidBatchError, RecipeError, ValidationError
from .io_utils import derive_seed, seed_sequence, sha256_bytes
from .losses import (
    LossRecipe,
    LossValue,
    bce_multilabel,
    compose_loss,
    infonce_inter,
    mulsupcon,
    ntxent_intra,
)
from .metrics import AggregateStats, MetricReport, aggregate_metric, evaluate_predictions
from .model import DualEncoderModel, ModelConfig
from .validation import check_fraction, check_positive_int

TERM_IDS = (
    "intra_s1",
    "intra_s2",
    "inter",
    "msc_fused",
    "msc_s1_views",
    "msc_s2_views",
    "bce",
)
LABEL_TERMS = frozenset({"msc_fused", "msc_s1_views", "msc_s2_views", "bce"})
VIEW_TERMS = frozenset({"intra_s1", "intra_s2", "msc_s1_views", "msc_s2_views"})
CLEAN_TERMS = frozenset({"inter", "msc_fused", "bce"})

RECIPES: dict[str, LossRecipe] = {
    "intra_simclr": LossRecipe(
        "intra_simclr", (("intra_s1", 1.0), ("intra_s2", 1.0)), "sequential"
    ),
    "iai_simclr": LossRecipe(
        "iai_simclr", (("intra_s1", 1.0), ("intra_s2", 1.0), ("inter", 1.0)), "sequential"
    ),
    "mosaic1": LossRecipe(
        "mosaic1",
        (("intra_s1", 1.0), ("intra_s2", 1.0), ("msc_fused", 1.0), ("bce", 1.0)),
        "joint",
    ),
    "mosaic2": LossRecipe(
        "mosaic2",
        (("inter", 1.0), ("msc_s1_views", 1.0), ("msc_s2_views", 1.0), ("bce", 1.0)),
        "joint",
    ),
}


def resolve_recipe(recipe: str | LossRecipe) -> LossRecipe:
    if isinstance(recipe, LossRecipe):
        unknown = [t for t in recipe.term_ids() if t not in TERM_IDS]
        if unknown:
            raise RecipeError(f"recipe {recipe.name!r} uses unknown terms {unknown}")
        if recipe.mode not in ("joint", "sequential"):
            raise RecipeError(f"recipe mode must be joint or sequential, got {recipe.mode!r}")
        return recipe
    if recipe not in RECIPES:
        raise RecipeError(f"unknown recipe {recipe!r}; available: {sorted(RECIPES)}")
    return RECIPES[recipe]


def recipe_reads_labels(recipe: LossRecipe) -> bool:
    return any(t in LABEL_TERMS for t in recipe.term_ids())


def _bce_uses_views(term_ids: Sequence[str]) -> bool:
    return "bce" in term_ids and any(
        t in term_ids for t in ("msc_s1_views", "msc_s2_views")
    )


def views_needed(recipe: LossRecipe) -> tuple[bool, bool]:
    """Which modalities need augmented view pairs for this recipe."""
    term_ids = recipe.term_ids()
    both_for_bce = _bce_uses_views(term_ids)
    s1 = both_for_bce or any(t in ("intra_s1", "msc_s1_views") for t in term_ids)
    s2 = both_for_bce or any(t in ("intra_s2", "msc_s2_views") for t in term_ids)
    return s1, s2


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    recipe: str = "mosaic1"
    epochs: int = 180
    pretrain_epochs: int = 20
    probe_epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    probe_learning_rate: float = 1e-2
    temperature: float = 0.1
    seed: int = 0
    label_fraction: float = 0.1
    eval_cadence: int = 5
    threshold: float = 0.5
    augment_policy: AugmentPolicy = field(default_factory=AugmentPolicy)

    def validate(self) -> None:
        resolve_recipe(self.recipe)
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.pretrain_epochs, "pretrain_epochs")
        check_positive_int(self.probe_epochs, "probe_epochs")
        if self.batch_size < 4:
            raise ValidationError(
                f"batch_size must be >= 4 so contrastive terms see negatives, "
                f"got {self.batch_size}"
            )
        if self.learning_rate <= 0 or self.probe_learning_rate <= 0:
            raise ValidationError("learning rates must be positive")
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be positive, got {self.temperature!r}")
        check_fraction(self.label_fraction, "label_fraction")
        check_positive_int(self.eval_cadence, "eval_cadence")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValidationError(f"threshold must lie in [0, 1], got {self.threshold!r}")
        self.augment_policy.validate()


@dataclass
class Batch:
    """Everything one optimization step may consume.

    Views are pairs of augmented tensors aligned row-for-row with the clean
    patches. ``labels`` is None for unlabeled batches; label-consuming terms
    raise if it is missing rather than fabricating targets.
    """

    s1: torch.Tensor | None = None
    s2: torch.Tensor | None = None
    s1_views: tuple[torch.Tensor, torch.Tensor] | None = None
    s2_views: tuple[torch.Tensor, torch.Tensor] | None = None
    labels: torch.Tensor | None = None

    def size(self) -> int:
        for t in (self.s1, self.s2):
            if t is not None:
                return t.shape[0]
        if self.s1_views is not None:
            return self.s1_views[0].shape[0]
        if self.s2_views is not None:
            return self.s2_views[0].shape[0]
        raise InvalidBatchError("batch carries no tensors")


def _need(batch_field, what: str, term: str):
    if batch_field is None:
        raise InvalidBatchError(f"term {term!r} needs {what}, but the batch does not carry it")
    return batch_field


class _StepContext:
    """Caches encode/project results so shared inputs are encoded once."""

    def __init__(self, model: DualEncoderModel, batch: Batch, temperature: float):
        self.model = model
        self.batch = batch
        self.tau = temperature
        self._cache: dict[str, torch.Tensor] = {}

    def _labels(self, term: str) -> torch.Tensor:
        return _need(self.batch.labels, "labels", term)

    def clean_h(self, modality: str) -> torch.Tensor:
        key = f"h_{modality}"
        if key not in self._cache:
            x = _need(getattr(self.batch, modality), f"clean {modality} patches", "clean")
            self._cache[key] = self.model.encode(x, modality)
        return self._cache[key]

    def clean_z(self, modality: str) -> torch.Tensor:
        key = f"z_{modality}"
        if key not in self._cache:
            self._cache[key] = self.model.project(self.clean_h(modality), modality)
        return self._cache[key]

    def view_h(self, modality: str, view: int) -> torch.Tensor:
        key = f"h_{modality}_view{view}"
        if key not in self._cache:
            views = _need(
                getattr(self.batch, f"{modality}_views"),
                f"augmented {modality} views",
                "views",
            )
            self._cache[key] = self.model.encode(views[view], modality)
        return self._cache[key]

    def view_z(self, modality: str, view: int) -> torch.Tensor:
        key = f"z_{modality}_view{view}"
        if key not in self._cache:
            self._cache[key] = self.model.project(self.view_h(modality, view), modality)
        return self._cache[key]

    def stacked_view_z(self, modality: str) -> torch.Tensor:
        return torch.cat([self.view_z(modality, 0), self.view_z(modality, 1)], dim=0)

    # ---- term computations -------------------------------------------------

    def term_intra(self, modality: str) -> LossValue:
        return ntxent_intra(self.stacked_view_z(modality), self.tau)

    def term_inter(self) -> LossValue:
        return infonce_inter(self.clean_z("s1"), self.clean_z("s2"), self.tau)

    def term_msc_fused(self) -> LossValue:
        fused = torch.nn.functional.normalize(
            torch.cat([self.clean_z("s1"), self.clean_z("s2")], dim=1), dim=1
        )
        return mulsupcon(fused, self._labels("msc_fused"), self.tau)

    def term_msc_views(self, modality: str) -> LossValue:
        y = self._labels(f"msc_{modality}_views")
        stacked = self.stacked_view_z(modality)
        return mulsupcon(stacked, torch.cat([y, y], dim=0), self.tau)

    def term_bce(self, use_views: bool) -> LossValue:
        y = self._labels("bce")
        if use_views:
            fused = torch.cat(
                [
                    self.model.fuse(self.view_h("s1", 0), self.view_h("s2", 0)),
                    self.model.fuse(self.view_h("s1", 1), self.view_h("s2", 1)),
                ],
                dim=0,
            )
            y = torch.cat([y, y], dim=0)
        else:
            fused = self.model.fuse(self.clean_h("s1"), self.clean_h("s2"))
        return bce_multilabel(self.model.classify_logits(fused), y)


def build_step(
    recipe: str | LossRecipe,
    batch: Batch,
    model: DualEncoderModel,
    temperature: float = 0.1,
) -> LossValue:
    """Compute every term the recipe names and compose the weighted total.

    Encoder passes are shared across terms where inputs coincide. When both
    per-modality view terms and BCE are active (the mosaic2 shape), BCE
    consumes the augmented views' features; otherwise it sees clean patches.
    """
    rec = resolve_recipe(recipe)
    ctx = _StepContext(model, batch, temperature)
    term_ids = rec.term_ids()
    bce_uses_views = _bce_uses_views(term_ids)

    computed: dict[str, LossValue] = {}
    for term in term_ids:
        if term == "intra_s1":
            computed[term] = ctx.term_intra("s1")
        elif term == "intra_s2":
            computed[term] = ctx.term_intra("s2")
        elif term == "inter":
            computed[term] = ctx.term_inter()
        elif term == "msc_fused":
            computed[term] = ctx.term_msc_fused()
        elif term == "msc_s1_views":
            computed[term] = ctx.term_msc_views("s1")
        elif term == "msc_s2_views":
            computed[term] = ctx.term_msc_views("s2")
        elif term == "bce":
            computed[term] = ctx.term_bce(bce_uses_views)
        else:
            raise RecipeError(f"unknown loss term {term!r}")
    return compose_loss(rec, computed)


@dataclass
class RunResult:
    """Outcome of a single training run."""

    report: MetricReport
    loss_curve: list[tuple[int, str, float]]
    seed: int
    subset_hash: str
    wall_clock_sec: float
    model: DualEncoderModel
    metric_history: list[tuple[int, str, float]] = field(default_factory=list)


@dataclass
class ProtocolResult:
    """Multi-run aggregate: per-metric mean and sample standard deviation."""

    runs: list[RunResult]
    aggregate: dict[str, AggregateStats]

    def aggregate_dict(self) -> dict:
        return {
            "metrics": {k: v.to_dict() for k, v in sorted(self.aggregate.items())},
            "n_runs": len(self.runs),
            "runs": [
                {"seed": r.seed, "subset_hash": r.subset_hash} for r in self.runs
            ],
        }


def _to_tensor_batch(samples: Sequence, indices: Sequence[int], modality: str) -> torch.Tensor:
    arrs = [getattr(samples[i], modality) for i in indices]
    return torch.from_numpy(np.stack(arrs).astype(np.float32, copy=False))


def _augmented_views(
    samples: Sequence,
    indices: Sequence[int],
    modality: str,
    policy: AugmentPolicy,
    seeds: np.ndarray,
) -> tuple[torch.Tensor, torch.Tensor]:
    views = []
    for view in range(2):
        arrs = [
            augment(getattr(samples[i], modality), policy, int(seeds[pos, view]))
            for pos, i in enumerate(indices)
        ]
        views.append(torch.from_numpy(np.stack(arrs)))
    return views[0], views[1]


def _assemble_batch(
    dataset: MultiModalDataset,
    indices: Sequence[int],
    recipe: LossRecipe,
    policy: AugmentPolicy,
    step_seed: int,
    with_labels: bool,
) -> Batch:
    term_ids = recipe.term_ids()
    batch = Batch()
    if any(t in CLEAN_TERMS for t in term_ids):
        batch.s1 = _to_tensor_batch(dataset.samples, indices, "s1")
        batch.s2 = _to_tensor_batch(dataset.samples, indices, "s2")
    need_s1_views, need_s2_views = views_needed(recipe)
    if need_s1_views or need_s2_views:
        seed_root = seed_sequence("views", step_seed)
        seeds = np.random.default_rng(seed_root).integers(
            0, 2**31 - 1, size=(len(indices), 4)
        )
        if need_s1_views:
            batch.s1_views = _augmented_views(
                dataset.samples, indices, "s1", policy, seeds[:, 0:2]
            )
        if need_s2_views:
            batch.s2_views = _augmented_views(
                dataset.samples, indices, "s2", policy, seeds[:, 2:4]
            )
    if with_labels and recipe_reads_labels(recipe):
        batch.labels = torch.from_numpy(
            dataset.labels_matrix()[np.asarray(indices)].astype(np.float32)
        )
    return batch


def _iter_batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        chunk = perm[start : start + batch_size]
        if chunk.size >= 4:  # contrastive terms need negatives
            yield chunk.tolist()


def predict_probabilities(
    model: DualEncoderModel, dataset: MultiModalDataset, batch_size: int = 256
) -> np.ndarray:
    """Fused-feature class probabilities for every sample, in dataset order."""
    model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idx = list(range(start, min(start + batch_size, len(dataset))))
            x1 = _to_tensor_batch(dataset.samples, idx, "s1")
            x2 = _to_tensor_batch(dataset.samples, idx, "s2")
            fused = model.fuse(model.encode(x1, "s1"), model.encode(x2, "s2"))
            outs.append(model.classify(fused).numpy())
    return np.concatenate(outs, axis=0)


def evaluate_model(
    model: DualEncoderModel,
    dataset: MultiModalDataset,
    threshold: float = 0.5,
) -> MetricReport:
    probs = predict_probabilities(model, dataset)
    return evaluate_predictions(
        dataset.labels_matrix(), probs, threshold, dataset.class_names
    )


def alignment_gap(model: DualEncoderModel, dataset: MultiModalDataset) -> float:
    """Mean cosine of co-registered z pairs minus mean cosine of mismatched pairs."""
    model.eval()
    with torch.no_grad():
        idx = list(range(len(dataset)))
        z1 = model.embed(_to_tensor_batch(dataset.samples, idx, "s1"), "s1")
        z2 = model.embed(_to_tensor_batch(dataset.samples, idx, "s2"), "s2")
        sim = (z1 @ z2.T).numpy()
    n = sim.shape[0]
    matched = float(np.trace(sim) / n)
    off = float((sim.sum() - np.trace(sim)) / (n * n - n))
    return matched - off


def _model_config_for(dataset: MultiModalDataset, encoder: str, projection_dim: int) -> ModelConfig:
    sample = dataset[0]
    from .model import EncoderSpec

    return ModelConfig(
        s1=EncoderSpec(arch=encoder, in_channels=sample.s1.shape[0]),
        s2=EncoderSpec(arch=encoder, in_channels=sample.s2.shape[0]),
        n_labels=dataset.n_labels,
        projection_dim=projection_dim,
    )


def _subset_hash(dataset: MultiModalDataset) -> str:
    return sha256_bytes(",".join(s.id for s in dataset).encode("utf-8"))


class _Recorder:
    def __init__(self):
        self.entries: list[tuple[int, str, float]] = []
        self.step = 0

    def record(self, loss: LossValue) -> None:
        self.step += 1
        for term, value in loss.breakdown_items().items():
            self.entries.append((self.step, term, value))
        self.entries.append((self.step, "total", loss.item()))


def _optimize(
    model_params,
    dataset: MultiModalDataset,
    recipe: LossRecipe,
    model: DualEncoderModel,
    config: TrainConfig,
    epochs: int,
    seed_tag: str,
    recorder: _Recorder,
    eval_hook: Callable[[int], None] | None = None,
) -> None:
    optimizer = torch.optim.Adam(model_params, lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(seed_sequence("shuffle", seed_tag, config.seed))
    labeled = recipe_reads_labels(recipe)
    model.train()
    for epoch in range(epochs):
        for batch_indices in _iter_batches(len(dataset), config.batch_size, shuffle_rng):
            step_seed = derive_seed(seed_tag, config.seed, epoch, recorder.step)
            batch = _assemble_batch(
                dataset, batch_indices, recipe, config.augment_policy, step_seed, labeled
            )
            loss = build_step(recipe, batch, model, config.temperature)
            optimizer.zero_grad()
            loss.scalar.backward()
            optimizer.step()
            recorder.record(loss)
        if eval_hook is not None and (epoch + 1) % config.eval_cadence == 0:
            eval_hook(epoch + 1)


def _train_probe(
    model: DualEncoderModel,
    labeled_data: MultiModalDataset,
    config: TrainConfig,
    recorder: _Recorder,
) -> None:
    """Frozen-encoder linear probe: BCE on precomputed fused features."""
    model.eval()
    with torch.no_grad():
        idx = list(range(len(labeled_data)))
        h1 = model.encode(_to_tensor_batch(labeled_data.samples, idx, "s1"), "s1")
        h2 = model.encode(_to_tensor_batch(labeled_data.samples, idx, "s2"), "s2")
        fused = model.fuse(h1, h2)
    labels = torch.from_numpy(labeled_data.labels_matrix().astype(np.float32))
    optimizer = torch.optim.Adam(model.classifier.parameters(), lr=config.probe_learning_rate)
    shuffle_rng = np.random.default_rng(seed_sequence("probe-shuffle", config.seed))
    for _epoch in range(config.probe_epochs):
        for batch_indices in _iter_batches(len(labeled_data), config.batch_size, shuffle_rng):
            sel = torch.as_tensor(batch_indices)
            loss = bce_multilabel(model.classifier(fused[sel]), labels[sel])
            optimizer.zero_grad()
            loss.scalar.backward()
            optimizer.step()
            recorder.record(LossValue(loss.scalar, {"probe_bce": loss.scalar}))


def _finish_run(
    model: DualEncoderModel,
    eval_data: MultiModalDataset,
    config: TrainConfig,
    recorder: _Recorder,
    history: list[tuple[int, str, float]],
    subset_hash: str,
    started: float,
) -> RunResult:
    report = evaluate_model(model, eval_data, config.threshold)
    return RunResult(
        report=report,
        loss_curve=recorder.entries,
        seed=config.seed,
        subset_hash=subset_hash,
        wall_clock_sec=time.perf_counter() - started,
        model=model,
        metric_history=history,
    )


def _fresh_model(config: TrainConfig, dataset: MultiModalDataset, model_config: ModelConfig | None,
                 encoder: str, projection_dim: int) -> DualEncoderModel:
    torch.manual_seed(derive_seed("model-init", config.seed))
    cfg = model_config or _model_config_for(dataset, encoder, projection_dim)
    return DualEncoderModel(cfg)


def train_joint(
    config: TrainConfig,
    labeled_data: MultiModalDataset,
    eval_data: MultiModalDataset,
    model_config: ModelConfig | None = None,
    encoder: str = "small_conv",
    projection_dim: int = 128,
) -> RunResult:
    """Single-phase training: every recipe term in one composite objective."""
    config.validate()
    recipe = resolve_recipe(config.recipe)
    if recipe.mode != "joint":
        raise ConfigurationError(
            f"recipe {recipe.name!r} is {recipe.mode}; use train_sequential"
        )
    if recipe_reads_labels(recipe) and len(labeled_data) == 0:
        raise ValidationError("joint recipe requires labeled samples")
    started = time.perf_counter()
    model = _fresh_model(config, labeled_data, model_config, encoder, projection_dim)
    recorder = _Recorder()
    history: list[tuple[int, str, float]] = []

    def eval_hook(epoch: int) -> None:
        report = evaluate_model(model, eval_data, config.threshold)
        for key, value in report.summary().items():
            history.append((epoch, key, value))
        model.train()

    _optimize(
        model.parameters(), labeled_data, recipe, model, config,
        config.epochs, "joint", recorder, eval_hook,
    )
    return _finish_run(
        model, eval_data, config, recorder, history, _subset_hash(labeled_data), started
    )


def train_sequential(
    config: TrainConfig,
    pretrain_data: MultiModalDataset,
    labeled_data: MultiModalDataset,
    eval_data: MultiModalDataset,
    model_config: ModelConfig | None = None,
    encoder: str = "small_conv",
    projection_dim: int = 128,
) -> RunResult:
    """Contrastive pretraining, then a frozen-encoder linear probe.

    Phase 1 optimizes encoders and projection heads with the recipe's
    contrastive terms (labels never consulted). Phase 2 freezes both encoders
    and heads bit-for-bit and fits only the linear classifier with BCE on the
    labeled subset.
    """
    config.validate()
    recipe = resolve_recipe(config.recipe)
    if recipe.mode != "sequential":
        raise ConfigurationError(f"recipe {recipe.name!r} is {recipe.mode}; use train_joint")
    contrastive_only = [t for t in recipe.term_ids() if t not in LABEL_TERMS]
    if len(contrastive_only) != len(recipe.term_ids()):
        raise ConfigurationError(
            "sequential recipes must not contain label-consuming terms; "
            f"offending: {[t for t in recipe.term_ids() if t in LABEL_TERMS]}"
        )
    started = time.perf_counter()
    model = _fresh_model(config, pretrain_data, model_config, encoder, projection_dim)
    recorder = _Recorder()

    pretrain_params = [
        *model.encoder_s1.parameters(),
        *model.encoder_s2.parameters(),
        *model.head_s1.parameters(),
        *model.head_s2.parameters(),
    ]
    _optimize(
        pretrain_params, pretrain_data, recipe, model, config,
        config.pretrain_epochs, "pretrain", recorder,
    )

    for p in pretrain_params:
        p.requires_grad_(False)
    _train_probe(model, labeled_data, config, recorder)
    for p in pretrain_params:
        p.requires_grad_(True)

    return _finish_run(
        model, eval_data, config, recorder, [], _subset_hash(labeled_data), started
    )


def train_run(
    config: TrainConfig,
    train_pool: MultiModalDataset,
    eval_data: MultiModalDataset,
    model_config: ModelConfig | None = None,
    encoder: str = "small_conv",
    projection_dim: int = 128,
) -> RunResult:
    """One full run: stratified label subset draw, then joint or sequential.

    Label-free pretraining (sequential recipes) sees the whole train pool;
    only label-consuming phases (the probe, and joint recipes whose every
    step reads labels) are restricted to the stratified subset.
    """
    config.validate()
    recipe = resolve_recipe(config.recipe)
    labeled = (
        stratified_subsample(train_pool, config.label_fraction, config.seed)
        if config.label_fraction < 1.0
        else train_pool
    )
    if recipe.mode == "joint":
        return train_joint(config, labeled, eval_data, model_config, encoder, projection_dim)
    return train_sequential(
        config, train_pool, labeled, eval_data, model_config, encoder, projection_dim
    )


AGGREGATE_KEYS = (
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "micro_precision",
    "micro_recall",
    "micro_f1",
    "hamming",
    "brier",
)


def run_protocol(
    config: TrainConfig,
    train_pool: MultiModalDataset,
    eval_data: MultiModalDataset,
    n_runs: int = 4,
    model_config: ModelConfig | None = None,
    encoder: str = "small_conv",
    projection_dim: int = 128,
) -> ProtocolResult:
    """Repeat a run ``n_runs`` times with derived seeds and aggregate metrics.

    Run i uses seed ``derive_seed(base_seed, "run", i)`` for its model init,
    shuffling, augmentation, and stratified subset draw, so runs are
    independent but the whole protocol is reproducible from the base seed.
    """
    check_positive_int(n_runs, "n_runs")
    runs: list[RunResult] = []
    for i in range(n_runs):
        run_config = replace(config, seed=derive_seed(config.seed, "run", i))
        runs.append(
            train_run(run_config, train_pool, eval_data, model_config, encoder, projection_dim)
        )
    aggregate: dict[str, AggregateStats] = {}
    for key in AGGREGATE_KEYS:
        values = [r.report.summary().get(key) for r in runs]
        if all(v is not None for v in values):
            aggregate[key] = aggregate_metric(values)
    return ProtocolResult(runs=runs, aggregate=aggregate)
