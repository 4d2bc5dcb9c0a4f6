"""Multi-modal multi-label contrastive learning for co-registered patch pairs."""

__version__ = "0.1.0"

from .data import (
    AugmentPolicy,
    MultiModalDataset,
    MultiModalSample,
    SyntheticSpec,
    augment,
    generate_synthetic,
    load_manifest,
    save_dataset,
    split_holdout,
    stratified_indices,
    stratified_subsample,
)
from .estimator import ContrastiveFusionClassifier
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    InvalidBatchError,
    MMCLError,
    RecipeError,
    ValidationError,
)
from .losses import (
    LossRecipe,
    LossValue,
    bce_multilabel,
    compose_loss,
    infonce_inter,
    mulsupcon,
    ntxent_intra,
)
from .metrics import (
    ClassSimilarityMatrix,
    MetricReport,
    brier_score,
    class_similarity,
    evaluate_predictions,
    hamming_loss,
    prf_report,
)
from .model import (
    DualEncoderModel,
    EncoderSpec,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    RECIPES,
    Batch,
    ProtocolResult,
    RunResult,
    TrainConfig,
    build_step,
    evaluate_model,
    run_protocol,
    train_joint,
    train_run,
    train_sequential,
)

__all__ = [
    "AugmentPolicy",
    "Batch",
    "CheckpointError",
    "ClassSimilarityMatrix",
    "ConfigurationError",
    "ContrastiveFusionClassifier",
    "DualEncoderModel",
    "EncoderSpec",
    "InvalidBatchError",
    "LossRecipe",
    "LossValue",
    "MMCLError",
    "MetricReport",
    "ModelConfig",
    "MultiModalDataset",
    "MultiModalSample",
    "ProtocolResult",
    "RECIPES",
    "RecipeError",
    "RunResult",
    "SyntheticSpec",
    "TrainConfig",
    "ValidationError",
    "augment",
    "bce_multilabel",
    "brier_score",
    "build_step",
    "class_similarity",
    "compose_loss",
    "evaluate_model",
    "evaluate_predictions",
    "generate_synthetic",
    "hamming_loss",
    "infonce_inter",
    "load_checkpoint",
    "load_manifest",
    "mulsupcon",
    "ntxent_intra",
    "prf_report",
    "run_protocol",
    "save_checkpoint",
    "save_dataset",
    "split_holdout",
    "stratified_indices",
    "stratified_subsample",
    "train_joint",
    "train_run",
    "train_sequential",
]
