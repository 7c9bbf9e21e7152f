from .config import (
    DA_ADVERSARIAL,
    DA_AUGMENT,
    DA_NONE,
    DA_PSEUDO,
    FULLY_SUP,
    JOINT,
    LESION_ONLY,
    TISSUE_ONLY,
    SplitIndices,
    TrainConfig,
    config_hash,
    split_dataset,
)
from .data import Batch, build_batch, load_samples, materialize_patch, one_hot_np
from .loop import (
    TrainingRun,
    bound_check,
    current_lr,
    da_loss,
    discriminator_step,
    seg_loss,
    train,
)
from .sampler import BatchSpec, PairSampler

__all__ = [
    "Batch",
    "BatchSpec",
    "DA_ADVERSARIAL",
    "DA_AUGMENT",
    "DA_NONE",
    "DA_PSEUDO",
    "FULLY_SUP",
    "JOINT",
    "LESION_ONLY",
    "PairSampler",
    "SplitIndices",
    "TISSUE_ONLY",
    "TrainConfig",
    "TrainingRun",
    "bound_check",
    "build_batch",
    "config_hash",
    "current_lr",
    "da_loss",
    "discriminator_step",
    "load_samples",
    "materialize_patch",
    "one_hot_np",
    "seg_loss",
    "split_dataset",
    "train",
]
