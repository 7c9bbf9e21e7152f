"""Training configuration and deterministic dataset splits."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError

JOINT = "joint"
TISSUE_ONLY = "tissue_only"
LESION_ONLY = "lesion_only"
FULLY_SUP = "fully_sup"
TASKS = (JOINT, TISSUE_ONLY, LESION_ONLY, FULLY_SUP)

DA_NONE = "none"
DA_PSEUDO = "pseudo_healthy"
DA_AUGMENT = "augment"
DA_ADVERSARIAL = "adversarial"
DA_STRATEGIES = (DA_NONE, DA_PSEUDO, DA_AUGMENT, DA_ADVERSARIAL)


@dataclass
class TrainConfig:
    task: str = JOINT
    da_strategy: str = DA_NONE
    lambda_da: float = 0.0
    lr: float = 5e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    lr_halve_every: int = 10000  # iterations
    plateau_patience: int = 15  # epochs without val-EMA improvement
    ema_decay: float = 0.9
    skip_consistency_epochs: int = 50
    skip_adversarial_epochs: int = 20
    batch_lesion: int = 2
    batch_control: int = 2
    patch_size: tuple[int, int, int] = (32, 32, 32)
    epochs: int = 10
    max_iterations: int | None = None
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    rotate_degrees: float = 10.0
    noise_aug_std: float = 0.02
    augment_rotate: bool = True
    lesion_crop_bias: float = 0.5  # P(patch forced to contain a lesion voxel)
    consistency_stop_gradient: bool = False
    background_group: str = "split"
    loss_eps: float = 1e-7
    disc_lr: float = 1e-4
    disc_width: int = 16
    log_bound_check: bool = True
    # distribution scales for the augment-DA transform family
    da_bias_amplitude: float = 0.5
    da_smoothing_sigma: float = 1.4
    da_ghosting_intensity: float = 0.25

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.da_strategy not in DA_STRATEGIES:
            raise ConfigError(f"unknown DA strategy {self.da_strategy!r}")
        if self.da_strategy in (DA_NONE, DA_PSEUDO) and self.lambda_da != 0.0:
            raise ConfigError(
                f"lambda_da must be 0 for strategy {self.da_strategy!r}"
            )
        if self.lambda_da < 0:
            raise ConfigError("lambda_da must be >= 0")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        self.adam_betas = tuple(self.adam_betas)
        self.patch_size = tuple(self.patch_size)
        self.split = tuple(self.split)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        d["patch_size"] = list(self.patch_size)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


def config_hash(*dicts: dict) -> str:
    payload = json.dumps(dicts, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class SplitIndices:
    train: list[int] = field(default_factory=list)
    val: list[int] = field(default_factory=list)
    test: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"train": self.train, "val": self.val, "test": self.test}


def split_dataset(n: int, split: tuple[float, float, float], seed: int) -> SplitIndices:
    """Deterministic train/val/test split; every part nonempty when possible."""
    if n < 1:
        raise ConfigError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(n).tolist()
    if n == 1:
        return SplitIndices(train=order, val=[], test=order[:])
    if n == 2:
        return SplitIndices(train=order[:1], val=[], test=order[1:])
    n_test = max(1, int(round(split[2] * n)))
    n_val = max(1, int(round(split[1] * n)))
    if n - n_test - n_val < 1:
        n_val = 0
    test = order[:n_test]
    val = order[n_test : n_test + n_val]
    train = order[n_test + n_val :]
    return SplitIndices(train=train, val=val, test=test)
