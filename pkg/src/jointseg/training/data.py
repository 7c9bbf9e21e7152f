"""In-memory training data, augmentation, and batch materialisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from scipy.ndimage import rotate as nd_rotate

from ..core.manifest import DatasetManifest
from ..core.ops import znorm
from ..core.types import ClassTaxonomy, Volume
from ..errors import ConfigError
from ..phantom.shifts import ShiftConfig, apply_shift
from .config import TrainConfig


@dataclass
class LoadedSample:
    sample_id: str
    images: list[Optional[np.ndarray]]  # znormed, one per modality slot
    raw_t1: Optional[Volume]  # un-normalised, for domain-augmentation twins
    tissue: Optional[np.ndarray]
    lesion: Optional[np.ndarray]
    oracle_tissue: Optional[np.ndarray]  # full-coverage phantom truth

    @property
    def shape(self):
        return self.images[0].shape


def load_samples(manifest: DatasetManifest, indices, keep_raw_t1: bool = False) -> list[LoadedSample]:
    out = []
    for idx in indices:
        s = manifest.load_sample(idx)
        images = [
            znorm(m).data.astype(np.float32) if m is not None else None
            for m in s.modalities
        ]
        oracle = manifest.load_oracle_tissue(idx)
        out.append(
            LoadedSample(
                sample_id=s.sample_id,
                images=images,
                raw_t1=s.modalities[0] if keep_raw_t1 else None,
                tissue=None if s.tissue_labels is None else s.tissue_labels.data,
                lesion=None if s.lesion_labels is None else s.lesion_labels.data,
                oracle_tissue=None if oracle is None else oracle.data,
            )
        )
    return out


def one_hot_np(labels: np.ndarray, tax: ClassTaxonomy) -> np.ndarray:
    out = np.zeros((tax.n_channels,) + labels.shape, dtype=np.float32)
    for ch, cls in enumerate(tax.channel_classes):
        out[ch] = labels == cls
    return out


@dataclass
class Patch:
    """One sample's augmented, cropped training views."""

    t1: np.ndarray  # (1, *patch)
    full: Optional[np.ndarray]  # (M, *patch)
    tissue: Optional[np.ndarray]
    lesion: Optional[np.ndarray]
    oracle_tissue: Optional[np.ndarray]
    t1_twin: Optional[np.ndarray] = None  # domain-augmented aligned copy


def _crop_corner(shape, patch, rng) -> tuple[slice, ...]:
    corners = []
    for n, p in zip(shape, patch):
        if p > n:
            raise ConfigError(f"patch {patch} larger than volume {shape}")
        corners.append(0 if n == p else int(rng.integers(0, n - p + 1)))
    return tuple(slice(c, c + p) for c, p in zip(corners, patch))


def _crop_containing(shape, patch, voxel, rng) -> tuple[slice, ...]:
    """Random crop constrained to contain the given voxel."""
    corners = []
    for n, p, v in zip(shape, patch, voxel):
        lo = max(0, int(v) - p + 1)
        hi = min(n - p, int(v))
        corners.append(lo if hi <= lo else int(rng.integers(lo, hi + 1)))
    return tuple(slice(c, c + p) for c, p in zip(corners, patch))


def _maybe_rotate(arr: np.ndarray, angle: float, axes, order: int) -> np.ndarray:
    if angle == 0.0:
        return arr
    return nd_rotate(arr, angle, axes=axes, reshape=False, order=order, mode="nearest")


def materialize_patch(
    sample: LoadedSample,
    cfg: TrainConfig,
    rng: np.random.Generator,
    twin_shift: ShiftConfig | None = None,
    augment: bool = True,
) -> Patch:
    """Random rotation + noise augmentation, then a random crop.

    Lesion-bearing samples are crop-biased: with probability
    ``cfg.lesion_crop_bias`` the patch is constrained to contain a
    lesion voxel (tiny lesions would otherwise rarely be seen).
    """
    angle = 0.0
    axes = (0, 1)
    if augment and cfg.augment_rotate and cfg.rotate_degrees > 0:
        angle = float(rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees))
        axes = tuple(rng.choice(3, size=2, replace=False).tolist())
    rotated_lesion = (
        _maybe_rotate(sample.lesion, angle, axes, order=0)
        if sample.lesion is not None
        else None
    )
    if augment:
        sl = _crop_corner(sample.shape, cfg.patch_size, rng)
        if (
            rotated_lesion is not None
            and cfg.lesion_crop_bias > 0
            and rng.random() < cfg.lesion_crop_bias
        ):
            voxels = np.argwhere(rotated_lesion > 0)
            if len(voxels):
                target = voxels[rng.integers(len(voxels))]
                sl = _crop_containing(sample.shape, cfg.patch_size, target, rng)
    else:
        sl = tuple(
            slice((n - p) // 2, (n - p) // 2 + p)
            for n, p in zip(sample.shape, cfg.patch_size)
        )

    def img_view(a: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
        out = _maybe_rotate(a, angle, axes, order=1)[sl].astype(np.float32)
        if noise is not None:
            out = out + noise
        elif augment and cfg.noise_aug_std > 0:
            out = out + cfg.noise_aug_std * rng.normal(size=out.shape).astype(np.float32)
        return out

    def lab_view(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if a is None:
            return None
        if a is sample.lesion:
            return rotated_lesion[sl]
        return _maybe_rotate(a, angle, axes, order=0)[sl]

    shared_noise = None
    if twin_shift is not None and augment and cfg.noise_aug_std > 0:
        # clean/twin pairs are the same scan: identical standard augmentation
        shared_noise = cfg.noise_aug_std * rng.normal(size=cfg.patch_size).astype(np.float32)
    images = [None] * len(sample.images)
    for i, a in enumerate(sample.images):
        if a is None:
            continue
        images[i] = img_view(a, noise=shared_noise if i == 0 else None)
    twin = None
    if twin_shift is not None:
        if sample.raw_t1 is None:
            raise ConfigError("augment strategy needs raw shared-modality volumes")
        shifted = apply_shift(sample.raw_t1, twin_shift, rng=rng, sample_params=True)
        twin = img_view(znorm(shifted).data.astype(np.float32), noise=shared_noise)[None]
    full = None
    if all(a is not None for a in images):
        full = np.stack(images)
    return Patch(
        t1=images[0][None],
        full=full,
        tissue=lab_view(sample.tissue),
        lesion=lab_view(sample.lesion),
        oracle_tissue=lab_view(sample.oracle_tissue),
        t1_twin=twin,
    )


@dataclass
class Batch:
    """Materialised paired mini-batch (tensors are (B, C, *patch))."""

    lesion_t1: Optional[torch.Tensor]
    lesion_full: Optional[torch.Tensor]
    lesion_y: Optional[torch.Tensor]  # one-hot
    lesion_oracle_tissue: Optional[torch.Tensor]  # one-hot, zeros at lesions
    control_t1: Optional[torch.Tensor]
    control_y: Optional[torch.Tensor]  # one-hot
    fully_full: Optional[torch.Tensor] = None
    fully_y: Optional[torch.Tensor] = None
    lesion_ids: tuple = ()
    control_ids: tuple = ()


def _stack(arrays) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrays))


def build_batch(
    lesion_patches: list[Patch],
    control_patches: list[Patch],
    tax: ClassTaxonomy,
    fully_patches: list[Patch] | None = None,
    lesion_ids=(),
    control_ids=(),
) -> Batch:
    lesion_t1 = lesion_full = lesion_y = lesion_oracle = None
    if lesion_patches:
        lesion_t1 = _stack([p.t1 for p in lesion_patches])
        lesion_full = _stack([p.full for p in lesion_patches])
        lesion_y = _stack([one_hot_np(p.lesion, tax) for p in lesion_patches])
        if all(p.oracle_tissue is not None for p in lesion_patches):
            oracle_split = [
                np.where(p.lesion > 0, 0, p.oracle_tissue) for p in lesion_patches
            ]
            lesion_oracle = _stack([one_hot_np(o, tax) for o in oracle_split])
    control_t1 = control_y = None
    if control_patches:
        slots_t1, slots_y = [], []
        for p in control_patches:
            slots_t1.append(p.t1)
            slots_y.append(one_hot_np(p.tissue, tax))
            if p.t1_twin is not None:
                slots_t1.append(p.t1_twin)
                slots_y.append(slots_y[-1])
        control_t1 = _stack(slots_t1)
        control_y = _stack(slots_y)
    fully_full = fully_y = None
    if fully_patches:
        fully_full = _stack([p.full for p in fully_patches])
        merged = [np.where(p.lesion > 0, p.lesion, p.tissue) for p in fully_patches]
        fully_y = _stack([one_hot_np(m, tax) for m in merged])
    return Batch(
        lesion_t1=lesion_t1,
        lesion_full=lesion_full,
        lesion_y=lesion_y,
        lesion_oracle_tissue=lesion_oracle,
        control_t1=control_t1,
        control_y=control_y,
        fully_full=fully_full,
        fully_y=fully_y,
        lesion_ids=tuple(lesion_ids),
        control_ids=tuple(control_ids),
    )
