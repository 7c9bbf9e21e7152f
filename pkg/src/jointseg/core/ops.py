"""Volume I/O and label-map operations."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, ValidationError
from . import nifti
from .types import ClassTaxonomy, LabelMap, ProbabilityMap, Volume

LESION_OVER_TISSUE = "lesion_over_tissue"


def load_volume(path) -> Volume:
    """Load a NIfTI-1 volume; spacing comes from the header."""
    data, spacing = nifti.read(path)
    return Volume(np.asarray(data, dtype=np.float32), spacing)


def save_volume(path, v: Volume) -> None:
    nifti.write(path, v.data, v.spacing)


def load_labels(path, taxonomy: ClassTaxonomy) -> LabelMap:
    data, _ = nifti.read(path)
    return LabelMap(np.asarray(np.round(data), dtype=np.int16), taxonomy)


def save_labels(path, lab: LabelMap, spacing=(1.0, 1.0, 1.0)) -> None:
    nifti.write(path, lab.data.astype(np.int16), spacing)


def znorm(v: Volume, mask: np.ndarray | None = None) -> Volume:
    """Zero-mean unit-variance normalisation over the mask (or everywhere).

    Uses the population standard deviation.
    """
    data = v.data.astype(np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape:
            raise ValidationError("mask shape must match the volume")
        values = data[mask]
    else:
        values = data.reshape(-1)
    if values.size < 2:
        raise DegenerateInputError("need at least 2 voxels to normalise")
    mean = values.mean()
    std = values.std()  # population
    if std == 0:
        raise DegenerateInputError("constant input within mask")
    return Volume(((data - mean) / std).astype(np.float32), v.spacing)


def split_labels(y: LabelMap) -> tuple[LabelMap, LabelMap]:
    """Decompose a joint label map into tissue and lesion maps.

    Elementwise ``y = y_tissue + y_lesion`` (supports are disjoint).
    """
    tax = y.taxonomy
    tissue = np.where(np.isin(y.data, tuple(tax.tissue_classes)), y.data, 0)
    lesion = np.where(np.isin(y.data, tuple(tax.lesion_classes)), y.data, 0)
    return LabelMap(tissue, tax), LabelMap(lesion, tax)


def merge_labels(
    y_tissue: LabelMap, y_lesion: LabelMap, priority: str = LESION_OVER_TISSUE
) -> LabelMap:
    """Merge tissue and lesion maps; lesion voxels take priority."""
    if priority != LESION_OVER_TISSUE:
        raise ValidationError(f"unknown merge priority {priority!r}")
    if y_tissue.shape != y_lesion.shape:
        raise ValidationError("label maps must share shape")
    if y_tissue.taxonomy is not y_lesion.taxonomy and (
        y_tissue.taxonomy.channel_classes != y_lesion.taxonomy.channel_classes
    ):
        raise ValidationError("label maps must share taxonomy")
    data = np.where(y_lesion.data != 0, y_lesion.data, y_tissue.data)
    return LabelMap(data, y_tissue.taxonomy)


def one_hot(y: LabelMap) -> ProbabilityMap:
    """Categorical-encode a label map over the dense channel order."""
    tax = y.taxonomy
    out = np.zeros((tax.n_channels,) + y.shape, dtype=np.float64)
    for ch, cls in enumerate(tax.channel_classes):
        out[ch] = y.data == cls
    return ProbabilityMap(out, tax)


def labels_from_probs(p: ProbabilityMap) -> LabelMap:
    """Per-voxel argmax; ties break to the lowest channel index."""
    idx = np.argmax(p.data, axis=0)
    lut = np.asarray(p.taxonomy.channel_classes, dtype=np.int16)
    return LabelMap(lut[idx], p.taxonomy)
