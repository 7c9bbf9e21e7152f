"""Domain types shared by every module.

All types are immutable after construction (arrays are marked
read-only), so instances can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ValidationError

PROB_SUM_TOL = 1e-5
WEIGHT_TOL = 1e-9

CONTROL = "control"
LESION = "lesion"
PSEUDO_CONTROL = "pseudo_control"
FULLY_ANNOTATED = "fully_annotated"
DOMAIN_TAGS = (CONTROL, LESION, PSEUDO_CONTROL)
MANIFEST_ROLES = (CONTROL, LESION, FULLY_ANNOTATED, PSEUDO_CONTROL)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Volume:
    """One 3D scalar grid with physical voxel spacing (mm)."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data)
        if data.ndim != 3:
            raise ValidationError(f"Volume data must be 3D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.isfinite(data).all():
            raise ValidationError("Volume data contains NaN/Inf")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValidationError(f"spacing must be 3 positive reals, got {spacing}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(np.array(data), self.spacing)


@dataclass(frozen=True)
class ClassTaxonomy:
    """Disjoint background/tissue/lesion class sets with per-class weights.

    Background is always the integer 0. Weights sum to 1 overall and to
    1/2 within each of the tissue and lesion groups.
    """

    tissue_classes: tuple[int, ...]
    lesion_classes: tuple[int, ...]
    weights: dict[int, float] = field(default_factory=dict)

    background: int = 0

    def __post_init__(self):
        tissue = tuple(sorted(int(c) for c in self.tissue_classes))
        lesion = tuple(sorted(int(c) for c in self.lesion_classes))
        if not tissue or not lesion:
            raise ValidationError("tissue and lesion class sets must be non-empty")
        if set(tissue) & set(lesion):
            raise ValidationError("tissue and lesion class sets must be disjoint")
        if 0 in tissue or 0 in lesion:
            raise ValidationError("0 is reserved for background")
        weights = dict(self.weights) or uniform_group_weights(tissue, lesion)
        missing = (set(tissue) | set(lesion)) - set(weights)
        if missing:
            raise ValidationError(f"weights missing for classes {sorted(missing)}")
        weights.setdefault(0, 0.0)
        total = sum(weights.values())
        t_sum = sum(weights[c] for c in tissue)
        l_sum = sum(weights[c] for c in lesion)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights must sum to 1, got {total}")
        if abs(t_sum - 0.5) > WEIGHT_TOL or abs(l_sum - 0.5) > WEIGHT_TOL:
            raise ValidationError(
                f"tissue/lesion weight groups must each sum to 1/2, got {t_sum}/{l_sum}"
            )
        object.__setattr__(self, "tissue_classes", tissue)
        object.__setattr__(self, "lesion_classes", lesion)
        object.__setattr__(self, "weights", weights)

    @property
    def channel_classes(self) -> tuple[int, ...]:
        """Class value per dense channel: background, tissues, lesions."""
        return (0,) + self.tissue_classes + self.lesion_classes

    @property
    def n_channels(self) -> int:
        return 1 + len(self.tissue_classes) + len(self.lesion_classes)

    def channel_of(self, cls: int) -> int:
        return self.channel_classes.index(cls)

    @property
    def all_classes(self) -> set[int]:
        return {0, *self.tissue_classes, *self.lesion_classes}

    def to_dict(self) -> dict:
        return {
            "background": 0,
            "tissue_classes": list(self.tissue_classes),
            "lesion_classes": list(self.lesion_classes),
            "weights": {str(k): v for k, v in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassTaxonomy":
        return cls(
            tissue_classes=tuple(d["tissue_classes"]),
            lesion_classes=tuple(d["lesion_classes"]),
            weights={int(k): float(v) for k, v in d.get("weights", {}).items()},
        )


def uniform_group_weights(tissue_classes, lesion_classes) -> dict[int, float]:
    """Uniform weights within each group, each group summing to 1/2."""
    tissue = list(tissue_classes)
    lesion = list(lesion_classes)
    if not tissue or not lesion:
        raise ValidationError("both class groups must be non-empty")
    w = {int(c): 0.5 / len(tissue) for c in tissue}
    w.update({int(c): 0.5 / len(lesion) for c in lesion})
    w[0] = 0.0
    return w


@dataclass(frozen=True)
class LabelMap:
    """3D grid of non-negative integer class labels."""

    data: np.ndarray
    taxonomy: ClassTaxonomy

    def __post_init__(self):
        data = np.ascontiguousarray(self.data)
        if data.ndim != 3:
            raise ValidationError(f"LabelMap data must be 3D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            if not np.all(data == np.round(data)):
                raise ValidationError("LabelMap data must be integer-valued")
            data = data.astype(np.int16)
        values = set(np.unique(data).tolist())
        bad = values - self.taxonomy.all_classes
        if bad:
            raise ValidationError(f"labels {sorted(bad)} not in taxonomy")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "LabelMap":
        return LabelMap(np.array(data), self.taxonomy)


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-voxel simplex over all classes, shape (C+1, X, Y, Z)."""

    data: np.ndarray
    taxonomy: ClassTaxonomy

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 4:
            raise ValidationError(f"ProbabilityMap must be (C, X, Y, Z), got {data.shape}")
        if data.shape[0] != self.taxonomy.n_channels:
            raise ValidationError(
                f"expected {self.taxonomy.n_channels} channels, got {data.shape[0]}"
            )
        if data.min() < -PROB_SUM_TOL or data.max() > 1 + PROB_SUM_TOL:
            raise ValidationError("probabilities must lie in [0, 1]")
        sums = data.sum(axis=0)
        if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
            raise ValidationError(
                f"per-voxel class sums deviate from 1 by {np.abs(sums - 1.0).max():.2e}"
            )
        object.__setattr__(self, "data", _freeze(data))

    @property
    def spatial_shape(self):
        return self.data.shape[1:]


@dataclass(frozen=True)
class MultiModalSample:
    """Ordered modality volumes with presence mask and optional labels.

    Slot 0 is the shared (T1-like) modality and is always present.
    """

    modalities: tuple[Optional[Volume], ...]
    tissue_labels: Optional[LabelMap] = None
    lesion_labels: Optional[LabelMap] = None
    domain_tag: str = CONTROL
    sample_id: str = ""
    # generation-time facts (e.g. the phantom's true symmetry plane)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        mods = tuple(self.modalities)
        if not mods or mods[0] is None:
            raise ValidationError("shared modality slot 0 must be present")
        present = [m for m in mods if m is not None]
        shape = present[0].shape
        spacing = present[0].spacing
        for m in present:
            if m.shape != shape or m.spacing != spacing:
                raise ValidationError("present modalities must share shape and spacing")
        for lab in (self.tissue_labels, self.lesion_labels):
            if lab is not None and lab.shape != shape:
                raise ValidationError("label maps must share the image shape")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ValidationError(f"unknown domain tag {self.domain_tag!r}")
        object.__setattr__(self, "modalities", mods)

    @property
    def presence(self) -> tuple[bool, ...]:
        return tuple(m is not None for m in self.modalities)

    @property
    def shape(self):
        return self.modalities[0].shape

    @property
    def spacing(self):
        return self.modalities[0].spacing
