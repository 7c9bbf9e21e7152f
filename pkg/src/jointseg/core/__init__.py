from .manifest import DatasetManifest, SampleRecord
from .ops import (
    labels_from_probs,
    load_labels,
    load_volume,
    merge_labels,
    one_hot,
    save_labels,
    save_volume,
    split_labels,
    znorm,
)
from .types import (
    CONTROL,
    FULLY_ANNOTATED,
    LESION,
    PSEUDO_CONTROL,
    ClassTaxonomy,
    LabelMap,
    MultiModalSample,
    ProbabilityMap,
    Volume,
    uniform_group_weights,
)

__all__ = [
    "CONTROL",
    "FULLY_ANNOTATED",
    "LESION",
    "PSEUDO_CONTROL",
    "ClassTaxonomy",
    "DatasetManifest",
    "LabelMap",
    "MultiModalSample",
    "ProbabilityMap",
    "SampleRecord",
    "Volume",
    "labels_from_probs",
    "load_labels",
    "load_volume",
    "merge_labels",
    "one_hot",
    "save_labels",
    "save_volume",
    "split_labels",
    "uniform_group_weights",
    "znorm",
]
