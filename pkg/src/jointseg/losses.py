"""Segmentation loss algebra.

The central object is the probabilistic multi-class Jaccard distance: a
weighted sum of per-class Steinhaus-transformed L1 distances over
probability maps. It coincides with the binary Jaccard distance on
categorical encodings and is a true metric, so the tissue part of the
loss satisfies the triangle inequality used by the training bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np
import torch

from .core.types import ClassTaxonomy, ProbabilityMap
from .errors import ValidationError

ArrayLike = Union[np.ndarray, torch.Tensor, ProbabilityMap]

BACKGROUND_SPLIT = "split"
BACKGROUND_TISSUE = "tissue"


@dataclass
class LossValue:
    """Total weighted loss plus the unweighted per-class terms."""

    total: Union[float, torch.Tensor]
    per_class: dict[int, float]

    def __float__(self) -> float:
        return float(self.total)


def _as_tensor(x: ArrayLike) -> torch.Tensor:
    if isinstance(x, ProbabilityMap):
        return torch.as_tensor(x.data)
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x))


def per_class_jaccard(
    u: ArrayLike, v: ArrayLike, eps: float = 0.0
) -> torch.Tensor:
    """Per-class probabilistic Jaccard terms, shape (C,).

    Each term is ``2*sum|u-v| / (sum|u| + sum|v| + sum|u-v|)``, summed
    over all non-channel axes. With ``eps == 0`` the exact convention is
    used: a class absent from both inputs contributes 0. A positive
    ``eps`` is added to the denominator instead (NaN-safe gradients).
    """
    ut, vt = _as_tensor(u), _as_tensor(v)
    if ut.shape != vt.shape:
        raise ValidationError(f"shape mismatch: {tuple(ut.shape)} vs {tuple(vt.shape)}")
    dims = tuple(range(1, ut.dim()))
    diff = (ut - vt).abs().sum(dim=dims)
    size = ut.abs().sum(dim=dims) + vt.abs().sum(dim=dims)
    denom = size + diff
    if eps > 0:
        return 2.0 * diff / (denom + eps)
    safe = torch.where(denom > 0, denom, torch.ones_like(denom))
    return torch.where(denom > 0, 2.0 * diff / safe, torch.zeros_like(denom))


def binary_jaccard(a: ArrayLike, b: ArrayLike) -> float:
    """Binary Jaccard distance ``1 - |a∩b| / |a∪b|``; 0 if both empty."""
    at = _as_tensor(a).double()
    bt = _as_tensor(b).double()
    if at.shape != bt.shape:
        raise ValidationError(f"shape mismatch: {tuple(at.shape)} vs {tuple(bt.shape)}")
    for t in (at, bt):
        vals = torch.unique(t)
        if not bool(((vals == 0) | (vals == 1)).all()):
            raise ValidationError("binary_jaccard expects values in {0, 1}")
    inter = (at * bt).sum()
    union = (at + bt - at * bt).sum()
    if union == 0:
        return 0.0
    return float(1.0 - inter / union)


def _channel_weights(tax: ClassTaxonomy) -> np.ndarray:
    return np.asarray([tax.weights[c] for c in tax.channel_classes], dtype=np.float64)


def prob_jaccard(
    u: ArrayLike,
    v: ArrayLike,
    tax: ClassTaxonomy,
    class_subset: Optional[Iterable[int]] = None,
    eps: float = 0.0,
) -> LossValue:
    """Probabilistic multi-class Jaccard distance between two maps.

    With ``class_subset`` the weights are renormalised within the subset
    keeping their relative sizes; otherwise all classes contribute with
    their taxonomy weights (which sum to 1).
    """
    terms = per_class_jaccard(u, v, eps=eps)
    if terms.shape[0] != tax.n_channels:
        raise ValidationError(
            f"expected {tax.n_channels} channels, got {terms.shape[0]}"
        )
    weights = _channel_weights(tax)
    if class_subset is not None:
        subset = set(int(c) for c in class_subset)
        unknown = subset - tax.all_classes
        if unknown:
            raise ValidationError(f"classes {sorted(unknown)} not in taxonomy")
        keep = np.asarray([c in subset for c in tax.channel_classes])
        total_w = weights[keep].sum()
        if total_w <= 0:
            raise ValidationError("class_subset has zero total weight")
        weights = np.where(keep, weights / total_w, 0.0)
    wt = torch.as_tensor(weights, dtype=terms.dtype)
    total = (wt * terms).sum()
    detached = terms.detach()
    per_class = {
        cls: float(detached[ch]) for ch, cls in enumerate(tax.channel_classes)
    }
    return LossValue(total=total, per_class=per_class)


def _group_total(
    u: ArrayLike,
    v: ArrayLike,
    tax: ClassTaxonomy,
    group: tuple[int, ...],
    background_share: float,
    eps: float,
) -> torch.Tensor:
    terms = per_class_jaccard(u, v, eps=eps)
    weights = _channel_weights(tax)
    mask = np.asarray([c in group for c in tax.channel_classes], dtype=np.float64)
    mask[0] = background_share
    wt = torch.as_tensor(weights * mask, dtype=terms.dtype)
    return (wt * terms).sum()


def tissue_loss(
    u: ArrayLike,
    v: ArrayLike,
    tax: ClassTaxonomy,
    eps: float = 0.0,
    background_group: str = BACKGROUND_SPLIT,
) -> torch.Tensor:
    """Tissue part of the decomposed loss (plus its background share)."""
    share = 0.5 if background_group == BACKGROUND_SPLIT else 1.0
    return _group_total(u, v, tax, tax.tissue_classes, share, eps)


def lesion_loss(
    u: ArrayLike,
    v: ArrayLike,
    tax: ClassTaxonomy,
    eps: float = 0.0,
    background_group: str = BACKGROUND_SPLIT,
) -> torch.Tensor:
    """Lesion part of the decomposed loss (plus its background share)."""
    share = 0.5 if background_group == BACKGROUND_SPLIT else 0.0
    return _group_total(u, v, tax, tax.lesion_classes, share, eps)


def default_weights(tax: ClassTaxonomy) -> dict[int, float]:
    """Uniform weights within each group; each group sums to 1/2."""
    from .core.types import uniform_group_weights

    return uniform_group_weights(tax.tissue_classes, tax.lesion_classes)
