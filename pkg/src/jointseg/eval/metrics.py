"""Overlap and surface-distance metrics."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_erosion, generate_binary_structure
from scipy.spatial import cKDTree

from ..errors import ValidationError

_SIX_CONN = generate_binary_structure(3, 1)


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """Dice overlap ``2|A∩B| / (|A|+|B|)``; 1.0 when both are empty."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((pred & gt).sum()) / total


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels 6-adjacent to background (volume edge counts)."""
    mask = np.asarray(mask, dtype=bool)
    eroded = binary_erosion(mask, structure=_SIX_CONN, border_value=0)
    return np.argwhere(mask & ~eroded)


def hd95(pred: np.ndarray, gt: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float | None:
    """95th percentile of the symmetric surface-distance multiset (mm).

    Both masks empty -> 0.0; exactly one empty -> None (undefined).
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p_empty, g_empty = not pred.any(), not gt.any()
    if p_empty and g_empty:
        return 0.0
    if p_empty or g_empty:
        return None
    sp = np.asarray(spacing, dtype=np.float64)
    a = surface_voxels(pred) * sp
    b = surface_voxels(gt) * sp
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return float(np.percentile(np.concatenate([d_ab, d_ba]), 95))
