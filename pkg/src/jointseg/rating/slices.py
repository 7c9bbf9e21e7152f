"""Server-side axial slice rendering (PNG) with optional label overlay.

Window/level is fixed per case from intensity percentiles so every
rater sees identical renderings.
"""

from __future__ import annotations

import io
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from ..core import nifti
from ..errors import ValidationError

# label value -> RGB; cycles for high labels
_PALETTE = [
    (230, 80, 80),
    (80, 160, 230),
    (90, 200, 120),
    (240, 200, 70),
    (180, 110, 220),
    (255, 140, 60),
    (110, 220, 220),
    (240, 120, 180),
]

OVERLAY_ALPHA = 0.45


@lru_cache(maxsize=64)
def _load(path: str) -> tuple[np.ndarray, tuple]:
    data, spacing = nifti.read(path)
    return np.asarray(data), spacing


def n_axial_slices(image_path: str) -> int:
    data, _ = _load(image_path)
    return data.shape[2]


def render_slice(
    image_path: str,
    k: int,
    labels_path: str | None = None,
    zoom: int = 4,
) -> bytes:
    """Axial slice k as PNG bytes; overlay labels when given."""
    data, _ = _load(str(image_path))
    if not 0 <= k < data.shape[2]:
        raise ValidationError(f"slice {k} out of range 0..{data.shape[2] - 1}")
    sl = data[:, :, k].astype(np.float64)
    lo, hi = np.percentile(data, (1.0, 99.0))
    if hi <= lo:
        hi = lo + 1.0
    grey = np.clip((sl - lo) / (hi - lo), 0.0, 1.0)
    rgb = np.stack([grey] * 3, axis=-1)

    if labels_path is not None:
        lab, _ = _load(str(labels_path))
        if lab.shape != data.shape:
            raise ValidationError("labels do not match the image shape")
        lab_sl = lab[:, :, k].astype(int)
        overlay = np.zeros_like(rgb)
        mask = lab_sl > 0
        for value in np.unique(lab_sl[mask]):
            color = np.asarray(_PALETTE[(int(value) - 1) % len(_PALETTE)]) / 255.0
            overlay[lab_sl == value] = color
        rgb = np.where(mask[..., None], (1 - OVERLAY_ALPHA) * rgb + OVERLAY_ALPHA * overlay, rgb)

    img = Image.fromarray((rgb * 255).astype(np.uint8).transpose(1, 0, 2))
    if zoom > 1:
        img = img.resize((img.width * zoom, img.height * zoom), Image.NEAREST)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def resolve_case_paths(blob: dict, case_id: str, alias: str | None) -> tuple[str, str | None]:
    """(image path, prediction-labels path) for a case/alias pair."""
    case = blob["cases"].get(case_id)
    if case is None:
        raise ValidationError(f"unknown case {case_id}")
    base = Path(blob.get("base_dir", "."))

    def resolve(rel):
        p = Path(rel)
        return str(p if p.is_absolute() else base / p)

    image = resolve(case["image"])
    labels = None
    if alias is not None:
        method = blob["aliases"][case_id].get(alias)
        if method is None:
            raise ValidationError(f"unknown alias {alias}")
        labels = resolve(case["predictions"][method])
    return image, labels
