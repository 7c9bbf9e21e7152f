"""Shared preprocessing: intensity normalisation applied before any forward."""

from __future__ import annotations

import dataclasses

from .core.types import MultiModalSample
from .core.ops import znorm


def normalize_sample(sample: MultiModalSample) -> MultiModalSample:
    """Zero-mean unit-variance normalisation of every present modality."""
    mods = tuple(znorm(m) if m is not None else None for m in sample.modalities)
    return dataclasses.replace(sample, modalities=mods)
