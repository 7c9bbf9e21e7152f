"""Acquisition-shift simulators: bias field, motion ghosting, smoothing.

Each operator is the identity at zero parameters. The bias field is a
multiplicative exponentiated random polynomial; ghosting blends the
image with a half-FOV shifted copy (energy preserving); smoothing is a
Gaussian blur with reflective boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from ..core.types import Volume
from ..errors import ValidationError

GHOST_AXIS = 1  # phase-encode-like axis


@dataclass(frozen=True)
class ShiftConfig:
    bias_order: int = 3
    bias_amplitude: float = 0.0
    smoothing_sigma: float = 0.0
    ghosting_intensity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.bias_amplitude < 0 or self.smoothing_sigma < 0:
            raise ValidationError("shift amplitudes must be >= 0")
        if not 0.0 <= self.ghosting_intensity <= 1.0:
            raise ValidationError("ghosting_intensity must lie in [0, 1]")
        if self.bias_order < 0:
            raise ValidationError("bias_order must be >= 0")


SHIFT_PRESETS = {
    "none": ShiftConfig(),
    "mild": ShiftConfig(bias_order=3, bias_amplitude=0.2, smoothing_sigma=0.6, ghosting_intensity=0.1),
    "strong": ShiftConfig(bias_order=3, bias_amplitude=0.5, smoothing_sigma=1.4, ghosting_intensity=0.25),
}


def _normalized_coords(shape):
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def bias_field(shape, order: int, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """exp of a random polynomial (no constant term) over [-1, 1]^3."""
    x, y, z = _normalized_coords(shape)
    log_field = np.zeros(shape, dtype=np.float64)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            for c in range(order + 1 - a - b):
                if a + b + c == 0:
                    continue
                coef = amplitude * rng.normal()
                log_field += coef * (x**a) * (y**b) * (z**c)
    return np.exp(log_field)


def apply_bias_field(v: Volume, cfg: ShiftConfig, rng: np.random.Generator | None = None) -> Volume:
    if cfg.bias_amplitude == 0:
        return v
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    field = bias_field(v.shape, cfg.bias_order, cfg.bias_amplitude, rng)
    return v.with_data((v.data.astype(np.float64) * field).astype(np.float32))


def apply_motion_ghosting(v: Volume, cfg: ShiftConfig, rng: np.random.Generator | None = None) -> Volume:
    """Blend with a half-FOV rolled copy; total energy is preserved."""
    if cfg.ghosting_intensity == 0:
        return v
    w = cfg.ghosting_intensity / 2.0
    data = v.data.astype(np.float64)
    shifted = np.roll(data, v.shape[GHOST_AXIS] // 2, axis=GHOST_AXIS)
    out = (1.0 - w) * data + w * shifted
    norm_in = np.sqrt((data**2).sum())
    norm_out = np.sqrt((out**2).sum())
    if norm_out > 0:
        out *= norm_in / norm_out
    return v.with_data(out.astype(np.float32))


def apply_smoothing(v: Volume, cfg: ShiftConfig, rng: np.random.Generator | None = None) -> Volume:
    if cfg.smoothing_sigma == 0:
        return v
    out = gaussian_filter(v.data.astype(np.float64), cfg.smoothing_sigma, mode="reflect")
    return v.with_data(out.astype(np.float32))


def apply_shift(
    v: Volume,
    cfg: ShiftConfig,
    rng: np.random.Generator | None = None,
    sample_params: bool = False,
) -> Volume:
    """Compose bias, ghosting and smoothing.

    With ``sample_params`` the ghosting/smoothing magnitudes are drawn
    uniformly below their configured values (fresh parameters per call,
    for augmentation); otherwise the exact configured values apply.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    eff = cfg
    if sample_params:
        eff = replace(
            cfg,
            ghosting_intensity=float(rng.uniform(0, cfg.ghosting_intensity)),
            smoothing_sigma=float(rng.uniform(0, cfg.smoothing_sigma)),
        )
    out = apply_bias_field(v, eff, rng)
    out = apply_motion_ghosting(out, eff, rng)
    return apply_smoothing(out, eff, rng)
