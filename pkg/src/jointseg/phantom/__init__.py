from .generator import (
    MODALITIES,
    PhantomConfig,
    default_intensity_table,
    generate_phantom,
    make_task_specific_datasets,
)
from .shifts import (
    SHIFT_PRESETS,
    ShiftConfig,
    apply_bias_field,
    apply_motion_ghosting,
    apply_shift,
    apply_smoothing,
)

__all__ = [
    "MODALITIES",
    "PhantomConfig",
    "SHIFT_PRESETS",
    "ShiftConfig",
    "apply_bias_field",
    "apply_motion_ghosting",
    "apply_shift",
    "apply_smoothing",
    "default_intensity_table",
    "generate_phantom",
    "make_task_specific_datasets",
]
