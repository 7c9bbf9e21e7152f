from .harness import (
    ClassStats,
    JointModel,
    MetricsReport,
    PipelineModel,
    SingleTaskModel,
    evaluate,
    evaluate_symmetrized,
    joint_ground_truth,
    predict_joint,
    predict_probs,
    tissue_risk_gap,
)
from .metrics import dice, hd95, surface_voxels

__all__ = [
    "ClassStats",
    "JointModel",
    "MetricsReport",
    "PipelineModel",
    "SingleTaskModel",
    "dice",
    "evaluate",
    "evaluate_symmetrized",
    "hd95",
    "joint_ground_truth",
    "predict_joint",
    "predict_probs",
    "surface_voxels",
    "tissue_risk_gap",
]
