"""Model evaluation: per-class metrics, joint/pipeline prediction, reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core.manifest import DatasetManifest
from ..core.ops import merge_labels
from ..core.types import ClassTaxonomy, LabelMap, MultiModalSample
from ..errors import ConfigError, EstimationError, NotUnilateralError, ValidationError
from ..model import FULL, SHARED_ONLY, HeteroModalNet, forward
from ..preprocess import normalize_sample
from ..pseudohealthy import (
    determine_healthy_side,
    estimate_symmetry_plane,
    mirror_hemisphere,
    mirror_labels,
)
from .metrics import dice, hd95

log = logging.getLogger(__name__)


@dataclass
class JointModel:
    net: HeteroModalNet
    name: str = "joint"


@dataclass
class PipelineModel:
    tissue_net: HeteroModalNet
    lesion_net: HeteroModalNet
    name: str = "pipeline"


@dataclass
class SingleTaskModel:
    """Task-specific network read within its own class group only."""

    net: HeteroModalNet
    group: str  # "tissue" | "lesion"
    name: str = "single"


@dataclass
class ClassStats:
    dice_mean: float
    dice_std: float
    dice_both_empty: int
    hd95_mean: float | None
    hd95_std: float | None
    hd95_undefined: int

    def to_dict(self) -> dict:
        return {
            "dice_mean": self.dice_mean,
            "dice_std": self.dice_std,
            "dice_both_empty": self.dice_both_empty,
            "hd95_mean": self.hd95_mean,
            "hd95_std": self.hd95_std,
            "hd95_undefined": self.hd95_undefined,
        }


@dataclass
class MetricsReport:
    dataset: str
    model: str
    classes: dict[int, ClassStats]
    samples: list[dict]
    config_hash: str = ""
    excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "config_hash": self.config_hash,
            "excluded": self.excluded,
            "classes": {str(c): s.to_dict() for c, s in self.classes.items()},
            "samples": self.samples,
        }

    def save(self, out_dir, stem: str | None = None) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or f"{self.model}_{self.dataset}"
        (out_dir / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2))
        with (out_dir / f"{stem}.csv").open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["class", "dice_mean", "dice_std", "hd95_mean", "hd95_std", "hd95_undefined"]
            )
            for c, s in sorted(self.classes.items()):
                writer.writerow(
                    [c, s.dice_mean, s.dice_std, s.hd95_mean, s.hd95_std, s.hd95_undefined]
                )

    def mean_dice(self, classes) -> float:
        return float(np.mean([self.classes[c].dice_mean for c in classes]))


def _restricted_argmax(probs: np.ndarray, tax: ClassTaxonomy, allowed: set[int]) -> np.ndarray:
    channels = [ch for ch, cls in enumerate(tax.channel_classes) if cls in allowed]
    sub = probs[channels]
    idx = np.argmax(sub, axis=0)
    lut = np.asarray([tax.channel_classes[ch] for ch in channels], dtype=np.int16)
    return lut[idx]


def _tile_positions(size: int, tile: int, stride: int) -> list[int]:
    if tile >= size:
        return [0]
    starts = list(range(0, size - tile + 1, stride))
    if starts[-1] != size - tile:
        starts.append(size - tile)
    return starts


def predict_probs(net, sample: MultiModalSample, mode: str, tax: ClassTaxonomy,
                  tile: tuple[int, int, int] | None = None) -> np.ndarray:
    """Class probabilities for a whole sample.

    With ``tile`` the volume is processed in overlapping sliding windows
    (stride = tile/2) whose predictions are averaged; this keeps the
    instance-norm input statistics matched to the training patch size.
    """
    if tile is None:
        probs, _ = forward(net, sample, mode, tax)
        return probs.data
    import dataclasses

    shape = sample.shape
    tile = tuple(min(t, n) for t, n in zip(tile, shape))
    acc = np.zeros((tax.n_channels,) + shape, dtype=np.float64)
    weight = np.zeros(shape, dtype=np.float64)
    grids = [_tile_positions(n, t, max(1, t // 2)) for n, t in zip(shape, tile)]
    for x in grids[0]:
        for y in grids[1]:
            for z in grids[2]:
                sl = (slice(x, x + tile[0]), slice(y, y + tile[1]), slice(z, z + tile[2]))
                mods = tuple(
                    None if m is None else m.with_data(m.data[sl])
                    for m in sample.modalities
                )
                view = dataclasses.replace(
                    sample, modalities=mods, tissue_labels=None, lesion_labels=None
                )
                probs, _ = forward(net, view, mode, tax)
                acc[(slice(None),) + sl] += probs.data
                weight[sl] += 1.0
    return acc / weight[None]


def predict_joint(model_set, sample: MultiModalSample, tax: ClassTaxonomy,
                  tile: tuple[int, int, int] | None = None) -> LabelMap:
    """Predict a joint label map; argmax ties break to the lowest index."""
    sample = normalize_sample(sample)
    mode = FULL if all(sample.presence) else SHARED_ONLY
    if isinstance(model_set, JointModel):
        probs = predict_probs(model_set.net, sample, mode, tax, tile)
        data = _restricted_argmax(probs, tax, tax.all_classes)
        return LabelMap(data, tax)
    if isinstance(model_set, PipelineModel):
        t_probs = predict_probs(model_set.tissue_net, sample, SHARED_ONLY, tax, tile)
        l_probs = predict_probs(model_set.lesion_net, sample, mode, tax, tile)
        tissue = _restricted_argmax(t_probs, tax, {0, *tax.tissue_classes})
        lesion = _restricted_argmax(l_probs, tax, {0, *tax.lesion_classes})
        return merge_labels(LabelMap(tissue, tax), LabelMap(lesion, tax))
    if isinstance(model_set, SingleTaskModel):
        if model_set.group == "tissue":
            probs = predict_probs(model_set.net, sample, SHARED_ONLY, tax, tile)
            allowed = {0, *tax.tissue_classes}
        else:
            probs = predict_probs(model_set.net, sample, mode, tax, tile)
            allowed = {0, *tax.lesion_classes}
        return LabelMap(_restricted_argmax(probs, tax, allowed), tax)
    raise ValidationError(f"unknown model set {type(model_set).__name__}")


def joint_ground_truth(manifest: DatasetManifest, index: int) -> LabelMap:
    """Joint oracle labels for a sample (lesion priority over tissue)."""
    rec = manifest.samples[index]
    sample = manifest.load_sample(index)
    tissue = sample.tissue_labels
    if tissue is None and rec.oracle_tissue_labels:
        tissue = manifest.load_oracle_tissue(index)
    lesion = sample.lesion_labels
    if tissue is None and lesion is None:
        raise ConfigError(f"sample {rec.id}: no labels available for evaluation")
    if tissue is None:
        return lesion
    if lesion is None:
        return tissue
    return merge_labels(tissue, lesion)


def _aggregate(rows: list[dict], classes, dataset, model, config_hash, excluded=0) -> MetricsReport:
    rows = sorted(rows, key=lambda r: r["sample"])
    stats: dict[int, ClassStats] = {}
    for c in classes:
        dices = [r["dice"][c] for r in rows]
        hds = [r["hd95"][c] for r in rows]
        defined = [h for h in hds if h is not None]
        stats[c] = ClassStats(
            dice_mean=float(np.mean(dices)) if dices else float("nan"),
            dice_std=float(np.std(dices)) if dices else float("nan"),
            dice_both_empty=sum(r["both_empty"][c] for r in rows),
            hd95_mean=float(np.mean(defined)) if defined else None,
            hd95_std=float(np.std(defined)) if defined else None,
            hd95_undefined=len(hds) - len(defined),
        )
    sample_rows = [
        {
            "sample": r["sample"],
            **{f"dice_{c}": r["dice"][c] for c in classes},
            **{f"hd95_{c}": r["hd95"][c] for c in classes},
        }
        for r in rows
    ]
    return MetricsReport(
        dataset=dataset,
        model=model,
        classes=stats,
        samples=sample_rows,
        config_hash=config_hash,
        excluded=excluded,
    )


def _score_sample(pred: LabelMap, gt: LabelMap, classes, spacing) -> dict:
    out = {"dice": {}, "hd95": {}, "both_empty": {}}
    for c in classes:
        p = pred.data == c
        g = gt.data == c
        out["dice"][c] = dice(p, g)
        out["hd95"][c] = hd95(p, g, spacing)
        out["both_empty"][c] = int(not p.any() and not g.any())
    return out


def evaluate(
    model_set,
    manifest: DatasetManifest,
    indices: list[int] | None = None,
    config_hash: str = "",
    tile: tuple[int, int, int] | None = None,
) -> MetricsReport:
    """Per-class Dice and HD95 of a model set against oracle joint labels."""
    todo = list(range(len(manifest))) if indices is None else list(indices)
    if not todo:
        raise ConfigError("empty evaluation set")
    tax = manifest.taxonomy
    classes = list(tax.tissue_classes) + list(tax.lesion_classes)
    rows = []
    for idx in todo:
        sample = manifest.load_sample(idx)
        gt = joint_ground_truth(manifest, idx)
        pred = predict_joint(model_set, sample, tax, tile=tile)
        row = _score_sample(pred, gt, classes, sample.spacing)
        row["sample"] = sample.sample_id
        rows.append(row)
    name = model_set.name if hasattr(model_set, "name") else "model"
    return _aggregate(rows, classes, manifest.name, name, config_hash)


def tissue_risk_gap(
    net: HeteroModalNet,
    control_ds: DatasetManifest,
    lesion_ds: DatasetManifest,
    control_indices,
    lesion_indices,
    tile: tuple[int, int, int] | None = None,
) -> dict:
    """Gap between mean shared-modality tissue risks on the two domains.

    Lesion-domain risk uses oracle tissue labels restricted to non-lesion
    voxels (lesion voxels are background in the split map). A small gap
    supports estimating the lesion-domain tissue risk from control data.
    """
    import torch

    from ..core.ops import one_hot
    from ..core.types import LabelMap
    from ..losses import tissue_loss

    tax = control_ds.taxonomy

    def risk(manifest, indices, split_lesions):
        vals = []
        for idx in indices:
            sample = normalize_sample(manifest.load_sample(idx))
            tissue = sample.tissue_labels
            if tissue is None:
                tissue = manifest.load_oracle_tissue(idx)
            if tissue is None:
                raise ConfigError(f"sample {sample.sample_id}: no tissue labels")
            if split_lesions and sample.lesion_labels is not None:
                data = np.where(sample.lesion_labels.data > 0, 0, tissue.data)
                tissue = LabelMap(data, tax)
            probs = predict_probs(net, sample, SHARED_ONLY, tax, tile)
            vals.append(
                float(tissue_loss(torch.as_tensor(probs),
                                  torch.as_tensor(one_hot(tissue).data), tax))
            )
        return float(np.mean(vals))

    control_risk = risk(control_ds, control_indices, split_lesions=False)
    lesion_risk = risk(lesion_ds, lesion_indices, split_lesions=True)
    return {
        "control_risk": control_risk,
        "lesion_risk": lesion_risk,
        "gap": abs(control_risk - lesion_risk),
    }


def evaluate_symmetrized(
    net: HeteroModalNet,
    lesion_manifest: DatasetManifest,
    indices: list[int] | None = None,
    config_hash: str = "",
    tile: tuple[int, int, int] | None = None,
) -> MetricsReport:
    """Tissue metrics on mirrored pseudo-healthy versions of lesion scans.

    Bilateral samples (and failed plane estimations) are excluded and
    counted in the report.
    """
    todo = list(range(len(lesion_manifest))) if indices is None else list(indices)
    tax = lesion_manifest.taxonomy
    classes = list(tax.tissue_classes)
    rows = []
    excluded = 0
    for idx in todo:
        sample = lesion_manifest.load_sample(idx)
        oracle = lesion_manifest.load_oracle_tissue(idx)
        if oracle is None and sample.tissue_labels is not None:
            oracle = sample.tissue_labels
        if oracle is None:
            raise ConfigError(f"sample {sample.sample_id}: no tissue oracle")
        t1 = sample.modalities[0]
        try:
            plane = estimate_symmetry_plane(t1)
            side = determine_healthy_side(sample.lesion_labels, plane, t1.spacing)
        except (NotUnilateralError, EstimationError) as exc:
            log.info("excluding %s from symmetrized eval: %s", sample.sample_id, exc)
            excluded += 1
            continue
        mirrored = mirror_hemisphere(t1, plane, side)
        gt = mirror_labels(oracle, plane, side, t1.spacing)
        pseudo = MultiModalSample(
            modalities=(mirrored,) + (None,) * (len(sample.modalities) - 1),
            tissue_labels=gt,
            domain_tag="pseudo_control",
            sample_id=sample.sample_id,
        )
        pred = predict_joint(JointModel(net, name="joint"), pseudo, tax, tile=tile)
        row = _score_sample(pred, gt, classes, t1.spacing)
        row["sample"] = sample.sample_id
        rows.append(row)
    if not rows:
        raise ConfigError("no unilateral samples available for symmetrized evaluation")
    return _aggregate(
        rows, classes, lesion_manifest.name + "_symmetrized", "joint", config_hash, excluded
    )
