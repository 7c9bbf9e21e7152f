"""Experiment plans: the model-comparison arms over one phantom corpus.

An arm is one trained model (or the pipeline combination); all arms of
a plan share the same seed, hence the same train/val/test splits, and
are summarised in one CSV (rows = classes, columns = arms).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core.manifest import DatasetManifest
from .errors import ConfigError, JointsegError
from .eval import JointModel, MetricsReport, PipelineModel, SingleTaskModel, evaluate
from .checks import run_checks
from .model import NetworkConfig, load_checkpoint
from .pseudohealthy import MIRROR, make_pseudo_control
from .training import (
    DA_ADVERSARIAL,
    DA_AUGMENT,
    DA_NONE,
    DA_PSEUDO,
    FULLY_SUP,
    JOINT,
    LESION_ONLY,
    TISSUE_ONLY,
    TrainConfig,
    config_hash,
    split_dataset,
    train,
)

log = logging.getLogger(__name__)

KNOWN_ARMS = (
    "tissue_only",
    "lesion_only",
    "pipeline",
    "fully_sup",
    "jstabl",
    "jstabl_augment",
    "jstabl_adversarial",
    # plus jstabl_pseudo_<K> arms, e.g. jstabl_pseudo_5
)


def _arm_settings(arm: str, base: TrainConfig, lambda_da: float) -> TrainConfig | None:
    """TrainConfig for an arm; None for evaluation-only arms."""
    if arm == "pipeline":
        return None
    kw = base.to_dict()
    if arm == "tissue_only":
        kw.update(task=TISSUE_ONLY, da_strategy=DA_NONE, lambda_da=0.0)
    elif arm == "lesion_only":
        kw.update(task=LESION_ONLY, da_strategy=DA_NONE, lambda_da=0.0)
    elif arm == "fully_sup":
        kw.update(task=FULLY_SUP, da_strategy=DA_NONE, lambda_da=0.0)
    elif arm == "jstabl":
        kw.update(task=JOINT, da_strategy=DA_NONE, lambda_da=0.0)
    elif arm == "jstabl_augment":
        kw.update(task=JOINT, da_strategy=DA_AUGMENT, lambda_da=lambda_da)
    elif arm == "jstabl_adversarial":
        kw.update(task=JOINT, da_strategy=DA_ADVERSARIAL, lambda_da=lambda_da)
    elif arm.startswith("jstabl_pseudo_"):
        kw.update(task=JOINT, da_strategy=DA_PSEUDO, lambda_da=0.0)
    else:
        raise ConfigError(f"unknown arm {arm!r}")
    return TrainConfig.from_dict(kw)


@dataclass
class ExperimentPlan:
    name: str
    control_manifest: str
    lesion_manifest: str
    arms: list[str]
    fully_manifest: str | None = None
    seed: int = 0
    lambda_da: float = 0.1
    pseudo_method: str = MIRROR
    train: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)

    def __post_init__(self):
        for arm in self.arms:
            if arm not in KNOWN_ARMS and not arm.startswith("jstabl_pseudo_"):
                raise ConfigError(f"unknown arm {arm!r}")
        if "pipeline" in self.arms:
            missing = {"tissue_only", "lesion_only"} - set(self.arms)
            if missing:
                raise ConfigError(f"pipeline arm needs arms {sorted(missing)}")
        if "fully_sup" in self.arms and not self.fully_manifest:
            raise ConfigError("fully_sup arm needs fully_manifest")

    @classmethod
    def from_yaml(cls, path) -> "ExperimentPlan":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"plan config not found: {path}")
        d = yaml.safe_load(path.read_text())
        try:
            plan = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid plan config: {exc}") from exc
        # manifest paths are relative to the plan file
        for attr in ("control_manifest", "lesion_manifest", "fully_manifest"):
            value = getattr(plan, attr)
            if value and not Path(value).is_absolute():
                setattr(plan, attr, str(path.parent / value))
        return plan

    def base_train_config(self) -> TrainConfig:
        kw = dict(self.train)
        kw["seed"] = self.seed
        return TrainConfig.from_dict(kw)

    def network_config(self, taxonomy) -> NetworkConfig:
        kw = dict(self.network)
        kw.setdefault("n_classes", taxonomy.n_channels)
        kw.setdefault("n_modalities", 2)
        return NetworkConfig(**kw)


def _pseudo_count(arm: str) -> int:
    return int(arm.rsplit("_", 1)[1])


def _train_arm(args) -> tuple[str, str]:
    """Worker: train one arm, return (arm, checkpoint path)."""
    (arm, cfg_dict, net_dict, control_path, lesion_path, pseudo_path,
     fully_path, out_dir) = args
    cfg = TrainConfig.from_dict(cfg_dict)
    net_cfg = NetworkConfig(**net_dict)
    control = DatasetManifest.load(control_path) if control_path else None
    lesion = DatasetManifest.load(lesion_path) if lesion_path else None
    pseudo = DatasetManifest.load(pseudo_path) if pseudo_path else None
    fully = DatasetManifest.load(fully_path) if fully_path else None
    run = train(control, lesion, cfg, net_cfg, out_dir,
                pseudo_ds=pseudo, fully_ds=fully)
    return arm, str(run.checkpoint)


def run_plan(plan: ExperimentPlan, out_dir, parallel_arms: int = 1) -> dict:
    """Train and evaluate every arm; emit a class-by-arm summary table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    control = DatasetManifest.load(plan.control_manifest)
    lesion = DatasetManifest.load(plan.lesion_manifest)
    fully = DatasetManifest.load(plan.fully_manifest) if plan.fully_manifest else None
    tax = lesion.taxonomy
    base = plan.base_train_config()
    net_cfg = plan.network_config(tax)
    phash = config_hash(dataclasses.asdict(plan), base.to_dict(), net_cfg.to_dict())

    snapshot = {
        "plan": dataclasses.asdict(plan),
        "train": base.to_dict(),
        "network": net_cfg.to_dict(),
        "config_hash": phash,
    }
    (out_dir / "plan_resolved.yaml").write_text(yaml.safe_dump(snapshot))

    lesion_split = split_dataset(len(lesion), base.split, base.seed)
    control_split = split_dataset(len(control), base.split, base.seed)

    pseudo_paths: dict[str, str] = {}
    for arm in plan.arms:
        if arm.startswith("jstabl_pseudo_"):
            k = _pseudo_count(arm)
            pseudo = make_pseudo_control(
                lesion, plan.pseudo_method, out_dir / f"pseudo_{k}",
                max_n=k, indices=lesion_split.train, seed=plan.seed,
            )
            if len(pseudo) == 0:
                raise ConfigError(f"arm {arm}: no pseudo-control samples produced")
            pseudo_paths[arm] = str(pseudo.base_dir / "pseudo.json")

    train_jobs = []
    for arm in plan.arms:
        cfg = _arm_settings(arm, base, plan.lambda_da)
        if cfg is None:
            continue
        train_jobs.append(
            (
                arm,
                cfg.to_dict(),
                net_cfg.to_dict().copy(),
                plan.control_manifest if cfg.task in (JOINT, TISSUE_ONLY) else None,
                plan.lesion_manifest if cfg.task in (JOINT, LESION_ONLY) else None,
                pseudo_paths.get(arm),
                plan.fully_manifest if cfg.task == FULLY_SUP else None,
                str(out_dir / arm),
            )
        )

    checkpoints: dict[str, str] = {}
    failures: dict[str, str] = {}
    try:
        if parallel_arms > 1:
            with ProcessPoolExecutor(max_workers=parallel_arms) as pool:
                for arm, ckpt in pool.map(_train_arm, train_jobs):
                    checkpoints[arm] = ckpt
                    log.info("arm %s trained -> %s", arm, ckpt)
        else:
            for job in train_jobs:
                arm, ckpt = _train_arm(job)
                checkpoints[arm] = ckpt
                log.info("arm %s trained -> %s", arm, ckpt)
    except Exception as exc:  # preserve partial results before aborting
        failures["training"] = str(exc)

    def model_for(arm: str):
        if arm == "pipeline":
            t_net, _, _ = load_checkpoint(checkpoints["tissue_only"])
            l_net, _, _ = load_checkpoint(checkpoints["lesion_only"])
            return PipelineModel(t_net, l_net, name=arm)
        net, _, _ = load_checkpoint(checkpoints[arm])
        if arm == "tissue_only":
            return SingleTaskModel(net, "tissue", name=arm)
        if arm == "lesion_only":
            return SingleTaskModel(net, "lesion", name=arm)
        return JointModel(net, name=arm)

    reports: dict[str, dict[str, MetricsReport]] = {}
    for arm in plan.arms:
        if arm != "pipeline" and arm not in checkpoints:
            continue
        if arm == "pipeline" and (
            "tissue_only" not in checkpoints or "lesion_only" not in checkpoints
        ):
            continue
        try:
            model = model_for(arm)
            tile = base.patch_size  # inference windows match the training patches
            reports[arm] = {
                "lesion_test": evaluate(model, lesion, lesion_split.test, phash, tile=tile),
                "control_test": evaluate(model, control, control_split.test, phash, tile=tile),
            }
            for name, rep in reports[arm].items():
                rep.save(out_dir / arm, stem=name)
        except JointsegError as exc:
            failures[arm] = str(exc)

    for table, key in (("summary_lesion_test.csv", "lesion_test"),
                       ("summary_control_test.csv", "control_test")):
        _write_summary(out_dir / table, plan.arms, reports, key, tax)

    check_report = run_checks(
        ["metric_axioms", "coincidence", "decomposition", "bound", "oracle"],
        out_dir=out_dir,
    )

    result = {
        "config_hash": phash,
        "arms": {arm: {"checkpoint": checkpoints.get(arm)} for arm in plan.arms},
        "failures": failures,
        "checks_passed": check_report["passed"],
        "summary_tables": ["summary_lesion_test.csv", "summary_control_test.csv"],
    }
    (out_dir / "plan_result.json").write_text(json.dumps(result, indent=2))
    if failures:
        raise JointsegError(f"plan arms failed: {failures}")
    return result


def _write_summary(path, arms, reports, key, tax):
    classes = list(tax.tissue_classes) + list(tax.lesion_classes)
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class"] + [a for a in arms if a in reports])
        for c in classes:
            row = [c]
            for arm in arms:
                if arm not in reports:
                    continue
                stats = reports[arm][key].classes[c]
                row.append(f"{100 * stats.dice_mean:.1f} ({100 * stats.dice_std:.1f})")
            writer.writerow(row)
