"""Joint optimisation engine.

Per iteration, paired control/lesion draws feed three segmentation
terms (lesion supervision on full modalities, output consistency
between full and shared-modality forwards, tissue supervision on
control scans) plus an optional domain-adaptation term weighted by
lambda. Terms under their skip schedule are computed and logged but
excluded from gradients.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..core.manifest import DatasetManifest
from ..errors import ConfigError, JointsegError
from ..losses import lesion_loss, prob_jaccard, tissue_loss
from ..model import (
    FULL,
    SHARED_ONLY,
    Discriminator,
    HeteroModalNet,
    NetworkConfig,
    build_discriminator,
    build_network,
    save_checkpoint,
)
from ..phantom.shifts import ShiftConfig
from .config import (
    DA_ADVERSARIAL,
    DA_AUGMENT,
    DA_NONE,
    DA_PSEUDO,
    FULLY_SUP,
    JOINT,
    LESION_ONLY,
    TISSUE_ONLY,
    SplitIndices,
    TrainConfig,
    config_hash,
    split_dataset,
)
from .data import Batch, build_batch, load_samples, materialize_patch
from .sampler import PairSampler, TWIN_SLOT, PSEUDO_SLOT

log = logging.getLogger(__name__)

BOUND_TOL = 1e-7


@dataclass
class SegTerms:
    lesion: float = 0.0
    consistency: float = 0.0
    control: float = 0.0
    consistency_active: bool = True
    total_for_grad: torch.Tensor | None = None

    @property
    def total_logged(self) -> float:
        return self.lesion + self.consistency + self.control


def _per_sample_mean(fn, probs_a, probs_b) -> torch.Tensor:
    vals = [fn(probs_a[b], probs_b[b]) for b in range(probs_a.shape[0])]
    return torch.stack(vals).mean()


def single_task_loss(probs, target, tax, group: tuple[int, ...], eps: float) -> torch.Tensor:
    """Baseline-arm loss over one task's own label space.

    Uniform weights over the group plus background: a standalone model
    must learn its classes against everything else, unlike the joint
    decomposition where the other stream supervises the rest.
    """
    from ..losses import per_class_jaccard

    terms = per_class_jaccard(probs, target, eps=eps)
    keep = [0] + [tax.channel_of(c) for c in group]
    w = torch.zeros(terms.shape[0], dtype=terms.dtype)
    w[keep] = 1.0 / len(keep)
    return (w * terms).sum()


def seg_loss(
    batch: Batch,
    net: HeteroModalNet,
    cfg: TrainConfig,
    tax,
    epoch: int,
) -> tuple[SegTerms, dict]:
    """Segmentation loss terms plus the forward products for reuse."""
    eps = cfg.loss_eps
    t_loss = lambda a, b: tissue_loss(a, b, tax, eps=eps, background_group=cfg.background_group)  # noqa: E731
    l_loss = lambda a, b: lesion_loss(a, b, tax, eps=eps, background_group=cfg.background_group)  # noqa: E731

    outputs: dict = {}
    terms = SegTerms()
    zero = torch.zeros(())
    total = zero

    if cfg.task == FULLY_SUP:
        if batch.fully_full is None:
            raise ConfigError("fully_sup batch without fully annotated samples")
        t1 = batch.fully_full[:, :1]
        probs, _ = net(t1, batch.fully_full, FULL)
        vals = [
            prob_jaccard(probs[b], batch.fully_y[b], tax, eps=eps).total
            for b in range(probs.shape[0])
        ]
        total = torch.stack(vals).mean()
        terms.lesion = float(total.detach())
        terms.consistency_active = False
        terms.total_for_grad = total
        return terms, outputs

    if cfg.task in (JOINT, LESION_ONLY):
        if batch.lesion_t1 is None:
            raise ConfigError("batch is missing lesion samples")
        p_full, feats_full = net(batch.lesion_t1, batch.lesion_full, FULL)
        outputs["lesion_probs_full"] = p_full
        outputs["lesion_feats_full"] = feats_full
        if cfg.task == LESION_ONLY:
            lesion_term = _per_sample_mean(
                lambda a, b: single_task_loss(a, b, tax, tax.lesion_classes, eps),
                p_full, batch.lesion_y,
            )
        else:
            lesion_term = _per_sample_mean(l_loss, p_full, batch.lesion_y)
        terms.lesion = float(lesion_term.detach())
        total = total + lesion_term

    if cfg.task == JOINT:
        p_t1_l, feats_l = net(batch.lesion_t1, None, SHARED_ONLY)
        outputs["lesion_probs_t1"] = p_t1_l
        outputs["lesion_feats_t1"] = feats_l
        target = p_t1_l.detach() if cfg.consistency_stop_gradient else p_t1_l
        consistency = _per_sample_mean(t_loss, outputs["lesion_probs_full"], target)
        terms.consistency = float(consistency.detach())
        terms.consistency_active = epoch >= cfg.skip_consistency_epochs
        if terms.consistency_active:
            total = total + consistency

    if cfg.task in (JOINT, TISSUE_ONLY):
        if batch.control_t1 is None:
            raise ConfigError("batch is missing control samples")
        p_t1_c, feats_c = net(batch.control_t1, None, SHARED_ONLY)
        outputs["control_probs"] = p_t1_c
        outputs["control_feats"] = feats_c
        if cfg.task == TISSUE_ONLY:
            control_term = _per_sample_mean(
                lambda a, b: single_task_loss(a, b, tax, tax.tissue_classes, eps),
                p_t1_c, batch.control_y,
            )
        else:
            control_term = _per_sample_mean(t_loss, p_t1_c, batch.control_y)
        terms.control = float(control_term.detach())
        total = total + control_term

    terms.total_for_grad = total
    return terms, outputs


def da_loss(
    batch: Batch,
    outputs: dict,
    disc: Discriminator | None,
    cfg: TrainConfig,
    tax,
    epoch: int,
) -> tuple[torch.Tensor, float, bool]:
    """(value for gradients, logged value, active flag)."""
    zero = torch.zeros(())
    if cfg.da_strategy in (DA_NONE, DA_PSEUDO) or cfg.lambda_da == 0.0:
        return zero, 0.0, False
    if cfg.da_strategy == DA_AUGMENT:
        probs = outputs["control_probs"]
        pairs = probs.shape[0] // 2
        vals = [
            tissue_loss(probs[2 * k], probs[2 * k + 1], tax, eps=cfg.loss_eps,
                        background_group=cfg.background_group)
            for k in range(pairs)
        ]
        val = torch.stack(vals).mean()
        return val, float(val.detach()), True
    if cfg.da_strategy == DA_ADVERSARIAL:
        if disc is None:
            raise ConfigError("adversarial strategy requires a discriminator")
        d_l = disc(outputs["lesion_feats_t1"])
        d_c = disc(outputs["control_feats"])
        # negated discriminator cross-entropy: push features to swap domains
        val = torch.log(d_l + 1e-8).mean() + torch.log(1.0 - d_c + 1e-8).mean()
        active = epoch >= cfg.skip_adversarial_epochs
        return (val if active else zero), float(val.detach()), active
    raise ConfigError(f"unknown DA strategy {cfg.da_strategy!r}")


def discriminator_step(
    batch: Batch,
    net: HeteroModalNet,
    disc: Discriminator,
    opt_d: torch.optim.Optimizer,
) -> dict:
    """One domain-classification step on frozen-segmenter features."""
    with torch.no_grad():
        _, feats_l = net(batch.lesion_t1, None, SHARED_ONLY)
        _, feats_c = net(batch.control_t1, None, SHARED_ONLY)
    opt_d.zero_grad()
    p_l = disc([f.detach() for f in feats_l])
    p_c = disc([f.detach() for f in feats_c])
    loss = -(torch.log(p_l + 1e-8).mean() + torch.log(1.0 - p_c + 1e-8).mean())
    loss.backward()
    opt_d.step()
    acc = 0.5 * (float((p_l > 0.5).float().mean()) + float((p_c < 0.5).float().mean()))
    return {"disc_loss": float(loss.detach()), "disc_acc": acc}


def bound_check(batch: Batch, outputs: dict, cfg: TrainConfig, tax) -> dict | None:
    """Per-sample triangle-inequality check of the tissue-risk bound.

    Uses oracle tissue labels (desk scale only); computed in float64 so
    the tolerance reflects the mathematics rather than float32 noise.
    """
    if batch.lesion_oracle_tissue is None or "lesion_probs_t1" not in outputs:
        return None
    p_full = outputs["lesion_probs_full"].detach().double()
    p_t1 = outputs["lesion_probs_t1"].detach().double()
    oracle = batch.lesion_oracle_tissue.double()
    violations = 0
    min_margin = math.inf
    for b in range(p_full.shape[0]):
        kw = dict(eps=0.0, background_group=cfg.background_group)
        direct = float(tissue_loss(p_full[b], oracle[b], tax, **kw))
        consistency = float(tissue_loss(p_full[b], p_t1[b], tax, **kw))
        anchor = float(tissue_loss(p_t1[b], oracle[b], tax, **kw))
        margin = consistency + anchor - direct
        min_margin = min(min_margin, margin)
        if margin < -BOUND_TOL:
            violations += 1
    return {"bound_violations": violations, "bound_margin_min": min_margin}


@dataclass
class TrainState:
    iteration: int = 0
    epoch: int = 0
    plateau_halvings: int = 0
    epochs_since_improve: int = 0
    ema_val: float | None = None
    best_ema: float = math.inf
    best_val: float = math.inf
    bound_violations: int = 0


@dataclass
class TrainingRun:
    out_dir: Path
    checkpoint: Path
    report: dict
    log_path: Path
    splits: dict[str, SplitIndices] = field(default_factory=dict)


def _effective_da(cfg: TrainConfig) -> str:
    # lambda == 0 must reduce augment/adversarial to the plain run bit-for-bit
    if cfg.da_strategy in (DA_AUGMENT, DA_ADVERSARIAL) and cfg.lambda_da == 0.0:
        return DA_NONE
    return cfg.da_strategy


def current_lr(cfg: TrainConfig, iteration: int, plateau_halvings: int) -> float:
    return (
        cfg.lr
        * 0.5 ** (iteration // cfg.lr_halve_every)
        * 0.5**plateau_halvings
    )


def train(
    control_ds: DatasetManifest | None,
    lesion_ds: DatasetManifest | None,
    cfg: TrainConfig,
    net_cfg: NetworkConfig,
    out_dir,
    pseudo_ds: DatasetManifest | None = None,
    fully_ds: DatasetManifest | None = None,
    resume_from=None,
) -> TrainingRun:
    """Train one model arm; returns paths to the best checkpoint and logs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, ds in (("control", control_ds), ("lesion", lesion_ds)):
        if ds is not None and len(ds) == 0:
            raise ConfigError(f"{name} dataset is empty")
    if cfg.task in (JOINT, TISSUE_ONLY) and control_ds is None:
        raise ConfigError(f"task {cfg.task} requires a control dataset")
    if cfg.task in (JOINT, LESION_ONLY) and lesion_ds is None:
        raise ConfigError(f"task {cfg.task} requires a lesion dataset")
    if cfg.task == FULLY_SUP and fully_ds is None:
        raise ConfigError("fully_sup requires a fully annotated dataset")

    tax = next(ds for ds in (lesion_ds, control_ds, fully_ds) if ds is not None).taxonomy
    chash = config_hash(cfg.to_dict(), net_cfg.to_dict())

    torch.manual_seed(cfg.seed)
    net = build_network(net_cfg)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
    effective_da = _effective_da(cfg)
    disc = opt_d = None
    if effective_da == DA_ADVERSARIAL:
        disc = build_discriminator(net_cfg, width=cfg.disc_width)
        opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.disc_lr, betas=cfg.adam_betas)

    rng = np.random.default_rng(cfg.seed)

    splits: dict[str, SplitIndices] = {}
    datasets: dict[str, dict] = {}
    for name, ds, keep_raw in (
        ("control", control_ds, effective_da == DA_AUGMENT),
        ("lesion", lesion_ds, False),
        ("fully", fully_ds, False),
    ):
        if ds is None:
            continue
        sp = split_dataset(len(ds), cfg.split, cfg.seed)
        splits[name] = sp
        datasets[name] = {
            "train": load_samples(ds, sp.train, keep_raw_t1=keep_raw),
            "val": load_samples(ds, sp.val, keep_raw_t1=keep_raw),
        }
    if pseudo_ds is not None and len(pseudo_ds):
        # pseudo-control scans are training-only synthetic data: no split
        datasets["pseudo"] = {"train": load_samples(pseudo_ds, range(len(pseudo_ds))), "val": []}

    sampler = PairSampler(
        cfg,
        n_control=len(datasets.get("control", {}).get("train", [])),
        n_lesion=len(datasets.get("lesion", {}).get("train", [])),
        n_pseudo=len(datasets.get("pseudo", {}).get("train", [])),
        n_fully=len(datasets.get("fully", {}).get("train", [])),
        effective_da=effective_da,
    )

    twin_shift = None
    if effective_da == DA_AUGMENT:
        twin_shift = ShiftConfig(
            bias_amplitude=cfg.da_bias_amplitude,
            smoothing_sigma=cfg.da_smoothing_sigma,
            ghosting_intensity=cfg.da_ghosting_intensity,
        )

    state = TrainState()
    if resume_from is not None:
        payload = torch.load(resume_from, map_location="cpu", weights_only=False)
        net.load_state_dict(payload["net"])
        opt.load_state_dict(payload["opt"])
        if disc is not None and payload.get("disc") is not None:
            disc.load_state_dict(payload["disc"])
            opt_d.load_state_dict(payload["opt_d"])
        torch.set_rng_state(payload["torch_rng"])
        rng.bit_generator.state = payload["np_rng"]
        sampler.restore(payload["sampler"])
        for k, v in payload["state"].items():
            setattr(state, k, v)

    def materialize(spec) -> Batch:
        lesion_patches, control_patches, fully_patches = [], [], []
        lesion_ids, control_ids = [], []
        for i in spec.lesion:
            s = datasets["lesion"]["train"][i]
            lesion_patches.append(materialize_patch(s, cfg, rng))
            lesion_ids.append(s.sample_id)
        for kind, i in spec.control:
            pool = datasets["pseudo" if kind == PSEUDO_SLOT else "control"]["train"]
            s = pool[i]
            control_patches.append(
                materialize_patch(
                    s, cfg, rng, twin_shift=twin_shift if kind == TWIN_SLOT else None
                )
            )
            control_ids.append(s.sample_id)
        for i in spec.fully:
            fully_patches.append(materialize_patch(datasets["fully"]["train"][i], cfg, rng))
        return build_batch(
            lesion_patches, control_patches, tax, fully_patches, lesion_ids, control_ids
        )

    def validation_loss() -> float | None:
        vals = []
        with torch.no_grad():
            pools = {k: v["val"] for k, v in datasets.items() if v["val"]}
            if not pools:
                return None
            n = max(len(p) for p in pools.values())
            for i in range(n):
                lesion_p, control_p, fully_p = [], [], []
                if cfg.task in (JOINT, LESION_ONLY) and "lesion" in pools:
                    s = pools["lesion"][i % len(pools["lesion"])]
                    lesion_p = [materialize_patch(s, cfg, rng, augment=False)]
                if cfg.task in (JOINT, TISSUE_ONLY) and "control" in pools:
                    s = pools["control"][i % len(pools["control"])]
                    control_p = [materialize_patch(s, cfg, rng, augment=False)]
                if cfg.task == FULLY_SUP and "fully" in pools:
                    s = pools["fully"][i % len(pools["fully"])]
                    fully_p = [materialize_patch(s, cfg, rng, augment=False)]
                if not (lesion_p or control_p or fully_p):
                    return None
                b = build_batch(lesion_p, control_p, tax, fully_p)
                terms, _ = seg_loss(b, net, cfg, tax, epoch=max(cfg.skip_consistency_epochs, 0))
                vals.append(terms.total_logged)
        return float(np.mean(vals)) if vals else None

    log_path = out_dir / "train_log.jsonl"
    log_f = log_path.open("a" if resume_from else "w")
    best_ckpt = out_dir / "best.pt"
    state_path = out_dir / "train_state.pt"

    def dump_nan(batch, terms):
        dump = out_dir / "nan_dump.pt"
        torch.save({"batch": batch.__dict__, "terms": terms.__dict__, "iteration": state.iteration}, dump)
        raise JointsegError(f"NaN loss at iteration {state.iteration}; batch dumped to {dump}")

    stop = False
    while state.epoch < cfg.epochs and not stop:
        epoch = state.epoch
        net.train()
        for spec in sampler.epoch_specs(rng):
            if cfg.max_iterations is not None and state.iteration >= cfg.max_iterations:
                stop = True
                break
            lr = current_lr(cfg, state.iteration, state.plateau_halvings)
            for g in opt.param_groups:
                g["lr"] = lr
            batch = materialize(spec)
            terms, outputs = seg_loss(batch, net, cfg, tax, epoch)
            da_val, da_logged, da_active = da_loss(batch, outputs, disc, cfg, tax, epoch)
            total = terms.total_for_grad + cfg.lambda_da * da_val
            if not torch.isfinite(total):
                dump_nan(batch, terms)
            opt.zero_grad()
            total.backward()
            opt.step()

            record = {
                "iter": state.iteration + 1,
                "epoch": epoch,
                "lesion": terms.lesion,
                "consistency": terms.consistency,
                "consistency_active": terms.consistency_active,
                "control": terms.control,
                "da": da_logged,
                "da_active": da_active,
                "seg_total": terms.total_logged,
                "lr": lr,
            }
            if disc is not None:
                record.update(discriminator_step(batch, net, disc, opt_d))
            if cfg.log_bound_check and cfg.task == JOINT:
                chk = bound_check(batch, outputs, cfg, tax)
                if chk is not None:
                    state.bound_violations += chk["bound_violations"]
                    record.update(chk)
            log_f.write(json.dumps(record) + "\n")
            state.iteration += 1
        log_f.flush()

        val = validation_loss()
        if val is not None:
            if state.ema_val is None:
                state.ema_val = val
            else:
                state.ema_val = cfg.ema_decay * state.ema_val + (1 - cfg.ema_decay) * val
            if state.ema_val < state.best_ema - 1e-6:
                state.best_ema = state.ema_val
                state.epochs_since_improve = 0
            else:
                state.epochs_since_improve += 1
                if state.epochs_since_improve >= cfg.plateau_patience:
                    state.plateau_halvings += 1
                    state.epochs_since_improve = 0
            if val < state.best_val:
                state.best_val = val
                save_checkpoint(
                    best_ckpt, net, tax, disc=disc,
                    extra={"config_hash": chash, "epoch": epoch, "val_loss": val},
                )
            log_f.write(
                json.dumps(
                    {"event": "epoch_end", "epoch": epoch, "val": val,
                     "ema_val": state.ema_val, "plateau_halvings": state.plateau_halvings}
                )
                + "\n"
            )
            log_f.flush()
        state.epoch = epoch + 1

        torch.save(
            {
                "net": net.state_dict(),
                "opt": opt.state_dict(),
                "disc": disc.state_dict() if disc is not None else None,
                "opt_d": opt_d.state_dict() if opt_d is not None else None,
                "torch_rng": torch.get_rng_state(),
                "np_rng": rng.bit_generator.state,
                "sampler": sampler.state(),
                "state": state.__dict__,
                "config": cfg.to_dict(),
            },
            state_path,
        )

    log_f.close()
    if not best_ckpt.exists():  # no validation split: save the final weights
        save_checkpoint(best_ckpt, net, tax, disc=disc, extra={"config_hash": chash})
    report = {
        "config_hash": chash,
        "task": cfg.task,
        "da_strategy": cfg.da_strategy,
        "lambda_da": cfg.lambda_da,
        "iterations": state.iteration,
        "epochs": state.epoch,
        "best_val": None if state.best_val == math.inf else state.best_val,
        "bound_violations": state.bound_violations,
        "splits": {k: v.to_dict() for k, v in splits.items()},
        "config": cfg.to_dict(),
        "network": net_cfg.to_dict(),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    return TrainingRun(
        out_dir=out_dir,
        checkpoint=best_ckpt,
        report=report,
        log_path=log_path,
        splits=splits,
    )
