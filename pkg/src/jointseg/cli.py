"""Command-line entry point wiring every module into runnable commands.

Exit codes: 0 ok, 2 configuration error, 3 runtime failure,
4 property-check failure.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import sys
from pathlib import Path

import click
import yaml

from .core.manifest import DatasetManifest
from .checks import run_checks
from .errors import ConfigError, JointsegError, PropertyCheckFailure, ValidationError
from .model import NetworkConfig, load_checkpoint

log = logging.getLogger("jointseg")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PropertyCheckFailure as exc:
            click.echo(f"property-check failure: {exc}", err=True)
            sys.exit(EXIT_CHECK)
        except (ConfigError, ValidationError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except JointsegError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.group()
def phantoms():
    """Procedural phantom datasets."""


@phantoms.command("generate")
@click.option("--out", required=True, type=click.Path())
@click.option("--n-control", default=5, show_default=True)
@click.option("--n-lesion", default=5, show_default=True)
@click.option("--n-heldout", default=0, show_default=True)
@click.option("--n-fully", default=0, show_default=True)
@click.option("--shift", type=click.Choice(["none", "mild", "strong"]), default="none",
              show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--size", default=64, show_default=True, help="cube edge in voxels")
@click.option("--unilateral/--no-unilateral", default=False, show_default=True)
@cli_errors
def phantoms_generate(out, n_control, n_lesion, n_heldout, n_fully, shift, seed,
                      size, unilateral):
    """Write control/lesion (and optional heldout) phantom datasets."""
    from .phantom import SHIFT_PRESETS, PhantomConfig, make_task_specific_datasets

    from .training import config_hash

    cfg = PhantomConfig(shape=(size, size, size), seed=seed, unilateral=unilateral)
    shift_cfg = SHIFT_PRESETS[shift]
    make_task_specific_datasets(
        n_control, n_lesion, cfg, out,
        shift=None if shift == "none" else shift_cfg,
        n_heldout=n_heldout, n_fully=n_fully,
    )
    snapshot = {
        "phantom": {**cfg.__dict__, "shape": list(cfg.shape),
                    "intensity_table": None},
        "shift": shift,
        "counts": {"control": n_control, "lesion": n_lesion,
                   "heldout": n_heldout, "fully": n_fully},
    }
    snapshot["config_hash"] = config_hash(snapshot)
    (Path(out) / "generation_config.yaml").write_text(yaml.safe_dump(snapshot))
    click.echo(f"wrote datasets to {out}")


@main.command("train")
@click.option("--control", "control_path", type=click.Path())
@click.option("--lesion", "lesion_path", type=click.Path())
@click.option("--pseudo", "pseudo_path", type=click.Path())
@click.option("--fully", "fully_path", type=click.Path())
@click.option("--da", type=click.Choice(["none", "pseudo", "augment", "adversarial"]),
              default="none", show_default=True)
@click.option("--lambda", "lambda_da", type=float, default=None)
@click.option("--task", type=click.Choice(["joint", "tissue_only", "lesion_only", "fully_sup"]),
              default="joint", show_default=True)
@click.option("--config", "config_path", type=click.Path(), help="training config YAML")
@click.option("--out", required=True, type=click.Path())
@click.option("--resume", "resume_path", type=click.Path())
@cli_errors
def train_cmd(control_path, lesion_path, pseudo_path, fully_path, da, lambda_da,
              task, config_path, out, resume_path):
    """Train one model arm from dataset manifests."""
    from .training import TrainConfig, config_hash, train

    overrides = {}
    if config_path:
        p = Path(config_path)
        if not p.exists():
            raise ConfigError(f"config not found: {p}")
        loaded = yaml.safe_load(p.read_text()) or {}
        overrides.update(loaded.get("train", loaded))
        net_kw = loaded.get("network", {})
    else:
        net_kw = {}
    overrides["task"] = task
    overrides["da_strategy"] = {"pseudo": "pseudo_healthy"}.get(da, da)
    if lambda_da is not None:
        overrides["lambda_da"] = lambda_da
    cfg = TrainConfig.from_dict(overrides)

    control = DatasetManifest.load(control_path) if control_path else None
    lesion = DatasetManifest.load(lesion_path) if lesion_path else None
    pseudo = DatasetManifest.load(pseudo_path) if pseudo_path else None
    fully = DatasetManifest.load(fully_path) if fully_path else None
    tax = next(ds for ds in (lesion, control, fully) if ds is not None).taxonomy
    net_kw.setdefault("n_classes", tax.n_channels)
    net_kw.setdefault("n_modalities", len((lesion or control).modalities))
    net_cfg = NetworkConfig(**net_kw)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "train": cfg.to_dict(),
        "network": net_cfg.to_dict(),
        "config_hash": config_hash(cfg.to_dict(), net_cfg.to_dict()),
    }
    (out / "config_resolved.yaml").write_text(yaml.safe_dump(resolved))

    run = train(control, lesion, cfg, net_cfg, out, pseudo_ds=pseudo,
                fully_ds=fully, resume_from=resume_path)
    click.echo(f"checkpoint: {run.checkpoint}")
    click.echo(f"log: {run.log_path}")


@main.command("eval")
@click.option("--checkpoint", "ckpt", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--symmetrized", is_flag=True, help="mirrored pseudo-healthy tissue eval")
@click.option("--split", type=click.Choice(["all", "test"]), default="all",
              show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="split seed (must match training for --split test)")
@click.option("--tile", type=int, default=None,
              help="sliding-window size (use the training patch size)")
@cli_errors
def eval_cmd(ckpt, manifest_path, out, symmetrized, split, seed, tile):
    """Evaluate a checkpoint against oracle labels."""
    from .eval import JointModel, evaluate, evaluate_symmetrized
    from .training import TrainConfig, split_dataset

    net, tax, payload = load_checkpoint(ckpt)
    manifest = DatasetManifest.load(manifest_path)
    indices = None
    if split == "test":
        indices = split_dataset(len(manifest), TrainConfig().split, seed).test
    chash = payload.get("extra", {}).get("config_hash", "")
    if symmetrized:
        report = evaluate_symmetrized(net, manifest, indices, chash)
    else:
        report = evaluate(
            JointModel(net), manifest, indices, chash,
            tile=None if tile is None else (tile,) * 3,
        )
    report.save(out)
    click.echo(json.dumps(
        {c: round(s.dice_mean, 4) for c, s in sorted(report.classes.items())}, indent=2
    ))


@main.command("pseudo-healthy")
@click.option("--in", "manifest_path", required=True, type=click.Path())
@click.option("--method", type=click.Choice(["mirror", "fill"]), default="mirror",
              show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--max-n", type=int, default=None)
@click.option("--train-split-only", is_flag=True,
              help="restrict to the deterministic training split")
@click.option("--seed", default=0, show_default=True)
@cli_errors
def pseudo_healthy_cmd(manifest_path, method, out, max_n, train_split_only, seed):
    """Synthesise an annotated pseudo-control dataset from lesion scans."""
    from .pseudohealthy import make_pseudo_control
    from .training import TrainConfig, split_dataset

    from .training import config_hash

    manifest = DatasetManifest.load(manifest_path)
    indices = None
    if train_split_only:
        indices = split_dataset(len(manifest), TrainConfig().split, seed).train
    pseudo = make_pseudo_control(manifest, method, out, max_n=max_n,
                                 indices=indices, seed=seed)
    snapshot = {
        "source_manifest": str(manifest_path), "method": method,
        "max_n": max_n, "train_split_only": train_split_only, "seed": seed,
    }
    snapshot["config_hash"] = config_hash(snapshot)
    (Path(out) / "pseudo_config.yaml").write_text(yaml.safe_dump(snapshot))
    click.echo(f"wrote {len(pseudo)} pseudo-control samples to {out}")


@main.group()
def rate():
    """Blinded anatomy rating service."""


@rate.command("serve")
@click.option("--db", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="directory with the rating UI bundle")
@cli_errors
def rate_serve(db, host, port, static_dir):
    """Run the rating HTTP service."""
    import uvicorn

    from .rating import create_app

    app = create_app(db, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


@rate.command("report")
@click.option("--db", required=True, type=click.Path())
@click.option("--sessions", required=True, help="comma-separated session ids")
@click.option("--out", type=click.Path(), default=None)
@cli_errors
def rate_report(db, sessions, out):
    """Aggregate completed sessions into the accuracy report."""
    from .rating import RatingStore, aggregate

    store = RatingStore(db)
    report = aggregate(store, [s for s in sessions.split(",") if s])
    text = json.dumps(report, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    click.echo(text)


@rate.command("export")
@click.option("--db", required=True, type=click.Path())
@click.option("--sessions", required=True)
@click.option("--out", required=True, type=click.Path())
@cli_errors
def rate_export(db, sessions, out):
    """Export scores as CSV."""
    from .rating import RatingStore, export_csv_rows

    store = RatingStore(db)
    rows = export_csv_rows(store, [s for s in sessions.split(",") if s])
    with Path(out).open("w", newline="") as f:
        csv.writer(f).writerows(rows)
    click.echo(f"wrote {len(rows) - 1} score rows to {out}")


@main.command("check")
@click.option("--suite", "suites", multiple=True,
              type=click.Choice(["metric_axioms", "coincidence", "decomposition",
                                 "bound", "gradients", "oracle"]))
@click.option("--out", type=click.Path(), default=None)
@cli_errors
def check_cmd(suites, out):
    """Run the property-check suites."""
    report = run_checks(list(suites) or None, out_dir=out)
    for r in report["results"]:
        click.echo(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['name']}: {r['detail']}")
    if not report["passed"]:
        failing = [r for r in report["results"] if not r["passed"]]
        raise PropertyCheckFailure(
            "; ".join(f"{r['name']}: {r['detail']}" for r in failing)
        )


@main.command("plan")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--parallel-arms", default=1, show_default=True)
@cli_errors
def plan_cmd(config_path, out, parallel_arms):
    """Run a multi-arm experiment plan from a YAML config."""
    from .plan import ExperimentPlan, run_plan

    plan = ExperimentPlan.from_yaml(config_path)
    result = run_plan(plan, out, parallel_arms=parallel_arms)
    click.echo(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
