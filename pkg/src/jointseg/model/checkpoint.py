"""Checkpoint archives: weights + network config + taxonomy, versioned."""

from __future__ import annotations

from pathlib import Path

import torch

from ..core.types import ClassTaxonomy
from ..errors import FormatError
from .discriminator import Discriminator, build_discriminator
from .network import HeteroModalNet, NetworkConfig, build_network

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path,
    net: HeteroModalNet,
    taxonomy: ClassTaxonomy,
    disc: Discriminator | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "network_config": net.cfg.to_dict(),
        "taxonomy": taxonomy.to_dict(),
        "state_dict": net.state_dict(),
        "extra": extra or {},
    }
    if disc is not None:
        payload["discriminator_state"] = disc.state_dict()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[HeteroModalNet, ClassTaxonomy, dict]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if "version" not in payload:
        raise FormatError(f"{path}: missing checkpoint version field")
    net = build_network(NetworkConfig.from_dict(payload["network_config"]))
    net.load_state_dict(payload["state_dict"])
    net.eval()
    tax = ClassTaxonomy.from_dict(payload["taxonomy"])
    return net, tax, payload


def load_discriminator(payload: dict) -> Discriminator | None:
    if "discriminator_state" not in payload:
        return None
    disc = build_discriminator(NetworkConfig.from_dict(payload["network_config"]))
    disc.load_state_dict(payload["discriminator_state"])
    return disc
