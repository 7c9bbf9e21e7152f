"""Hetero-modal 3D U-Net with two input branches.

Branch A consumes the shared (T1-like) modality alone; branch B consumes
the full modality stack. In full mode their first-level features are
averaged elementwise, after which a single shared encoder-decoder
continues. The softmax head guarantees per-voxel simplex outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core.types import ClassTaxonomy, MultiModalSample, ProbabilityMap
from ..errors import ValidationError

SHARED_ONLY = "shared_only"
FULL = "full"


@dataclass(frozen=True)
class NetworkConfig:
    n_modalities: int = 2
    n_classes: int = 8  # including background
    base_channels: int = 8
    depth: int = 3
    norm: str = "instance"

    def __post_init__(self):
        if self.depth < 2:
            raise ValidationError("depth must be >= 2")
        if self.base_channels < 4:
            raise ValidationError("base_channels must be >= 4")
        if self.norm != "instance":
            raise ValidationError("only instance normalisation is supported")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


def conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(in_ch, out_ch, 3, padding=1),
        nn.InstanceNorm3d(out_ch, affine=True, track_running_stats=False),
        nn.LeakyReLU(0.01, inplace=True),
        nn.Conv3d(out_ch, out_ch, 3, padding=1),
        nn.InstanceNorm3d(out_ch, affine=True, track_running_stats=False),
        nn.LeakyReLU(0.01, inplace=True),
    )


class HeteroModalNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        ch = [cfg.base_channels * 2**l for l in range(cfg.depth)]
        self.branch_shared = conv_block(1, ch[0])
        self.branch_full = conv_block(cfg.n_modalities, ch[0])
        self.pool = nn.MaxPool3d(2)
        self.encoders = nn.ModuleList(
            conv_block(ch[l - 1], ch[l]) for l in range(1, cfg.depth)
        )
        self.decoders = nn.ModuleList(
            conv_block(ch[l] + ch[l - 1], ch[l - 1])
            for l in range(cfg.depth - 1, 0, -1)
        )
        self.head = nn.Conv3d(ch[0], cfg.n_classes, 1)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                nn.init.kaiming_normal_(m.weight, a=0.01, nonlinearity="leaky_relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.InstanceNorm3d) and m.affine:
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def first_level_features(self, x_shared: torch.Tensor,
                             x_full: torch.Tensor | None, mode: str) -> torch.Tensor:
        f = self.branch_shared(x_shared)
        if mode == FULL:
            if x_full is None:
                raise ValidationError("full mode requires the full modality stack")
            f = 0.5 * (f + self.branch_full(x_full))
        elif mode != SHARED_ONLY:
            raise ValidationError(f"unknown forward mode {mode!r}")
        return f

    def forward(
        self,
        x_shared: torch.Tensor,
        x_full: torch.Tensor | None = None,
        mode: str = SHARED_ONLY,
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Return (per-voxel class probabilities, contracting-path features)."""
        for n, s in zip(x_shared.shape[2:], (2 ** (self.cfg.depth - 1),) * 3):
            if n % s:
                raise ValidationError(
                    f"spatial size {tuple(x_shared.shape[2:])} must be divisible by {s}"
                )
        feats = [self.first_level_features(x_shared, x_full, mode)]
        h = feats[0]
        for enc in self.encoders:
            h = enc(self.pool(h))
            feats.append(h)
        h = feats[-1]
        for i, dec in enumerate(self.decoders):
            skip = feats[len(feats) - 2 - i]
            h = F.interpolate(h, scale_factor=2, mode="trilinear", align_corners=False)
            h = dec(torch.cat([h, skip], dim=1))
        probs = torch.softmax(self.head(h), dim=1)
        return probs, feats


def build_network(cfg: NetworkConfig) -> HeteroModalNet:
    return HeteroModalNet(cfg)


def _pad_to_multiple(t: torch.Tensor, m: int) -> tuple[torch.Tensor, tuple]:
    shape = t.shape[2:]
    pads = []
    for n in reversed(shape):
        extra = (-n) % m
        pads.extend([extra // 2, extra - extra // 2])
    if any(pads):
        t = F.pad(t, pads, mode="replicate")
    return t, tuple(pads)


def _crop_back(t: torch.Tensor, pads: tuple, shape) -> torch.Tensor:
    if not any(pads):
        return t
    sx, sy, sz = shape
    px = pads[4]
    py = pads[2]
    pz = pads[0]
    return t[..., px : px + sx, py : py + sy, pz : pz + sz]


def sample_tensors(sample: MultiModalSample, mode: str) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Build (1, C, X, Y, Z) input tensors, touching only required slots."""
    t1 = torch.as_tensor(np.array(sample.modalities[0].data), dtype=torch.float32)
    x_shared = t1[None, None]
    if mode == SHARED_ONLY:
        return x_shared, None
    if mode != FULL:
        raise ValidationError(f"unknown forward mode {mode!r}")
    if not all(sample.presence):
        raise ValidationError("full mode requires every modality to be present")
    stack = torch.stack(
        [
            torch.as_tensor(np.array(m.data), dtype=torch.float32)
            for m in sample.modalities
        ]
    )
    return x_shared, stack[None]


def forward(
    net: HeteroModalNet, sample: MultiModalSample, mode: str, taxonomy: ClassTaxonomy
) -> tuple[ProbabilityMap, list[np.ndarray]]:
    """Library-facing forward over a sample; pads to the valid grid size."""
    x_shared, x_full = sample_tensors(sample, mode)
    m = 2 ** (net.cfg.depth - 1)
    x_shared, pads = _pad_to_multiple(x_shared, m)
    if x_full is not None:
        x_full, _ = _pad_to_multiple(x_full, m)
    net.eval()
    with torch.no_grad():
        probs, feats = net(x_shared, x_full, mode)
    probs = _crop_back(probs, pads, sample.shape)
    arr = probs[0].double().numpy()
    arr = arr / arr.sum(axis=0, keepdims=True)
    return ProbabilityMap(arr, taxonomy), [f[0].numpy() for f in feats]


def copy_shared_into_full_branch(net: HeteroModalNet) -> None:
    """Make branch-B features identical to branch-A features.

    The T1 input channel of branch B receives branch A's first-conv
    weights, every other input channel is zeroed, and the remaining
    branch parameters are copied one-to-one.
    """
    with torch.no_grad():
        src = list(net.branch_shared.parameters())
        dst = list(net.branch_full.parameters())
        first_w_src, first_w_dst = src[0], dst[0]
        first_w_dst.zero_()
        first_w_dst[:, :1] = first_w_src
        for s, d in zip(src[1:], dst[1:]):
            d.copy_(s)
