"""Feature-space domain discriminator.

Consumes the contracting-path feature stack: every level is average-
pooled to the coarsest level's spatial size, channels are concatenated
and a 3-level strided convolutional classifier predicts the probability
that the features come from the lesion domain.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ValidationError
from .network import NetworkConfig


class Discriminator(nn.Module):
    def __init__(self, cfg: NetworkConfig, width: int = 32):
        super().__init__()
        self.cfg = cfg
        in_ch = sum(cfg.base_channels * 2**l for l in range(cfg.depth))
        self.in_channels = in_ch
        self.convs = nn.Sequential(
            nn.Conv3d(in_ch, width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv3d(width, 2 * width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv3d(2 * width, 2 * width, 3, stride=1, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.fc = nn.Linear(2 * width, 1)

    def pooled_features(self, feats: list[torch.Tensor]) -> torch.Tensor:
        if len(feats) != self.cfg.depth:
            raise ValidationError(
                f"expected {self.cfg.depth} feature levels, got {len(feats)}"
            )
        target = feats[-1].shape[2:]
        pooled = [F.adaptive_avg_pool3d(f, target) for f in feats]
        stacked = torch.cat(pooled, dim=1)
        if stacked.shape[1] != self.in_channels:
            raise ValidationError(
                f"expected {self.in_channels} feature channels, got {stacked.shape[1]}"
            )
        return stacked

    def forward(self, feats: list[torch.Tensor]) -> torch.Tensor:
        """Probability in (0, 1) that the features are lesion-domain."""
        h = self.convs(self.pooled_features(feats))
        h = h.mean(dim=(2, 3, 4))
        return torch.sigmoid(self.fc(h)).squeeze(-1)


def build_discriminator(cfg: NetworkConfig, width: int = 32) -> Discriminator:
    return Discriminator(cfg, width)


def disc_forward(d: Discriminator, feats: list[torch.Tensor]) -> torch.Tensor:
    return d(feats)
