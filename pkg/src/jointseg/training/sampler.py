"""Paired random sampling from the task-specific datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .config import (
    DA_AUGMENT,
    DA_PSEUDO,
    FULLY_SUP,
    JOINT,
    LESION_ONLY,
    TISSUE_ONLY,
    TrainConfig,
)

CONTROL_SLOT = "control"
PSEUDO_SLOT = "pseudo"
TWIN_SLOT = "twin"


@dataclass
class BatchSpec:
    lesion: list[int] = field(default_factory=list)
    control: list[tuple[str, int]] = field(default_factory=list)
    fully: list[int] = field(default_factory=list)


class _Cycler:
    """Endless reshuffled pass over dataset indices."""

    def __init__(self, n: int):
        self.n = n
        self.queue: list[int] = []

    def draw(self, rng: np.random.Generator, k: int) -> list[int]:
        out = []
        for _ in range(k):
            if not self.queue:
                self.queue = rng.permutation(self.n).tolist()
            out.append(self.queue.pop(0))
        return out

    def state(self) -> list[int]:
        return list(self.queue)

    def restore(self, queue: list[int]) -> None:
        self.queue = list(queue)


class PairSampler:
    """Yields per-epoch batch specs with random control/lesion pairing.

    Epoch length is ``ceil(max dataset size / per-set batch size)``; the
    smaller set cycles with reshuffling. The augment strategy replaces
    the second control slot with an aligned domain-augmented twin of the
    first; the pseudo-healthy strategy alternates control and
    pseudo-control draws so the two tissue-risk estimates average 1:1.
    """

    def __init__(self, cfg: TrainConfig, n_control: int, n_lesion: int,
                 n_pseudo: int = 0, n_fully: int = 0,
                 effective_da: str | None = None):
        self.cfg = cfg
        self.da = cfg.da_strategy if effective_da is None else effective_da
        self.task = cfg.task
        if self.task in (JOINT,):
            if n_control < 1 or n_lesion < 1:
                raise ConfigError("joint training needs nonempty control and lesion sets")
        if self.task == TISSUE_ONLY and n_control < 1:
            raise ConfigError("tissue_only training needs a nonempty control set")
        if self.task == LESION_ONLY and n_lesion < 1:
            raise ConfigError("lesion_only training needs a nonempty lesion set")
        if self.task == FULLY_SUP and n_fully < 1:
            raise ConfigError("fully_sup training needs a fully annotated set")
        if self.da == DA_PSEUDO and n_pseudo < 1:
            raise ConfigError("pseudo_healthy strategy needs a pseudo-control set")
        self.n_control, self.n_lesion = n_control, n_lesion
        self.n_pseudo, self.n_fully = n_pseudo, n_fully
        self.control = _Cycler(n_control) if n_control else None
        self.lesion = _Cycler(n_lesion) if n_lesion else None
        self.pseudo = _Cycler(n_pseudo) if n_pseudo else None
        self.fully = _Cycler(n_fully) if n_fully else None

    @property
    def epoch_length(self) -> int:
        per = self.cfg.batch_lesion
        if self.task == TISSUE_ONLY:
            return math.ceil(self.n_control / self.cfg.batch_control)
        if self.task == LESION_ONLY:
            return math.ceil(self.n_lesion / per)
        if self.task == FULLY_SUP:
            return math.ceil(self.n_fully / per)
        return math.ceil(max(self.n_control, self.n_lesion) / per)

    def _control_slots(self, rng) -> list[tuple[str, int]]:
        k = self.cfg.batch_control
        if self.da == DA_AUGMENT:
            # one drawn sample plus its augmented twin per pair of slots
            idx = self.control.draw(rng, k // 2 if k > 1 else 1)
            return [(TWIN_SLOT, i) for i in idx]
        if self.da == DA_PSEUDO:
            half = k // 2
            out = [(CONTROL_SLOT, i) for i in self.control.draw(rng, k - half)]
            out += [(PSEUDO_SLOT, i) for i in self.pseudo.draw(rng, half)]
            return out
        return [(CONTROL_SLOT, i) for i in self.control.draw(rng, k)]

    def epoch_specs(self, rng: np.random.Generator) -> list[BatchSpec]:
        specs = []
        for _ in range(self.epoch_length):
            spec = BatchSpec()
            if self.task == FULLY_SUP:
                spec.fully = self.fully.draw(rng, self.cfg.batch_lesion)
            elif self.task == TISSUE_ONLY:
                spec.control = [(CONTROL_SLOT, i)
                                for i in self.control.draw(rng, self.cfg.batch_control)]
            elif self.task == LESION_ONLY:
                spec.lesion = self.lesion.draw(rng, self.cfg.batch_lesion)
            else:
                spec.lesion = self.lesion.draw(rng, self.cfg.batch_lesion)
                spec.control = self._control_slots(rng)
            specs.append(spec)
        return specs

    def state(self) -> dict:
        return {
            name: c.state()
            for name, c in (("control", self.control), ("lesion", self.lesion),
                            ("pseudo", self.pseudo), ("fully", self.fully))
            if c is not None
        }

    def restore(self, state: dict) -> None:
        for name, queue in state.items():
            getattr(self, name).restore(queue)
