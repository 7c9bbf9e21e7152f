"""JSON dataset manifests and sample loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ConfigError, ValidationError
from . import ops
from .types import (
    CONTROL,
    FULLY_ANNOTATED,
    LESION,
    MANIFEST_ROLES,
    PSEUDO_CONTROL,
    ClassTaxonomy,
    MultiModalSample,
)


@dataclass
class SampleRecord:
    id: str
    volumes: dict[str, str]
    tissue_labels: Optional[str] = None
    lesion_labels: Optional[str] = None
    # Desk-scale ground truth side channel, never fed to training losses.
    oracle_tissue_labels: Optional[str] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"id": self.id, "volumes": dict(self.volumes)}
        for key in ("tissue_labels", "lesion_labels", "oracle_tissue_labels"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        if self.metadata:
            d["metadata"] = self.metadata
        return d


@dataclass
class DatasetManifest:
    """A named list of on-disk samples with a role and a taxonomy."""

    name: str
    role: str
    taxonomy: ClassTaxonomy
    modalities: tuple[str, ...]
    samples: list[SampleRecord] = field(default_factory=list)
    base_dir: Optional[Path] = None

    def __post_init__(self):
        if self.role not in MANIFEST_ROLES:
            raise ValidationError(f"unknown manifest role {self.role!r}")
        if not self.modalities or len(set(self.modalities)) != len(self.modalities):
            raise ValidationError("modalities must be a non-empty unique list")
        self.modalities = tuple(self.modalities)
        shared = self.modalities[0]
        for rec in self.samples:
            if shared not in rec.volumes:
                raise ValidationError(f"sample {rec.id}: shared modality missing")
            if self.role in (CONTROL, PSEUDO_CONTROL):
                if rec.tissue_labels is None:
                    raise ValidationError(f"{self.role} sample {rec.id} needs tissue labels")
                if set(rec.volumes) != {shared}:
                    raise ValidationError(
                        f"{self.role} sample {rec.id} must carry only the shared modality"
                    )
            elif self.role == LESION:
                if rec.lesion_labels is None:
                    raise ValidationError(f"lesion sample {rec.id} needs lesion labels")
                if set(rec.volumes) != set(self.modalities):
                    raise ValidationError(
                        f"lesion sample {rec.id} must carry the full modality set"
                    )
            elif self.role == FULLY_ANNOTATED:
                if rec.tissue_labels is None or rec.lesion_labels is None:
                    raise ValidationError(
                        f"fully_annotated sample {rec.id} needs both label maps"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    def _resolve(self, rel: str) -> Path:
        p = Path(rel)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    def load_sample(self, index: int) -> MultiModalSample:
        rec = self.samples[index]
        mods = []
        for name in self.modalities:
            if name in rec.volumes:
                mods.append(ops.load_volume(self._resolve(rec.volumes[name])))
            else:
                mods.append(None)
        tissue = (
            ops.load_labels(self._resolve(rec.tissue_labels), self.taxonomy)
            if rec.tissue_labels
            else None
        )
        lesion = (
            ops.load_labels(self._resolve(rec.lesion_labels), self.taxonomy)
            if rec.lesion_labels
            else None
        )
        tag = CONTROL if self.role in (CONTROL, FULLY_ANNOTATED) else self.role
        if self.role == LESION:
            tag = LESION
        return MultiModalSample(
            modalities=tuple(mods),
            tissue_labels=tissue,
            lesion_labels=lesion,
            domain_tag=PSEUDO_CONTROL if self.role == PSEUDO_CONTROL else tag,
            sample_id=rec.id,
            metadata=dict(rec.metadata),
        )

    def load_oracle_tissue(self, index: int):
        rec = self.samples[index]
        if rec.oracle_tissue_labels is None:
            return None
        return ops.load_labels(self._resolve(rec.oracle_tissue_labels), self.taxonomy)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "role": self.role,
            "taxonomy": self.taxonomy.to_dict(),
            "modalities": list(self.modalities),
            "samples": [rec.to_dict() for rec in self.samples],
        }

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"manifest not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid manifest JSON in {path}: {exc}") from exc
        samples = [
            SampleRecord(
                id=s["id"],
                volumes=dict(s["volumes"]),
                tissue_labels=s.get("tissue_labels"),
                lesion_labels=s.get("lesion_labels"),
                oracle_tissue_labels=s.get("oracle_tissue_labels"),
                metadata=s.get("metadata", {}),
            )
            for s in d["samples"]
        ]
        return cls(
            name=d["name"],
            role=d["role"],
            taxonomy=ClassTaxonomy.from_dict(d["taxonomy"]),
            modalities=tuple(d["modalities"]),
            samples=samples,
            base_dir=path.parent,
        )
