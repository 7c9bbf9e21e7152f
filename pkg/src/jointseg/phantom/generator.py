"""Procedural 3D brain phantoms with paired multimodal images and labels.

Anatomy is built mirror-symmetric about a mid-sagittal plane in a
canonical frame, then the whole sample is rotated/offset by a small
known amount; the resulting plane parameters are recorded as sample
metadata so symmetry-plane estimation can be validated exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import affine_transform, distance_transform_edt, gaussian_filter

from ..core.manifest import DatasetManifest, SampleRecord
from ..core.types import (
    CONTROL,
    FULLY_ANNOTATED,
    LESION,
    ClassTaxonomy,
    LabelMap,
    MultiModalSample,
    Volume,
)
from ..core import ops
from ..errors import GenerationError, ValidationError
from .shifts import ShiftConfig, apply_shift

MODALITIES = ("t1", "flair")

GREY, WHITE, NUCLEI, VENTRICLES, CEREBELLUM, BRAINSTEM = 1, 2, 3, 4, 5, 6
TISSUE_NAMES = {
    GREY: "grey",
    WHITE: "white",
    NUCLEI: "nuclei",
    VENTRICLES: "ventricles",
    CEREBELLUM: "cerebellum",
    BRAINSTEM: "brainstem",
}


def default_intensity_table(n_tissue: int = 6, n_lesion: int = 1) -> dict:
    """Synthetic per-(modality, class) intensity means and stds."""
    t1 = {0: 0.0, GREY: 58.0, WHITE: 100.0, NUCLEI: 72.0, VENTRICLES: 20.0,
          CEREBELLUM: 64.0, BRAINSTEM: 86.0}
    flair = {0: 0.0, GREY: 76.0, WHITE: 58.0, NUCLEI: 70.0, VENTRICLES: 14.0,
             CEREBELLUM: 82.0, BRAINSTEM: 64.0}
    lesion_t1 = [78.0, 46.0, 38.0]
    lesion_flair = [140.0, 128.0, 116.0]
    table = {}
    for cls in list(range(n_tissue + 1)):
        table[("t1", cls)] = (t1[cls], 2.0)
        table[("flair", cls)] = (flair[cls], 2.0)
    for i in range(n_lesion):
        cls = n_tissue + 1 + i
        table[("t1", cls)] = (lesion_t1[i], 2.0)
        table[("flair", cls)] = (lesion_flair[i], 2.0)
    return table


@dataclass(frozen=True)
class PhantomConfig:
    shape: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_tissue_classes: int = 6
    n_lesion_classes: int = 1
    lesion_count_range: tuple[int, int] = (1, 3)
    lesion_radius_range: tuple[float, float] = (2.5, 4.5)
    intensity_table: dict = field(default_factory=dict)
    noise_std: float = 3.0
    unilateral: bool = False
    max_plane_tilt_deg: float = 5.0
    max_plane_offset_vox: float = 2.0
    hemisphere_asymmetry: float = 0.02
    partial_volume_sigma: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not (2 <= self.n_tissue_classes <= 6):
            raise ValidationError("n_tissue_classes must be in 2..6")
        if not (1 <= self.n_lesion_classes <= 3):
            raise ValidationError("n_lesion_classes must be in 1..3")
        if self.lesion_radius_range[0] < 1.0:
            raise ValidationError("lesion radii must be >= 1 voxel")
        if len(set(self.spacing)) != 1:
            raise ValidationError("phantom spacing must be isotropic")
        table = dict(self.intensity_table) or default_intensity_table(
            self.n_tissue_classes, self.n_lesion_classes
        )
        for modality in MODALITIES:
            means = sorted(m for (mod, _), (m, _) in table.items() if mod == modality)
            gaps = np.diff(means)
            if len(gaps) and gaps.min() < 2 * self.noise_std:
                raise ValidationError(
                    f"{modality} class means closer than 2*noise_std: min gap {gaps.min()}"
                )
        object.__setattr__(self, "intensity_table", table)

    @property
    def taxonomy(self) -> ClassTaxonomy:
        return ClassTaxonomy(
            tissue_classes=tuple(range(1, self.n_tissue_classes + 1)),
            lesion_classes=tuple(
                range(self.n_tissue_classes + 1,
                      self.n_tissue_classes + 1 + self.n_lesion_classes)
            ),
        )


def _coords(shape):
    axes = [np.linspace(-1.0, 1.0, n) for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def _ellipsoid(coords, center, radii) -> np.ndarray:
    x, y, z = coords
    return (
        ((x - center[0]) / radii[0]) ** 2
        + ((y - center[1]) / radii[1]) ** 2
        + ((z - center[2]) / radii[2]) ** 2
    ) <= 1.0


def _tissue_labels(cfg: PhantomConfig, rng: np.random.Generator) -> np.ndarray:
    coords = _coords(cfg.shape)
    jit = lambda: 1.0 + rng.uniform(-0.04, 0.04)  # noqa: E731

    labels = np.zeros(cfg.shape, dtype=np.int16)
    brain_radii = (0.74 * jit(), 0.86 * jit(), 0.78 * jit())
    brain = _ellipsoid(coords, (0.0, 0.0, 0.02), brain_radii)
    labels[brain] = GREY
    white = _ellipsoid(coords, (0.0, 0.0, 0.02), tuple(0.78 * r for r in brain_radii))
    labels[white] = WHITE

    structures = []
    if cfg.n_tissue_classes >= NUCLEI:
        r = (0.16 * jit(), 0.19 * jit(), 0.16 * jit())
        structures.append((NUCLEI, [((0.32, 0.04, 0.0), r), ((-0.32, 0.04, 0.0), r)]))
    if cfg.n_tissue_classes >= VENTRICLES:
        r = (0.10 * jit(), 0.30 * jit(), 0.13 * jit())
        structures.append(
            (VENTRICLES, [((0.13, -0.02, 0.10), r), ((-0.13, -0.02, 0.10), r)])
        )
    if cfg.n_tissue_classes >= CEREBELLUM:
        structures.append(
            (CEREBELLUM, [((0.0, -0.54, -0.42), (0.48 * jit(), 0.28 * jit(), 0.26 * jit()))])
        )
    if cfg.n_tissue_classes >= BRAINSTEM:
        structures.append(
            (BRAINSTEM, [((0.0, -0.10, -0.52), (0.15 * jit(), 0.17 * jit(), 0.40 * jit()))])
        )
    for cls, parts in structures:
        region = np.zeros(cfg.shape, dtype=bool)
        for center, radii in parts:
            region |= _ellipsoid(coords, center, radii)
        labels[region & brain] = cls
    return labels


def _sphere_offsets(radius: float) -> np.ndarray:
    r = int(np.ceil(radius))
    g = np.mgrid[-r : r + 1, -r : r + 1, -r : r + 1]
    keep = (g**2).sum(axis=0) <= radius**2
    return np.argwhere(keep) - r


def _paint_blob(mask: np.ndarray, center: np.ndarray, radius: float, allowed: np.ndarray,
                rng: np.random.Generator) -> None:
    """Irregular blob: a sphere plus two smaller bumps, clipped to `allowed`."""
    parts = [(center, radius)]
    for _ in range(2):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        parts.append((center + direction * 0.6 * radius, 0.5 * radius))
    for c, r in parts:
        offs = _sphere_offsets(r) + np.round(c).astype(int)
        valid = (offs >= 0).all(axis=1) & (offs < np.asarray(mask.shape)).all(axis=1)
        offs = offs[valid]
        sel = allowed[offs[:, 0], offs[:, 1], offs[:, 2]]
        offs = offs[sel]
        mask[offs[:, 0], offs[:, 1], offs[:, 2]] = True


def _place_lesions(cfg: PhantomConfig, tissue: np.ndarray, rng: np.random.Generator,
                   side: int) -> np.ndarray:
    white = tissue == WHITE
    if not white.any():
        raise GenerationError("no white matter to place lesions in")
    dist = distance_transform_edt(white)
    lesions = np.zeros_like(tissue)
    n = int(rng.integers(cfg.lesion_count_range[0], cfg.lesion_count_range[1] + 1))
    cx = (cfg.shape[0] - 1) / 2.0
    centers: list[tuple[np.ndarray, float]] = []
    floor = max(1.0, 0.5 * cfg.lesion_radius_range[0])
    for _ in range(n):
        radius = float(rng.uniform(*cfg.lesion_radius_range))
        cand = np.empty((0, 3))
        while radius >= floor:
            eligible = dist > radius + 1.0
            if cfg.unilateral:
                xs = np.arange(cfg.shape[0], dtype=float) - cx
                side_ok = (xs * side) > radius + 1.0
                eligible &= side_ok[:, None, None]
            cand = np.argwhere(eligible)
            if cand.size:
                break
            radius *= 0.8  # white matter too thin for the drawn radius
        if cand.size == 0:
            continue
        placed = None
        for _try in range(50):
            c = cand[rng.integers(len(cand))].astype(float)
            if all(np.linalg.norm(c - pc) >= radius + pr + 2.0 for pc, pr in centers):
                placed = c
                break
        if placed is None:
            continue
        centers.append((placed, radius))
        cls = cfg.n_tissue_classes + 1 + (len(centers) - 1) % cfg.n_lesion_classes
        blob = np.zeros(cfg.shape, dtype=bool)
        _paint_blob(blob, placed, radius, white, rng)
        lesions[blob] = cls
    if not centers:
        raise GenerationError("could not place any lesion blob")
    return lesions


def _synthesize_intensity(cfg: PhantomConfig, merged: np.ndarray, modality: str,
                          rng: np.random.Generator) -> np.ndarray:
    img = np.zeros(cfg.shape, dtype=np.float64)
    for cls in np.unique(merged):
        mean, std = cfg.intensity_table[(modality, int(cls))]
        sel = merged == cls
        img[sel] = mean + std * rng.normal(size=int(sel.sum()))
    # lateralised intensity fields: antisymmetric about the canonical plane
    x = _coords(cfg.shape)[0]
    img *= 1.0 + cfg.hemisphere_asymmetry * x
    img = gaussian_filter(img, cfg.partial_volume_sigma, mode="nearest")
    img += cfg.noise_std * rng.normal(size=cfg.shape)
    return img


def _rotation(tilt_z_deg: float, tilt_y_deg: float) -> np.ndarray:
    az, ay = np.deg2rad(tilt_z_deg), np.deg2rad(tilt_y_deg)
    rz = np.array(
        [[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]]
    )
    ry = np.array(
        [[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]]
    )
    return rz @ ry


def _apply_pose(data: np.ndarray, rot: np.ndarray, offset_vox: float, order: int) -> np.ndarray:
    center = (np.asarray(data.shape, dtype=float) - 1) / 2.0
    rinv = rot.T
    shift = center - rinv @ center - offset_vox * np.array([1.0, 0.0, 0.0])
    return affine_transform(data, rinv, offset=shift, order=order, mode="constant", cval=0.0)


def generate_phantom(cfg: PhantomConfig, with_lesions: bool) -> MultiModalSample:
    """Generate one multimodal phantom; deterministic per (cfg, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    tissue = _tissue_labels(cfg, rng)
    side = int(rng.choice((-1, 1)))
    if with_lesions:
        lesions = _place_lesions(cfg, tissue, rng, side)
    else:
        lesions = np.zeros_like(tissue)
    merged = np.where(lesions != 0, lesions, tissue)

    images = {m: _synthesize_intensity(cfg, merged, m, rng) for m in MODALITIES}

    tilt_z = float(rng.uniform(-cfg.max_plane_tilt_deg, cfg.max_plane_tilt_deg))
    tilt_y = float(rng.uniform(-cfg.max_plane_tilt_deg, cfg.max_plane_tilt_deg))
    offset = float(rng.uniform(-cfg.max_plane_offset_vox, cfg.max_plane_offset_vox))
    rot = _rotation(tilt_z, tilt_y)

    tax = cfg.taxonomy
    vols = {
        m: Volume(_apply_pose(img, rot, offset, order=1).astype(np.float32), cfg.spacing)
        for m, img in images.items()
    }
    tissue_map = LabelMap(_apply_pose(tissue, rot, offset, order=0), tax)
    lesion_map = LabelMap(_apply_pose(lesions, rot, offset, order=0), tax)

    normal = rot @ np.array([1.0, 0.0, 0.0])
    meta = {
        "plane": {
            "normal": [float(v) for v in normal],
            "offset_mm": offset * cfg.spacing[0],
        },
        "tilt_deg": [tilt_z, tilt_y],
        "lesion_side": ("positive" if side > 0 else "negative") if with_lesions else None,
        "seed": cfg.seed,
    }
    return MultiModalSample(
        modalities=(vols["t1"], vols["flair"]),
        tissue_labels=tissue_map,
        lesion_labels=lesion_map if with_lesions else None,
        domain_tag=LESION if with_lesions else CONTROL,
        metadata=meta,
    )


def _sample_seed(base: int, role: str, index: int) -> int:
    codes = {"control": 0, "lesion": 1, "heldout": 2, "fully": 3}
    ss = np.random.SeedSequence([base, codes[role], index])
    return int(ss.generate_state(1)[0])


def make_task_specific_datasets(
    n_control: int,
    n_lesion: int,
    cfg: PhantomConfig,
    out_dir,
    shift: ShiftConfig | None = None,
    n_heldout: int = 0,
    n_fully: int = 0,
    unilateral_lesions: bool | None = None,
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest | None]:
    """Write control/lesion (and optional heldout/fully) phantom datasets.

    Control samples keep only the shared modality plus tissue labels.
    Lesion samples keep the full modality set and lesion labels; the
    configured shift (if any) is applied to their shared modality. Full
    phantom tissue maps ride along as an oracle side channel.
    """
    if n_control < 1 or n_lesion < 1:
        raise ValidationError("need at least one sample per dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tax = cfg.taxonomy
    unilateral = cfg.unilateral if unilateral_lesions is None else unilateral_lesions

    def gen(role: str, index: int, with_lesions: bool) -> MultiModalSample:
        sub = dataclasses.replace(
            cfg, seed=_sample_seed(cfg.seed, role, index), unilateral=unilateral
        )
        return generate_phantom(sub, with_lesions)

    def write_vol(name: str, vol: Volume) -> str:
        ops.save_volume(out_dir / name, vol)
        return name

    def write_lab(name: str, lab: LabelMap) -> str:
        ops.save_labels(out_dir / name, lab, cfg.spacing)
        return name

    control_records = []
    for i in range(n_control):
        s = gen("control", i, with_lesions=False)
        sid = f"control_{i:03d}"
        control_records.append(
            SampleRecord(
                id=sid,
                volumes={"t1": write_vol(f"{sid}_t1.nii.gz", s.modalities[0])},
                tissue_labels=write_lab(f"{sid}_tissue.nii.gz", s.tissue_labels),
                metadata=s.metadata,
            )
        )
    control = DatasetManifest(
        name="control", role=CONTROL, taxonomy=tax, modalities=MODALITIES,
        samples=control_records, base_dir=out_dir,
    )

    shift_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 17]) if shift else None
    )

    def shifted_t1(s: MultiModalSample) -> Volume:
        if shift is None:
            return s.modalities[0]
        return apply_shift(s.modalities[0], shift, rng=shift_rng)

    lesion_records = []
    for i in range(n_lesion):
        s = gen("lesion", i, with_lesions=True)
        sid = f"lesion_{i:03d}"
        lesion_records.append(
            SampleRecord(
                id=sid,
                volumes={
                    "t1": write_vol(f"{sid}_t1.nii.gz", shifted_t1(s)),
                    "flair": write_vol(f"{sid}_flair.nii.gz", s.modalities[1]),
                },
                lesion_labels=write_lab(f"{sid}_lesion.nii.gz", s.lesion_labels),
                oracle_tissue_labels=write_lab(f"{sid}_oracle_tissue.nii.gz", s.tissue_labels),
                metadata=s.metadata,
            )
        )
    lesion = DatasetManifest(
        name="lesion", role=LESION, taxonomy=tax, modalities=MODALITIES,
        samples=lesion_records, base_dir=out_dir,
    )

    heldout = None
    if n_heldout > 0:
        records = []
        for i in range(n_heldout):
            s = gen("heldout", i, with_lesions=True)
            sid = f"heldout_{i:03d}"
            records.append(
                SampleRecord(
                    id=sid,
                    volumes={
                        "t1": write_vol(f"{sid}_t1.nii.gz", shifted_t1(s)),
                        "flair": write_vol(f"{sid}_flair.nii.gz", s.modalities[1]),
                    },
                    tissue_labels=write_lab(f"{sid}_tissue.nii.gz", s.tissue_labels),
                    lesion_labels=write_lab(f"{sid}_lesion.nii.gz", s.lesion_labels),
                    metadata=s.metadata,
                )
            )
        heldout = DatasetManifest(
            name="heldout", role=FULLY_ANNOTATED, taxonomy=tax, modalities=MODALITIES,
            samples=records, base_dir=out_dir,
        )

    control.save(out_dir / "control.json")
    lesion.save(out_dir / "lesion.json")
    if heldout is not None:
        heldout.save(out_dir / "heldout.json")

    if n_fully > 0:
        records = []
        for i in range(n_fully):
            s = gen("fully", i, with_lesions=True)
            sid = f"fully_{i:03d}"
            records.append(
                SampleRecord(
                    id=sid,
                    volumes={
                        "t1": write_vol(f"{sid}_t1.nii.gz", s.modalities[0]),
                        "flair": write_vol(f"{sid}_flair.nii.gz", s.modalities[1]),
                    },
                    tissue_labels=write_lab(f"{sid}_tissue.nii.gz", s.tissue_labels),
                    lesion_labels=write_lab(f"{sid}_lesion.nii.gz", s.lesion_labels),
                    metadata=s.metadata,
                )
            )
        fully = DatasetManifest(
            name="fully", role=FULLY_ANNOTATED, taxonomy=tax, modalities=MODALITIES,
            samples=records, base_dir=out_dir,
        )
        fully.save(out_dir / "fully.json")

    return control, lesion, heldout
