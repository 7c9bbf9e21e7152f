"""Pseudo-healthy scan synthesis.

Unilateral lesion scans are turned into lesion-free, annotated
pseudo-control scans either by mirroring the healthy hemisphere about
the estimated inter-hemispheric symmetry plane or by filling lesions
with surrounding white-matter-like intensities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.ndimage import binary_dilation, label as cc_label, map_coordinates

from .core import ops
from .core.manifest import DatasetManifest, SampleRecord
from .core.types import PSEUDO_CONTROL, LabelMap, Volume
from .errors import EstimationError, NotUnilateralError, ValidationError

log = logging.getLogger(__name__)

NEGATIVE = "negative"
POSITIVE = "positive"

MIRROR = "mirror"
FILL = "fill"


@dataclass(frozen=True)
class PlaneParams:
    """Reflection plane: unit normal and signed offset (mm) from center."""

    normal: tuple[float, float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValidationError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", tuple(float(x) for x in n))


def _tilt_normal(tilt_z_deg: float, tilt_y_deg: float) -> np.ndarray:
    az, ay = np.deg2rad(tilt_z_deg), np.deg2rad(tilt_y_deg)
    rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
    ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
    return rz @ ry @ np.array([1.0, 0.0, 0.0])


def plane_from_tilts(tilt_z_deg: float, tilt_y_deg: float, offset: float) -> PlaneParams:
    n = _tilt_normal(tilt_z_deg, tilt_y_deg)
    n /= np.linalg.norm(n)
    return PlaneParams(normal=tuple(n), offset=float(offset))


def tilts_from_plane(plane: PlaneParams) -> tuple[float, float]:
    """Inverse of plane_from_tilts (up to the small-angle branch)."""
    nx, ny, nz = plane.normal
    ay = np.rad2deg(np.arcsin(np.clip(-nz, -1, 1)))
    az = np.rad2deg(np.arctan2(ny, nx))
    return float(az), float(ay)


def signed_distance_field(shape, spacing, plane: PlaneParams) -> np.ndarray:
    """Per-voxel signed physical distance to the plane."""
    grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape], indexing="ij")
    center = (np.asarray(shape) - 1) / 2.0
    out = np.zeros(shape, dtype=np.float64)
    for g, c, s, n in zip(grids, center, spacing, plane.normal):
        out += (g - c) * s * n
    return out - plane.offset


def _reflect_points(pts_vox: np.ndarray, shape, spacing, plane: PlaneParams) -> np.ndarray:
    center = (np.asarray(shape, dtype=float) - 1) / 2.0
    sp = np.asarray(spacing, dtype=float)
    n = np.asarray(plane.normal, dtype=float)
    phys = (pts_vox - center) * sp
    d = phys @ n - plane.offset
    reflected = phys - 2.0 * d[:, None] * n[None, :]
    return reflected / sp + center


def reflect_volume(data: np.ndarray, spacing, plane: PlaneParams, order: int = 1) -> np.ndarray:
    shape = data.shape
    pts = np.argwhere(np.ones(shape, dtype=bool)).astype(np.float64)
    src = _reflect_points(pts, shape, spacing, plane)
    vals = map_coordinates(data.astype(np.float64), src.T, order=order, mode="nearest")
    return vals.reshape(shape)


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a**2).sum() * (b**2).sum())
    if denom == 0:
        return 0.0
    return float((a * b).sum() / denom)


def symmetry_score(v: Volume, plane: PlaneParams, stride: int = 1) -> float:
    """NCC between the volume and its reflection through the plane."""
    data = v.data.astype(np.float64)
    sl = (slice(None, None, stride),) * 3
    pts = np.argwhere(np.ones(data[sl].shape, dtype=bool)).astype(np.float64) * stride
    src = _reflect_points(pts, data.shape, v.spacing, plane)
    inside = ((src >= 0) & (src <= np.asarray(data.shape) - 1)).all(axis=1)
    vals = map_coordinates(data, src[inside].T, order=1, mode="nearest")
    ref = data[sl].reshape(-1)[inside]
    return _ncc(ref, vals)


class _PlaneScorer:
    """Reflection-NCC scorer over presmoothed foreground voxels."""

    def __init__(self, v: Volume, presmooth: float = 1.0, stride: int = 2):
        from scipy.ndimage import binary_dilation, gaussian_filter

        self.data = gaussian_filter(v.data.astype(np.float64), presmooth)
        self.shape = v.shape
        self.spacing = v.spacing
        thr = 0.3 * np.percentile(self.data, 99.5)
        fg = binary_dilation(self.data > thr, iterations=2)
        keep = np.zeros_like(fg)
        keep[(slice(None, None, stride),) * 3] = True
        self.pts = np.argwhere(fg & keep).astype(np.float64)
        self.vals = self.data[fg & keep]

    def __call__(self, params) -> float:
        az, ay, off = params
        plane = plane_from_tilts(az, ay, off)
        src = _reflect_points(self.pts, self.shape, self.spacing, plane)
        inside = ((src >= 0) & (src <= np.asarray(self.shape) - 1)).all(axis=1)
        if inside.sum() < 16:
            return -1.0
        mirrored = map_coordinates(self.data, src[inside].T, order=1, mode="nearest")
        return _ncc(self.vals[inside], mirrored)


def estimate_symmetry_plane(
    v: Volume,
    tilt_range_deg: float = 10.0,
    offset_range_vox: float = 5.0,
    min_ncc: float = 0.5,
) -> PlaneParams:
    """Coarse-to-fine search for the plane maximising reflection NCC.

    Two tilt angles and the offset are searched on successively refined
    grids (steps down to 0.25 degrees / 0.1 voxels), then polished with
    a local simplex optimisation.
    """
    data = v.data.astype(np.float64)
    thr = 0.3 * np.percentile(data, 99.5)
    half = data.shape[0] // 2
    fg = data > thr
    if not fg[:half].any() or not fg[half:].any():
        raise EstimationError("no bilateral structure around the initial plane")

    sp0 = v.spacing[0]
    coarse = _PlaneScorer(v, stride=2)
    fine = _PlaneScorer(v, stride=1)

    best = (0.0, 0.0, 0.0)
    best_val = -np.inf
    stages = [
        # (scorer, tilt half-range, tilt step, offset half-range (mm), offset step)
        (coarse, tilt_range_deg, 2.5, offset_range_vox * sp0, 1.25 * sp0),
        (coarse, 1.25, 0.25, 0.625 * sp0, 0.1 * sp0),
    ]
    for scorer, t_range, t_step, o_range, o_step in stages:
        az0, ay0, off0 = best
        azs = np.arange(az0 - t_range, az0 + t_range + 1e-9, t_step)
        ays = np.arange(ay0 - t_range, ay0 + t_range + 1e-9, t_step)
        offs = np.arange(off0 - o_range, off0 + o_range + 1e-9, o_step)
        for az in azs:
            for ay in ays:
                for off in offs:
                    val = scorer((az, ay, off))
                    if val > best_val:
                        best_val = val
                        best = (float(az), float(ay), float(off))
        best_val = -np.inf  # rescore on the next stage's grid

    res = optimize.minimize(
        lambda p: -fine(p),
        x0=np.asarray(best),
        method="Nelder-Mead",
        options={"xatol": 0.02, "fatol": 1e-7, "maxiter": 120},
    )
    final = res.x if -res.fun >= fine(best) else np.asarray(best)
    final_val = max(-res.fun, fine(best))
    if final_val < min_ncc:
        raise EstimationError(f"symmetry NCC {final_val:.3f} below {min_ncc}")
    return plane_from_tilts(*final)


def mirror_hemisphere(
    v: Volume, plane: PlaneParams, healthy_side: str, order: int = 1
) -> Volume:
    """Replace the non-healthy side with reflected healthy-side samples."""
    if healthy_side not in (NEGATIVE, POSITIVE):
        raise ValidationError(f"unknown side {healthy_side!r}")
    data = v.data.astype(np.float64)
    signed = signed_distance_field(v.shape, v.spacing, plane)
    replace = signed > 0 if healthy_side == NEGATIVE else signed < 0
    pts = np.argwhere(replace).astype(np.float64)
    out = data.copy()
    if pts.size:
        src = _reflect_points(pts, v.shape, v.spacing, plane)
        out[replace] = map_coordinates(data, src.T, order=order, mode="nearest")
    if order == 0:
        return Volume(out.astype(np.float32), v.spacing) if np.issubdtype(
            v.data.dtype, np.floating
        ) else Volume(out, v.spacing)
    return Volume(out.astype(np.float32), v.spacing)


def mirror_labels(lab: LabelMap, plane: PlaneParams, healthy_side: str,
                  spacing=(1.0, 1.0, 1.0)) -> LabelMap:
    signed = signed_distance_field(lab.shape, spacing, plane)
    replace = signed > 0 if healthy_side == NEGATIVE else signed < 0
    data = lab.data.astype(np.float64)
    out = data.copy()
    pts = np.argwhere(replace).astype(np.float64)
    if pts.size:
        src = _reflect_points(pts, lab.shape, spacing, plane)
        out[replace] = map_coordinates(data, src.T, order=0, mode="nearest")
    return LabelMap(out.astype(np.int16), lab.taxonomy)


def determine_healthy_side(lesion: LabelMap, plane: PlaneParams,
                           spacing=(1.0, 1.0, 1.0),
                           bilateral_fraction: float = 0.10) -> str:
    """Side with fewer lesion voxels; bilateral lesions are rejected."""
    mask = lesion.data > 0
    if not mask.any():
        raise ValidationError("lesion map is empty")
    signed = signed_distance_field(lesion.shape, spacing, plane)
    n_pos = int((mask & (signed > 0)).sum())
    n_neg = int((mask & (signed <= 0)).sum())
    total = n_pos + n_neg
    minority = min(n_pos, n_neg)
    if n_pos == n_neg or minority / total > bilateral_fraction:
        raise NotUnilateralError(
            f"lesion is bilateral: {n_pos} positive vs {n_neg} negative voxels"
        )
    return NEGATIVE if n_neg < n_pos else POSITIVE


def lesion_fill(
    t1: Volume, lesion: LabelMap, ring_width: int = 3,
    rng: np.random.Generator | None = None,
) -> Volume:
    """Fill lesion voxels from the surrounding intensity distribution.

    Each connected lesion component is replaced by samples drawn from
    the mean/std of a ring neighbourhood around it (normal-appearing
    white matter for phantom-style lesions), clamped to the observed
    intensity range.
    """
    mask = lesion.data > 0
    if not mask.any():
        return t1
    rng = rng if rng is not None else np.random.default_rng(0)
    data = t1.data.astype(np.float64).copy()
    lo, hi = float(data.min()), float(data.max())
    comps, n = cc_label(mask)
    for comp in range(1, n + 1):
        sel = comps == comp
        ring = binary_dilation(sel, iterations=ring_width) & ~mask
        if not ring.any():  # pathological: lesion fills the whole volume
            continue
        mean = data[ring].mean()
        std = data[ring].std()
        data[sel] = np.clip(mean + std * rng.normal(size=int(sel.sum())), lo, hi)
    return Volume(data.astype(np.float32), t1.spacing)


def make_pseudo_control(
    lesion_ds: DatasetManifest,
    method: str,
    out_dir,
    max_n: int | None = None,
    indices: list[int] | None = None,
    seed: int = 0,
) -> DatasetManifest:
    """Synthesise an annotated pseudo-control dataset from lesion scans.

    ``indices`` restricts synthesis to a subset (e.g. the training
    split); tissue labels come from the manifest's oracle side channel.
    Bilateral samples are skipped for the mirror method.
    """
    if method not in (MIRROR, FILL):
        raise ValidationError(f"unknown pseudo-healthy method {method!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    todo = list(range(len(lesion_ds))) if indices is None else list(indices)
    records: list[SampleRecord] = []
    skipped = 0
    for idx in todo:
        if max_n is not None and len(records) >= max_n:
            break
        sample = lesion_ds.load_sample(idx)
        oracle = lesion_ds.load_oracle_tissue(idx)
        if oracle is None:
            raise ValidationError(
                f"sample {sample.sample_id}: no tissue-label oracle available"
            )
        t1 = sample.modalities[0]
        try:
            if method == MIRROR:
                plane = estimate_symmetry_plane(t1)
                side = determine_healthy_side(sample.lesion_labels, plane, t1.spacing)
                out_t1 = mirror_hemisphere(t1, plane, side)
                out_tissue = mirror_labels(oracle, plane, side, t1.spacing)
            else:
                out_t1 = lesion_fill(t1, sample.lesion_labels, rng=rng)
                out_tissue = oracle
        except (NotUnilateralError, EstimationError) as exc:
            log.warning("skipping %s: %s", sample.sample_id, exc)
            skipped += 1
            continue
        sid = f"pseudo_{sample.sample_id}"
        ops.save_volume(out_dir / f"{sid}_t1.nii.gz", out_t1)
        ops.save_labels(out_dir / f"{sid}_tissue.nii.gz", out_tissue, t1.spacing)
        records.append(
            SampleRecord(
                id=sid,
                volumes={lesion_ds.modalities[0]: f"{sid}_t1.nii.gz"},
                tissue_labels=f"{sid}_tissue.nii.gz",
                metadata={"source": sample.sample_id, "method": method},
            )
        )
    if not records:
        log.warning("no pseudo-control samples produced (%d skipped)", skipped)
    manifest = DatasetManifest(
        name=f"pseudo_{method}",
        role=PSEUDO_CONTROL,
        taxonomy=lesion_ds.taxonomy,
        modalities=lesion_ds.modalities,
        samples=records,
        base_dir=out_dir,
    )
    manifest.save(out_dir / "pseudo.json")
    return manifest
