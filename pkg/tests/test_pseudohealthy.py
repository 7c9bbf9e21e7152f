import numpy as np
import pytest
from scipy.ndimage import shift as nd_shift

from jointseg.core import ClassTaxonomy, LabelMap, Volume
from jointseg.errors import EstimationError, NotUnilateralError, ValidationError
from jointseg.phantom import PhantomConfig, generate_phantom, make_task_specific_datasets
from jointseg.pseudohealthy import (
    FILL,
    MIRROR,
    NEGATIVE,
    POSITIVE,
    PlaneParams,
    determine_healthy_side,
    estimate_symmetry_plane,
    lesion_fill,
    make_pseudo_control,
    mirror_hemisphere,
    mirror_labels,
    plane_from_tilts,
    symmetry_score,
)


@pytest.fixture(scope="module")
def tax():
    return ClassTaxonomy(tissue_classes=tuple(range(1, 7)), lesion_classes=(7,))


def centered_plane():
    return PlaneParams(normal=(1.0, 0.0, 0.0), offset=0.0)


def analytic_symmetric_volume(shape=(32, 32, 32)):
    """Smooth, exactly mirror-symmetric about the x-centre plane."""
    ax = [np.arange(n) - (n - 1) / 2.0 for n in shape]
    x, y, z = np.meshgrid(*ax, indexing="ij")
    blob = lambda cx, cy, cz, s, amp: amp * np.exp(  # noqa: E731
        -((np.abs(x) - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) / (2 * s**2)
    )
    data = blob(6, 0, 0, 4.0, 100.0) + blob(3, 4, -2, 3.0, 60.0)
    return Volume(data.astype(np.float32))


class TestEstimatePlane:
    def test_symmetric_phantom_centered_plane(self):
        cfg = PhantomConfig(seed=20, max_plane_tilt_deg=0.0, max_plane_offset_vox=0.0)
        s = generate_phantom(cfg, with_lesions=False)
        plane = estimate_symmetry_plane(s.modalities[0])
        tilt = np.rad2deg(np.arccos(abs(plane.normal[0])))
        assert abs(plane.offset) < 0.2
        assert tilt < 0.5

    def test_known_tilt_and_offset_recovered(self):
        cfg = PhantomConfig(seed=21)
        s = generate_phantom(cfg, with_lesions=False)
        true_n = np.asarray(s.metadata["plane"]["normal"])
        true_off = s.metadata["plane"]["offset_mm"]
        plane = estimate_symmetry_plane(s.modalities[0])
        ang = np.rad2deg(np.arccos(np.clip(abs(true_n @ np.asarray(plane.normal)), -1, 1)))
        assert ang < 0.5
        assert abs(plane.offset - true_off) < 0.3

    def test_pure_noise_raises(self):
        v = Volume(np.random.default_rng(0).normal(size=(32, 32, 32)).astype(np.float32))
        with pytest.raises(EstimationError):
            estimate_symmetry_plane(v)

    def test_translation_equivariance(self):
        cfg = PhantomConfig(seed=22, max_plane_tilt_deg=1.0, max_plane_offset_vox=0.5)
        s = generate_phantom(cfg, with_lesions=False)
        t = 1.5
        moved = Volume(
            nd_shift(s.modalities[0].data.astype(np.float64), (t, 0, 0), order=1).astype(
                np.float32
            )
        )
        p0 = estimate_symmetry_plane(s.modalities[0])
        p1 = estimate_symmetry_plane(moved)
        shift_along_normal = t * p0.normal[0]
        assert abs((p1.offset - p0.offset) - shift_along_normal) < 0.3


class TestMirror:
    def test_symmetric_input_unchanged(self):
        v = analytic_symmetric_volume()
        out = mirror_hemisphere(v, centered_plane(), NEGATIVE)
        rms = np.sqrt(((out.data - v.data) ** 2).mean())
        scale = np.sqrt((v.data.astype(np.float64) ** 2).mean())
        assert rms / scale < 1e-3

    def test_output_symmetric_about_plane(self):
        s = generate_phantom(PhantomConfig(seed=23), with_lesions=False)
        plane = estimate_symmetry_plane(s.modalities[0])
        out = mirror_hemisphere(s.modalities[0], plane, NEGATIVE)
        assert symmetry_score(out, plane, stride=2) > 0.99

    def test_lesion_removed_from_mirrored_side(self):
        cfg = PhantomConfig(seed=24, unilateral=True)
        s = generate_phantom(cfg, with_lesions=True)
        flair = s.modalities[1]
        plane = estimate_symmetry_plane(s.modalities[0])
        side = determine_healthy_side(s.lesion_labels, plane)
        out = mirror_hemisphere(flair, plane, side)
        lesion_mask = s.lesion_labels.data > 0
        white = s.tissue_labels.data == 2
        # hyperintense lesion intensities must drop back into tissue range
        assert flair.data[lesion_mask].mean() > flair.data[white].mean() + 40
        assert out.data[lesion_mask].mean() < flair.data[white].mean() + 15

    def test_mirrored_labels_stay_in_taxonomy(self, tax):
        rng = np.random.default_rng(1)
        lab = LabelMap(rng.choice([0, 1, 2, 7], size=(16, 16, 16)).astype(np.int16), tax)
        out = mirror_labels(lab, plane_from_tilts(2.0, -1.0, 0.5), POSITIVE)
        assert set(np.unique(out.data)) <= tax.all_classes

    def test_idempotent(self):
        s = generate_phantom(PhantomConfig(seed=25), with_lesions=False)
        plane = estimate_symmetry_plane(s.modalities[0])
        once = mirror_hemisphere(s.modalities[0], plane, NEGATIVE)
        twice = mirror_hemisphere(once, plane, NEGATIVE)
        rms = np.sqrt(((twice.data - once.data) ** 2).mean())
        scale = np.sqrt((once.data.astype(np.float64) ** 2).mean())
        assert rms / scale < 2e-3


class TestHealthySide:
    def _lesion_at(self, tax, xs):
        data = np.zeros((16, 16, 16), dtype=np.int16)
        for x in xs:
            data[x, 8, 8] = 7
        return LabelMap(data, tax)

    def test_all_positive_gives_negative(self, tax):
        lab = self._lesion_at(tax, [12, 13, 14])
        assert determine_healthy_side(lab, centered_plane()) == NEGATIVE

    def test_small_minority_side_wins(self, tax):
        data = np.zeros((16, 16, 16), dtype=np.int16)
        data[12, 2:12, 2:12] = 7  # 100 voxels positive
        data[2, 8, 8:12] = 7  # 4 voxels negative (4%)
        lab = LabelMap(data, tax)
        assert determine_healthy_side(lab, centered_plane()) == NEGATIVE

    def test_bilateral_rejected(self, tax):
        data = np.zeros((16, 16, 16), dtype=np.int16)
        data[12, 2:12, 2:8] = 7  # 60 voxels positive
        data[2, 2:12, 2:6] = 7  # 40 voxels negative
        lab = LabelMap(data, tax)
        with pytest.raises(NotUnilateralError):
            determine_healthy_side(lab, centered_plane())

    def test_empty_lesion_rejected(self, tax):
        lab = LabelMap(np.zeros((8, 8, 8), dtype=np.int16), tax)
        with pytest.raises(ValidationError):
            determine_healthy_side(lab, centered_plane())


class TestLesionFill:
    def test_empty_mask_identity(self, tax):
        v = Volume(np.random.default_rng(2).normal(size=(12, 12, 12)).astype(np.float32))
        lab = LabelMap(np.zeros((12, 12, 12), dtype=np.int16), tax)
        out = lesion_fill(v, lab)
        np.testing.assert_array_equal(out.data, v.data)

    def test_filled_region_matches_white_matter(self):
        cfg = PhantomConfig(seed=26)
        s = generate_phantom(cfg, with_lesions=True)
        t1 = s.modalities[0]
        out = lesion_fill(t1, s.lesion_labels)
        mask = s.lesion_labels.data > 0
        wm_mean = cfg.intensity_table[("t1", 2)][0]
        # ring neighbourhood is white matter; filled mean within 1 noise-std
        assert abs(out.data[mask].mean() - t1.data[s.tissue_labels.data == 2].mean()) < cfg.noise_std

    def test_fill_clamped_to_observed_range(self, tax):
        rng = np.random.default_rng(3)
        data = rng.normal(50, 5, size=(16, 16, 16)).astype(np.float32)
        lab_data = np.zeros((16, 16, 16), dtype=np.int16)
        lab_data[6:10, 6:10, 6:10] = 7
        out = lesion_fill(Volume(data), LabelMap(lab_data, tax))
        assert out.data.min() >= data.min() - 1e-5
        assert out.data.max() <= data.max() + 1e-5

    def test_untouched_outside_mask(self, tax):
        rng = np.random.default_rng(4)
        data = rng.normal(50, 5, size=(12, 12, 12)).astype(np.float32)
        lab_data = np.zeros((12, 12, 12), dtype=np.int16)
        lab_data[5:7, 5:7, 5:7] = 7
        out = lesion_fill(Volume(data), LabelMap(lab_data, tax))
        outside = lab_data == 0
        np.testing.assert_array_equal(out.data[outside], data[outside])


@pytest.fixture(scope="module")
def lesion_ds(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantoms")
    cfg = PhantomConfig(seed=27, unilateral=True)
    _, lesion, _ = make_task_specific_datasets(1, 3, cfg, out)
    return lesion


class TestMakePseudoControl:
    def test_mirror_produces_symmetric_annotated_samples(self, lesion_ds, tmp_path):
        pseudo = make_pseudo_control(lesion_ds, MIRROR, tmp_path)
        assert len(pseudo) == 3
        assert pseudo.role == "pseudo_control"
        for i in range(len(pseudo)):
            s = pseudo.load_sample(i)
            assert s.presence[0] and not any(s.presence[1:])
            assert s.tissue_labels is not None
            plane = estimate_symmetry_plane(s.modalities[0])
            assert symmetry_score(s.modalities[0], plane, stride=2) > 0.99

    def test_fill_removes_hyperintensity(self, tmp_path):
        cfg = PhantomConfig(seed=28, unilateral=True)
        out = tmp_path / "ph"
        _, lesion_ds, _ = make_task_specific_datasets(1, 2, cfg, out)
        pseudo = make_pseudo_control(lesion_ds, FILL, tmp_path / "pseudo")
        assert len(pseudo) == 2
        wm_mean = cfg.intensity_table[("t1", 2)][0]
        les_mean = cfg.intensity_table[("t1", 7)][0]
        for i in range(len(pseudo)):
            src = lesion_ds.load_sample(i)
            filled = pseudo.load_sample(i).modalities[0]
            mask = src.lesion_labels.data > 0
            # intensity criterion: filled region no longer looks lesional
            assert abs(filled.data[mask].mean() - wm_mean) < abs(les_mean - wm_mean) / 2

    def test_bilateral_only_mirror_gives_empty_manifest(self, tax, tmp_path):
        # craft a manifest whose single sample has a clearly bilateral lesion
        from jointseg.core import save_labels, save_volume
        from jointseg.core.manifest import DatasetManifest, SampleRecord

        s = generate_phantom(PhantomConfig(seed=29), with_lesions=False)
        lab = np.zeros(s.shape, dtype=np.int16)
        lab[14:20, 30:34, 30:34] = 7
        lab[44:50, 30:34, 30:34] = 7
        d = tmp_path / "bilateral"
        d.mkdir()
        save_volume(d / "t1.nii.gz", s.modalities[0])
        save_volume(d / "flair.nii.gz", s.modalities[1])
        save_labels(d / "lesion.nii.gz", LabelMap(lab, s.tissue_labels.taxonomy))
        save_labels(d / "tissue.nii.gz", s.tissue_labels)
        ds = DatasetManifest(
            name="bilat",
            role="lesion",
            taxonomy=s.tissue_labels.taxonomy,
            modalities=("t1", "flair"),
            samples=[
                SampleRecord(
                    id="b0",
                    volumes={"t1": "t1.nii.gz", "flair": "flair.nii.gz"},
                    lesion_labels="lesion.nii.gz",
                    oracle_tissue_labels="tissue.nii.gz",
                )
            ],
            base_dir=d,
        )
        pseudo = make_pseudo_control(ds, MIRROR, tmp_path / "out")
        assert len(pseudo) == 0

    def test_max_n_cap(self, lesion_ds, tmp_path):
        pseudo = make_pseudo_control(lesion_ds, MIRROR, tmp_path, max_n=1)
        assert len(pseudo) == 1
