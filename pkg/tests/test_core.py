import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jointseg.core import (
    ClassTaxonomy,
    LabelMap,
    MultiModalSample,
    ProbabilityMap,
    Volume,
    labels_from_probs,
    load_volume,
    merge_labels,
    one_hot,
    save_volume,
    split_labels,
    znorm,
)
from jointseg.core.manifest import DatasetManifest, SampleRecord
from jointseg.errors import DegenerateInputError, FormatError, ValidationError


@pytest.fixture
def tax():
    return ClassTaxonomy(tissue_classes=(1, 2, 3), lesion_classes=(7,))


def rng(seed=0):
    return np.random.default_rng(seed)


class TestVolumeIO:
    def test_round_trip_16cube(self, tmp_path):
        data = rng().normal(size=(16, 16, 16)).astype(np.float32)
        v = Volume(data, (1.0, 1.0, 1.0))
        path = tmp_path / "phantom.nii.gz"
        save_volume(path, v)
        back = load_volume(path)
        assert back.shape == (16, 16, 16)
        np.testing.assert_array_equal(back.data, data)

    def test_spacing_header_round_trip(self, tmp_path):
        v = Volume(np.zeros((4, 5, 6), dtype=np.float32) + 1.5, (1.0, 1.0, 3.0))
        path = tmp_path / "aniso.nii"
        save_volume(path, v)
        back = load_volume(path)
        assert back.spacing == pytest.approx((1.0, 1.0, 3.0), abs=1e-6)

    def test_truncated_file_is_format_error(self, tmp_path):
        path = tmp_path / "v.nii.gz"
        save_volume(path, Volume(np.ones((8, 8, 8), dtype=np.float32)))
        raw = gzip.decompress(path.read_bytes())
        path2 = tmp_path / "trunc.nii.gz"
        path2.write_bytes(gzip.compress(raw[: len(raw) // 2]))
        with pytest.raises(FormatError):
            load_volume(path2)

    def test_garbage_file_is_format_error(self, tmp_path):
        path = tmp_path / "bad.nii"
        path.write_bytes(b"not a nifti at all" * 30)
        with pytest.raises(FormatError):
            load_volume(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_volume(tmp_path / "nope.nii.gz")

    def test_nan_volume_rejected(self, tmp_path):
        import struct

        from jointseg.core import nifti

        path = tmp_path / "nan.nii"
        data = np.ones((4, 4, 4), dtype=np.float32)
        nifti.write(path, data)
        raw = bytearray(path.read_bytes())
        raw[352:356] = struct.pack("<f", float("nan"))
        path.write_bytes(bytes(raw))
        with pytest.raises(ValidationError):
            load_volume(path)

    def test_volume_rejects_nonpositive_spacing(self):
        with pytest.raises(ValidationError):
            Volume(np.zeros((2, 2, 2)), (1.0, 0.0, 1.0))


class TestZnorm:
    def test_gaussian_noise_normalised(self):
        v = Volume(100 + 7 * rng(1).normal(size=(12, 12, 12)))
        out = znorm(v)
        assert abs(out.data.mean()) < 1e-6
        assert abs(out.data.std() - 1.0) < 1e-6

    def test_idempotent(self):
        v = Volume(rng(2).normal(size=(10, 10, 10)))
        once = znorm(v)
        twice = znorm(once)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-6)

    def test_hand_values_population_std(self):
        # oracle: (x - mean) / population std on [1, 2, 3, 4]
        v = Volume(np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1, 1))
        out = znorm(v)
        expected = [-1.34164079, -0.4472136, 0.4472136, 1.34164079]
        np.testing.assert_allclose(out.data.ravel(), expected, atol=1e-6)

    def test_constant_input_raises(self):
        with pytest.raises(DegenerateInputError):
            znorm(Volume(np.full((5, 5, 5), 3.0)))

    def test_masked_normalisation(self):
        data = np.zeros((8, 8, 8))
        mask = np.zeros((8, 8, 8), dtype=bool)
        mask[:4] = True
        data[mask] = rng(3).normal(5, 2, size=mask.sum())
        out = znorm(Volume(data), mask)
        assert abs(out.data[mask].mean()) < 1e-6
        assert abs(out.data[mask].std() - 1.0) < 1e-6


class TestLabelSplitMerge:
    def test_all_background(self, tax):
        y = LabelMap(np.zeros((4, 4, 4), dtype=np.int16), tax)
        t, l = split_labels(y)
        assert not t.data.any() and not l.data.any()

    def test_mixed_values_reconstruct(self, tax):
        data = rng(4).choice([0, 2, 7], size=(6, 6, 6)).astype(np.int16)
        y = LabelMap(data, tax)
        t, l = split_labels(y)
        assert set(np.unique(t.data)) <= {0, 2}
        assert set(np.unique(l.data)) <= {0, 7}
        np.testing.assert_array_equal(t.data + l.data, y.data)

    def test_pure_tissue(self, tax):
        data = rng(5).choice([0, 1, 3], size=(5, 5, 5)).astype(np.int16)
        y = LabelMap(data, tax)
        t, l = split_labels(y)
        assert not l.data.any()
        np.testing.assert_array_equal(t.data, y.data)

    def test_merge_lesion_empty(self, tax):
        t = LabelMap(rng(6).choice([0, 1, 2], size=(4, 4, 4)).astype(np.int16), tax)
        l = LabelMap(np.zeros((4, 4, 4), dtype=np.int16), tax)
        np.testing.assert_array_equal(merge_labels(t, l).data, t.data)

    def test_lesion_priority_on_overlap(self, tax):
        t = LabelMap(np.full((2, 2, 2), 2, dtype=np.int16), tax)
        l_data = np.zeros((2, 2, 2), dtype=np.int16)
        l_data[0, 0, 0] = 7
        l = LabelMap(l_data, tax)
        merged = merge_labels(t, l)
        assert merged.data[0, 0, 0] == 7
        assert merged.data[1, 1, 1] == 2

    def test_disjoint_sum(self, tax):
        t_data = np.zeros((4, 4, 4), dtype=np.int16)
        t_data[:2] = 1
        l_data = np.zeros((4, 4, 4), dtype=np.int16)
        l_data[3, 3, 3] = 7
        merged = merge_labels(LabelMap(t_data, tax), LabelMap(l_data, tax))
        np.testing.assert_array_equal(merged.data, t_data + l_data)

    def test_shape_mismatch(self, tax):
        t = LabelMap(np.zeros((4, 4, 4), dtype=np.int16), tax)
        l = LabelMap(np.zeros((5, 4, 4), dtype=np.int16), tax)
        with pytest.raises(ValidationError):
            merge_labels(t, l)

    def test_split_merge_identity_random(self, tax):
        for seed in range(10):
            data = rng(seed).choice([0, 1, 2, 3, 7], size=(6, 6, 6)).astype(np.int16)
            y = LabelMap(data, tax)
            t, l = split_labels(y)
            np.testing.assert_array_equal(merge_labels(t, l).data, y.data)

    def test_labelmap_rejects_unknown_values(self, tax):
        with pytest.raises(ValidationError):
            LabelMap(np.full((2, 2, 2), 9, dtype=np.int16), tax)

    @given(
        arrays(
            np.int16,
            st.tuples(*[st.integers(1, 5)] * 3),
            elements=st.sampled_from([0, 1, 2, 3, 7]),
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_split_merge_identity_property(self, data):
        tax = ClassTaxonomy(tissue_classes=(1, 2, 3), lesion_classes=(7,))
        y = LabelMap(data, tax)
        t, l = split_labels(y)
        np.testing.assert_array_equal(merge_labels(t, l).data, y.data)
        # supports are disjoint and reconstruct by addition
        assert not ((t.data != 0) & (l.data != 0)).any()
        np.testing.assert_array_equal(t.data + l.data, y.data)


class TestTaxonomy:
    def test_default_weights_balanced(self, tax):
        assert sum(tax.weights[c] for c in tax.tissue_classes) == pytest.approx(0.5)
        assert sum(tax.weights[c] for c in tax.lesion_classes) == pytest.approx(0.5)
        assert sum(tax.weights.values()) == pytest.approx(1.0)

    def test_overlapping_groups_rejected(self):
        with pytest.raises(ValidationError):
            ClassTaxonomy(tissue_classes=(1, 2), lesion_classes=(2,))

    def test_unbalanced_weights_rejected(self):
        with pytest.raises(ValidationError):
            ClassTaxonomy(
                tissue_classes=(1,),
                lesion_classes=(2,),
                weights={1: 0.7, 2: 0.3, 0: 0.0},
            )

    def test_channel_order(self, tax):
        assert tax.channel_classes == (0, 1, 2, 3, 7)
        assert tax.channel_of(7) == 4


class TestProbabilityMap:
    def test_valid_simplex(self, tax):
        g = rng(7).random((tax.n_channels, 4, 4, 4))
        g /= g.sum(axis=0, keepdims=True)
        ProbabilityMap(g, tax)

    def test_rejects_bad_sums(self, tax):
        g = np.full((tax.n_channels, 2, 2, 2), 1.0 / tax.n_channels)
        g[0, 0, 0, 0] += 1e-3
        with pytest.raises(ValidationError):
            ProbabilityMap(g, tax)

    def test_one_hot_argmax_round_trip(self, tax):
        data = rng(8).choice([0, 1, 2, 3, 7], size=(5, 5, 5)).astype(np.int16)
        y = LabelMap(data, tax)
        back = labels_from_probs(one_hot(y))
        np.testing.assert_array_equal(back.data, y.data)


class TestSample:
    def test_shared_slot_required(self, tax):
        with pytest.raises(ValidationError):
            MultiModalSample(modalities=(None, Volume(np.zeros((2, 2, 2)))))

    def test_shape_consistency(self):
        a = Volume(np.zeros((4, 4, 4)))
        b = Volume(np.zeros((4, 4, 5)))
        with pytest.raises(ValidationError):
            MultiModalSample(modalities=(a, b))


class TestManifest:
    def _write_sample(self, tmp_path, tax, lesion=False):
        t1 = Volume(rng(9).normal(size=(8, 8, 8)))
        save_volume(tmp_path / "t1.nii.gz", t1)
        labels = LabelMap(rng(10).choice([0, 1, 2], size=(8, 8, 8)).astype(np.int16), tax)
        from jointseg.core import save_labels

        save_labels(tmp_path / "lab.nii.gz", labels)
        if lesion:
            save_volume(tmp_path / "flair.nii.gz", t1)

    def test_control_round_trip(self, tmp_path, tax):
        self._write_sample(tmp_path, tax)
        m = DatasetManifest(
            name="c",
            role="control",
            taxonomy=tax,
            modalities=("t1", "flair"),
            samples=[
                SampleRecord(
                    id="s0", volumes={"t1": "t1.nii.gz"}, tissue_labels="lab.nii.gz"
                )
            ],
            base_dir=tmp_path,
        )
        m.save(tmp_path / "manifest.json")
        back = DatasetManifest.load(tmp_path / "manifest.json")
        assert back.role == "control"
        s = back.load_sample(0)
        assert s.presence == (True, False)
        assert s.tissue_labels is not None

    def test_control_role_enforced(self, tmp_path, tax):
        with pytest.raises(ValidationError):
            DatasetManifest(
                name="c",
                role="control",
                taxonomy=tax,
                modalities=("t1",),
                samples=[SampleRecord(id="s0", volumes={"t1": "x.nii"})],
            )

    def test_lesion_role_needs_full_modalities(self, tmp_path, tax):
        with pytest.raises(ValidationError):
            DatasetManifest(
                name="l",
                role="lesion",
                taxonomy=tax,
                modalities=("t1", "flair"),
                samples=[
                    SampleRecord(
                        id="s0",
                        volumes={"t1": "x.nii"},
                        lesion_labels="y.nii",
                    )
                ],
            )
