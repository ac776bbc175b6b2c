"""Normalization arithmetic, crop oracles, slice windows, channel stacking."""
import numpy as np
import pytest

from gliopipe.errors import (
    CropTooLarge,
    DegenerateScaleWarning,
    DimMismatch,
    EmptyForeground,
    EmptyWindow,
    MissingModality,
)
from gliopipe.preproc import (
    CropMode,
    CropSpec,
    MultiChannelVolume,
    NormVariant,
    SliceWindow,
    compute_norm_params,
    crop,
    crop_at,
    normalize,
    select_slice_window,
    stack_modalities,
)
from gliopipe.volio import volume_from_array


def vol(data):
    return volume_from_array(np.asarray(data, dtype=np.float32))


def three_value_volume():
    data = np.zeros((3, 2, 1), dtype=np.float32)
    data[0, 0, 0], data[1, 0, 0], data[2, 0, 0] = 2.0, 4.0, 6.0
    return volume_from_array(data)


class TestNormParams:
    def test_hand_statistics(self):
        # foreground {2,4,6}: mean 4, min 2, max 6, population sigma sqrt(8/3)
        p = compute_norm_params(three_value_volume(), NormVariant.ZSCORE)
        assert p.x_mean == 4.0 and p.x_min == 2.0 and p.x_max == 6.0
        assert abs(p.sigma - np.sqrt(8.0 / 3.0)) < 1e-12

    def test_constant_volume_degenerate(self):
        p = compute_norm_params(vol(np.full((2, 2, 2), 5.0)), NormVariant.MINMAX_STANDARD)
        assert p.x_min == p.x_max and p.sigma == 0.0

    def test_all_zero_raises(self):
        with pytest.raises(EmptyForeground):
            compute_norm_params(vol(np.zeros((2, 2, 2))), NormVariant.ZSCORE)


class TestNormalize:
    def test_minmax_standard_hand_values(self):
        v = three_value_volume()
        out = normalize(v, compute_norm_params(v, NormVariant.MINMAX_STANDARD))
        fg = out.data[v.data != 0]
        assert np.allclose(sorted(fg), [0.0, 0.5, 1.0])

    def test_minmax_paper_hand_values(self):
        # the published formula (x - mean)/(max - min) on {2,4,6} -> {-0.5, 0, 0.5}
        v = three_value_volume()
        out = normalize(v, compute_norm_params(v, NormVariant.MINMAX_PAPER))
        fg = out.data[v.data != 0]
        assert np.allclose(sorted(fg), [-0.5, 0.0, 0.5])

    def test_zscore_unit_stats(self):
        rng = np.random.default_rng(0)
        data = np.zeros((12, 12, 12), dtype=np.float32)
        mask = rng.random((12, 12, 12)) < 0.6
        data[mask] = rng.uniform(10, 50, mask.sum()).astype(np.float32)
        v = volume_from_array(data)
        out = normalize(v, compute_norm_params(v, NormVariant.ZSCORE))
        fg = out.data[data != 0].astype(np.float64)
        assert abs(fg.mean()) < 1e-6
        assert abs(fg.std() - 1.0) < 1e-6

    def test_background_stays_zero(self):
        rng = np.random.default_rng(1)
        data = np.zeros((8, 8, 8), dtype=np.float32)
        data[2:5, 2:5, 2:5] = rng.uniform(5, 9, (3, 3, 3)).astype(np.float32)
        v = volume_from_array(data)
        for variant in NormVariant:
            out = normalize(v, compute_norm_params(v, variant))
            assert np.all(out.data[data == 0] == 0.0)

    def test_monotone_on_foreground(self):
        rng = np.random.default_rng(2)
        data = rng.uniform(1, 100, (6, 6, 6)).astype(np.float32)
        v = volume_from_array(data)
        order = np.argsort(data.ravel())
        for variant in NormVariant:
            out = normalize(v, compute_norm_params(v, variant))
            assert np.array_equal(np.argsort(out.data.ravel(), kind="stable"), order)

    def test_degenerate_scale_warns_and_zeroes(self):
        v = vol(np.full((2, 2, 2), 3.0))
        p = compute_norm_params(v, NormVariant.ZSCORE)
        with pytest.warns(DegenerateScaleWarning):
            out = normalize(v, p)
        assert np.all(out.data == 0.0)


class TestCrop:
    def test_static_origin(self):
        rng = np.random.default_rng(3)
        v = vol(rng.random((10, 9, 8)))
        spec = CropSpec(size=(4, 3, 2), mode=CropMode.STATIC, origin=(5, 2, 6))
        out, _ = crop(v, spec)
        assert np.array_equal(out.data, v.data[5:9, 2:5, 6:8])

    def test_crop_too_large(self):
        v = vol(np.zeros((5, 5, 5)))
        with pytest.raises(CropTooLarge):
            crop(v, CropSpec(size=(6, 5, 5), mode=CropMode.STATIC))
        with pytest.raises(CropTooLarge):
            crop(v, CropSpec(size=(4, 4, 4), mode=CropMode.STATIC, origin=(3, 0, 0)))

    def test_random_deterministic_and_in_bounds(self):
        rng = np.random.default_rng(4)
        v = vol(rng.random((20, 18, 16)))
        spec = CropSpec(size=(8, 8, 8), mode=CropMode.RANDOM, seed=99)
        a, _ = crop(v, spec)
        b, _ = crop(v, spec)
        assert np.array_equal(a.data, b.data)

    def test_brute_force_window_oracle_200_pairs(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            dims = tuple(int(d) for d in rng.integers(4, 12, 3))
            v = vol(rng.random(dims))
            size = tuple(int(rng.integers(1, d + 1)) for d in dims)
            origin = tuple(int(rng.integers(0, d - s + 1)) for d, s in zip(dims, size))
            out = crop_at(v, origin, size)
            oracle = np.empty(size, dtype=np.float32)
            for i in range(size[0]):
                for j in range(size[1]):
                    for k in range(size[2]):
                        oracle[i, j, k] = v.data[origin[0] + i, origin[1] + j, origin[2] + k]
            assert np.array_equal(out.data, oracle)

    def test_foreground_contains_blob_exhaustive_oracle(self):
        # 20^3 blob in a 96^3 phantom, crop 64^3: max-foreground crop holds the whole blob
        rng = np.random.default_rng(6)
        for trial in range(3):
            data = np.zeros((96, 96, 96), dtype=np.float32)
            labels = np.zeros((96, 96, 96), dtype=np.float32)
            s = rng.integers(0, 96 - 20, size=3)
            labels[s[0]:s[0]+20, s[1]:s[1]+20, s[2]:s[2]+20] = 4.0
            data += 0.1
            v = volume_from_array(data)
            lv = volume_from_array(labels)
            spec = CropSpec(size=(64, 64, 64), mode=CropMode.FOREGROUND)
            img, lab = crop(v, spec, lv)
            assert lab is not None
            assert int((lab.data != 0).sum()) == 20 ** 3

    def test_foreground_matches_exhaustive_search_small(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            dims = (10, 9, 8)
            labels = (rng.random(dims) < 0.1).astype(np.float32) * 2.0
            v = vol(rng.random(dims) + 0.5)
            lv = volume_from_array(labels)
            size = (4, 4, 4)
            spec = CropSpec(size=size, mode=CropMode.FOREGROUND)
            _, lab = crop(v, spec, lv)
            got = int((lab.data != 0).sum())
            best = 0  # exhaustive origin search oracle
            for ox in range(dims[0] - size[0] + 1):
                for oy in range(dims[1] - size[1] + 1):
                    for oz in range(dims[2] - size[2] + 1):
                        w = labels[ox:ox+4, oy:oy+4, oz:oz+4]
                        best = max(best, int((w != 0).sum()))
            assert got == best

    def test_foreground_fraction_fallback_to_center(self):
        v = vol(np.zeros((8, 8, 8)))
        v.data[0, 0, 0] = 1.0
        spec = CropSpec(size=(4, 4, 4), mode=CropMode.FOREGROUND, min_foreground_fraction=0.9)
        out, _ = crop(v, spec)
        assert np.array_equal(out.data, v.data[2:6, 2:6, 2:6])

    def test_identical_origin_for_image_and_labels(self):
        rng = np.random.default_rng(8)
        data = rng.random((16, 16, 16)).astype(np.float32)
        labels = np.zeros((16, 16, 16), dtype=np.float32)
        labels[4:9, 5:10, 6:11] = 1.0
        img, lab = crop(volume_from_array(data), CropSpec(size=(6, 6, 6), mode=CropMode.FOREGROUND),
                        volume_from_array(labels))
        pos = np.argwhere(lab.data != 0)
        # labels inside the crop line up with the same window of the image
        assert img.dims == lab.dims == (6, 6, 6)
        assert pos.size > 0

    def test_accepts_192_crop_from_brats_dims(self):
        spec = CropSpec(size=(192, 192, 128), mode=CropMode.STATIC, origin=(0, 0, 0))
        v = volume_from_array(np.zeros((240, 240, 155), dtype=np.uint8))
        out, _ = crop(v, spec)
        assert out.dims == (192, 192, 128)


class TestSliceWindow:
    def test_quarter_to_three_quarter_of_100(self):
        data = np.zeros((2, 2, 100), dtype=np.float32)
        data[0, 0, :] = np.arange(100)
        out = select_slice_window(volume_from_array(data), SliceWindow(0.25, 0.75))
        assert out.dims[2] == 50
        assert out.data[0, 0, 0] == 25 and out.data[0, 0, -1] == 74

    def test_identity_window(self):
        v = vol(np.random.default_rng(0).random((3, 3, 7)))
        out = select_slice_window(v, SliceWindow(0.0, 1.0))
        assert np.array_equal(out.data, v.data)

    def test_three_slices(self):
        # floor(0.25*3)=0, floor(0.75*3)=2 -> slices 0 and 1
        data = np.zeros((1, 1, 3), dtype=np.float32)
        data[0, 0, :] = [10, 20, 30]
        out = select_slice_window(volume_from_array(data), SliceWindow(0.25, 0.75))
        assert list(out.data[0, 0, :]) == [10, 20]

    def test_empty_window(self):
        v = vol(np.zeros((2, 2, 4)))
        with pytest.raises(EmptyWindow):
            select_slice_window(v, SliceWindow(0.5, 0.55))

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            SliceWindow(0.7, 0.7)


class TestStack:
    def _vols(self, dims=(4, 4, 4)):
        rng = np.random.default_rng(10)
        return {m: vol(rng.random(dims)) for m in ("T1", "T1CE", "T2", "FLAIR")}

    def test_four_channel_order(self):
        vols = self._vols((5, 6, 7))
        mcv = stack_modalities(vols, ("T1", "T1CE", "T2", "FLAIR"))
        assert mcv.data.shape == (4, 5, 6, 7)
        for i, m in enumerate(("T1", "T1CE", "T2", "FLAIR")):
            assert np.array_equal(mcv.data[i], vols[m].data)

    def test_three_channel_config(self):
        mcv = stack_modalities(self._vols(), ("T1CE", "T2", "FLAIR"))
        assert mcv.data.shape[0] == 3

    def test_dim_mismatch(self):
        vols = self._vols()
        vols["T2"] = vol(np.zeros((4, 4, 3)))
        with pytest.raises(DimMismatch):
            stack_modalities(vols, ("T1", "T1CE", "T2", "FLAIR"))

    def test_missing_modality(self):
        vols = self._vols()
        del vols["FLAIR"]
        with pytest.raises(MissingModality):
            stack_modalities(vols, ("T1", "T1CE", "T2", "FLAIR"))

    def test_stack_unstack_bit_exact(self):
        vols = self._vols((3, 4, 5))
        mcv = stack_modalities(vols, ("T1", "T1CE", "T2", "FLAIR"))
        for m in vols:
            assert np.array_equal(mcv.channel(m).data, vols[m].data)

    def test_tensor_axis_convention(self):
        vols = self._vols((3, 4, 5))
        mcv = stack_modalities(vols, ("T1", "T1CE", "T2", "FLAIR"))
        t = mcv.to_tensor()
        assert t.shape == (1, 4, 5, 4, 3)  # (1, C, z, y, x)
        assert t[0, 0, 2, 1, 0] == vols["T1"].data[0, 1, 2]
