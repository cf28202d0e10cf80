import os
import struct
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbpforest.features import (
    CACHE_MAGIC,
    GSM_WINDOWS,
    LBP_GRID,
    PatchGrid,
    Scale,
    extract_all_scales,
    extract_patches,
    extract_scale,
    gsm_length,
    gsm_representation,
    gsm_train,
    read_cache,
    read_cache_header,
    write_cache,
)
from lbpforest.forest import DegenerateDataError
from lbpforest.imagio import ColorSpace, Image
from oracles import histogram, lbp_pixel, uniform_patterns

P_R = {Scale.S1: (8, 1), Scale.S2: (16, 2), Scale.S3: (24, 3)}


def random_image(seed, size=128, low=0, high=256) -> Image:
    return Image(np.random.default_rng(seed).integers(low, high, (size, size, 3), dtype=np.uint8))


def oracle_patch(plane, region, P, R):
    """Histogram of one patch from per-pixel oracle codes (image-level border margin)."""
    table = {p: i for i, p in enumerate(uniform_patterns(P))}
    top, left, bottom, right = region
    h, w = plane.shape
    bins = np.full(plane.shape, -1)
    for y in range(max(top, R), min(bottom, h - R)):
        for x in range(max(left, R), min(right, w - R)):
            bins[y, x] = table.get(lbp_pixel(plane, y, x, P, R), P * (P - 1) + 2)
    return histogram(bins, region, P * (P - 1) + 3)


class TestGrid:
    def test_regions(self):
        regions = LBP_GRID.regions()
        assert len(regions) == 49
        assert regions[0] == (0, 0, 32, 32)
        assert regions[6] == (0, 96, 32, 128)
        assert regions[-1] == (96, 96, 128, 128)

    def test_full_coverage_with_overlap(self):
        cover = np.zeros((128, 128), dtype=int)
        for t, l, b, r in LBP_GRID.regions():
            cover[t:b, l:r] += 1
        assert cover.min() >= 1
        assert cover.max() == 4

    @pytest.mark.parametrize("window,stride,n", [(16, 8, 225), (32, 16, 49), (64, 32, 9)])
    def test_patch_counts(self, window, stride, n):
        assert PatchGrid(window, stride).n_patches == n


class TestLbpRepresentation:
    def test_lengths(self):
        vecs = extract_all_scales(random_image(0))
        assert [v.shape for v in vecs] == [(8673,), (35721,), (81585,)]
        assert all(v.dtype == np.float32 for v in vecs)

    @pytest.mark.parametrize("scale", list(Scale))
    def test_constant_image(self, scale):
        v = extract_scale(Image(np.full((128, 128, 3), 90, dtype=np.uint8)), scale)
        assert np.count_nonzero(v) == 49 * 3
        assert set(v[v > 0].tolist()) == {1.0}

    @pytest.mark.parametrize("scale", list(Scale))
    def test_blocks_are_normalized(self, scale):
        v = extract_scale(random_image(1), scale)
        blocks = v.reshape(49, 3, -1)
        np.testing.assert_allclose(blocks.sum(axis=2), 1.0, atol=1e-5)

    def test_s1_matches_oracle(self):
        img = random_image(2)
        v = extract_scale(img, Scale.S1).reshape(49, 3, 59)
        for c in range(3):
            plane = img.plane(c)
            for p, region in enumerate(LBP_GRID.regions()):
                np.testing.assert_allclose(v[p, c], oracle_patch(plane, region, 8, 1), atol=1e-7)

    @pytest.mark.parametrize("scale", [Scale.S2, Scale.S3])
    def test_sampled_patches_match_oracle(self, scale):
        img = random_image(int(scale))
        P, R = P_R[scale]
        v = extract_scale(img, scale).reshape(49, 3, -1)
        regions = LBP_GRID.regions()
        for p in (0, 24, 48, 13):
            for c in range(3):
                np.testing.assert_allclose(v[p, c], oracle_patch(img.plane(c), regions[p], P, R), atol=1e-7)

    def test_identical_images(self):
        a, b = extract_all_scales(random_image(3)), extract_all_scales(random_image(3))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_plus_ten_shift(self):
        img = random_image(4, high=240)
        shifted = Image(np.asarray(img.data) + np.uint8(10))
        for x, y in zip(extract_all_scales(img), extract_all_scales(shifted)):
            np.testing.assert_array_equal(x, y)

    def test_wrong_size(self):
        with pytest.raises(ValueError):
            extract_scale(random_image(0, size=64), Scale.S1)


def _striped_patches(rng, n, window):
    """Class 0: vertical stripes; class 1: horizontal stripes; plus noise."""
    yy, xx = np.mgrid[0:window, 0:window]
    out, labels = [], []
    for i in range(n):
        lab = i % 2
        wave = np.sin((xx if lab == 0 else yy) * 1.3 + rng.uniform(0, 6))
        img = 128 + 60 * wave[..., None] + rng.normal(0, 10, (window, window, 3))
        out.append(np.clip(img, 0, 255).reshape(-1))
        labels.append(lab)
    return np.array(out, dtype=np.float32), np.array(labels)


class TestGsm:
    @pytest.mark.parametrize("window,stride,length", [(16, 8, 900), (32, 16, 196), (64, 32, 36)])
    def test_lengths(self, window, stride, length):
        assert gsm_length(window, stride) == length

    def test_patch_extraction(self):
        img = random_image(5)
        patches = extract_patches(img, 64, 32)
        assert patches.shape == (9, 64 * 64 * 3)
        np.testing.assert_array_equal(patches[4], np.asarray(img.data)[32:96, 32:96].reshape(-1))

    def test_separable_patches(self):
        rng = np.random.default_rng(0)
        X, y = _striped_patches(rng, 300, 16)
        forests = gsm_train(X, y, 16, 64, seed=1, workers=1)
        assert forests.rf.oob_accuracy > 0.9
        X_test, y_test = _striped_patches(rng, 200, 16)
        assert np.mean(forests.crf.predict(X_test) == y_test) > 0.9

    def test_single_class(self):
        X = np.zeros((10, 16 * 16 * 3), dtype=np.float32)
        with pytest.raises(DegenerateDataError):
            gsm_train(X, np.zeros(10, dtype=int), 16, 4)

    def test_wrong_patch_length(self):
        with pytest.raises(ValueError):
            gsm_train(np.zeros((4, 10)), [0, 1, 0, 1], 16, 4)

    def test_deterministic(self):
        X, y = _striped_patches(np.random.default_rng(1), 60, 16)
        a = gsm_train(X, y, 16, 8, seed=3, max_patches=40, workers=1)
        b = gsm_train(X, y, 16, 8, seed=3, max_patches=40, workers=2)
        assert a.rf.to_dict() == b.rf.to_dict()
        assert a.crf.to_dict() == b.crf.to_dict()

    @pytest.mark.parametrize("window,stride", GSM_WINDOWS)
    def test_representation(self, window, stride):
        rng = np.random.default_rng(window)
        X, y = _striped_patches(rng, 40, window)
        forests = gsm_train(X, y, window, 4, seed=0, stride=stride, workers=1)
        rep = gsm_representation(random_image(6), forests)
        assert rep.shape == (gsm_length(window, stride),)
        np.testing.assert_allclose(rep.reshape(-1, 2).sum(axis=1), 1.0, atol=1e-6)

    def test_representation_window_mismatch(self):
        X, y = _striped_patches(np.random.default_rng(2), 20, 16)
        forests = gsm_train(X, y, 16, 2, workers=1)
        with pytest.raises(ValueError):
            gsm_representation(random_image(0), forests, window=32)


class TestCache:
    def _scales(self, n, seed=0):
        rng = np.random.default_rng(seed)
        return tuple(rng.random((n, length), dtype=np.float32) for length in (8673, 35721, 81585))

    def test_round_trip(self, tmp_path):
        scales = self._scales(4)
        path = tmp_path / "f.bin"
        write_cache(path, "YCbCr", scales, {"note": "x", "n": 4})
        cache = read_cache(path)
        assert cache.space is ColorSpace.YCBCR
        assert cache.metadata == {"note": "x", "n": 4}
        assert cache.lengths == (8673, 35721, 81585)
        for a, b in zip(scales, cache.scales):
            np.testing.assert_array_equal(a, b)

    def test_byte_layout(self, tmp_path):
        scales = tuple(np.full((2, L), v, dtype=np.float32) for L, v in ((3, 1.0), (2, 2.0), (1, 3.0)))
        path = tmp_path / "f.bin"
        write_cache(path, "HSV", scales, {"a": 1})
        raw = path.read_bytes()
        meta = b'{"a":1}'
        expected = struct.pack("<4sIIII3II", CACHE_MAGIC, 1, 2, 3, 1, 3, 2, 1, len(meta)) + meta
        expected += np.full(6, 1.0, "<f4").tobytes() + np.full(4, 2.0, "<f4").tobytes() + np.full(2, 3.0, "<f4").tobytes()
        assert raw == expected

    def test_header(self, tmp_path):
        path = tmp_path / "f.bin"
        write_cache(path, "RGB", self._scales(2))
        head = read_cache_header(path)
        assert head["n_samples"] == 2 and head["lengths"] == (8673, 35721, 81585)

    def test_truncated(self, tmp_path):
        path = tmp_path / "f.bin"
        write_cache(path, "RGB", self._scales(2))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(ValueError, match="truncated"):
            read_cache(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.bin"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(ValueError):
            read_cache(path)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 5), st.lists(st.integers(1, 7), min_size=3, max_size=3))
    def test_round_trip_shapes(self, n, lengths):
        rng = np.random.default_rng(n)
        scales = tuple(rng.normal(size=(n, L)).astype(np.float32) for L in lengths)
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "c.bin")
            write_cache(path, "HSV", scales)
            back = read_cache(path)
        for a, b in zip(scales, back.scales):
            np.testing.assert_array_equal(a, b)
