"""Tests for image tensors, preprocessing, and saliency-map utilities."""

import numpy as np
import pytest

from perturbeval import (
    DataError,
    DimensionError,
    ParameterError,
    Preprocessor,
    SaliencyMap,
    as_image,
    inverse_preprocess,
    load_saliency,
    normalize_saliency,
    preprocess,
    read_image_png,
    resize_image,
    saliency_l2_distance,
    save_saliency_npy,
    write_image_png,
)


class TestPreprocess:
    def test_zero_image_shifts_to_negated_mean(self):
        g = Preprocessor((100, 110, 120))
        out = preprocess(np.zeros((2, 2, 3)), g)
        assert np.array_equal(out[0, 0], [-100, -110, -120])
        assert out.shape == (2, 2, 3)

    def test_mean_image_maps_to_zero(self):
        g = Preprocessor((100, 110, 120))
        x = np.broadcast_to([100.0, 110.0, 120.0], (3, 5, 3))
        assert np.all(preprocess(x, g) == 0.0)

    def test_roundtrip_identity(self, rng):
        g = Preprocessor((10, 20, 30), (2.0, 0.5, 1e-6))
        x = rng.uniform(0, 255, (4, 4, 3))
        assert np.abs(inverse_preprocess(preprocess(x, g), g) - x).max() < 1e-9
        assert np.abs(preprocess(inverse_preprocess(x, g), g) - x).max() < 1e-9

    def test_inverse_of_zeros_is_mean(self):
        g = Preprocessor((100, 110, 120))
        out = inverse_preprocess(np.zeros((2, 2, 3)), g)
        assert np.array_equal(out[1, 1], [100, 110, 120])

    def test_inverse_divides_by_scale(self):
        g = Preprocessor((1, 2, 3), (2.0, 2.0, 2.0))
        out = inverse_preprocess(np.full((1, 1, 3), 4.0), g)
        assert np.array_equal(out[0, 0], [4 / 2 + 1, 4 / 2 + 2, 4 / 2 + 3])

    def test_scale_must_be_positive(self):
        with pytest.raises(ParameterError):
            Preprocessor((0, 0, 0), (1.0, 0.0, 1.0))

    def test_rejects_bad_shape(self):
        with pytest.raises(DimensionError):
            as_image(np.zeros((4, 4)))


class TestSaliencyDistance:
    def test_identical_maps_are_at_distance_zero(self, rng):
        s = SaliencyMap(rng.normal(size=(5, 7)))
        assert saliency_l2_distance(s, s) == 0.0

    def test_pythagorean_example(self):
        a = SaliencyMap(np.array([[0.0, 0.0]]))
        b = SaliencyMap(np.array([[3.0, 4.0]]))
        assert saliency_l2_distance(a, b) == 5.0

    def test_metric_axioms_on_random_triples(self, rng):
        for _ in range(25):
            a, b, c = (SaliencyMap(rng.normal(size=(4, 4))) for _ in range(3))
            dab = saliency_l2_distance(a, b)
            dba = saliency_l2_distance(b, a)
            assert dab >= 0.0
            assert dab == dba
            assert dab <= saliency_l2_distance(a, c) + saliency_l2_distance(c, b) + 1e-12

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            saliency_l2_distance(SaliencyMap(np.zeros((2, 2))), SaliencyMap(np.zeros((2, 3))))

    def test_rejects_nonfinite_values(self):
        with pytest.raises(DataError):
            SaliencyMap(np.array([[np.nan, 1.0]]))


class TestNormalize:
    def test_affine_map(self):
        s = normalize_saliency(SaliencyMap(np.array([[2.0, 4.0, 6.0]])))
        assert np.array_equal(s.values, [[0.0, 0.5, 1.0]])

    def test_constant_map_goes_to_half(self):
        s = normalize_saliency(SaliencyMap(np.full((3, 3), 7.0)))
        assert np.all(s.values == 0.5)

    def test_full_range_map_unchanged(self):
        v = np.array([[0.0, 0.25], [0.75, 1.0]])
        assert np.array_equal(normalize_saliency(SaliencyMap(v)).values, v)

    def test_bounds_and_extrema_preserved(self, rng):
        for _ in range(20):
            v = rng.normal(size=(6, 6))
            out = normalize_saliency(SaliencyMap(v)).values
            assert out.min() >= 0.0 and out.max() <= 1.0
            assert np.argmax(out) == np.argmax(v)
            assert np.argmin(out) == np.argmin(v)


class TestResize:
    def test_same_size_is_copy(self, random_image):
        out = resize_image(random_image, 8, 8)
        assert np.array_equal(out, random_image)

    def test_constant_image_stays_constant(self):
        x = np.full((5, 5, 3), 42.0)
        for method in ("nearest", "bilinear"):
            out = resize_image(x, 9, 7, method)
            assert out.shape == (9, 7, 3)
            assert np.allclose(out, 42.0)

    def test_unknown_method_rejected(self, random_image):
        with pytest.raises(ParameterError):
            resize_image(random_image, 4, 4, "bicubic")


class TestFileIO:
    def test_png_roundtrip_exact_for_integer_pixels(self, tmp_path, rng):
        x = rng.integers(0, 256, size=(6, 5, 3)).astype(np.float64)
        path = tmp_path / "img.png"
        write_image_png(path, x)
        assert np.array_equal(read_image_png(path), x)

    def test_png_write_quantizes(self, tmp_path):
        path = tmp_path / "img.png"
        write_image_png(path, np.full((2, 2, 3), 3.6))
        assert np.all(read_image_png(path) == 4.0)

    def test_npy_roundtrip_and_dtype(self, tmp_path, rng):
        s = SaliencyMap(rng.normal(size=(4, 6)))
        path = tmp_path / "map.npy"
        save_saliency_npy(path, s)
        loaded = load_saliency(path)
        assert np.array_equal(loaded.values, s.values)
        assert np.load(path).dtype == np.dtype("<f8")

    def test_grayscale_png_ingestion(self, tmp_path):
        gray = np.arange(12, dtype=np.float64).reshape(3, 4) * 20
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
        path = tmp_path / "gray.png"
        write_image_png(path, rgb)
        loaded = load_saliency(path)
        assert loaded.shape == (3, 4)
        assert np.array_equal(loaded.values, gray)
