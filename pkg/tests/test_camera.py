import numpy as np
import pytest

from occlusim import (
    OverlayLayer,
    RngStream,
    apply_dirt,
    apply_scratch,
    apply_soiling,
    apply_water_blur,
    gaussian_kernel,
    generate_dirt_layers,
)
from occlusim.camera import (
    DIRT_LAYER_AMPLITUDES,
    droplet_blur_kernel,
    droplet_overlay,
    grid_cells,
    identity_kernel,
    round_half_away,
    separable_gaussian_blur,
)
from occlusim.errors import ParameterError, ShapeError
from occlusim.textures import procedural_scratch_overlay, procedural_soiling_mask

from conftest import make_image
from oracles import conv2d_replicate


class TestRounding:
    def test_half_away_from_zero(self):
        values = np.array([0.5, 1.5, 2.4, 2.5, 76.5, -0.5])
        assert np.array_equal(round_half_away(values), [1.0, 2.0, 2.0, 3.0, 77.0, -1.0])


class TestDirt:
    def test_grid_is_ten_by_ten(self):
        cells = grid_cells(100, 100)
        assert len(cells) == 100
        assert all((y1 - y0, x1 - x0) == (10, 10) for y0, y1, x0, x1 in cells)

    def test_layers_deterministic(self):
        img = make_image(1)
        a = generate_dirt_layers(img, RngStream(44))
        b = generate_dirt_layers(img, RngStream(44))
        for la, lb in zip(a, b):
            assert np.array_equal(la, lb)

    def test_black_image_damps_layers(self):
        # brightness weight bottoms out at 0.25, scaling every stratum down
        black = np.zeros((100, 100, 3), np.uint8)
        layers = generate_dirt_layers(black, RngStream(3))
        for layer, amplitude in zip(layers, DIRT_LAYER_AMPLITUDES):
            assert layer.min() >= 0.0
            assert layer.max() <= 0.25 * amplitude + 1e-9

    def test_bright_image_stronger_than_black(self):
        black = np.zeros((100, 100, 3), np.uint8)
        white = np.full((100, 100, 3), 255, np.uint8)
        dark_layers = generate_dirt_layers(black, RngStream(3))
        bright_layers = generate_dirt_layers(white, RngStream(3))
        assert sum(l.max() for l in bright_layers) > 2 * sum(l.max() for l in dark_layers)

    def test_full_density_covers_grid(self):
        img = make_image(2, 100, 100)
        layers = generate_dirt_layers(img, RngStream(7), density=1.0)
        total = sum(layers)
        occupied = sum(1 for y0, y1, x0, x1 in grid_cells(100, 100)
                       if total[y0:y1, x0:x1].max() > 0)
        assert occupied >= 95

    def test_opacity_zero_identity(self):
        img = make_image(4)
        assert np.array_equal(apply_dirt(img, 0.0, RngStream(5)), img)

    def test_white_saturates(self):
        white = np.full((50, 50, 3), 255, np.uint8)
        assert np.array_equal(apply_dirt(white, 0.7, RngStream(5)), white)

    def test_single_pixel_hand_value(self):
        # 0.3 * 255 = 76.5 rounds away from zero to 77
        layers = [np.zeros((4, 4)) for _ in range(3)]
        layers[0][1, 2] = 255.0
        out = apply_dirt(np.zeros((4, 4, 3), np.uint8), 0.3, RngStream(0), layers=layers)
        assert out[1, 2, 0] == 77
        assert out[0, 0, 0] == 0

    def test_deterministic_output(self):
        img = make_image(6)
        a = apply_dirt(img, 0.2, RngStream(10))
        b = apply_dirt(img, 0.2, RngStream(10))
        assert a.tobytes() == b.tobytes()

    def test_rejects_bad_opacity(self):
        with pytest.raises(ParameterError):
            apply_dirt(make_image(0), 1.2, RngStream(0))

    def test_tint_shades_channels(self):
        layers = [np.zeros((4, 4)) for _ in range(3)]
        layers[0][2, 2] = 200.0
        out = apply_dirt(np.zeros((4, 4, 3), np.uint8), 0.5, RngStream(0),
                         layers=layers, tint=(1.0, 0.8, 0.6))
        assert tuple(out[2, 2]) == (100, 80, 60)
        with pytest.raises(ParameterError):
            apply_dirt(make_image(0), 0.2, RngStream(0), tint=(1.0, 2.0, 0.5))


class TestKernels:
    def test_gaussian_normalized(self):
        for size, sigma in ((3, 0.5), (5, 1.0), (11, 1.5), (15, 2.5)):
            assert abs(gaussian_kernel(size, sigma).sum() - 1.0) < 1e-9

    def test_gaussian_tiny_sigma_is_delta(self):
        k = gaussian_kernel(3, 1e-3)
        assert k[1, 1] == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_center_dominates_and_symmetric(self):
        k = gaussian_kernel(5, 1.0)
        assert k[2, 2] == k.max()
        assert np.allclose(k, np.rot90(k))
        assert np.allclose(k, np.fliplr(k))

    def test_rejects_even_or_bad_sigma(self):
        with pytest.raises(ParameterError):
            gaussian_kernel(4, 1.0)
        with pytest.raises(ParameterError):
            gaussian_kernel(5, 0.0)

    def test_droplet_kernel_normalized(self):
        for seed in range(5):
            k = droplet_blur_kernel(RngStream(seed))
            assert k.shape == (15, 15)
            assert abs(k.sum() - 1.0) < 1e-9
            assert k.min() >= 0.0

    def test_separable_matches_direct_conv(self):
        plane = make_image(8, 24, 30).astype(np.float64).mean(axis=2)
        ours = separable_gaussian_blur(plane, 9, 1.5)
        reference = conv2d_replicate(plane, gaussian_kernel(9, 1.5))
        assert np.allclose(ours, reference, atol=1e-9)


class TestWaterBlur:
    def test_identity_kernel_zero_alpha(self):
        img = make_image(11)
        out = apply_water_blur(img, 0.0, RngStream(1), kernel=identity_kernel(),
                               overlay=np.zeros((*img.shape[:2], 3)))
        assert np.array_equal(out, img)

    def test_alpha_one_returns_overlay(self):
        img = make_image(12)
        overlay = np.full((*img.shape[:2], 3), 200.0)
        out = apply_water_blur(img, 1.0, RngStream(1), kernel=identity_kernel(3),
                               overlay=overlay)
        assert np.all(out == 200)

    def test_constant_blend_value(self):
        # v=100, o=200, alpha=0.2 -> 120 under any normalized kernel
        img = np.full((20, 24, 3), 100, np.uint8)
        overlay = np.full((20, 24, 3), 200.0)
        out = apply_water_blur(img, 0.2, RngStream(2),
                               kernel=droplet_blur_kernel(RngStream(2)), overlay=overlay)
        assert np.all(out == 120)

    def test_matches_direct_convolution_oracle(self):
        img = make_image(13, 20, 26)
        kernel = droplet_blur_kernel(RngStream(3), size=7)
        overlay = np.full((20, 26, 3), 150.0)
        out = apply_water_blur(img, 0.25, RngStream(0), kernel=kernel, overlay=overlay)
        expected = np.empty(img.shape, dtype=np.float64)
        for c in range(3):
            expected[:, :, c] = conv2d_replicate(img[:, :, c], kernel)
        expected = 0.75 * expected + 0.25 * overlay
        assert np.array_equal(out, round_half_away(expected).astype(np.uint8))

    def test_convexity_needs_no_clipping(self):
        img = make_image(14)
        kernel = droplet_blur_kernel(RngStream(5))
        overlay = droplet_overlay(img.shape[:2], RngStream(6))
        out = apply_water_blur(img, 0.3, RngStream(0), kernel=kernel, overlay=overlay)
        bound = max(float(img.max()), float(overlay.max()))
        assert out.max() <= np.ceil(bound)

    def test_deterministic(self):
        img = make_image(15)
        a = apply_water_blur(img, 0.2, RngStream(21))
        b = apply_water_blur(img, 0.2, RngStream(21))
        assert a.tobytes() == b.tobytes()

    def test_rejects_unnormalized_kernel(self):
        with pytest.raises(ParameterError):
            apply_water_blur(make_image(0), 0.2, RngStream(0),
                             kernel=np.ones((3, 3)), overlay=np.zeros((64, 96, 3)))

    def test_rejects_negative_kernel_weights(self):
        sharpen = np.array([[0.0, -0.5, 0.0], [-0.5, 3.0, -0.5], [0.0, -0.5, 0.0]])
        with pytest.raises(ParameterError, match="nonnegative"):
            apply_water_blur(make_image(0), 0.0, RngStream(0),
                             kernel=sharpen, overlay=np.zeros((64, 96, 3)))


class TestScratch:
    def test_zero_alpha_identity(self):
        img = make_image(16)
        overlay = OverlayLayer(color=np.full((*img.shape[:2], 3), 200.0),
                               alpha=np.zeros(img.shape[:2]))
        assert np.array_equal(apply_scratch(img, overlay), img)

    def test_alpha_one_pixel(self):
        img = make_image(17)
        alpha = np.zeros(img.shape[:2])
        alpha[5, 5] = 1.0
        overlay = OverlayLayer(color=np.full((*img.shape[:2], 3), 211.0), alpha=alpha)
        out = apply_scratch(img, overlay)
        assert tuple(out[5, 5]) == (211, 211, 211)
        out[5, 5] = img[5, 5]
        assert np.array_equal(out, img)

    def test_half_blend_value(self):
        img = np.full((12, 12, 3), 100, np.uint8)
        overlay = OverlayLayer(color=np.full((12, 12, 3), 200.0),
                               alpha=np.full((12, 12), 0.5))
        assert np.all(apply_scratch(img, overlay) == 150)

    def test_dimension_mismatch(self):
        overlay = OverlayLayer(color=np.zeros((10, 10, 3)), alpha=np.zeros((10, 10)))
        with pytest.raises(ShapeError):
            apply_scratch(make_image(0), overlay)

    def test_procedural_overlay_valid(self):
        overlay = procedural_scratch_overlay((64, 96), RngStream(30), density=1.0)
        assert overlay.alpha.min() >= 0.0 and overlay.alpha.max() <= 1.0
        assert overlay.alpha.max() > 0.1  # some visible scratch ink
        again = procedural_scratch_overlay((64, 96), RngStream(30), density=1.0)
        assert np.array_equal(overlay.alpha, again.alpha)


class TestSoiling:
    def test_zero_mask_identity(self):
        img = make_image(18)
        out = apply_soiling(img, np.zeros(img.shape[:2], np.uint8), 15)
        assert np.array_equal(out, img)

    def test_constant_image_preserved(self):
        img = np.full((30, 30, 3), 137, np.uint8)
        out = apply_soiling(img, np.ones((30, 30), np.uint8), 15)
        assert np.all(out == 137)

    def test_interior_equals_plain_blur(self):
        # deep inside an all-ones mask the result is just the Gaussian blur
        img = make_image(19, 48, 48)
        mask = np.ones((48, 48), np.uint8)
        size, sigma = 15, 15 / 6.0
        out = apply_soiling(img, mask, size)
        expected = np.empty(img.shape, dtype=np.float64)
        for c in range(3):
            expected[:, :, c] = conv2d_replicate(img[:, :, c].astype(np.float64),
                                                 gaussian_kernel(size, sigma))
        quantized = np.clip(round_half_away(expected), 0, 255).astype(np.uint8)
        inner = slice(size, -size)
        assert np.array_equal(out[inner, inner], quantized[inner, inner])

    def test_even_kernel_rejected(self):
        with pytest.raises(ParameterError):
            apply_soiling(make_image(0), np.zeros((64, 96), np.uint8), 16)

    def test_nonbinary_mask_rejected(self):
        mask = np.full((64, 96), 0.5)
        with pytest.raises(ParameterError):
            apply_soiling(make_image(0), mask, 15)

    def test_kernel_larger_than_image(self):
        img = make_image(20, 40, 40)
        mask = procedural_soiling_mask((40, 40), RngStream(9))
        out = apply_soiling(img, mask, 101)
        assert out.shape == img.shape

    def test_procedural_mask_binary_and_seeded(self):
        mask = procedural_soiling_mask((64, 96), RngStream(40))
        assert set(np.unique(mask)) <= {0, 1}
        coverage = mask.mean()
        assert 0.2 < coverage < 0.5
        assert np.array_equal(mask, procedural_soiling_mask((64, 96), RngStream(40)))


class TestRangeSafety:
    @pytest.mark.parametrize("seed", range(4))
    def test_all_ops_stay_in_range(self, seed):
        img = make_image(seed, 32 + seed, 40 + seed)
        rng = RngStream(seed)
        outputs = [
            apply_dirt(img, 0.3, rng.child("dirt")),
            apply_water_blur(img, 0.3, rng.child("water")),
            apply_scratch(img, procedural_scratch_overlay(img.shape[:2], rng.child("s"))),
            apply_soiling(img, procedural_soiling_mask(img.shape[:2], rng.child("m")), 15),
        ]
        for out in outputs:
            assert out.dtype == np.uint8
            assert out.shape == img.shape
