import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sim2surg.msssim import (
    CANONICAL_SCALE_WEIGHTS,
    MsSsimConfig,
    SsimConstants,
    brightness,
    gaussian_window,
    ms_ssim,
    ms_ssim_loss,
    ssim,
    ssim_components,
)

from gradcheck import max_relative_grad_error
from oracles import (
    naive_brightness,
    naive_gaussian_window,
    naive_ms_ssim,
    naive_ssim_components,
)


def rand_image(rng, h=64, w=64, channels=None):
    shape = (h, w) if channels is None else (h, w, channels)
    return rng.random(shape)


class TestGaussianWindow:
    def test_size_one_is_unit_weight(self):
        win = gaussian_window(1, 1.5)
        assert win.weights.shape == (1, 1)
        assert win.weights[0, 0] == pytest.approx(1.0, abs=1e-12)

    @given(
        size=st.integers(min_value=0, max_value=15).map(lambda k: 2 * k + 1),
        sigma=st.floats(min_value=0.1, max_value=10.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_weights_sum_to_one(self, size, sigma):
        win = gaussian_window(size, sigma)
        assert abs(win.weights.sum() - 1.0) <= 1e-9

    def test_matches_pointwise_evaluation(self):
        win = gaussian_window(11, 1.5)
        np.testing.assert_allclose(win.weights, naive_gaussian_window(11, 1.5), atol=1e-12)

    def test_symmetries(self):
        w = gaussian_window(9, 2.0).weights
        np.testing.assert_array_equal(w, w[::-1, :])
        np.testing.assert_array_equal(w, w[:, ::-1])
        np.testing.assert_array_equal(w, w.T)

    @pytest.mark.parametrize("size,sigma", [(4, 1.5), (0, 1.5), (-3, 1.5), (11, 0.0), (11, -1.0)])
    def test_rejects_bad_parameters(self, size, sigma):
        with pytest.raises(ValueError):
            gaussian_window(size, sigma)


class TestBrightness:
    def test_gray_pixel_passthrough(self):
        img = np.full((4, 4, 3), 0.6)
        np.testing.assert_allclose(brightness(img), np.full((4, 4), 0.6), atol=1e-12)

    def test_pure_red_is_one_third(self):
        img = np.zeros((2, 2, 3))
        img[..., 0] = 1.0
        np.testing.assert_allclose(brightness(img), np.full((2, 2), 1 / 3), atol=1e-12)

    def test_matches_pixel_loop_oracle(self):
        rng = np.random.default_rng(0)
        img = rand_image(rng, 13, 7, 3)
        np.testing.assert_allclose(brightness(img), naive_brightness(img), atol=1e-12)

    def test_torch_input_stays_torch(self):
        out = brightness(torch.rand(5, 5, 3, dtype=torch.float64))
        assert isinstance(out, torch.Tensor) and out.shape == (5, 5)

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(ValueError):
            brightness(np.zeros((4, 4, 4)))


class TestSsimComponents:
    def test_identical_inputs_give_unit_maps(self):
        rng = np.random.default_rng(1)
        x = rand_image(rng, 32, 32)
        l_map, cs_map = ssim_components(x, x, gaussian_window(11, 1.5))
        np.testing.assert_allclose(l_map, 1.0, atol=1e-9)
        np.testing.assert_allclose(cs_map, 1.0, atol=1e-9)

    def test_constant_images_closed_form(self):
        consts = SsimConstants()
        x = np.full((24, 24), 0.25)
        y = np.full((24, 24), 0.75)
        l_map, cs_map = ssim_components(x, y, gaussian_window(11, 1.5), consts)
        l_expected = (2 * 0.25 * 0.75 + consts.c1) / (0.25**2 + 0.75**2 + consts.c1)
        np.testing.assert_allclose(cs_map, 1.0, atol=1e-9)
        np.testing.assert_allclose(l_map, l_expected, atol=1e-9)

    def test_matches_sliding_window_oracle(self):
        rng = np.random.default_rng(2)
        consts = SsimConstants()
        win = gaussian_window(11, 1.5)
        x, y = rand_image(rng, 48, 40), rand_image(rng, 48, 40)
        l_map, cs_map = ssim_components(x, y, win, consts)
        l_ref, cs_ref = naive_ssim_components(x, y, win.weights, consts.c1, consts.c2)
        assert l_map.shape == (38, 30)
        np.testing.assert_allclose(l_map, l_ref, atol=1e-7)
        np.testing.assert_allclose(cs_map, cs_ref, atol=1e-7)

    def test_rejects_shape_mismatch_and_small_images(self):
        win = gaussian_window(11, 1.5)
        with pytest.raises(ValueError):
            ssim_components(np.zeros((16, 16)), np.zeros((16, 17)), win)
        with pytest.raises(ValueError):
            ssim_components(np.zeros((8, 8)), np.zeros((8, 8)), win)


class TestMsSsim:
    def test_identity_over_random_images(self):
        rng = np.random.default_rng(3)
        config = MsSsimConfig().fit_to(64, 64)
        for _ in range(100):
            x = rand_image(rng)
            assert ms_ssim(x, x, config) == pytest.approx(1.0, abs=1e-6)

    def test_constant_images_reduce_to_luminance_power(self):
        consts = SsimConstants()
        config = MsSsimConfig()
        x = np.full((192, 192), 0.25)
        y = np.full((192, 192), 0.75)
        l_term = (2 * 0.25 * 0.75 + consts.c1) / (0.25**2 + 0.75**2 + consts.c1)
        expected = l_term ** CANONICAL_SCALE_WEIGHTS[-1]
        assert ms_ssim(x, y, config) == pytest.approx(expected, abs=1e-9)

    def test_matches_explicit_pyramid_oracle(self):
        rng = np.random.default_rng(4)
        config = MsSsimConfig().fit_to(64, 64)
        assert config.num_scales == 3
        for _ in range(3):
            x, y = rand_image(rng), rand_image(rng)
            ref = naive_ms_ssim(
                x, y, config.window.weights, config.scale_weights,
                config.constants.c1, config.constants.c2,
            )
            assert ms_ssim(x, y, config) == pytest.approx(ref, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        config = MsSsimConfig().fit_to(64, 64)
        for _ in range(5):
            x, y = rand_image(rng), rand_image(rng)
            assert ms_ssim(x, y, config) == pytest.approx(ms_ssim(y, x, config), abs=1e-9)

    def test_monotone_degradation_toward_noise(self):
        config = MsSsimConfig().fit_to(64, 64)
        ts = [0.0, 0.25, 0.5, 0.75, 1.0]
        curves = np.zeros(len(ts))
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            x, noise = rand_image(rng), rand_image(rng)
            curves += [ms_ssim(x, (1 - t) * x + t * noise, config) for t in ts]
        curves /= 10
        assert np.all(np.diff(curves) <= 1e-12)

    def test_rejects_images_too_small_for_scales(self):
        with pytest.raises(ValueError):
            ms_ssim(np.zeros((64, 64)), np.zeros((64, 64)), MsSsimConfig())

    def test_fit_to_reduces_scales_and_renormalizes(self):
        config = MsSsimConfig().fit_to(64, 64)
        assert config.num_scales == 3
        assert abs(sum(config.scale_weights) - 1.0) <= 1e-9
        ratio = config.scale_weights[1] / config.scale_weights[0]
        assert ratio == pytest.approx(CANONICAL_SCALE_WEIGHTS[1] / CANONICAL_SCALE_WEIGHTS[0])
        assert MsSsimConfig().fit_to(512, 512).num_scales == 5
        with pytest.raises(ValueError):
            MsSsimConfig().fit_to(8, 8)

    def test_single_scale_matches_ssim_factorization(self):
        # With one scale the metric is mean(l)^w * mean(cs)^w with w=1.
        rng = np.random.default_rng(6)
        x, y = rand_image(rng, 32, 32), rand_image(rng, 32, 32)
        config = MsSsimConfig(num_scales=1, scale_weights=(1.0,))
        l_map, cs_map = ssim_components(x, y, config.window, config.constants)
        assert ms_ssim(x, y, config) == pytest.approx(l_map.mean() * cs_map.mean(), abs=1e-9)
        assert 0.0 < ssim(x, y) <= 1.0


class TestMsSsimLoss:
    def test_identical_images_give_zero(self):
        rng = np.random.default_rng(7)
        a = rand_image(rng, 64, 64, 3)
        assert ms_ssim_loss(a, a) == pytest.approx(0.0, abs=1e-6)

    def test_range(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            a, b = rand_image(rng, 64, 64, 3), rand_image(rng, 64, 64, 3)
            assert 0.0 <= ms_ssim_loss(a, b) < 1.0

    def test_batched_matches_per_sample_mean(self):
        rng = np.random.default_rng(9)
        a = torch.from_numpy(rng.random((2, 3, 48, 48)))
        b = torch.from_numpy(rng.random((2, 3, 48, 48)))
        batched = float(ms_ssim_loss(a, b))
        per_sample = np.mean([
            ms_ssim_loss(a[i].permute(1, 2, 0).numpy(), b[i].permute(1, 2, 0).numpy())
            for i in range(2)
        ])
        assert batched == pytest.approx(per_sample, abs=1e-9)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            ms_ssim_loss(np.zeros((32, 32, 3)), np.zeros((32, 33, 3)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        a = torch.from_numpy(rand_image(rng, 24, 24, 3)).requires_grad_(True)
        b = torch.from_numpy(rand_image(rng, 24, 24, 3)).requires_grad_(True)
        err = max_relative_grad_error(
            lambda: ms_ssim_loss(a, b), [a, b], n_coords=150, seed=0
        )
        assert err <= 1e-3
