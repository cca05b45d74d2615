import math

import numpy as np
import pytest

from chanrecon import (DenoiserCheckpoint, RGBImage, denoise_step, forward_noise,
                       forward_step, make_schedule, predict_x0, reconstruct,
                       sample_images, sample_noise)
from chanrecon.diffusion import reconstruct_batch
from chanrecon.errors import CheckpointError, DimensionError
from conftest import constant_eps_checkpoint, random_rgb, zero_eps_checkpoint


class TestForwardStep:
    def test_zero_noise_mean(self):
        sched = make_schedule(10, 0.05, 0.3)
        x = np.full((4, 4, 3), 0.8)
        out = forward_step(x, 3, sched, np.zeros_like(x))
        assert np.allclose(out, math.sqrt(1.0 - sched.beta(3)) * x, rtol=0, atol=0)

    def test_degenerate_schedule_is_identity(self):
        sched = make_schedule(1, 1e-12, 1e-12)
        x = np.random.default_rng(0).random((4, 4, 3))
        out = forward_step(x, 1, sched, np.zeros_like(x))
        assert np.allclose(out, x, atol=1e-9)

    def test_out_of_range_t(self):
        sched = make_schedule(5, 0.1, 0.2)
        x = np.zeros((2, 2, 3))
        with pytest.raises(IndexError):
            forward_step(x, 0, sched, x)
        with pytest.raises(IndexError):
            forward_step(x, 6, sched, x)

    def test_shape_mismatch(self):
        sched = make_schedule(5, 0.1, 0.2)
        with pytest.raises(DimensionError):
            forward_step(np.zeros((2, 2, 3)), 1, sched, np.zeros((3, 3, 3)))

    def test_monte_carlo_variance(self):
        # empirical per-pixel variance over many draws ~ beta_t within 3 SE
        sched = make_schedule(10, 0.05, 0.3)
        t, n = 4, 100_000
        beta = sched.beta(t)
        rng = np.random.default_rng(7)
        x = np.tile(np.array([0.2, 0.5, 0.9, 0.4]), (n, 1))
        out = forward_step(x, t, sched, rng.standard_normal(x.shape))
        var = out.var(axis=0, ddof=1)
        se = beta * math.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(var - beta) < 3 * se)
        assert np.allclose(out.mean(axis=0), math.sqrt(1 - beta) * x[0],
                           atol=3 * math.sqrt(beta / n) + 1e-12)


class TestForwardNoise:
    def test_scalar_example(self):
        # betas [0.1, 0.2] -> abar_2 = 0.72; sqrt(0.72) = 0.8485281374...
        sched = make_schedule(2, 0.1, 0.2)
        out = forward_noise(np.array([1.0]), 2, sched, np.array([0.0]))
        assert out[0] == pytest.approx(math.sqrt(0.72), abs=1e-12)
        assert out[0] == pytest.approx(0.848528137423857, abs=1e-9)

    def test_t_zero_identity(self):
        sched = make_schedule(5, 0.1, 0.2)
        x = np.random.default_rng(1).random((4, 4, 3))
        out = forward_noise(x, 0, sched, np.zeros_like(x))
        assert np.array_equal(out, x)

    def test_monte_carlo_mean_variance(self):
        sched = make_schedule(10, 0.05, 0.3)
        t, n = 7, 100_000
        abar = sched.alpha_bar(t)
        rng = np.random.default_rng(11)
        x = np.tile(np.array([0.3, 0.6, 0.9]), (n, 1))
        out = forward_noise(x, t, sched, rng.standard_normal(x.shape))
        target_var = 1.0 - abar
        var = out.var(axis=0, ddof=1)
        assert np.all(np.abs(var - target_var) < 3 * target_var * math.sqrt(2 / (n - 1)))
        mean_se = math.sqrt(target_var / n)
        assert np.all(np.abs(out.mean(axis=0) - math.sqrt(abar) * x[0]) < 3 * mean_se)

    def test_closed_form_matches_sequential_composition(self):
        # distributional agreement between Eq.-(5)-style jumps and step chains
        sched = make_schedule(10, 0.02, 0.3)
        rng = np.random.default_rng(23)
        n = 10_000
        for t in (1, 4, 9):
            x0 = np.tile(rng.random(6), (n, 1))
            seq = x0.copy()
            for step in range(1, t + 1):
                seq = forward_step(seq, step, sched, rng.standard_normal(seq.shape))
            closed = forward_noise(x0, t, sched, rng.standard_normal(x0.shape))
            target_var = 1.0 - sched.alpha_bar(t)
            se_mean = math.sqrt(target_var / n)
            se_var = target_var * math.sqrt(2.0 / (n - 1))
            assert np.all(np.abs(seq.mean(0) - closed.mean(0)) < 3 * 1.415 * se_mean)
            assert np.all(np.abs(seq.var(0, ddof=1) - closed.var(0, ddof=1)) < 3 * 1.415 * se_var)


class TestPredictX0:
    def test_oracle_inversion_T100(self):
        sched = make_schedule(100, 1e-4, 0.02)
        rng = np.random.default_rng(5)
        x0 = rng.random((8, 8, 3))
        for t in range(1, 101):
            eps = rng.standard_normal(x0.shape)
            x_t = forward_noise(x0, t, sched, eps)
            rec = predict_x0(x_t, t, eps, sched)
            assert np.max(np.abs(rec - x0)) <= 1e-5

    def test_oracle_inversion_T1000(self):
        sched = make_schedule(1000, 1e-4, 0.02)
        rng = np.random.default_rng(6)
        x0 = rng.random((4, 4, 3))
        for t in (1, 250, 500, 1000):
            eps = rng.standard_normal(x0.shape)
            rec = predict_x0(forward_noise(x0, t, sched, eps), t, eps, sched)
            assert np.max(np.abs(rec - x0)) <= 1e-5


class TestDenoiseStep:
    def test_zero_eps_formula_reduction(self):
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        x = np.random.default_rng(2).random((4, 4, 3))
        out = denoise_step(x, 3, ckpt, sched, noise=None)
        assert np.allclose(out, x / math.sqrt(1.0 - sched.beta(3)), atol=1e-7)

    def test_one_step_reduction_at_t1(self):
        # at t == 1 the noise term is dropped even if noise is supplied
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        x = np.random.default_rng(3).random((4, 4, 3))
        noisy = denoise_step(x, 1, ckpt, sched, noise=np.ones_like(x))
        assert np.allclose(noisy, x / math.sqrt(1.0 - sched.beta(1)), atol=1e-7)

    def test_exact_eps_recovers_x0_through_chain_formula(self):
        # with the true eps available, the one-shot inversion is exact
        sched = make_schedule(50, 1e-3, 0.05)
        rng = np.random.default_rng(4)
        x0 = rng.random((6, 6, 3))
        eps = rng.standard_normal(x0.shape)
        t = 30
        x_t = forward_noise(x0, t, sched, eps)
        ckpt = constant_eps_checkpoint(sched, eps)
        mu = denoise_step(x_t, t, ckpt, sched, noise=None)
        beta = sched.beta(t)
        expected = (x_t - beta / math.sqrt(1 - sched.alpha_bar(t)) * eps) / math.sqrt(1 - beta)
        assert np.allclose(mu, expected, atol=1e-5)
        assert np.max(np.abs(predict_x0(x_t, t, eps, sched) - x0)) <= 1e-6

    def test_monte_carlo_output_variance(self):
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        t, n = 5, 50_000
        beta = sched.beta(t)
        rng = np.random.default_rng(8)
        x = np.zeros((n, 1, 1, 3))
        out = denoise_step(x, t, ckpt, sched, noise=rng.standard_normal(x.shape))
        var = out.var(axis=0, ddof=1)
        assert np.all(np.abs(var - beta) < 3 * beta * math.sqrt(2 / (n - 1)))

    def test_fingerprint_mismatch(self):
        sched_a = make_schedule(10, 0.05, 0.3)
        sched_b = make_schedule(10, 0.05, 0.31)
        ckpt = zero_eps_checkpoint(sched_a)
        with pytest.raises(CheckpointError):
            denoise_step(np.zeros((2, 2, 3)), 1, ckpt, sched_b)


class TestReconstruct:
    def test_composition_with_zero_eps_model(self):
        # forward noising to t_star=1 then one noiseless reverse step undoes
        # the scaling exactly: out = clip(x + sqrt(beta/(1-beta)) * eps0)
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        rng = np.random.default_rng(9)
        img = random_rgb(rng)
        seed = 424242
        out = reconstruct(img, ckpt, sched, t_star=1, seed=seed)
        eps0 = np.random.default_rng(seed).standard_normal((1,) + img.data.shape)[0]
        beta = sched.beta(1)
        expected = np.clip(img.data + math.sqrt(beta / (1 - beta)) * eps0, 0.0, 1.0)
        assert np.allclose(out.data, expected, atol=1e-6)

    def test_deterministic_for_fixed_seed(self):
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        img = random_rgb(np.random.default_rng(10))
        a = reconstruct(img, ckpt, sched, t_star=5, seed=99)
        b = reconstruct(img, ckpt, sched, t_star=5, seed=99)
        assert np.array_equal(a.data, b.data)

    def test_output_satisfies_image_invariants(self):
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        img = random_rgb(np.random.default_rng(12))
        out = reconstruct(img, ckpt, sched, t_star=10, seed=5)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0
        assert out.data.shape == img.data.shape

    def test_batch_independent_of_composition(self):
        # same (image, seed) gives the same map whether batched alone or not
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        rng = np.random.default_rng(13)
        imgs = np.stack([rng.random((8, 8, 3)) for _ in range(3)])
        joint = reconstruct_batch(imgs, ckpt, sched, 5, [1, 2, 3])
        solo = reconstruct_batch(imgs[1:2], ckpt, sched, 5, [2])
        assert np.allclose(joint[1], solo[0], atol=1e-12)

    def test_t_star_range_checked(self):
        sched = make_schedule(10, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        img = random_rgb(np.random.default_rng(14))
        with pytest.raises(IndexError):
            reconstruct(img, ckpt, sched, t_star=0, seed=1)
        with pytest.raises(IndexError):
            reconstruct(img, ckpt, sched, t_star=11, seed=1)


class TestSampling:
    def test_sample_images_shape_range_determinism(self):
        sched = make_schedule(5, 0.05, 0.3)
        ckpt = zero_eps_checkpoint(sched)
        a = sample_images(ckpt, sched, 2, 8, seed=3)
        b = sample_images(ckpt, sched, 2, 8, seed=3)
        assert len(a) == 2
        for img_a, img_b in zip(a, b):
            assert img_a.data.shape == (8, 8, 3)
            assert np.array_equal(img_a.data, img_b.data)


class TestNoiseTensor:
    def test_seeded_noise_reproducible(self):
        a = sample_noise((4, 4, 3), seed=7)
        b = sample_noise((4, 4, 3), seed=7)
        assert np.array_equal(a.data, b.data)
        assert a.seed == 7

    def test_ops_accept_noise_tensor(self):
        sched = make_schedule(3, 0.1, 0.2)
        x = np.zeros((4, 4, 3))
        noise = sample_noise(x.shape, seed=1)
        out = forward_noise(x, 2, sched, noise)
        assert np.allclose(out, math.sqrt(1 - sched.alpha_bar(2)) * noise.data)
