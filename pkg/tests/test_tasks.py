"""Benchmark operators, perturbations, metrics, toy datasets."""

import numpy as np
import pytest

from sysbridge import linop, tasks
from sysbridge.errors import DimensionError


class TestInpainting:
    def test_square_mask_own_pseudoinverse(self):
        spec = tasks.TaskSpec("inpainting", image_side=4, mask_fraction=0.5, seed=1)
        sys = tasks.build_system(spec)
        assert sys.m == sys.d == 16
        a = linop.materialize(sys)
        np.testing.assert_array_equal(a, linop.materialize_pinv(sys))
        np.testing.assert_array_equal(np.diag(np.diag(a)), a)
        assert int(np.diag(a).sum()) == 8

    def test_reconstruction_equals_measurement(self):
        spec = tasks.TaskSpec("inpainting", image_side=4, mask_fraction=0.25, seed=2)
        sys = tasks.build_system(spec)
        x = np.random.default_rng(0).uniform(size=16)
        y = sys.apply(x)
        np.testing.assert_array_equal(linop.pseudoinverse_reconstruction(sys, y), y)


class TestSuperres:
    def test_constant_image_measurement_and_reconstruction(self):
        spec = tasks.TaskSpec("superres", image_side=8, factor=4)
        sys = tasks.build_system(spec)
        x = np.full(64, 0.37)
        y = sys.apply(x)
        np.testing.assert_allclose(y, 0.37, atol=1e-12)
        np.testing.assert_allclose(linop.pseudoinverse_reconstruction(sys, y), x, atol=1e-12)

    def test_pseudoinverse_is_scaled_transpose(self):
        spec = tasks.TaskSpec("superres", image_side=8, factor=4)
        sys = tasks.build_system(spec)
        a = linop.materialize(sys)
        dense_pinv = linop.pseudoinverse(a)
        np.testing.assert_allclose(dense_pinv, 16.0 * a.T, atol=1e-9)
        np.testing.assert_allclose(linop.materialize_pinv(sys), dense_pinv, atol=1e-9)

    def test_replication_structure(self):
        spec = tasks.TaskSpec("superres", image_side=4, factor=2)
        sys = tasks.build_system(spec)
        y = np.arange(4.0)
        up = sys.apply_pinv(y).reshape(4, 4)
        np.testing.assert_array_equal(up[:2, :2], np.full((2, 2), 0.0))
        np.testing.assert_array_equal(up[2:, 2:], np.full((2, 2), 3.0))

    def test_factor_must_divide_side(self):
        with pytest.raises(ValueError):
            tasks.TaskSpec("superres", image_side=10, factor=4)


class TestTruncatedSvd:
    def test_rank_decreases_with_threshold(self):
        ranks = []
        for tau in (0.0, 0.05, 0.2, 0.5, 1.5):
            spec = tasks.TaskSpec("ct", image_side=4, tau=tau, latent_dim=4, seed=3)
            sys = tasks.build_system(spec)
            ranks.append(int(np.count_nonzero(sys.meta["spectrum_truncated"])))
        assert ranks == sorted(ranks, reverse=True)

    def test_everything_truncated_gives_zero_operator(self):
        spec = tasks.TaskSpec("ct", image_side=4, tau=2.0, latent_dim=4, seed=3)
        sys = tasks.build_system(spec)
        np.testing.assert_allclose(linop.materialize(sys), 0.0, atol=1e-12)

    def test_kept_subspace_reconstruction(self):
        spec = tasks.TaskSpec("ct", image_side=3, tau=0.4, latent_dim=4, seed=4, sigma1_sq=0.0)
        sys = tasks.build_system(spec)
        rng = np.random.default_rng(5)
        x = rng.standard_normal(9)
        recon = linop.pseudoinverse_reconstruction(sys, sys.apply(x))
        np.testing.assert_allclose(recon, linop.project_range(sys, x), atol=1e-9)

    def test_deterministic_given_seed(self):
        spec = tasks.TaskSpec("ct", image_side=4, seed=11)
        a1 = linop.materialize(tasks.build_system(spec))
        a2 = linop.materialize(tasks.build_system(spec))
        np.testing.assert_array_equal(a1, a2)


class TestFourierMask:
    def test_rows_orthonormal(self):
        for side in (4, 8, 16):
            spec = tasks.TaskSpec("mri", image_side=side, lambda1_pct=20, lambda2_pct=30, seed=6)
            sys = tasks.build_system(spec)
            a = linop.materialize(sys)
            np.testing.assert_allclose(a @ a.T, np.eye(sys.m), atol=1e-9)

    def test_pinv_equals_transpose(self):
        spec = tasks.TaskSpec("mri", image_side=8, seed=7)
        sys = tasks.build_system(spec)
        y = np.random.default_rng(8).standard_normal(sys.m)
        np.testing.assert_allclose(sys.apply_pinv(y), sys.apply_transpose(y), atol=1e-12)

    def test_full_sampling_is_invertible(self):
        spec = tasks.TaskSpec("mri", image_side=4, lambda1_pct=100, lambda2_pct=0, sigma2_sq=0.0)
        sys = tasks.build_system(spec)
        assert sys.m == sys.d
        x = np.random.default_rng(9).standard_normal(16)
        np.testing.assert_allclose(
            linop.pseudoinverse_reconstruction(sys, sys.apply(x)), x, atol=1e-9
        )

    def test_lambda_overcommit_rejected(self):
        with pytest.raises(ValueError):
            tasks.TaskSpec("mri", lambda1_pct=80, lambda2_pct=30)

    def test_lower_lambda1_keeps_fewer_low_rows(self):
        # side 16 has enough frequency labels that the percentages do not
        # collide after rounding
        a = tasks.build_system(tasks.TaskSpec("mri", image_side=16, lambda1_pct=16, seed=10))
        b = tasks.build_system(tasks.TaskSpec("mri", image_side=16, lambda1_pct=14, seed=10))
        assert b.meta["n_low_labels"] < a.meta["n_low_labels"]


class TestPerturbations:
    def test_identity_perturbation_reproduces_system(self):
        spec = tasks.TaskSpec("mri", image_side=8, seed=12)
        base = tasks.build_system(spec)
        deployed, _ = tasks.perturb_system(spec, tasks.Perturbation())
        np.testing.assert_array_equal(linop.materialize(base), linop.materialize(deployed))

    def test_gaussian_generator_noise_level(self):
        spec = tasks.TaskSpec("mri", image_side=4, sigma2_sq=1.0, seed=13)
        _, gen = tasks.perturb_system(spec, tasks.Perturbation(noise_var=4.0))
        rng = np.random.default_rng(14)
        x0 = np.zeros((20_000, 16))
        ys = gen(x0, rng)
        assert ys.var() == pytest.approx(4.0, rel=0.05)

    def test_poisson_moments(self):
        spec = tasks.TaskSpec("ct", image_side=3, seed=15)
        _, gen = tasks.perturb_system(
            spec, tasks.Perturbation(noise_model="poisson", poisson_i0=1e4)
        )
        rng = np.random.default_rng(16)
        ys = gen(np.zeros((100_000 // 9, 9)), rng)
        assert ys.mean() == pytest.approx(1e4, rel=0.01)

    def test_poisson_requires_positive_intensity(self):
        with pytest.raises(ValueError):
            tasks.Perturbation(noise_model="poisson", poisson_i0=0.0)

    def test_tau_perturbation_never_raises_rank(self):
        spec = tasks.TaskSpec("ct", image_side=4, tau=0.05, latent_dim=6, seed=17)
        base_rank = int(np.count_nonzero(tasks.build_system(spec).meta["spectrum_truncated"]))
        for tau in (0.1, 0.3, 0.9):
            deployed, _ = tasks.perturb_system(spec, tasks.Perturbation(tau=tau))
            assert int(np.count_nonzero(deployed.meta["spectrum_truncated"])) <= base_rank


class TestMetrics:
    def test_psnr_cap_and_formula(self):
        x = np.full(16, 0.5)
        assert tasks.psnr(x, x) == 100.0
        y = x + 0.1  # mse = 0.01 -> 20 dB
        assert tasks.psnr(x, y) == pytest.approx(20.0)
        assert tasks.psnr(np.zeros(4), np.ones(4)) == pytest.approx(0.0)

    def test_psnr_symmetric(self):
        rng = np.random.default_rng(18)
        a, b = rng.uniform(size=(2, 16))
        assert tasks.psnr(a, b) == tasks.psnr(b, a)

    def test_ssim_identical_images(self):
        img = np.random.default_rng(19).uniform(size=64)
        assert tasks.ssim(img, img) == pytest.approx(1.0)

    def test_ssim_constant_offset_hand_value(self):
        ref = np.full(64, 0.4)
        x = ref + 0.1
        c1 = 0.01 ** 2
        expected = (2 * 0.4 * 0.5 + c1) / (0.4 ** 2 + 0.5 ** 2 + c1)
        assert tasks.ssim(x, ref) == pytest.approx(expected)

    def test_ssim_anticorrelated_negative(self):
        rng = np.random.default_rng(20)
        ref = rng.uniform(size=256)
        assert tasks.ssim(1.0 - ref, ref) < 0.0

    def test_ssim_symmetric(self):
        rng = np.random.default_rng(21)
        a, b = rng.uniform(size=(2, 64))
        assert tasks.ssim(a, b) == pytest.approx(tasks.ssim(b, a))

    def test_ssim_window_validation(self):
        with pytest.raises(DimensionError):
            tasks.ssim(np.zeros(16), np.zeros(16), window=8)


class TestToyDatasets:
    def test_gaussian_mean_within_clt(self):
        data = tasks.make_toy_dataset("gaussian", 100_000, seed=22, mean=np.zeros(3), cov=1.0)
        se = 1.0 / np.sqrt(100_000)
        assert np.all(np.abs(data.mean(axis=0)) < 3 * se)

    def test_mixture_bimodal(self):
        data = tasks.make_toy_dataset(
            "gaussian_mixture", 50_000, seed=23,
            weights=[0.5, 0.5],
            means=[np.array([0.0, 2.0]), np.array([0.0, -2.0])],
            covs=[0.09, 0.09],
        )
        z = data[:, 1]
        assert np.mean(z > 1.0) == pytest.approx(0.5, abs=0.01)
        assert np.mean(np.abs(z) < 0.5) < 0.01

    def test_empty(self):
        assert tasks.make_toy_dataset("gaussian", 0, mean=np.zeros(2), cov=1.0).shape == (0, 2)

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            tasks.make_toy_dataset(
                "gaussian_mixture", 10, weights=[0.7, 0.7],
                means=[np.zeros(1), np.zeros(1)], covs=[1.0, 1.0],
            )

    def test_blobs_range_and_determinism(self):
        a = tasks.make_toy_dataset("image_blobs", 8, seed=24, side=8)
        b = tasks.make_toy_dataset("image_blobs", 8, seed=24, side=8)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (8, 64)
        assert a.min() >= 0.0 and a.max() <= 1.0


def test_system_determinism_across_kinds():
    for spec in (
        tasks.TaskSpec("inpainting", image_side=4, seed=30),
        tasks.TaskSpec("superres", image_side=8),
        tasks.TaskSpec("ct", image_side=4, seed=30),
        tasks.TaskSpec("mri", image_side=4, seed=30),
    ):
        a = linop.materialize(tasks.build_system(spec))
        b = linop.materialize(tasks.build_system(spec))
        np.testing.assert_array_equal(a, b)


class TestFieldPrior:
    def test_sample_covariance_matches_prior(self):
        mu, cov = tasks.field_prior(8, scale=2.5, amp=0.1)
        data = tasks.make_toy_dataset("field", 40_000, seed=31, side=8, scale=2.5, amp=0.1)
        np.testing.assert_allclose(data.mean(axis=0), mu, atol=0.01)
        emp = np.cov(data.T)
        assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05

    def test_spectral_variances_decay(self):
        # measured through the full orthonormal Fourier basis, coefficient
        # variance must follow the band-limited envelope
        side = 8
        mu, cov = tasks.field_prior(side, scale=2.0, amp=0.2)
        full = tasks.build_system(
            tasks.TaskSpec("mri", image_side=side, lambda1_pct=100, lambda2_pct=0, sigma2_sq=0.0)
        )
        basis = tasks._fourier_labels(side)
        rows = linop.materialize(full)
        coeff_var = np.diag(rows @ cov @ rows.T)
        # first row is the lowest frequency, variance amp; deep tail is tiny
        assert coeff_var[0] == pytest.approx(0.2, rel=1e-6)
        assert coeff_var[-1] < coeff_var[0] / 1000.0
        del basis
