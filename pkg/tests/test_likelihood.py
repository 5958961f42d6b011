import math

import numpy as np
import pytest
from scipy.stats import norm

from pyrgan.cascade import CascadeModel, build_level_model, default_level_specs
from pyrgan.data import Dataset
from pyrgan.likelihood import (
    DEFAULT_SIGMA_GRID,
    EvalConfig,
    MultiscaleEstimate,
    ParzenModel,
    evaluate_testset,
    likelihood_report,
    multiscale_ll,
    parzen_logpdf,
    render_likelihood_report,
    select_level_sigmas,
    select_sigma,
)
from pyrgan.pyramid import SizeSchedule, block_inverse


def oracle_parzen(samples, sigma, query):
    """Independent route: per-dimension scipy normal logpdfs, summed."""
    per_sample = norm.logpdf(
        np.asarray(query)[None, :], loc=np.asarray(samples), scale=sigma
    ).sum(axis=1)
    m = per_sample.max()
    return m + math.log(np.exp(per_sample - m).sum() / len(per_sample))


def tiny_cascade(sizes, seed=0, channels=1, noise_dim=8):
    sched = SizeSchedule.from_sizes(sizes)
    specs = default_level_specs(
        sched, channels, noise_dim=noise_dim, conv_maps=4,
        final_g_units=16, final_d_units=16,
    )
    rng = np.random.default_rng(seed)
    models = [build_level_model(s, rng, channels) for s in specs]
    return CascadeModel(models, sched, channels)


def zeroed(cascade):
    for lm in cascade.levels:
        for _, _, p in lm.g.parameters():
            p[:] = 0
    return cascade


class TestParzenLogpdf:
    def test_single_sample_zero_distance(self):
        m = ParzenModel(np.zeros((1, 2)), 1.0)
        v = parzen_logpdf(m, np.zeros(2))
        assert abs(v - (-math.log(2 * math.pi))) < 1e-12
        assert abs(v - (-1.8378770664093453)) < 1e-12

    def test_two_kernel_closed_form(self):
        m = ParzenModel(np.array([[-1.0], [1.0]]), 1.0)
        v = parzen_logpdf(m, np.zeros(1))
        expected = -0.5 * math.log(2 * math.pi) - 0.5
        assert abs(v - expected) < 1e-12
        assert abs(v - (-1.4189385332046727)) < 1e-12

    def test_matches_scipy_oracle(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(0, 1, (50, 3))
        for sigma in (0.1, 0.5, 2.0):
            m = ParzenModel(samples, sigma)
            for _ in range(5):
                q = rng.normal(0, 1, 3)
                assert abs(parzen_logpdf(m, q) - oracle_parzen(samples, sigma, q)) < 1e-9

    def test_batch_queries_match_single(self):
        rng = np.random.default_rng(1)
        m = ParzenModel(rng.normal(0, 1, (20, 4)), 0.3)
        qs = rng.normal(0, 1, (7, 4))
        batch = parzen_logpdf(m, qs)
        singles = [parzen_logpdf(m, q) for q in qs]
        np.testing.assert_allclose(batch, singles, rtol=1e-12)

    def test_zero_distance_bound(self):
        rng = np.random.default_rng(2)
        m = ParzenModel(rng.normal(0, 1, (30, 2)), 0.5)
        bound = -0.5 * 2 * math.log(2 * math.pi * 0.25)
        for _ in range(50):
            assert parzen_logpdf(m, rng.normal(0, 2, 2)) <= bound + 1e-12

    def test_far_queries_stay_finite(self):
        m = ParzenModel(np.zeros((5, 2)), 1.0)
        v = parzen_logpdf(m, np.full(2, 1e6))
        assert np.isfinite(v) and v < -1e11

    def test_monotone_degradation_under_noise(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(0, 1, (500, 2))
        m = ParzenModel(samples, 0.5)
        clean = rng.normal(0, 1, (200, 2))
        means = []
        for noise in (0.0, 1.0, 4.0):
            q = clean + rng.normal(0, noise, clean.shape)
            means.append(parzen_logpdf(m, q).mean())
        assert means[0] > means[1] - 1e-6 > means[2] - 2e-6

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            parzen_logpdf(ParzenModel(np.zeros((3, 2)), 1.0), np.zeros(3))

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            ParzenModel(np.zeros((3, 2)), 0.0)


class TestSelectSigma:
    def test_duplicates_pick_smallest(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(0, 1, (40, 2))
        assert select_sigma(samples, samples.copy(), (0.01, 0.1, 1.0)) == 0.01

    def test_degenerate_grid(self):
        assert select_sigma(np.zeros((3, 1)), np.ones((2, 1)), (0.7,)) == 0.7

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(4)
        samples = rng.normal(0, 1, (300, 1))
        val = rng.normal(0, 1, (100, 1))
        grid = np.logspace(np.log10(0.05), 0, 12)
        means = []
        for s in grid:
            means.append(np.mean([oracle_parzen(samples, s, q) for q in val]))
        oracle_best = grid[int(np.argmax(means))]
        assert select_sigma(samples, val, grid) == pytest.approx(oracle_best)

    def test_empty_validation_rejected(self):
        with pytest.raises(ValueError):
            select_sigma(np.zeros((3, 1)), np.zeros((0, 1)), (0.1,))


class TestMultiscale:
    def test_zero_model_zero_image_hits_bound(self):
        c = zeroed(tiny_cascade([4, 2]))
        img = np.zeros((1, 4, 4), dtype=np.float32)
        sigmas = [0.3, 0.7]
        est = multiscale_ll(c, img, 50, sigmas, np.random.default_rng(0))
        dims = [3 * 2 * 2, 2 * 2]  # high-pass coeffs, then the coarsest image
        for term, d, s in zip(est.terms, dims, sigmas):
            assert abs(term - (-0.5 * d * math.log(2 * math.pi * s * s))) < 1e-9

    def test_total_is_sum_of_terms(self):
        c = tiny_cascade([4, 2], seed=3)
        img = np.random.default_rng(1).uniform(-1, 1, (1, 4, 4)).astype(np.float32)
        est = multiscale_ll(c, img, 64, [0.2, 0.2], np.random.default_rng(2))
        assert est.total == sum(est.terms)
        assert len(est.terms) == 2

    def test_non_dyadic_rejected(self):
        c = tiny_cascade([11, 5])
        with pytest.raises(ValueError):
            multiscale_ll(c, np.zeros((1, 11, 11), dtype=np.float32), 8, [0.1, 0.1])

    def test_sigma_count_checked(self):
        c = tiny_cascade([4, 2])
        with pytest.raises(ValueError):
            multiscale_ll(c, np.zeros((1, 4, 4), dtype=np.float32), 8, [0.1])

    def test_gaussian_coefficients_match_analytic(self):
        # Stub generators draw the exact coefficient distribution of the
        # data (iid normal pixels are iid normal in any orthonormal basis),
        # so the estimate must track the analytic per-dim log-density.
        s = 0.5
        c = tiny_cascade([2, 1])
        rng_stub = np.random.default_rng(100)

        class StubG:
            def __init__(self, fn):
                self.fn = fn
                self.mode = "eval"

            def eval(self):
                return self

            def forward(self, x, aux=None, rng=None):
                return self.fn(len(x)), None

        def band_draws(n):  # residuals whose unitary high-pass is N(0, s)
            high = rng_stub.normal(0, s, (n, 1, 3, 1, 1))
            return block_inverse(np.zeros((n, 1, 1, 1)), high).astype(np.float32)

        def coarse_draws(n):  # coarse images whose unitary form is N(0, s)
            return rng_stub.normal(0, s / 2.0, (n, 1, 1, 1)).astype(np.float32)

        c.levels[0].g = StubG(band_draws)
        c.levels[1].g = StubG(coarse_draws)

        rng = np.random.default_rng(5)
        data = rng.normal(0, s, (220, 1, 2, 2)).astype(np.float32)
        val, test = Dataset(data[:60]), Dataset(data[60:])
        sigmas = select_level_sigmas(c, val, 4000, DEFAULT_SIGMA_GRID, rng)
        totals = [
            multiscale_ll(c, img, 4000, sigmas, rng).total for img in test.images
        ]
        per_dim = np.mean(totals) / 4.0
        analytic = -0.5 * math.log(2 * math.pi * math.e * s * s)
        assert abs(per_dim - analytic) < 0.15


class TestEvaluateTestset:
    def test_identical_images_zero_std(self):
        c = tiny_cascade([4, 2], seed=7)
        img = np.random.default_rng(0).uniform(-1, 1, (1, 4, 4)).astype(np.float32)
        ds = Dataset(np.repeat(img[None], 3, axis=0))
        cfg = EvalConfig(estimator="flat", n_model_samples=50, seed=1)
        mean, std = evaluate_testset(c, ds, ds, cfg)
        assert std == 0.0
        assert np.isfinite(mean)

    def test_two_image_hand_arithmetic(self):
        c = tiny_cascade([4, 2], seed=8)
        rng = np.random.default_rng(2)
        imgs = rng.uniform(-1, 1, (2, 1, 4, 4)).astype(np.float32)
        val = Dataset(rng.uniform(-1, 1, (3, 1, 4, 4)).astype(np.float32))
        cfg = EvalConfig(estimator="multiscale", n_model_samples=40, seed=3)
        rep = likelihood_report(c, Dataset(imgs), val, cfg)
        r = np.random.default_rng(cfg.seed)
        sig = select_level_sigmas(c, val, 40, cfg.sigma_grid, r)
        v1 = multiscale_ll(c, imgs[0], 40, sig, r).total
        v2 = multiscale_ll(c, imgs[1], 40, sig, r).total
        assert rep["mean"] == pytest.approx((v1 + v2) / 2, rel=1e-12)
        assert rep["std"] == pytest.approx(abs(v1 - v2) / 2, rel=1e-12)

    def test_report_terms_sum_to_mean(self):
        c = tiny_cascade([4, 2], seed=9)
        rng = np.random.default_rng(3)
        ds = Dataset(rng.uniform(-1, 1, (4, 1, 4, 4)).astype(np.float32))
        cfg = EvalConfig(n_model_samples=30, seed=4)
        rep = likelihood_report(c, ds, ds, cfg)
        assert sum(rep["per_level_mean_terms"]) == pytest.approx(rep["mean"], rel=1e-9)
        assert all(s in DEFAULT_SIGMA_GRID for s in rep["sigmas"])
        text = render_likelihood_report(rep)
        assert "log-likelihood" in text and "scale 0" in text

    def test_empty_testset_rejected(self):
        c = tiny_cascade([4, 2])
        ds = Dataset(np.zeros((0, 1, 4, 4), dtype=np.float32))
        val = Dataset(np.zeros((2, 1, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError):
            evaluate_testset(c, ds, val, EvalConfig())
