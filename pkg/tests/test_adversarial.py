import json
import math

import numpy as np
import pytest

from pyrgan.adversarial import (
    GanBatch,
    TrainStepReport,
    d_step,
    discriminator_inputs,
    g_step,
    gan_objective,
    generator_inputs,
    sample_noise,
    telemetry_line,
)
from pyrgan.nn import NetworkSpec, build_network
from pyrgan.optim import SgdSchedule, init_velocity


class TestSampleNoise:
    def test_range_and_moments(self):
        z = sample_noise((1_000_000,), np.random.default_rng(0))
        assert z.dtype == np.float32
        assert z.min() >= -1 and z.max() <= 1
        assert abs(z.mean()) < 0.01
        assert abs(z.var() - 1 / 3) < 0.01

    def test_seed_determinism(self):
        a = sample_noise((100,), np.random.default_rng(7))
        b = sample_noise((100,), np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)


class TestObjective:
    def test_half_everywhere(self):
        v = gan_objective(np.full(10, 0.5), np.full(10, 0.5))
        assert abs(v - (-2 * math.log(2))) < 1e-12
        assert abs(v - (-1.3862943611198906)) < 1e-12

    def test_perfect_discriminator_supremum(self):
        v = gan_objective(np.ones(4), np.zeros(4))
        assert -1e-5 < v <= 0.0

    def test_mixed_values(self):
        v = gan_objective(np.array([0.8]), np.array([0.3]))
        assert abs(v - (math.log(0.8) + math.log(0.7))) < 1e-12
        assert abs(v - (-0.5798184952529422)) < 1e-12

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            gan_objective(np.array([]), np.array([0.5]))

    def test_never_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            v = gan_objective(rng.uniform(0, 1, 8), rng.uniform(0, 1, 8))
            assert v <= 0.0

    def test_clamping_keeps_finite(self):
        v = gan_objective(np.zeros(4), np.ones(4))
        assert np.isfinite(v)


def dense_pair(seed=0, zdim=2, xdim=2):
    rng = np.random.default_rng(seed)
    g = build_network(
        NetworkSpec(
            (zdim,),
            [
                {"kind": "dense", "in_dim": zdim, "out_dim": 8},
                {"kind": "relu"},
                {"kind": "dense", "in_dim": 8, "out_dim": xdim},
            ],
        ),
        rng,
        dtype=np.float64,
    )
    d = build_network(
        NetworkSpec(
            (xdim,),
            [
                {"kind": "dense", "in_dim": xdim, "out_dim": 8},
                {"kind": "relu"},
                {"kind": "dense", "in_dim": 8, "out_dim": 1},
                {"kind": "sigmoid"},
            ],
        ),
        rng,
        dtype=np.float64,
    )
    return g, d


def conv_pair(seed=0, class_conditional=False):
    rng = np.random.default_rng(seed)
    extra = 1 if class_conditional else 0
    g_layers = []
    d_layers = []
    if class_conditional:
        g_layers.append({"kind": "linear-class-embed", "classes": 3, "shape": [1, 4, 4]})
        d_layers.append({"kind": "linear-class-embed", "classes": 3, "shape": [1, 4, 4]})
    g_layers += [
        {"kind": "concat-channels", "source": "noise", "channels": 1},
        {"kind": "conv2d", "in_ch": 2 + extra, "out_ch": 4, "ksize": 3, "pad": 1},
        {"kind": "relu"},
        {"kind": "conv2d", "in_ch": 4, "out_ch": 1, "ksize": 3, "pad": 1},
    ]
    d_layers += [
        {"kind": "concat-channels", "source": "cond", "channels": 1},
        {"kind": "conv2d", "in_ch": 2 + extra, "out_ch": 4, "ksize": 3, "pad": 1},
        {"kind": "relu"},
        {"kind": "reshape", "shape": [4 * 4 * 4]},
        {"kind": "dense", "in_dim": 64, "out_dim": 1},
        {"kind": "sigmoid"},
    ]
    g = build_network(NetworkSpec((1, 4, 4), g_layers), rng, dtype=np.float64)
    d = build_network(NetworkSpec((1, 4, 4), d_layers), rng, dtype=np.float64)
    return g, d


def dense_batch(seed=0, n=16):
    rng = np.random.default_rng(seed)
    return GanBatch(
        real=rng.normal(2.0, 0.3, (n, 2)),
        noise=sample_noise((n, 2), rng).astype(np.float64),
    )


def conv_batch(seed=0, n=6, class_conditional=False):
    rng = np.random.default_rng(seed)
    onehot = None
    if class_conditional:
        onehot = np.zeros((n, 3))
        onehot[np.arange(n), rng.integers(0, 3, n)] = 1.0
    return GanBatch(
        real=rng.normal(0, 0.5, (n, 1, 4, 4)),
        noise=sample_noise((n, 1, 4, 4), rng).astype(np.float64),
        conditioning=rng.normal(0, 0.5, (n, 1, 4, 4)),
        class_onehot=onehot,
    )


def eval_losses(g, d, batch):
    g_x, g_aux = generator_inputs(batch)
    fake, _ = g.forward(g_x, aux=g_aux)
    xr, ar = discriminator_inputs(batch.real, batch)
    xf, af = discriminator_inputs(fake, batch)
    p_real = d.forward(xr, aux=ar)[0].reshape(-1)
    p_fake = d.forward(xf, aux=af)[0].reshape(-1)
    d_loss = -gan_objective(p_real, p_fake)
    g_loss = -float(np.log(np.clip(p_fake, 1e-7, 1)).mean())
    return d_loss, g_loss


class TestBatchValidation:
    def test_batch_dim_mismatch(self):
        with pytest.raises(ValueError):
            GanBatch(real=np.zeros((4, 2)), noise=np.zeros((3, 2)))

    def test_noise_out_of_range(self):
        with pytest.raises(ValueError):
            GanBatch(real=np.zeros((2, 2)), noise=np.full((2, 2), 1.5))


class TestWiring:
    def test_unconditional_routing(self):
        b = dense_batch()
        x, aux = generator_inputs(b)
        assert x is b.noise and aux == {}
        x, aux = discriminator_inputs(b.real, b)
        assert x is b.real and aux == {}

    def test_conditional_discriminator_sees_sum_and_channel(self):
        b = conv_batch()
        h = np.ones_like(b.real)
        x, aux = discriminator_inputs(h, b)
        np.testing.assert_array_equal(x, h + b.conditioning)
        assert aux["cond"] is b.conditioning

    def test_conditional_generator_gets_noise_plane(self):
        b = conv_batch()
        x, aux = generator_inputs(b)
        assert x is b.conditioning
        assert aux["noise"] is b.noise


class TestDStep:
    def test_loss_decreases_on_same_batch(self):
        g, d = dense_pair()
        batch = dense_batch()
        sched = SgdSchedule(lr0=0.05, momentum0=0.0)
        vel = init_velocity(d)
        before, _ = eval_losses(g, d, batch)
        report = d_step(d, g, batch, sched, vel)
        after, _ = eval_losses(g, d, batch)
        assert after < before
        assert abs(report.d_loss - before) < 1e-9

    def test_generator_frozen(self):
        g, d = dense_pair(1)
        snap = [p.copy() for _, _, p in g.parameters()]
        d_step(d, g, dense_batch(1), SgdSchedule(), init_velocity(d))
        for (_, _, p), s in zip(g.parameters(), snap):
            np.testing.assert_array_equal(p, s)

    def test_presentation_mask_all_real(self):
        g, d = dense_pair(2)
        batch = dense_batch(2)
        present = np.ones(batch.real.shape[0], dtype=bool)
        report = d_step(d, g, batch, SgdSchedule(lr0=0.0), init_velocity(d), present=present)
        # All-real presentation: fake term carries zero weight.
        xr, ar = discriminator_inputs(batch.real, batch)
        p_real = d.forward(xr, aux=ar)[0].reshape(-1)
        assert abs(report.d_loss - (-np.log(np.clip(p_real, 1e-7, 1)).mean())) < 1e-9

    def test_conditional_smoke(self):
        g, d = conv_pair()
        report = d_step(d, g, conv_batch(), SgdSchedule(), init_velocity(d))
        assert np.isfinite([report.d_loss, report.g_loss]).all()
        assert 0 <= report.d_acc_real <= 1 and 0 <= report.d_acc_fake <= 1

    def test_class_conditional_smoke(self):
        g, d = conv_pair(3, class_conditional=True)
        batch = conv_batch(3, class_conditional=True)
        report = d_step(d, g, batch, SgdSchedule(), init_velocity(d))
        assert np.isfinite([report.d_loss, report.g_loss]).all()


class TestGStep:
    def test_nonsaturating_ascends_log_d(self):
        g, d = dense_pair(4)
        batch = dense_batch(4)
        before_d, before_g = eval_losses(g, d, batch)
        g_step(g, d, batch, SgdSchedule(lr0=0.05, momentum0=0.0), init_velocity(g))
        _, after_g = eval_losses(g, d, batch)
        assert after_g < before_g  # -E[log D(G(z))] went down

    def test_minimax_mode_descends_its_loss(self):
        g, d = dense_pair(5)
        batch = dense_batch(5)

        def minimax_loss():
            g_x, g_aux = generator_inputs(batch)
            fake, _ = g.forward(g_x, aux=g_aux)
            xf, af = discriminator_inputs(fake, batch)
            p = d.forward(xf, aux=af)[0].reshape(-1)
            return float(np.log1p(-np.clip(p, 0, 1 - 1e-7)).mean())

        before = minimax_loss()
        g_step(g, d, batch, SgdSchedule(lr0=0.05, momentum0=0.0), init_velocity(g), mode="minimax")
        assert minimax_loss() < before

    def test_discriminator_frozen(self):
        g, d = dense_pair(6)
        snap = [p.copy() for _, _, p in d.parameters()]
        g_step(g, d, dense_batch(6), SgdSchedule(), init_velocity(g))
        for (_, _, p), s in zip(d.parameters(), snap):
            np.testing.assert_array_equal(p, s)

    def test_unknown_mode_rejected(self):
        g, d = dense_pair()
        with pytest.raises(ValueError):
            g_step(g, d, dense_batch(), SgdSchedule(), init_velocity(g), mode="wasserstein")

    def test_conditional_smoke(self):
        g, d = conv_pair(7)
        report = g_step(g, d, conv_batch(7), SgdSchedule(), init_velocity(g))
        assert np.isfinite([report.d_loss, report.g_loss]).all()


class TestTelemetry:
    def test_line_round_trips(self):
        rep = TrainStepReport(1.25, 0.5, 0.75, 0.25)
        rec = json.loads(telemetry_line(42, rep))
        assert rec == {
            "iteration": 42,
            "d_loss": 1.25,
            "g_loss": 0.5,
            "d_acc_real": 0.75,
            "d_acc_fake": 0.25,
        }
