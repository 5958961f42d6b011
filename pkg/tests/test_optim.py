import numpy as np
import pytest

from pyrgan.nn import NetworkSpec, build_network
from pyrgan.optim import SgdSchedule, init_velocity, sgd_step


class TestSchedule:
    def test_pinned_values(self):
        s = SgdSchedule()
        assert s.lr(0) == 0.02
        assert abs(s.lr(1) - 0.02 / 1.00004) < 1e-12
        assert s.lr(1) == 0.019999200031998722
        assert s.momentum(0) == 0.5
        assert abs(s.momentum(375) - 0.8) < 1e-12
        assert s.momentum(1000) == 0.8

    def test_lr_monotone_decreasing(self):
        s = SgdSchedule()
        vals = [s.lr(e) for e in range(0, 2000, 37)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_momentum_linear_then_capped(self):
        s = SgdSchedule()
        assert abs(s.momentum(100) - (0.5 + 0.08)) < 1e-12
        assert abs(s.momentum(200) - (0.5 + 0.16)) < 1e-12
        assert s.momentum(376) == 0.8
        assert s.momentum(10_000) == 0.8

    def test_roundtrip_dict(self):
        s = SgdSchedule(lr0=0.1, epoch=7)
        s2 = SgdSchedule.from_dict(s.to_dict())
        assert s2 == s


def tiny_net(seed=0):
    spec = NetworkSpec((3,), [{"kind": "dense", "in_dim": 3, "out_dim": 2}])
    return build_network(spec, np.random.default_rng(seed), dtype=np.float64)


class TestSgdStep:
    def test_heavy_ball_arithmetic(self):
        net = tiny_net()
        w0 = net.layers[0].params["W"].copy()
        vel = init_velocity(net)
        x = np.array([[1.0, 2.0, 3.0]])
        y, tape = net.forward(x)
        grads = net.backward(tape, np.ones_like(y))
        g = grads.layers[0]["W"].copy()
        sched = SgdSchedule(epoch=0)
        sgd_step(net, grads, sched, vel)
        # First step: v = -lr*g, theta = theta0 + v.
        np.testing.assert_allclose(vel[0]["W"], -0.02 * g, rtol=1e-12)
        np.testing.assert_allclose(net.layers[0].params["W"], w0 - 0.02 * g, rtol=1e-12)
        # Second step with same gradient: v = 0.5*v - lr*g.
        y, tape = net.forward(x)
        grads2 = net.backward(tape, np.ones_like(y))
        v_prev = vel[0]["W"].copy()
        sgd_step(net, grads2, sched, vel)
        np.testing.assert_allclose(
            vel[0]["W"], 0.5 * v_prev - 0.02 * grads2.layers[0]["W"], rtol=1e-12
        )

    def test_velocity_starts_at_zero(self):
        vel = init_velocity(tiny_net())
        assert all(np.all(v == 0) for lv in vel for v in lv.values())

    def test_step_bumps_version(self):
        net = tiny_net()
        vel = init_velocity(net)
        y, tape = net.forward(np.ones((1, 3)))
        grads = net.backward(tape, np.ones_like(y))
        v0 = net.version
        sgd_step(net, grads, SgdSchedule(), vel)
        assert net.version == v0 + 1
        with pytest.raises(RuntimeError):
            net.backward(tape, np.ones_like(y))

    def test_deterministic_across_runs(self):
        def run():
            net = tiny_net(3)
            vel = init_velocity(net)
            sched = SgdSchedule()
            rng = np.random.default_rng(9)
            for e in range(5):
                sched.epoch = e
                x = rng.uniform(-1, 1, (4, 3))
                y, tape = net.forward(x)
                grads = net.backward(tape, y - 1.0)
                sgd_step(net, grads, sched, vel)
            return net.layers[0].params["W"].copy()

        np.testing.assert_array_equal(run(), run())
