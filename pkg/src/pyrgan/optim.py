"""SGD with classical momentum and the epoch-indexed learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass
class SgdSchedule:
    """Learning rate decays geometrically per epoch; momentum ramps to a cap.

    lr(e) = lr0 / (1 + lr_decay)^e and momentum(e) = min(m0 + step * e, cap).
    """

    lr0: float = 0.02
    lr_decay: float = 4e-5
    momentum0: float = 0.5
    momentum_step: float = 0.0008
    momentum_max: float = 0.8
    epoch: int = 0

    def lr(self, epoch: int | None = None) -> float:
        e = self.epoch if epoch is None else epoch
        return self.lr0 / (1.0 + self.lr_decay) ** e

    def momentum(self, epoch: int | None = None) -> float:
        e = self.epoch if epoch is None else epoch
        return min(self.momentum0 + self.momentum_step * e, self.momentum_max)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def init_velocity(net):
    """Zero momentum buffers matching the network's parameters."""
    return [
        {name: np.zeros_like(p) for name in layer.params for p in (layer.params[name],)}
        for layer in net.layers
    ]


def sgd_step(net, grads, sched: SgdSchedule, velocity):
    """One heavy-ball update: v <- m v - lr g; theta <- theta + v.  In place."""
    lr = sched.lr()
    m = sched.momentum()
    for layer, layer_grads, layer_vel in zip(net.layers, grads.layers, velocity):
        for name, p in layer.params.items():
            g = layer_grads.get(name)
            if g is None:
                raise ValueError(f"missing gradient for parameter {name!r}")
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter {p.shape}"
                )
            v = layer_vel[name]
            v *= m
            v -= lr * g.astype(p.dtype, copy=False)
            p += v
    net.version += 1
    return net, velocity
