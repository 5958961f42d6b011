"""Two-player objective and the alternating D/G update steps.

The discriminator maximizes  E[log D(h)] + E[log(1 - D(G(z)))]  while the
generator minimizes it (or, by default, ascends E[log D(G(z))] instead --
the nonsaturating variant, which keeps gradients alive early on when D wins
easily).  Conditioning follows one wiring convention everywhere:

  generator   input = conditioning image, noise supplied as an extra plane
              (unconditional: input = noise vector directly)
  discriminator  input = residual + conditioning, with the conditioning
              image also supplied separately as extra channels

Class labels, when present, ride along as a 1-hot aux vector that the
networks embed themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nn import Network, NumericOverflowError
from .optim import SgdSchedule, sgd_step

# Smallest probability fed to a log; keeps saturated sigmoids finite.
EPS = 1e-7


def sample_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform [-1, 1] noise, float32."""
    return rng.uniform(-1.0, 1.0, shape).astype(np.float32)


@dataclass
class GanBatch:
    real: np.ndarray
    noise: np.ndarray
    conditioning: Optional[np.ndarray] = None
    class_onehot: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.real.shape[0]
        for name in ("noise", "conditioning", "class_onehot"):
            v = getattr(self, name)
            if v is not None and v.shape[0] != n:
                raise ValueError(f"{name} batch dim {v.shape[0]} != real batch dim {n}")
        if self.noise.size and (self.noise.min() < -1 or self.noise.max() > 1):
            raise ValueError("noise entries must lie in [-1, 1]")


@dataclass(frozen=True)
class TrainStepReport:
    d_loss: float
    g_loss: float
    d_acc_real: float
    d_acc_fake: float

    def to_dict(self):
        return {
            "d_loss": self.d_loss,
            "g_loss": self.g_loss,
            "d_acc_real": self.d_acc_real,
            "d_acc_fake": self.d_acc_fake,
        }


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, EPS, 1.0 - EPS)


def gan_objective(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    """mean log D(h) + mean log(1 - D(G(z))), probabilities clamped to [eps, 1-eps]."""
    d_real = np.asarray(d_real, dtype=np.float64).reshape(-1)
    d_fake = np.asarray(d_fake, dtype=np.float64).reshape(-1)
    if d_real.size == 0 or d_fake.size == 0:
        raise ValueError("gan_objective needs non-empty batches")
    return float(np.log(_clamp(d_real)).mean() + np.log1p(-_clamp(d_fake)).mean())


def generator_inputs(batch: GanBatch):
    """(primary input, aux dict) for G under the wiring convention above."""
    aux = {}
    if batch.class_onehot is not None:
        aux["class_onehot"] = batch.class_onehot
    if batch.conditioning is None:
        return batch.noise, aux
    aux["noise"] = batch.noise
    return batch.conditioning, aux


def discriminator_inputs(h: np.ndarray, batch: GanBatch):
    """(primary input, aux dict) for D scoring residual batch ``h``."""
    aux = {}
    if batch.class_onehot is not None:
        aux["class_onehot"] = batch.class_onehot
    if batch.conditioning is None:
        return h, aux
    aux["cond"] = batch.conditioning
    return h + batch.conditioning, aux


def _add_grads(a, b):
    for ga, gb in zip(a.layers, b.layers):
        for name in ga:
            ga[name] += gb[name]
    a.wrt_input += b.wrt_input
    return a


def _check_finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericOverflowError(f"{what} is non-finite")
    return float(value)


def d_step(
    d_net: Network,
    g_net: Network,
    batch: GanBatch,
    sched: SgdSchedule,
    velocity,
    *,
    rng=None,
    present: Optional[np.ndarray] = None,
) -> TrainStepReport:
    """One ascent step on the objective w.r.t. D; G stays frozen.

    ``present`` optionally marks which batch slots show D a real example
    (True) versus a generated one (False) -- the coin-flip presentation
    scheme.  Without it every slot contributes on both sides.
    """
    if isinstance(rng, int):
        rng = np.random.default_rng(rng)
    n = batch.real.shape[0]
    g_x, g_aux = generator_inputs(batch)
    fake, _ = g_net.forward(g_x, aux=g_aux, rng=rng)

    x_real, aux_real = discriminator_inputs(batch.real, batch)
    p_real_raw, tape_real = d_net.forward(x_real, aux=aux_real, rng=rng)
    x_fake, aux_fake = discriminator_inputs(fake, batch)
    p_fake_raw, tape_fake = d_net.forward(x_fake, aux=aux_fake, rng=rng)
    p_real = _clamp(p_real_raw.reshape(n).astype(np.float64))
    p_fake = _clamp(p_fake_raw.reshape(n).astype(np.float64))

    if present is None:
        w_real = np.full(n, 1.0 / n)
        w_fake = np.full(n, 1.0 / n)
    else:
        present = np.asarray(present, dtype=bool).reshape(n)
        w_real = present / max(int(present.sum()), 1)
        w_fake = (~present) / max(int((~present).sum()), 1)

    d_loss = _check_finite(
        -(w_real * np.log(p_real)).sum() - (w_fake * np.log1p(-p_fake)).sum(),
        "discriminator loss",
    )
    grad_real = (-w_real / p_real).reshape(p_real_raw.shape)
    grad_fake = (w_fake / (1.0 - p_fake)).reshape(p_fake_raw.shape)
    grads = _add_grads(
        d_net.backward(tape_real, grad_real), d_net.backward(tape_fake, grad_fake)
    )
    sgd_step(d_net, grads, sched, velocity)

    g_loss = _check_finite(-np.log(p_fake).mean(), "generator loss")
    return TrainStepReport(
        d_loss=d_loss,
        g_loss=g_loss,
        d_acc_real=float((p_real > 0.5).mean()),
        d_acc_fake=float((p_fake < 0.5).mean()),
    )


def g_step(
    g_net: Network,
    d_net: Network,
    batch: GanBatch,
    sched: SgdSchedule,
    velocity,
    *,
    rng=None,
    mode: str = "nonsaturating",
) -> TrainStepReport:
    """One descent step on the generator loss; D stays frozen.

    mode "nonsaturating" descends -log D(G(z)); mode "minimax" descends the
    literal log(1 - D(G(z))) term.
    """
    if mode not in ("nonsaturating", "minimax"):
        raise ValueError(f"unknown generator mode {mode!r}")
    if isinstance(rng, int):
        rng = np.random.default_rng(rng)
    n = batch.real.shape[0]
    g_x, g_aux = generator_inputs(batch)
    fake, tape_g = g_net.forward(g_x, aux=g_aux, rng=rng)
    x_fake, aux_fake = discriminator_inputs(fake, batch)
    p_fake_raw, tape_d = d_net.forward(x_fake, aux=aux_fake, rng=rng)
    p_fake = _clamp(p_fake_raw.reshape(n).astype(np.float64))

    if mode == "nonsaturating":
        g_loss = -np.log(p_fake).mean()
        grad_p = -1.0 / (n * p_fake)
    else:
        g_loss = np.log1p(-p_fake).mean()
        grad_p = -1.0 / (n * (1.0 - p_fake))
    g_loss = _check_finite(g_loss, "generator loss")

    # Route the gradient through frozen D back to the generated residual.
    # D's primary input is fake + conditioning, an identity in fake.
    into_fake = d_net.backward(tape_d, grad_p.reshape(p_fake_raw.shape)).wrt_input
    grads = g_net.backward(tape_g, into_fake)
    sgd_step(g_net, grads, sched, velocity)

    # Real-side pass purely for reporting.
    x_real, aux_real = discriminator_inputs(batch.real, batch)
    p_real_raw, _ = d_net.forward(x_real, aux=aux_real, rng=rng)
    p_real = _clamp(p_real_raw.reshape(n).astype(np.float64))
    d_loss = _check_finite(
        -np.log(p_real).mean() - np.log1p(-p_fake).mean(), "discriminator loss"
    )
    return TrainStepReport(
        d_loss=d_loss,
        g_loss=g_loss,
        d_acc_real=float((p_real > 0.5).mean()),
        d_acc_fake=float((p_fake < 0.5).mean()),
    )


def telemetry_line(iteration: int, report: TrainStepReport) -> str:
    """One line-delimited JSON telemetry record."""
    rec = {"iteration": int(iteration)}
    rec.update(report.to_dict())
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))
