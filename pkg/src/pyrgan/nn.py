"""Minimal dense-tensor network stack with exact reverse-mode gradients.

Networks are sequential layer stacks over numpy arrays (batch axis first).
Two auxiliary inputs are supported beyond the primary input: named extra
channel planes (noise, conditioning) and a one-hot class vector routed
through a learned linear embedding.  Every forward pass returns a tape that
suffices for one matching backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

LAYER_KINDS = (
    "dense",
    "conv2d",
    "relu",
    "sigmoid",
    "dropout",
    "concat-channels",
    "reshape",
    "linear-class-embed",
)


class NumericOverflowError(ArithmeticError):
    """A forward pass produced a non-finite intermediate value."""


@dataclass
class _Ctx:
    mode: str
    aux: dict
    rng: np.random.Generator | None


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class _Layer:
    """Base layer: parameter dict plus pure forward/backward transforms."""

    kind = None

    def __init__(self, spec, dtype):
        self.spec = dict(spec)
        self.dtype = dtype
        self.params = {}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, ctx):
        raise NotImplementedError

    def backward(self, grad, cache):
        raise NotImplementedError


class Dense(_Layer):
    kind = "dense"

    def __init__(self, spec, dtype, rng):
        super().__init__(spec, dtype)
        d_in, d_out = spec["in_dim"], spec["out_dim"]
        self.params = {
            "W": _uniform_init(rng, (d_out, d_in), d_in, dtype),
            "b": np.zeros(d_out, dtype=dtype),
        }

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.spec["in_dim"]:
            raise ValueError(f"dense expects ({self.spec['in_dim']},), got {in_shape}")
        return (self.spec["out_dim"],)

    def forward(self, x, ctx):
        return x @ self.params["W"].T + self.params["b"], x

    def backward(self, grad, cache):
        x = cache
        return grad @ self.params["W"], {"W": grad.T @ x, "b": grad.sum(axis=0)}


class Conv2d(_Layer):
    kind = "conv2d"

    def __init__(self, spec, dtype, rng):
        super().__init__(spec, dtype)
        c_in, c_out, k = spec["in_ch"], spec["out_ch"], spec["ksize"]
        self.stride = int(spec.get("stride", 1))
        self.pad = int(spec.get("pad", 0))
        self.params = {
            "W": _uniform_init(rng, (c_out, c_in, k, k), c_in * k * k, dtype),
            "b": np.zeros(c_out, dtype=dtype),
        }

    def out_shape(self, in_shape):
        c_in, k, s, p = self.spec["in_ch"], self.spec["ksize"], self.stride, self.pad
        if len(in_shape) != 3 or in_shape[0] != c_in:
            raise ValueError(f"conv2d expects ({c_in}, h, w), got {in_shape}")
        oh = (in_shape[1] + 2 * p - k) // s + 1
        ow = (in_shape[2] + 2 * p - k) // s + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"conv2d output collapses for input {in_shape}")
        return (self.spec["out_ch"], oh, ow)

    def forward(self, x, ctx):
        k, s, p = self.spec["ksize"], self.stride, self.pad
        n = x.shape[0]
        _, oh, ow = self.out_shape(x.shape[1:])
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        view = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        cols = np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5)).reshape(
            n * oh * ow, -1
        )
        w_mat = self.params["W"].reshape(self.params["W"].shape[0], -1)
        y = cols @ w_mat.T + self.params["b"]
        y = y.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), (cols, x.shape)

    def backward(self, grad, cache):
        cols, x_shape = cache
        k, s, p = self.spec["ksize"], self.stride, self.pad
        n, c, h, w = x_shape
        oh = (h + 2 * p - k) // s + 1
        ow = (w + 2 * p - k) // s + 1
        w_mat = self.params["W"].reshape(self.params["W"].shape[0], -1)
        g2 = np.ascontiguousarray(grad.transpose(0, 2, 3, 1)).reshape(-1, grad.shape[1])
        grads = {"W": (g2.T @ cols).reshape(self.params["W"].shape), "b": g2.sum(axis=0)}
        gcols = (g2 @ w_mat).reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
        gx = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                gx[:, :, i : i + s * oh : s, j : j + s * ow : s] += gcols[:, :, i, j]
        if p:
            gx = gx[:, :, p : p + h, p : p + w]
        return gx, grads


class Relu(_Layer):
    kind = "relu"

    def __init__(self, spec, dtype, rng=None):
        super().__init__(spec, dtype)

    def forward(self, x, ctx):
        return np.maximum(x, 0), x > 0

    def backward(self, grad, cache):
        return grad * cache, {}


class Sigmoid(_Layer):
    kind = "sigmoid"

    def __init__(self, spec, dtype, rng=None):
        super().__init__(spec, dtype)

    def forward(self, x, ctx):
        y = expit(x)
        return y, y

    def backward(self, grad, cache):
        y = cache
        return grad * y * (1 - y), {}


class Dropout(_Layer):
    kind = "dropout"

    def __init__(self, spec, dtype, rng=None):
        super().__init__(spec, dtype)
        self.p = float(spec["p"])
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {self.p}")

    def forward(self, x, ctx):
        if ctx.mode != "train" or self.p == 0.0:
            return x, None
        if ctx.rng is None:
            raise ValueError("training-mode dropout needs an rng for its mask")
        # Inverted scaling, so evaluation mode is plain identity.
        mask = (ctx.rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * mask, mask

    def backward(self, grad, cache):
        if cache is None:
            return grad, {}
        return grad * cache, {}


class ConcatChannels(_Layer):
    """Append a named auxiliary tensor along axis 1 (channels or features)."""

    kind = "concat-channels"

    def __init__(self, spec, dtype, rng=None):
        super().__init__(spec, dtype)
        self.source = spec["source"]
        self.channels = int(spec["channels"])

    def out_shape(self, in_shape):
        return (in_shape[0] + self.channels,) + tuple(in_shape[1:])

    def forward(self, x, ctx):
        extra = ctx.aux.get(self.source)
        if extra is None:
            raise ValueError(f"missing auxiliary input {self.source!r}")
        if extra.shape[0] != x.shape[0] or extra.shape[1] != self.channels:
            raise ValueError(
                f"auxiliary {self.source!r} has shape {extra.shape}, "
                f"expected ({x.shape[0]}, {self.channels}, ...)"
            )
        if extra.shape[2:] != x.shape[2:]:
            raise ValueError(
                f"auxiliary {self.source!r} spatial shape {extra.shape[2:]} "
                f"!= input {x.shape[2:]}"
            )
        return np.concatenate([x, extra.astype(x.dtype, copy=False)], axis=1), x.shape[1]

    def backward(self, grad, cache):
        return np.ascontiguousarray(grad[:, :cache]), {}


class Reshape(_Layer):
    kind = "reshape"

    def __init__(self, spec, dtype, rng=None):
        super().__init__(spec, dtype)
        self.shape = tuple(int(s) for s in spec["shape"])

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ValueError(f"cannot reshape {in_shape} to {self.shape}")
        return self.shape

    def forward(self, x, ctx):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, grad, cache):
        return grad.reshape(cache), {}


class LinearClassEmbed(_Layer):
    """Embed the one-hot class vector linearly and append it along axis 1.

    For image activations the embedding is reshaped into one extra plane; for
    flat feature vectors it is appended as extra features.  The bias is
    omitted: it is redundant for one-hot inputs.
    """

    kind = "linear-class-embed"

    def __init__(self, spec, dtype, rng):
        super().__init__(spec, dtype)
        self.classes = int(spec["classes"])
        self.shape = tuple(int(s) for s in spec["shape"])
        self.params = {
            "W": _uniform_init(
                rng, (int(np.prod(self.shape)), self.classes), self.classes, dtype
            )
        }

    def out_shape(self, in_shape):
        if tuple(self.shape[1:]) != tuple(in_shape[1:]):
            raise ValueError(
                f"class embed shape {self.shape} incompatible with input {in_shape}"
            )
        return (in_shape[0] + self.shape[0],) + tuple(in_shape[1:])

    def forward(self, x, ctx):
        onehot = ctx.aux.get("class_onehot")
        if onehot is None:
            raise ValueError("missing auxiliary input 'class_onehot'")
        if onehot.shape != (x.shape[0], self.classes):
            raise ValueError(
                f"class_onehot has shape {onehot.shape}, "
                f"expected ({x.shape[0]}, {self.classes})"
            )
        onehot = onehot.astype(x.dtype, copy=False)
        embed = (onehot @ self.params["W"].T).reshape((x.shape[0],) + self.shape)
        return np.concatenate([x, embed], axis=1), (x.shape[1], onehot)

    def backward(self, grad, cache):
        n_in, onehot = cache
        g_embed = grad[:, n_in:].reshape(grad.shape[0], -1)
        return (
            np.ascontiguousarray(grad[:, :n_in]),
            {"W": g_embed.T @ onehot},
        )


_LAYER_CLASSES = {
    cls.kind: cls
    for cls in (Dense, Conv2d, Relu, Sigmoid, Dropout, ConcatChannels, Reshape, LinearClassEmbed)
}


@dataclass
class NetworkSpec:
    """Declarative layer stack: input shape (without batch axis) + layer dicts."""

    input_shape: tuple
    layers: list = field(default_factory=list)

    def to_dict(self):
        return {"input_shape": list(self.input_shape), "layers": [dict(s) for s in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["input_shape"]), [dict(s) for s in d["layers"]])


@dataclass
class Tape:
    """Record of one forward pass; valid until the network's parameters change."""

    net: "Network"
    version: int
    caches: list
    input_shape: tuple


@dataclass
class Gradients:
    """Per-layer parameter gradients plus the gradient w.r.t. the primary input."""

    layers: list
    wrt_input: np.ndarray


class Network:
    """Instantiated sequential stack with train/eval mode and a version counter."""

    def __init__(self, spec: NetworkSpec, layers, dtype):
        self.spec = spec
        self.layers = layers
        self.dtype = dtype
        self.mode = "train"
        self.version = 0
        # Validate the whole shape chain once, at construction.
        shape = tuple(spec.input_shape)
        for layer in layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def parameters(self):
        """Yield (layer_index, name, array) for every trainable parameter."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def forward(self, x, aux=None, rng=None):
        if isinstance(rng, int):
            rng = np.random.default_rng(rng)
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ValueError(
                f"input shape {x.shape[1:]} does not match spec {tuple(self.spec.input_shape)}"
            )
        ctx = _Ctx(self.mode, aux or {}, rng)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, ctx)
            if not np.isfinite(x).all():
                raise NumericOverflowError(f"non-finite output of {layer.kind} layer")
            caches.append(cache)
        return x, Tape(self, self.version, caches, x.shape)

    def backward(self, tape: Tape, grad_out: np.ndarray) -> Gradients:
        if tape.net is not self or tape.version != self.version:
            raise RuntimeError("stale tape: parameters changed since the forward pass")
        grad = np.asarray(grad_out, dtype=self.dtype)
        layer_grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            grad, pgrads = self.layers[i].backward(grad, tape.caches[i])
            layer_grads[i] = pgrads
        return Gradients(layer_grads, grad)


def build_network(spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32) -> Network:
    """Instantiate parameters for a spec; init is uniform +-1/sqrt(fan_in)."""
    layers = []
    for layer_spec in spec.layers:
        kind = layer_spec.get("kind")
        if kind not in _LAYER_CLASSES:
            raise ValueError(f"unknown layer kind {kind!r}")
        cls = _LAYER_CLASSES[kind]
        if kind in ("dense", "conv2d", "linear-class-embed"):
            layers.append(cls(layer_spec, dtype, rng))
        else:
            layers.append(cls(layer_spec, dtype))
    return Network(spec, layers, dtype)
