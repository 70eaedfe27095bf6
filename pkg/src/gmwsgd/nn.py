"""Small numpy neural-network engine with a flat parameter encoding.

A :class:`Network` can be turned into a single real vector (weights of every
layer first, then biases of every layer, each row-major) and back, which is
what lets the population optimizers treat a network as a point in R^d.
All arithmetic is float64.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, NumericError, ShapeError, UsageError

Shape = tuple


# --------------------------------------------------------------------------
# layer descriptors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int

    kind = "dense"

    @property
    def weight_shape(self):
        return (self.out_features, self.in_features)

    @property
    def bias_shape(self):
        return (self.out_features,)

    def out_shape(self, in_shape: Shape) -> Shape:
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"expects input ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def forward(self, x, w, b):
        return x @ w.T + b, x

    def backward(self, dy, x, w, b):
        return dy @ w, dy.T @ x, dy.sum(axis=0)

    def text(self):
        return f"dense({self.in_features},{self.out_features})"


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    kind = "conv2d"

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)

    @property
    def bias_shape(self):
        return (self.out_channels,)

    def out_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(
                f"expects ({self.in_channels}, h, w) input, got {tuple(in_shape)}"
            )
        _, h, w = in_shape
        ho = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError(f"kernel larger than padded input {tuple(in_shape)}")
        return (self.out_channels, ho, wo)

    def _windows(self, x):
        p = self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(x, (self.kernel_h, self.kernel_w), axis=(2, 3))
        s = self.stride
        return x.shape, win[:, :, ::s, ::s]

    def forward(self, x, w, b):
        padded_shape, win = self._windows(x)
        # (N, C, Ho, Wo, kh, kw) x (O, C, kh, kw) -> (N, Ho, Wo, O)
        y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
        y = y.transpose(0, 3, 1, 2) + b[None, :, None, None]
        return np.ascontiguousarray(y), (win, padded_shape)

    def backward(self, dy, cache, w, b):
        win, padded_shape = cache
        dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))
        db = dy.sum(axis=(0, 2, 3))
        dxp = np.zeros(padded_shape)
        _, _, ho, wo = dy.shape
        s = self.stride
        for i in range(self.kernel_h):
            for j in range(self.kernel_w):
                contrib = np.tensordot(dy, w[:, :, i, j], axes=([1], [0]))
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += contrib.transpose(0, 3, 1, 2)
        p = self.padding
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return dxp, dw, db

    def text(self):
        return (
            f"conv2d({self.in_channels},{self.out_channels},{self.kernel_h},"
            f"{self.kernel_w},{self.stride},{self.padding})"
        )


@dataclass(frozen=True)
class ReLU:
    kind = "relu"
    weight_shape = None
    bias_shape = None

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, w, b):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, mask, w, b):
        return dy * mask, None, None

    def text(self):
        return "relu"


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int

    kind = "maxpool"
    weight_shape = None
    bias_shape = None

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"expects (c, h, w) input, got {tuple(in_shape)}")
        c, h, w = in_shape
        ho = (h - self.k) // self.stride + 1
        wo = (w - self.k) // self.stride + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError(f"pool window larger than input {tuple(in_shape)}")
        return (c, ho, wo)

    def forward(self, x, w, b):
        win = sliding_window_view(x, (self.k, self.k), axis=(2, 3))
        win = win[:, :, :: self.stride, :: self.stride]
        flat = win.reshape(win.shape[:4] + (self.k * self.k,))
        arg = flat.argmax(axis=-1)  # first maximum wins
        y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return y, (arg, x.shape)

    def backward(self, dy, cache, w, b):
        arg, in_shape = cache
        dx = np.zeros(in_shape)
        _, _, ho, wo = dy.shape
        s = self.stride
        for i in range(self.k):
            for j in range(self.k):
                hit = dy * (arg == i * self.k + j)
                dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += hit
        return dx, None, None

    def text(self):
        return f"maxpool({self.k},{self.stride})"


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"
    weight_shape = None
    bias_shape = None

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, w, b):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, shape, w, b):
        return dy.reshape(shape), None, None

    def text(self):
        return "flatten"


Layer = Union[Dense, Conv2d, ReLU, MaxPool, Flatten]

_LAYER_TYPES = {"dense": Dense, "conv2d": Conv2d, "relu": ReLU, "maxpool": MaxPool, "flatten": Flatten}
_TOKEN = re.compile(r"([a-z0-9]+)(?:\(([^)]*)\))?")


def parse_layer(token: str) -> Layer:
    """Parse one layer token such as ``dense(4,3)`` or ``relu``."""
    m = _TOKEN.fullmatch(token.strip().lower())
    if not m or m.group(1) not in _LAYER_TYPES:
        raise UsageError(f"unknown layer {token!r}; expected one of {sorted(_LAYER_TYPES)}")
    args = [int(a) for a in m.group(2).split(",")] if m.group(2) else []
    try:
        return _LAYER_TYPES[m.group(1)](*args)
    except TypeError as exc:
        raise UsageError(f"bad arguments for layer {token!r}: {exc}") from None


# --------------------------------------------------------------------------
# spec
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape plus an ordered layer list. Softmax lives in the loss."""

    input_shape: tuple
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()

    def shapes(self) -> list:
        """Activation shape before the first layer and after each layer."""
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(layer.out_shape(shapes[-1]))
            except ShapeError as exc:
                prev = self.layers[i - 1].text() if i else "input"
                raise ShapeError(
                    f"layer {i - 1} ({prev}) -> layer {i} ({layer.text()}): {exc}"
                ) from None
        return shapes

    @property
    def n_classes(self) -> int:
        out = self.shapes()[-1]
        if len(out) != 1:
            raise ShapeError(f"network output must be a vector of class scores, got {out}")
        return out[0]

    def to_text(self) -> str:
        return " ".join(layer.text() for layer in self.layers)

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": self.to_text()}

    @classmethod
    def from_text(cls, layers: str, input_shape: Sequence[int]) -> "NetworkSpec":
        tokens = re.findall(r"[a-zA-Z0-9]+(?:\([^)]*\))?", layers)
        return cls(tuple(input_shape), tuple(parse_layer(t) for t in tokens))

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        layers = data["layers"]
        if not isinstance(layers, str):
            layers = " ".join(layers)
        return cls.from_text(layers, data["input_shape"])


def param_count(spec: NetworkSpec) -> int:
    """Number of weights plus biases in ``spec``."""
    spec.shapes()
    total = 0
    for layer in spec.layers:
        if layer.weight_shape is not None:
            total += int(np.prod(layer.weight_shape)) + int(np.prod(layer.bias_shape))
    return total


def default_cifar_spec() -> NetworkSpec:
    """conv5x5(6) / pool / conv3x3(7, pad 2) / pool / dense 126 / dense 10.

    Parameter count is 58,685.
    """
    return NetworkSpec.from_text(
        "conv2d(3,6,5,5,1,0) relu maxpool(2,2) "
        "conv2d(6,7,3,3,1,2) relu maxpool(2,2) "
        "flatten dense(448,126) relu dense(126,10)",
        (3, 32, 32),
    )


def mlp_spec(sizes: Sequence[int]) -> NetworkSpec:
    """Dense stack with ReLU between layers, e.g. ``mlp_spec([4, 3, 2])``."""
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i:
            layers.append(ReLU())
        layers.append(Dense(a, b))
    return NetworkSpec((sizes[0],), tuple(layers))


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


@dataclass
class Network:
    spec: NetworkSpec
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "Network":
        ws = [None if l.weight_shape is None else np.zeros(l.weight_shape) for l in spec.layers]
        bs = [None if l.bias_shape is None else np.zeros(l.bias_shape) for l in spec.layers]
        return cls(spec, ws, bs)

    @classmethod
    def uniform(cls, spec: NetworkSpec, rng: np.random.Generator, low=-0.1, high=0.1) -> "Network":
        net = cls.zeros(spec)
        return load(net, rng.uniform(low, high, param_count(spec)))

    @classmethod
    def from_vector(cls, spec: NetworkSpec, p: np.ndarray) -> "Network":
        return load(cls.zeros(spec), p)

    def copy(self) -> "Network":
        dup = lambda ts: [None if t is None else t.copy() for t in ts]
        return Network(self.spec, dup(self.weights), dup(self.biases))

    def __eq__(self, other):
        if not isinstance(other, Network) or other.spec != self.spec:
            return NotImplemented
        return np.array_equal(flatten(self), flatten(other))


def flatten(net: Network) -> np.ndarray:
    """All weights (layer order, row-major) followed by all biases."""
    ws = [w.ravel() for w in net.weights if w is not None]
    bs = [b.ravel() for b in net.biases if b is not None]
    if not ws and not bs:
        return np.zeros(0)
    return np.concatenate(ws + bs).astype(np.float64, copy=False)


def load(net: Network, p: np.ndarray) -> Network:
    """Overwrite the parameters of ``net`` in place from a flat vector."""
    p = np.asarray(p, dtype=np.float64)
    n = param_count(net.spec)
    if p.ndim != 1 or p.size != n:
        raise DimensionError(f"parameter vector has shape {p.shape}, network needs ({n},)")
    if not np.all(np.isfinite(p)):
        bad = int(np.flatnonzero(~np.isfinite(p))[0])
        raise NumericError(f"non-finite parameter at index {bad}")
    offset = 0
    for i, layer in enumerate(net.spec.layers):
        if layer.weight_shape is None:
            continue
        size = int(np.prod(layer.weight_shape))
        net.weights[i] = p[offset : offset + size].reshape(layer.weight_shape).copy()
        offset += size
    for i, layer in enumerate(net.spec.layers):
        if layer.bias_shape is None:
            continue
        size = int(np.prod(layer.bias_shape))
        net.biases[i] = p[offset : offset + size].copy()
        offset += size
    return net


# --------------------------------------------------------------------------
# forward / loss / backward
# --------------------------------------------------------------------------


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != net.spec.input_shape:
        raise DimensionError(
            f"input batch has sample shape {x.shape[1:]}, network expects {net.spec.input_shape}"
        )
    return x


def _forward(net: Network, x: np.ndarray):
    caches = []
    for layer, w, b in zip(net.spec.layers, net.weights, net.biases):
        x, cache = layer.forward(x, w, b)
        caches.append(cache)
    return x, caches


def forward(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Raw class scores, shape (batch, classes)."""
    logits, _ = _forward(net, _check_input(net, inputs))
    return logits


def _check_labels(logits, labels):
    labels = np.asarray(labels)
    if logits.shape[0] == 0:
        raise UsageError("empty batch")
    if labels.shape != (logits.shape[0],):
        raise DimensionError(f"{logits.shape[0]} score rows but labels shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise UsageError(f"labels must lie in [0, {logits.shape[1]})")
    return labels.astype(np.intp)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ce_loss(logits: np.ndarray, labels) -> float:
    """Mean categorical cross entropy of softmax(logits) against integer labels."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(logits, labels)
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def accuracy(logits: np.ndarray, labels) -> float:
    logits = np.asarray(logits)
    labels = _check_labels(logits, labels)
    return float(np.mean(logits.argmax(axis=1) == labels))


def l2_regularizer(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(np.dot(p, p))


@dataclass
class Gradients:
    weights: list
    biases: list

    def flat(self) -> np.ndarray:
        parts = [w.ravel() for w in self.weights if w is not None]
        parts += [b.ravel() for b in self.biases if b is not None]
        return np.concatenate(parts) if parts else np.zeros(0)


def backward(net: Network, inputs: np.ndarray, labels) -> tuple:
    """Return ``(loss, Gradients)`` of the mean cross entropy."""
    x = _check_input(net, inputs)
    logits, caches = _forward(net, x)
    labels = _check_labels(logits, labels)
    n = len(labels)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())
    dy = np.exp(logp)
    dy[np.arange(n), labels] -= 1.0
    dy /= n
    gw = [None] * len(net.spec.layers)
    gb = [None] * len(net.spec.layers)
    for i in range(len(net.spec.layers) - 1, -1, -1):
        layer = net.spec.layers[i]
        dy, gw[i], gb[i] = layer.backward(dy, caches[i], net.weights[i], net.biases[i])
    return loss, Gradients(gw, gb)
