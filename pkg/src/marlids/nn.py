"""Dense Q-network written directly against numpy.

Weights for layer ``i`` have shape ``(layer_dims[i + 1], layer_dims[i])`` and
inputs are processed as rows, so a batch ``X`` of shape ``(B, in)`` maps to
``X @ W.T + b``.  Hidden layers use ReLU and the output layer is linear so the
network emits raw Q-values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ValidationError


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.beta1 < self.beta2 < 1:
            raise ValidationError(
                f"need 0 < beta1 < beta2 < 1, got beta1={self.beta1}, beta2={self.beta2}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    flat: np.ndarray | None = field(default=None, repr=False)


@dataclass(eq=False)
class DenseNetwork:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[Activation, ...]
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.activations = tuple(Activation(a) for a in self.activations)
        _check_dims(self.layer_dims)
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValidationError("one weight matrix and bias vector required per layer")
        if len(self.activations) != n_layers:
            raise ValidationError("one activation required per layer")
        if self.activations[-1] is not Activation.LINEAR:
            raise ValidationError("output layer must be linear")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValidationError(
                    f"layer {i}: expected weight {shape} and bias ({shape[0]},), "
                    f"got {w.shape} and {b.shape}")
        self._pack()

    def _pack(self):
        # parameters and Adam moments each live in one flat buffer; the
        # per-layer arrays are views so the optimizer runs on three vectors
        shapes = [w.shape for w in self.weights] + [b.shape for b in self.biases]
        sizes = [int(np.prod(s)) for s in shapes]
        dtype = self.weights[0].dtype
        offsets = np.cumsum([0] + sizes)

        def pack(arrays):
            flat = np.zeros(offsets[-1], dtype=dtype)
            views = [flat[a:b].reshape(shape) for a, b, shape in zip(offsets[:-1], offsets[1:], shapes)]
            for view, arr in zip(views, arrays):
                view[...] = arr
            n = len(self.weights)
            return flat, views[:n], views[n:]

        self._param_slices = list(zip(offsets[:-1], offsets[1:], shapes))
        self.flat_params, self.weights, self.biases = pack(self.weights + self.biases)
        if self.m_weights:
            moments_m = self.m_weights + self.m_biases
            moments_v = self.v_weights + self.v_biases
        else:
            moments_m = moments_v = []
        self.flat_m, self.m_weights, self.m_biases = pack(moments_m)
        self.flat_v, self.v_weights, self.v_biases = pack(moments_v)
        self._scratch = np.empty_like(self.flat_params)

    def __getstate__(self):
        # views into the flat buffers do not survive pickling; repack on load
        keys = ("layer_dims", "weights", "biases", "activations", "m_weights",
                "v_weights", "m_biases", "v_biases", "step")
        return {k: getattr(self, k) for k in keys}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._pack()

    def new_flat_gradient(self) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        flat = np.zeros_like(self.flat_params)
        views = [flat[a:b].reshape(shape) for a, b, shape in self._param_slices]
        n = len(self.weights)
        return flat, views[:n], views[n:]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def reset_optimizer(self):
        self.flat_m[:] = 0
        self.flat_v[:] = 0
        self.step = 0

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=self.activations,
            m_weights=[a.copy() for a in self.m_weights],
            v_weights=[a.copy() for a in self.v_weights],
            m_biases=[a.copy() for a in self.m_biases],
            v_biases=[a.copy() for a in self.v_biases],
            step=self.step,
        )

    def astype(self, dtype) -> "DenseNetwork":
        return DenseNetwork(
            layer_dims=self.layer_dims,
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
            activations=self.activations,
            m_weights=[a.astype(dtype) for a in self.m_weights],
            v_weights=[a.astype(dtype) for a in self.v_weights],
            m_biases=[a.astype(dtype) for a in self.m_biases],
            v_biases=[a.astype(dtype) for a in self.v_biases],
            step=self.step,
        )

    def arrays(self) -> list[np.ndarray]:
        """Parameters followed by Adam moments, in a fixed order."""
        out = []
        for group in (self.weights, self.biases, self.m_weights, self.v_weights,
                      self.m_biases, self.v_biases):
            out.extend(group)
        return out


def _check_dims(layer_dims: Sequence[int]):
    if len(layer_dims) < 2:
        raise ValidationError(f"layer_dims needs at least 2 entries, got {list(layer_dims)}")
    if any(int(d) <= 0 for d in layer_dims):
        raise ValidationError(f"layer_dims must be positive, got {list(layer_dims)}")


def init_network(layer_dims: Sequence[int], seed=None, dtype=np.float32) -> DenseNetwork:
    """He-normal weights (variance 2/fan_in), zero biases, ReLU hidden layers."""
    _check_dims(layer_dims)
    dims = tuple(int(d) for d in layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        weights.append(w.astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    acts = (Activation.RELU,) * (len(dims) - 2) + (Activation.LINEAR,)
    return DenseNetwork(dims, weights, biases, acts)


def _as_input(net: DenseNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=net.dtype)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ValidationError(f"expected input with {net.input_dim} features, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("input contains non-finite values")
    return x


def _forward_layers(net: DenseNetwork, x: np.ndarray) -> list[np.ndarray]:
    # outs[0] is the input, outs[i + 1] the activated output of layer i
    outs = [x]
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = outs[-1] @ w.T + b
        if act is Activation.RELU:
            np.maximum(z, 0, out=z)
        outs.append(z)
    return outs


def forward(net: DenseNetwork, x) -> np.ndarray:
    """Q-values for a single state vector or a batch of row vectors."""
    return _forward_layers(net, _as_input(net, x))[-1]


def _check_loss_args(pred, target, sample_weights):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    w = np.asarray(sample_weights, dtype=float)
    if pred.ndim != 1 or pred.shape != target.shape or pred.shape != w.shape:
        raise ValidationError(
            f"pred, target and weights must be equal-length vectors, "
            f"got {pred.shape}, {target.shape}, {w.shape}")
    if pred.size == 0:
        raise ValidationError("loss needs at least one element")
    if (w < 0).any():
        raise ValidationError("sample weights must be non-negative")
    return pred, target, w


def wmse_loss(pred, target, sample_weights) -> float:
    """Mean of squared weighted residuals: (1/N) sum(((pred - target) * w) ** 2)."""
    pred, target, w = _check_loss_args(pred, target, sample_weights)
    return float(np.mean(((pred - target) * w) ** 2))


def wmse_gradient(pred, target, sample_weights) -> np.ndarray:
    pred, target, w = _check_loss_args(pred, target, sample_weights)
    return 2.0 / pred.size * w * w * (pred - target)


def backprop(net: DenseNetwork, inputs, output_grad) -> Gradients:
    """Gradient of a scalar loss w.r.t. every parameter given dLoss/dOutput.

    With batched inputs the per-row gradients are summed, so ``output_grad``
    should already carry any 1/N factor of the loss.
    """
    x = _as_input(net, inputs)
    g = np.asarray(output_grad, dtype=net.dtype)
    if g.shape != x.shape[:-1] + (net.output_dim,):
        raise ValidationError(
            f"output_grad shape {g.shape} does not match output {x.shape[:-1] + (net.output_dim,)}")
    return _backprop(net, _forward_layers(net, x), g)


def _backprop(net: DenseNetwork, outs: list[np.ndarray], g: np.ndarray) -> Gradients:
    flat, gw, gb = net.new_flat_gradient()
    batched = g.ndim == 2
    for i in range(len(net.weights) - 1, -1, -1):
        if net.activations[i] is Activation.RELU:
            g = g * (outs[i + 1] > 0)
        if batched:
            np.matmul(g.T, outs[i], out=gw[i])
            g.sum(axis=0, out=gb[i])
        else:
            np.outer(g, outs[i], out=gw[i])
            gb[i][...] = g
        if i:
            g = g @ net.weights[i]
    grads = Gradients(gw, gb)
    grads.flat = flat
    return grads


_FLUSH_BELOW = 1e-30


def adam_step(net: DenseNetwork, grads: Gradients, cfg: AdamConfig = AdamConfig()) -> DenseNetwork:
    """Bias-corrected Adam update applied in place; returns ``net``."""
    if len(grads.weights) != len(net.weights) or len(grads.biases) != len(net.biases):
        raise ValidationError("gradient layer count does not match network")
    for g, p in zip(grads.weights + grads.biases, net.weights + net.biases):
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    g = grads.flat
    if g is None or g.dtype != net.dtype:
        g = np.concatenate([a.ravel() for a in grads.weights + grads.biases]).astype(net.dtype)
    net.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    lr_t = cfg.learning_rate / (1 - b1 ** net.step)
    corr2 = 1 - b2 ** net.step
    m, v, tmp = net.flat_m, net.flat_v, net._scratch
    if net.step % 16 == 0:
        # moments of inactive units decay into subnormals, which are very slow
        # on x86; flush them well before that point
        for arr in (m, v):
            np.abs(arr, out=tmp)
            arr[tmp < _FLUSH_BELOW] = 0
    m *= b1
    np.multiply(g, 1 - b1, out=tmp)
    m += tmp
    v *= b2
    np.multiply(g, g, out=tmp)
    tmp *= 1 - b2
    v += tmp
    # tmp <- lr_t * m / (sqrt(v / corr2) + eps)
    np.multiply(v, 1 / corr2, out=tmp)
    np.sqrt(tmp, out=tmp)
    tmp += cfg.epsilon
    np.divide(m, tmp, out=tmp)
    tmp *= lr_t
    net.flat_params -= tmp
    return net
