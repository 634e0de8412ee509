#
# file: src/utils/nn/mlp.py
#
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np

from ..errors import ArgumentError, NumericalError, ShapeError


class Head(str, Enum):
    SOFTMAX_CE = "softmax-ce"
    MSE = "mse"


class LayerSlot(NamedTuple):
    """Offsets of one affine layer inside the flat parameter vector."""

    fan_in: int
    fan_out: int
    weight_start: int
    bias_start: int
    end: int


@dataclass(frozen=True)
class MlpSpec:
    """
    Dense ReLU network. Hidden layers use ReLU, the last layer is affine.

    With the `softmax-ce` head the network outputs class probabilities and is
    trained with cross-entropy; with `mse` it outputs raw values and the
    per-sample loss is the squared L2 distance to the target.
    """

    layer_widths: tuple[int, ...]
    head: Head = Head.SOFTMAX_CE

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ShapeError(f"an MLP needs at least 2 layer widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ShapeError(f"layer widths must be >= 1, got {widths}")
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "head", Head(self.head))

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def layout(self) -> list[LayerSlot]:
        slots = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            bias_start = offset + fan_in * fan_out
            end = bias_start + fan_out
            slots.append(LayerSlot(fan_in, fan_out, offset, bias_start, end))
            offset = end
        return slots

    @property
    def num_params(self) -> int:
        return self.layout[-1].end

    def to_dict(self) -> dict:
        return {"layer_widths": list(self.layer_widths), "head": self.head.value}

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpSpec":
        return cls(layer_widths=tuple(doc["layer_widths"]), head=Head(doc["head"]))


def _unpack(spec: MlpSpec, values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    return [
        (
            values[s.weight_start : s.bias_start].reshape(s.fan_in, s.fan_out),
            values[s.bias_start : s.end],
        )
        for s in spec.layout
    ]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Flat float64 parameter vector θ together with the spec that lays it out."""

    spec: MlpSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.spec.num_params:
            raise ShapeError(
                f"expected {self.spec.num_params} parameters for "
                f"{self.spec.layer_widths}, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericalError("model parameters must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-layer (weight[fan_in, fan_out], bias[fan_out]) read-only views."""
        return _unpack(self.spec, self.values)

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(self.spec, values)

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "ModelParams":
        return cls(spec, np.zeros(spec.num_params))

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "ModelParams":
        """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
        chunks = []
        for slot in spec.layout:
            bound = 1.0 / np.sqrt(slot.fan_in)
            chunks.append(rng.uniform(-bound, bound, slot.fan_in * slot.fan_out))
            chunks.append(rng.uniform(-bound, bound, slot.fan_out))
        return cls(spec, np.concatenate(chunks))


# ==============================================================================
#  Forward / backward on raw (spec, values) pairs
# ==============================================================================


def _as_batch(spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_width:
        raise ShapeError(
            f"input width {x.shape[-1] if x.ndim else 0} does not match "
            f"first layer width {spec.input_width}"
        )
    return x


def forward_cache(
    spec: MlpSpec, values: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Returns the last-layer affine output and the (input, pre-activation) per layer."""
    layers = _unpack(spec, values)
    cache = []
    a = x
    last = len(layers) - 1
    for i, (weight, bias) in enumerate(layers):
        z = a @ weight + bias
        cache.append((a, z))
        a = np.maximum(z, 0.0) if i < last else z
    return a, cache


def backward(
    spec: MlpSpec,
    values: np.ndarray,
    cache: list[tuple[np.ndarray, np.ndarray]],
    d_out: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Backpropagates dL/d(last affine output) through the network.

    Returns the flat parameter gradient and dL/d(input). ReLU'(0) is 0.
    """
    layers = _unpack(spec, values)
    slots = spec.layout
    grad = np.empty(spec.num_params)
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        a_prev, _ = cache[i]
        slot = slots[i]
        grad[slot.weight_start : slot.bias_start] = (a_prev.T @ delta).ravel()
        grad[slot.bias_start : slot.end] = delta.sum(axis=0)
        delta = delta @ layers[i][0].T
        if i > 0:
            delta = delta * (cache[i - 1][1] > 0.0)
    return grad, delta


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _head_loss(
    spec: MlpSpec, out: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and dloss_i/d(out_i) for the configured head."""
    n = out.shape[0]
    if spec.head is Head.SOFTMAX_CE:
        labels = np.asarray(y, dtype=np.int64).reshape(-1)
        if labels.size != n:
            raise ShapeError(f"{labels.size} labels for {n} samples")
        if np.any(labels < 0) or np.any(labels >= spec.output_width):
            raise ShapeError("label outside the output layer's class range")
        shift = out.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(out - shift).sum(axis=1)) + shift[:, 0]
        losses = log_norm - out[np.arange(n), labels]
        d_out = softmax(out)
        d_out[np.arange(n), labels] -= 1.0
        return losses, d_out

    targets = np.asarray(y, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if targets.shape != out.shape:
        raise ShapeError(f"targets {targets.shape} do not match outputs {out.shape}")
    diff = out - targets
    return np.sum(diff * diff, axis=1), 2.0 * diff


def raw_loss_and_grad(
    spec: MlpSpec, values: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    x = _as_batch(spec, x)
    if x.shape[0] == 0:
        raise ArgumentError("loss_and_grad needs a nonempty batch")
    out, cache = forward_cache(spec, values, x)
    losses, d_out = _head_loss(spec, out, y)
    n = x.shape[0]
    grad, _ = backward(spec, values, cache, d_out / n)
    return float(losses.mean()), grad


def raw_loss(spec: MlpSpec, values: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    x = _as_batch(spec, x)
    if x.shape[0] == 0:
        raise ArgumentError("loss needs a nonempty batch")
    out, _ = forward_cache(spec, values, x)
    losses, _ = _head_loss(spec, out, y)
    return float(losses.mean())


# ==============================================================================
#  Public operations
# ==============================================================================


def mlp_forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """
    Class probabilities for the softmax head, raw last-layer values for mse.

    Accepts one feature vector or a (samples, features) matrix and returns an
    output of matching rank.
    """
    single = np.ndim(x) == 1
    batch = _as_batch(params.spec, x)
    out, _ = forward_cache(params.spec, params.values, batch)
    if params.spec.head is Head.SOFTMAX_CE:
        out = softmax(out)
    return out[0] if single else out


def loss_and_grad(
    params: ModelParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean per-sample loss over the batch and its gradient w.r.t. the flat θ."""
    return raw_loss_and_grad(params.spec, params.values, x, y)


def mean_loss(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    return raw_loss(params.spec, params.values, x, y)


def per_sample_grads(params: ModelParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(samples, params) matrix whose row i is ∇ℓ(x_i; θ)."""
    x = _as_batch(params.spec, x)
    y = np.asarray(y)
    rows = [
        raw_loss_and_grad(params.spec, params.values, x[i : i + 1], y[i : i + 1])[1]
        for i in range(x.shape[0])
    ]
    if not rows:
        return np.zeros((0, params.spec.num_params))
    return np.vstack(rows)


def central_difference(
    fn: Callable[[np.ndarray], float], values: np.ndarray, h: float
) -> np.ndarray:
    """(f(v + h e_i) - f(v - h e_i)) / 2h for every coordinate i."""
    if not h > 0:
        raise ArgumentError(f"finite-difference step must be > 0, got {h}")
    base = np.array(values, dtype=np.float64)
    grad = np.empty_like(base)
    for i in range(base.size):
        original = base[i]
        base[i] = original + h
        plus = fn(base)
        base[i] = original - h
        minus = fn(base)
        base[i] = original
        grad[i] = (plus - minus) / (2.0 * h)
    return grad


def finite_diff_grad(
    params: ModelParams, x: np.ndarray, y: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference oracle for `loss_and_grad`."""
    return central_difference(
        lambda v: raw_loss(params.spec, v, x, y), params.values, h
    )


def loss_hessian(
    params: ModelParams, x: np.ndarray, y: np.ndarray, h: float = 1e-4
) -> np.ndarray:
    """
    Dense Hessian of the mean batch loss, by central differences of the
    analytic gradient, symmetrized.
    """
    spec = params.spec
    base = np.array(params.values)
    size = base.size
    hess = np.empty((size, size))
    for j in range(size):
        original = base[j]
        base[j] = original + h
        _, g_plus = raw_loss_and_grad(spec, base, x, y)
        base[j] = original - h
        _, g_minus = raw_loss_and_grad(spec, base, x, y)
        base[j] = original
        hess[:, j] = (g_plus - g_minus) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def predict_labels(params: ModelParams, x: np.ndarray) -> np.ndarray:
    batch = _as_batch(params.spec, x)
    out, _ = forward_cache(params.spec, params.values, batch)
    return np.argmax(out, axis=1)


def accuracy(params: ModelParams, x: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        return 0.0
    return float(np.mean(predict_labels(params, x) == labels))
