"""Neural layers with explicit forward and backward passes.

Every layer keeps the context of its last forward call so ``backward`` can be called
once afterwards; a layer instance is therefore owned by a single training thread.
Gradients accumulate into :attr:`Layer.grads` until :meth:`Layer.zero_grad`.

Convolutions use cross-correlation semantics (the kernel is not flipped). Planar and
axial convolutions are 3D convolutions with degenerate kernel extents.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import settings
from .errors import ShapeError, UsageError
from .tensor import NDTensor, Rng, get_dtype, tensor_new, tensor_rand_uniform

logger = logging.getLogger(__name__)

Triple = tuple[int, int, int]

HW_PLANE: Triple = (1, 3, 3)
LH_PLANE: Triple = (3, 3, 1)
LW_PLANE: Triple = (3, 1, 3)
L_AXIS: Triple = (3, 1, 1)
H_AXIS: Triple = (1, 3, 1)
W_AXIS: Triple = (1, 1, 3)
FULL_KERNEL: Triple = (3, 3, 3)


class ConvSpec(BaseModel):
    """Geometry of a 3D convolution over ``[N, C, L, H, W]`` volumes."""

    model_config = ConfigDict(frozen=True)

    cin: int = Field(ge=1)
    cout: int = Field(ge=1)
    kernel: Triple = FULL_KERNEL
    stride: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    bias: bool = True

    @model_validator(mode="after")
    def _check_extents(self) -> ConvSpec:
        if any(k < 1 for k in self.kernel):
            raise ValueError(f"kernel extents must be >= 1, got {self.kernel}")
        if any(s < 1 for s in self.stride):
            raise ValueError(f"stride extents must be >= 1, got {self.stride}")
        if any(p < 0 for p in self.padding):
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        return self

    @property
    def weight_shape(self) -> tuple[int, int, int, int, int]:
        return (self.cout, self.cin, *self.kernel)

    @property
    def weight_count(self) -> int:
        return math.prod(self.weight_shape)

    def output_extents(self, extents: Triple) -> Triple:
        """Return ``(L', H', W')`` for an input of ``(L, H, W)``.

        :raises ShapeError: When the padded input is smaller than the kernel.
        """
        out = []
        for size, k, s, p in zip(extents, self.kernel, self.stride, self.padding):
            if size + 2 * p < k:
                raise ShapeError(f"Padded extent {size + 2 * p} smaller than kernel extent {k}")
            out.append((size + 2 * p - k) // s + 1)
        return tuple(out)  # type: ignore[return-value]


def he_uniform(rng: Rng | None, shape: tuple[int, ...], fan_in: int) -> NDTensor:
    """Uniform initialization in ``[-b, b)`` with ``b = sqrt(6 / fan_in)``.

    Without a generator the tensor is zero-filled, which is enough for shape and
    parameter-count audits.
    """
    if rng is None:
        return tensor_new(shape, 0.0)
    bound = math.sqrt(6.0 / fan_in)
    return tensor_rand_uniform(rng, shape, -bound, bound)


def _offset_slices(offset: Triple, stride: Triple, extents: Triple) -> tuple[slice, ...]:
    return (slice(None), slice(None)) + tuple(
        slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, extents)
    )


def _pad5(x: NDTensor, padding: Triple, value: float = 0.0) -> NDTensor:
    if not any(padding):
        return x
    pads = ((0, 0), (0, 0)) + tuple((p, p) for p in padding)
    return np.pad(x, pads, mode="constant", constant_values=value)


def conv_forward(spec: ConvSpec, weight: NDTensor, bias: NDTensor | None, x: NDTensor) -> NDTensor:
    """Cross-correlate ``x`` of shape ``[N, Cin, L, H, W]`` with ``weight``.

    The result is accumulated one kernel offset at a time, in row-major offset order.
    """
    if x.ndim != 5:
        raise ShapeError(f"conv expects a rank-5 input, got shape {x.shape}")
    if x.shape[1] != spec.cin:
        raise ShapeError(f"conv expects {spec.cin} input channels, got {x.shape[1]}")
    extents = spec.output_extents(x.shape[2:])
    xp = _pad5(x, spec.padding)
    out = np.zeros((x.shape[0], *extents, spec.cout), dtype=x.dtype)
    for offset in itertools.product(*(range(k) for k in spec.kernel)):
        patch = xp[_offset_slices(offset, spec.stride, extents)]
        out += np.tensordot(patch, weight[(slice(None), slice(None), *offset)], axes=([1], [1]))
    out = np.ascontiguousarray(out.transpose(0, 4, 1, 2, 3))
    if bias is not None:
        out += bias.reshape(1, -1, 1, 1, 1)
    return out


def conv_backward(
    spec: ConvSpec,
    weight: NDTensor,
    x: NDTensor,
    grad_out: NDTensor,
) -> tuple[NDTensor, NDTensor, NDTensor | None]:
    """Return ``(grad_x, grad_w, grad_b)`` for the summed-output loss composition."""
    extents = spec.output_extents(x.shape[2:])
    expected = (x.shape[0], spec.cout, *extents)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match conv output {expected}")
    xp = _pad5(x, spec.padding)
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros_like(weight)
    g = grad_out.transpose(0, 2, 3, 4, 1)
    for offset in itertools.product(*(range(k) for k in spec.kernel)):
        window = _offset_slices(offset, spec.stride, extents)
        tap = (slice(None), slice(None), *offset)
        grad_w[tap] = np.tensordot(g, xp[window], axes=([0, 1, 2, 3], [0, 2, 3, 4]))
        grad_xp[window] += np.tensordot(g, weight[tap], axes=([4], [0])).transpose(0, 4, 1, 2, 3)
    pl, ph, pw = spec.padding
    L, H, W = x.shape[2:]
    grad_x = np.ascontiguousarray(grad_xp[:, :, pl:pl + L, ph:ph + H, pw:pw + W])
    grad_b = grad_out.sum(axis=(0, 2, 3, 4)) if spec.bias else None
    return grad_x, grad_w, grad_b


def pool_output_extent(size: int, kernel: int, stride: int, ceil_mode: bool) -> int:
    """Output length of one pooled axis (a window must start inside the input)."""
    if ceil_mode:
        out = max(0, -(-(size - kernel) // stride)) + 1
        if (out - 1) * stride >= size:
            out -= 1
        return out
    if size < kernel:
        raise ShapeError(f"Pooling window {kernel} larger than extent {size} without ceil mode")
    return (size - kernel) // stride + 1


def maxpool3d_forward(
    x: NDTensor,
    kernel: Triple = (2, 2, 2),
    stride: Triple = (2, 2, 2),
    ceil_mode: bool = True,
) -> tuple[NDTensor, np.ndarray]:
    """Max-pool a ``[N, C, L, H, W]`` tensor.

    Returns the pooled tensor and, for every output element, the flat row-major index
    of the input element that won. Partial boundary windows pool over their valid
    elements; ties go to the lowest index.
    """
    if x.ndim != 5:
        raise ShapeError(f"maxpool3d expects a rank-5 input, got shape {x.shape}")
    extents = tuple(pool_output_extent(n, k, s, ceil_mode) for n, k, s in zip(x.shape[2:], kernel, stride))
    pad_end = [max(0, (o - 1) * s + k - n) for o, s, k, n in zip(extents, stride, kernel, x.shape[2:])]
    pads = ((0, 0), (0, 0)) + tuple((0, p) for p in pad_end)
    xp = np.pad(x, pads, mode="constant", constant_values=-np.inf)
    index_grid = np.pad(np.arange(x.size, dtype=np.int64).reshape(x.shape), pads, mode="constant", constant_values=-1)
    sel = (slice(None), slice(None)) + tuple(slice(0, o * s, s) for o, s in zip(extents, stride))
    windows = sliding_window_view(xp, kernel, axis=(2, 3, 4))[sel]
    index_windows = sliding_window_view(index_grid, kernel, axis=(2, 3, 4))[sel]
    flat = windows.reshape(*windows.shape[:5], -1)
    winner = flat.argmax(axis=-1)[..., None]
    y = np.take_along_axis(flat, winner, axis=-1)[..., 0]
    indices = np.take_along_axis(index_windows.reshape(*index_windows.shape[:5], -1), winner, axis=-1)[..., 0]
    return np.ascontiguousarray(y), np.ascontiguousarray(indices)


def maxpool3d_backward(indices: np.ndarray, grad_out: NDTensor, input_shape: tuple[int, ...]) -> NDTensor:
    """Route every output gradient to the input element that won its window."""
    if indices.shape != grad_out.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match pooled shape {indices.shape}")
    grad_x = np.zeros(math.prod(input_shape), dtype=grad_out.dtype)
    np.add.at(grad_x, indices.ravel(), grad_out.ravel())
    return grad_x.reshape(input_shape)


def relu_forward(x: NDTensor) -> NDTensor:
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(x: NDTensor, grad_out: NDTensor) -> NDTensor:
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def sigmoid(z: NDTensor) -> NDTensor:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def linear_forward(weight: NDTensor, bias: NDTensor | None, x: NDTensor) -> NDTensor:
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear expects [N, {weight.shape[1]}] input, got {x.shape}")
    y = x @ weight.T
    if bias is not None:
        y += bias
    return y


def linear_backward(
    weight: NDTensor, x: NDTensor, grad_out: NDTensor
) -> tuple[NDTensor, NDTensor, NDTensor]:
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


class Layer:
    """Base class: parameters, gradients, buffers, children and the train/eval flag."""

    def __init__(self) -> None:
        self.params: dict[str, NDTensor] = {}
        self.grads: dict[str, NDTensor] = {}
        self.buffers: dict[str, NDTensor] = {}
        self.children: dict[str, Layer] = {}
        self.training = True

    def add_param(self, name: str, value: NDTensor) -> None:
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def add_child(self, name: str, layer: Layer) -> Layer:
        self.children[name] = layer
        return layer

    def forward(self, x: NDTensor) -> NDTensor:
        raise NotImplementedError

    def backward(self, grad: NDTensor) -> NDTensor:
        raise NotImplementedError

    def __call__(self, x: NDTensor) -> NDTensor:
        return self.forward(x)

    def modules(self) -> Iterator[Layer]:
        yield self
        for child in self.children.values():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, NDTensor, NDTensor]]:
        """Yield ``(dotted_name, parameter, gradient)`` in registration order."""
        for name, value in self.params.items():
            yield f"{prefix}{name}", value, self.grads[name]
        for child_name, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, NDTensor]]:
        for name, value in self.buffers.items():
            yield f"{prefix}{name}", value
        for child_name, child in self.children.items():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def state_dict(self) -> dict[str, NDTensor]:
        """Parameters and buffers keyed by dotted name (the checkpoint layout)."""
        state = {name: value for name, value, _ in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, NDTensor]) -> None:
        """Copy tensors into the existing parameters and buffers in place."""
        targets = {name: value for name, value, _ in self.named_parameters()}
        targets.update(dict(self.named_buffers()))
        missing = sorted(set(targets) - set(state))
        unexpected = sorted(set(state) - set(targets))
        if missing or unexpected:
            raise UsageError(f"State mismatch: missing={missing} unexpected={unexpected}")
        for name, target in targets.items():
            source = state[name]
            if source.shape != target.shape:
                raise ShapeError(f"{name}: stored shape {source.shape} != model shape {target.shape}")
            target[...] = source

    def zero_grad(self) -> None:
        for module in self.modules():
            for grad in module.grads.values():
                grad.fill(0)

    def train(self, mode: bool = True) -> Layer:
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> Layer:
        return self.train(False)

    def parameter_count(self) -> int:
        return sum(value.size for _, value, _ in self.named_parameters())


class Sequential(Layer):
    """Chain of layers applied in insertion order."""

    def __init__(self, *layers: Layer, names: list[str] | None = None) -> None:
        super().__init__()
        for idx, layer in enumerate(layers):
            self.add_child(names[idx] if names else str(idx), layer)

    def forward(self, x: NDTensor) -> NDTensor:
        for layer in self.children.values():
            x = layer.forward(x)
        return x

    def backward(self, grad: NDTensor) -> NDTensor:
        for layer in reversed(list(self.children.values())):
            grad = layer.backward(grad)
        return grad


class Conv3d(Layer):
    """3D convolution (and its planar/axial degenerate-kernel variants)."""

    def __init__(self, spec: ConvSpec, rng: Rng | None) -> None:
        super().__init__()
        self.spec = spec
        fan_in = spec.cin * math.prod(spec.kernel)
        self.add_param("weight", he_uniform(rng, spec.weight_shape, fan_in))
        if spec.bias:
            self.add_param("bias", tensor_new((spec.cout,), 0.0))
        self._x: NDTensor | None = None

    def forward(self, x: NDTensor) -> NDTensor:
        self._x = x
        return conv_forward(self.spec, self.params["weight"], self.params.get("bias"), x)

    def backward(self, grad: NDTensor) -> NDTensor:
        if self._x is None:
            raise UsageError("Conv3d.backward called before forward")
        grad_x, grad_w, grad_b = conv_backward(self.spec, self.params["weight"], self._x, grad)
        self.grads["weight"] += grad_w
        if grad_b is not None:
            self.grads["bias"] += grad_b
        return grad_x


class ReLU(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._x: NDTensor | None = None

    def forward(self, x: NDTensor) -> NDTensor:
        self._x = x
        return relu_forward(x)

    def backward(self, grad: NDTensor) -> NDTensor:
        return relu_backward(self._x, grad)


class MaxPool3d(Layer):
    def __init__(self, kernel: Triple = (2, 2, 2), stride: Triple = (2, 2, 2), ceil_mode: bool = True) -> None:
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.ceil_mode = ceil_mode
        self._indices: np.ndarray | None = None
        self._shape: tuple[int, ...] = ()

    def forward(self, x: NDTensor) -> NDTensor:
        y, self._indices = maxpool3d_forward(x, self.kernel, self.stride, self.ceil_mode)
        self._shape = x.shape
        return y

    def backward(self, grad: NDTensor) -> NDTensor:
        return maxpool3d_backward(self._indices, grad, self._shape)


class BatchNorm(Layer):
    """Per-channel batch normalization over every axis except ``axis``.

    Training mode normalizes with batch statistics and updates running statistics
    with ``momentum``; eval mode uses the running statistics.
    """

    def __init__(self, num_features: int, axis: int = 1, eps: float | None = None, momentum: float | None = None) -> None:
        super().__init__()
        self.num_features = num_features
        self.axis = axis
        self.eps = settings.bn_eps if eps is None else eps
        self.momentum = settings.bn_momentum if momentum is None else momentum
        self.add_param("gamma", tensor_new((num_features,), 1.0))
        self.add_param("beta", tensor_new((num_features,), 0.0))
        self.buffers["running_mean"] = tensor_new((num_features,), 0.0)
        self.buffers["running_var"] = tensor_new((num_features,), 1.0)
        self._cache: tuple | None = None

    def _broadcast(self, v: NDTensor, ndim: int) -> NDTensor:
        shape = [1] * ndim
        shape[self.axis] = self.num_features
        return v.reshape(shape)

    def forward(self, x: NDTensor) -> NDTensor:
        axis = self.axis % x.ndim
        if x.shape[axis] != self.num_features:
            raise ShapeError(f"batchnorm expects {self.num_features} features on axis {self.axis}, got {x.shape}")
        reduce_axes = tuple(i for i in range(x.ndim) if i != axis)
        gamma = self._broadcast(self.params["gamma"], x.ndim)
        beta = self._broadcast(self.params["beta"], x.ndim)
        if self.training:
            if x.shape[0] < 2:
                raise UsageError("Training-mode batchnorm needs a batch of at least 2 samples (degenerate variance)")
            count = x.size // self.num_features
            mean = x.mean(axis=reduce_axes)
            var = x.var(axis=reduce_axes)
            m = self.momentum
            self.buffers["running_mean"][...] = (1 - m) * self.buffers["running_mean"] + m * mean
            self.buffers["running_var"][...] = (1 - m) * self.buffers["running_var"] + m * var * count / (count - 1)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - self._broadcast(mean, x.ndim)) * self._broadcast(inv_std, x.ndim)
        self._cache = (x_hat, inv_std, reduce_axes, self.training)
        return (gamma * x_hat + beta).astype(x.dtype, copy=False)

    def backward(self, grad: NDTensor) -> NDTensor:
        x_hat, inv_std, reduce_axes, batch_stats = self._cache
        ndim = grad.ndim
        self.grads["gamma"] += (grad * x_hat).sum(axis=reduce_axes)
        self.grads["beta"] += grad.sum(axis=reduce_axes)
        g_hat = grad * self._broadcast(self.params["gamma"], ndim)
        scale = self._broadcast(inv_std, ndim)
        if not batch_stats:
            return g_hat * scale
        count = grad.size // self.num_features
        sum_g = g_hat.sum(axis=reduce_axes, keepdims=True)
        sum_gx = (g_hat * x_hat).sum(axis=reduce_axes, keepdims=True)
        return scale / count * (count * g_hat - sum_g - x_hat * sum_gx)


class Dropout(Layer):
    """Inverted dropout with a seeded mask; identity in eval mode."""

    def __init__(self, p: float | None = None, rng: Rng | None = None) -> None:
        super().__init__()
        self.p = settings.dropout if p is None else p
        if not 0.0 <= self.p < 1.0:
            raise UsageError(f"Dropout probability must be in [0, 1), got {self.p}")
        self.rng = rng if rng is not None else Rng(0)
        self.mask: NDTensor | None = None

    def forward(self, x: NDTensor) -> NDTensor:
        if not self.training or self.p == 0.0:
            self.mask = None
            return x
        keep = self.rng.uniform(x.size).reshape(x.shape) >= self.p
        self.mask = (keep / (1.0 - self.p)).astype(x.dtype)
        return x * self.mask

    def backward(self, grad: NDTensor) -> NDTensor:
        return grad if self.mask is None else grad * self.mask


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng: Rng | None, bias: bool = True) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.add_param("weight", he_uniform(rng, (out_features, in_features), in_features))
        if bias:
            self.add_param("bias", tensor_new((out_features,), 0.0))
        self._x: NDTensor | None = None

    def forward(self, x: NDTensor) -> NDTensor:
        self._x = x
        return linear_forward(self.params["weight"], self.params.get("bias"), x)

    def backward(self, grad: NDTensor) -> NDTensor:
        grad_x, grad_w, grad_b = linear_backward(self.params["weight"], self._x, grad)
        self.grads["weight"] += grad_w
        if "bias" in self.params:
            self.grads["bias"] += grad_b
        return grad_x


def lstm_sequence(
    w_ih: NDTensor, w_hh: NDTensor, bias: NDTensor, x: NDTensor
) -> tuple[NDTensor, NDTensor, list[tuple[NDTensor, ...]]]:
    """Run a single-layer LSTM from a zero state over ``x`` of shape ``[N, T, D]``.

    Gate rows of the weight matrices are ordered input, forget, cell, output.
    Returns every step output, the final hidden state and the per-step cache.
    """
    if x.ndim != 3:
        raise ShapeError(f"LSTM expects [N, T, D] input, got {x.shape}")
    n, steps, dim = x.shape
    hidden = w_hh.shape[1]
    if steps < 1:
        raise ShapeError("LSTM needs at least one time step")
    if dim != w_ih.shape[1]:
        raise ShapeError(f"LSTM expects feature dimension {w_ih.shape[1]}, got {dim}")
    h = np.zeros((n, hidden), dtype=x.dtype)
    c = np.zeros((n, hidden), dtype=x.dtype)
    outputs = np.empty((n, steps, hidden), dtype=x.dtype)
    cache = []
    for t in range(steps):
        z = x[:, t] @ w_ih.T + h @ w_hh.T + bias
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = sigmoid(z[:, 3 * hidden:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        outputs[:, t] = h
        cache.append((x[:, t], h_prev, c_prev, i, f, g, o, c))
    return outputs, h, cache


class LSTM(Layer):
    """Single-layer LSTM returning the step outputs ``[N, T, Hd]``."""

    def __init__(self, input_dim: int, hidden: int, rng: Rng | None) -> None:
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        self.add_param("w_ih", he_uniform(rng, (4 * hidden, input_dim), input_dim))
        self.add_param("w_hh", he_uniform(rng, (4 * hidden, hidden), hidden))
        self.add_param("bias", tensor_new((4 * hidden,), 0.0))
        self._cache: list | None = None
        self.final_hidden: NDTensor | None = None

    def forward(self, x: NDTensor) -> NDTensor:
        outputs, self.final_hidden, self._cache = lstm_sequence(
            self.params["w_ih"], self.params["w_hh"], self.params["bias"], x
        )
        return outputs

    def backward(self, grad: NDTensor) -> NDTensor:
        w_ih, w_hh = self.params["w_ih"], self.params["w_hh"]
        hd = self.hidden
        steps = len(self._cache)
        n = grad.shape[0]
        grad_x = np.zeros((n, steps, self.input_dim), dtype=grad.dtype)
        dh_carry = np.zeros((n, hd), dtype=grad.dtype)
        dc_carry = np.zeros((n, hd), dtype=grad.dtype)
        for t in reversed(range(steps)):
            x_t, h_prev, c_prev, i, f, g, o, c = self._cache[t]
            dh = grad[:, t] + dh_carry
            tanh_c = np.tanh(c)
            do = dh * tanh_c
            dc = dc_carry + dh * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate(
                [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), dc * i * (1.0 - g ** 2), do * o * (1.0 - o)],
                axis=1,
            )
            dc_carry = dc * f
            self.grads["w_ih"] += dz.T @ x_t
            self.grads["w_hh"] += dz.T @ h_prev
            self.grads["bias"] += dz.sum(axis=0)
            grad_x[:, t] = dz @ w_ih
            dh_carry = dz @ w_hh
        return grad_x


class LastStep(Layer):
    """Select the final time step of a ``[N, T, H]`` sequence."""

    def __init__(self) -> None:
        super().__init__()
        self._shape: tuple[int, ...] = ()

    def forward(self, x: NDTensor) -> NDTensor:
        self._shape = x.shape
        return x[:, -1]

    def backward(self, grad: NDTensor) -> NDTensor:
        out = np.zeros(self._shape, dtype=grad.dtype)
        out[:, -1] = grad
        return out


class GlobalAvgPool3d(Layer):
    """Mean over ``(L, H, W)`` per channel: ``[N, C, L, H, W] -> [N, C]``."""

    def __init__(self) -> None:
        super().__init__()
        self._shape: tuple[int, ...] = ()

    def forward(self, x: NDTensor) -> NDTensor:
        self._shape = x.shape
        return x.mean(axis=(2, 3, 4))

    def backward(self, grad: NDTensor) -> NDTensor:
        volume = math.prod(self._shape[2:])
        return np.broadcast_to((grad / volume)[:, :, None, None, None], self._shape).astype(grad.dtype)


def softmax(logits: NDTensor) -> NDTensor:
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


__all__ = [
    "BatchNorm",
    "Conv3d",
    "ConvSpec",
    "Dropout",
    "FULL_KERNEL",
    "GlobalAvgPool3d",
    "HW_PLANE",
    "H_AXIS",
    "LH_PLANE",
    "LSTM",
    "LW_PLANE",
    "L_AXIS",
    "LastStep",
    "Layer",
    "Linear",
    "MaxPool3d",
    "ReLU",
    "Sequential",
    "W_AXIS",
    "conv_backward",
    "conv_forward",
    "get_dtype",
    "linear_backward",
    "linear_forward",
    "lstm_sequence",
    "maxpool3d_backward",
    "maxpool3d_forward",
    "relu_backward",
    "relu_forward",
    "sigmoid",
    "softmax",
]
