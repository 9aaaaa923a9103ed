"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray together with the bookkeeping needed to run
backpropagation: the tensors it was computed from and a closure that
routes an incoming gradient to them. Calling backward() on a scalar
walks the graph in reverse topological order. Gradients accumulate
additively across backward calls until cleared, which is what makes
gradient accumulation over several forward passes work without keeping
old graphs alive.

All arithmetic is float64. Convolution inner loops live in _kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels

PROB_EPS = 1e-7


class Tensor:
    """A float64 array plus autodiff bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def clear_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate grads of every reachable tensor; root must be scalar."""
        if self.data.shape != ():
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        order = _topo_order(self)
        self.accumulate_grad(np.ones((), dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable tensor carrying Adam moment buffers."""

    __slots__ = ("adam_m", "adam_v", "step_count")

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def assign(self, values) -> None:
        """Overwrite the value in place, keeping optimizer state shape-checked."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.data.shape:
            raise ValueError(
                f"assign shape {values.shape} does not match parameter {self.data.shape}"
            )
        self.data = values.copy()


def _topo_order(root: Tensor) -> list[Tensor]:
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    grad_parents = tuple(p for p in parents if p.requires_grad)
    if grad_parents:
        out.requires_grad = True
        out._parents = grad_parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _result(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), bwd)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    data = x.data * c

    def bwd(g):
        x.accumulate_grad(g * c)

    return _result(data, (x,), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)

    def bwd(g):
        x.accumulate_grad(g * (x.data > 0.0))

    return _result(data, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    data = expit(x.data)

    def bwd(g):
        x.accumulate_grad(g * data * (1.0 - data))

    return _result(data, (x,), bwd)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "none":
        return x
    raise ValueError(f"unknown activation kind: {kind!r}")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = x.data.reshape(shape)

    def bwd(g):
        x.accumulate_grad(g.reshape(x.data.shape))

    return _result(data, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _result(data, tensors, bwd)


def stack(tensors) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=0)

    def bwd(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(g[i])

    return _result(data, tensors, bwd)


def index_rows(x: Tensor, idx) -> Tensor:
    """Gather rows along axis 0; duplicate indices sum their gradients."""
    idx = np.asarray(idx, dtype=np.intp)
    data = x.data[idx]

    def bwd(g):
        buf = np.zeros_like(x.data)
        np.add.at(buf, idx, g)
        x.accumulate_grad(buf)

    return _result(data, (x,), bwd)


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    data = x.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g, x.data.shape).copy())
        else:
            x.accumulate_grad(
                np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy()
            )

    return _result(data, (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    return scale(reduce_sum(x), 1.0 / x.data.size)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        x.accumulate_grad(data * (g - dot))

    return _result(data, (x,), bwd)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shapes {a.data.shape} @ {b.data.shape} do not agree")
    data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _result(data, (a, b), bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """weight @ x + bias for a single vector, or row-wise for a 2d batch."""
    n_out, n_in = weight.data.shape
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != n_in:
        raise ValueError(
            f"linear input shape {x.data.shape} does not match weight {weight.data.shape}"
        )
    if bias is not None and bias.data.shape != (n_out,):
        raise ValueError(
            f"linear bias shape {bias.data.shape} does not match output width {n_out}"
        )
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data

    def bwd(g):
        g2 = g.reshape(-1, n_out)
        x2 = x.data.reshape(-1, n_in)
        if x.requires_grad:
            x.accumulate_grad((g2 @ weight.data).reshape(x.data.shape))
        if weight.requires_grad:
            weight.accumulate_grad(g2.T @ x2)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g2.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(data, parents, bwd)


# ---------------------------------------------------------------------------
# convolution and pooling


def conv3d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """3d cross-correlation of x (cin, d, h, w) with weight (cout, cin, k, k, k)."""
    if x.data.ndim != 4:
        raise ValueError(f"conv3d input must be 4d (c, d, h, w), got {x.data.shape}")
    if weight.data.ndim != 5:
        raise ValueError(f"conv3d weight must be 5d, got {weight.data.shape}")
    co_n, ci_n, k, k2, k3 = weight.data.shape
    if not (k == k2 == k3):
        raise ValueError(f"conv3d kernel must be cubic, got {weight.data.shape}")
    if k % 2 != 1:
        raise ValueError(f"conv3d kernel size must be odd, got {k}")
    if x.data.shape[0] != ci_n:
        raise ValueError(
            f"conv3d channel mismatch: input has {x.data.shape[0]} channels, "
            f"weight expects {ci_n}"
        )
    stride = int(stride)
    padding = int(padding)
    if stride < 1 or padding < 0:
        raise ValueError("conv3d requires stride >= 1 and padding >= 0")
    spatial = x.data.shape[1:]
    out_spatial = tuple((s + 2 * padding - k) // stride + 1 for s in spatial)
    if min(out_spatial) < 1:
        raise ValueError(
            f"conv3d output would be empty for input {x.data.shape}, "
            f"k={k}, stride={stride}, padding={padding}"
        )
    if bias is not None and bias.data.shape != (co_n,):
        raise ValueError(
            f"conv3d bias shape {bias.data.shape} does not match {co_n} channels"
        )

    if padding > 0:
        pw = ((0, 0),) + ((padding, padding),) * 3
        xp = np.pad(x.data, pw)
    else:
        xp = np.ascontiguousarray(x.data)
    w = np.ascontiguousarray(weight.data)
    out = np.zeros((co_n,) + out_spatial)
    _kernels.conv3d_forward(xp, w, stride, out)
    if bias is not None:
        out += bias.data[:, None, None, None]

    def bwd(g):
        g = np.ascontiguousarray(g)
        if weight.requires_grad:
            gw = np.zeros_like(w)
            _kernels.conv3d_weight_grad(g, xp, stride, gw)
            weight.accumulate_grad(gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            _kernels.conv3d_input_grad(g, w, stride, gxp)
            if padding > 0:
                gxp = gxp[
                    :,
                    padding:-padding,
                    padding:-padding,
                    padding:-padding,
                ]
            x.accumulate_grad(gxp)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(1, 2, 3)))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, bwd)


def roi_gap(x: Tensor, box) -> Tensor:
    """Per-channel mean over an integer box (z0, z1, y0, y1, x0, x1)."""
    if x.data.ndim != 4:
        raise ValueError(f"roi_gap input must be 4d (c, d, h, w), got {x.data.shape}")
    z0, z1, y0, y1, x0, x1 = (int(v) for v in box)
    _, d, h, w = x.data.shape
    if not (0 <= z0 < z1 <= d and 0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
        raise ValueError(
            f"roi_gap box {tuple(box)} is empty or outside feature map {x.data.shape}"
        )
    region = x.data[:, z0:z1, y0:y1, x0:x1]
    count = region[0].size
    data = region.mean(axis=(1, 2, 3))

    def bwd(g):
        buf = np.zeros_like(x.data)
        buf[:, z0:z1, y0:y1, x0:x1] = (g / count)[:, None, None, None]
        x.accumulate_grad(buf)

    return _result(data, (x,), bwd)


# ---------------------------------------------------------------------------
# loss


def bce_loss(pred: Tensor, labels, pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross entropy with a multiplicative weight on positives.

    Predictions are clamped away from 0 and 1 before the logs; gradient
    is zero where the clamp is active.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != pred.data.shape:
        raise ValueError(f"labels shape {y.shape} != predictions shape {pred.data.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    w = float(pos_weight)
    if w <= 0.0:
        raise ValueError("pos_weight must be positive")
    lo, hi = PROB_EPS, 1.0 - PROB_EPS
    p = np.clip(pred.data, lo, hi)
    inside = (pred.data > lo) & (pred.data < hi)
    n = max(p.size, 1)
    terms = -(w * y * np.log(p) + (1.0 - y) * np.log1p(-p))
    data = terms.sum() / n

    def bwd(g):
        gp = -(w * y / p - (1.0 - y) / (1.0 - p)) * (float(g) / n)
        pred.accumulate_grad(gp * inside)

    return _result(np.float64(data), (pred,), bwd)


# ---------------------------------------------------------------------------
# optimizer


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; clears gradients afterwards."""
    params = list(params)
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    for p in params:
        if p.grad is None:
            raise ValueError("adam_step: a parameter has no gradient")
    for p in params:
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def clear_grads(params) -> None:
    for p in params:
        p.clear_grad()


# ---------------------------------------------------------------------------
# multilayer perceptrons


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus activation choices for a small MLP."""

    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "none"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"MlpSpec widths must be positive, got {widths}")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("none", "sigmoid"):
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


class Mlp:
    """Fully connected layers built from an MlpSpec."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.weights: list[Parameter] = []
        self.biases: list[Parameter] = []
        widths = spec.layer_widths
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            self.weights.append(Parameter(glorot_uniform(rng, n_out, n_in)))
            self.biases.append(Parameter(np.zeros(n_out)))

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = linear(x, w, b)
            if i < last:
                x = relu(x)
            else:
                x = activation(x, self.spec.output_activation)
        return x

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}{i}.weight", w))
            out.append((f"{prefix}{i}.bias", b))
        return out
