"""Minimal reverse-mode automatic differentiation over dense arrays.

Exactly the operator set the translation networks need: convolution and
its transpose, batch normalization, four activations, elementwise
arithmetic, mean reductions, log/clamp for the adversarial losses, and
channel concatenation. Graphs are built eagerly; backward() walks the
graph once in reverse topological order and accumulates gradients
additively across fan-out.

Conventions fixed for reproducibility: relu subgradient at 0 is 0, the
L1 backward uses sign(0) = 0, and clamp passes gradient on the closed
interval. Convolution forward/backward run on the active kernel
backend (numba or numpy).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from skelfont import kernels
from skelfont.errors import DegenerateBatch, ShapeMismatch


class Tensor:
    """Dense array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar; visits each node exactly once."""
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: tuple[Tensor, ...], bwd) -> Tensor:
    """Wrap an op result; constant subgraphs are pruned from the graph."""
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    out._parents = parents
    out._bwd = bwd
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{op}: {a.data.shape} vs {b.data.shape}")


# --- arithmetic ---

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def bwd(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(g)

    return _result(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def bwd(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(-g)

    return _result(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")

    def bwd(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return _result(a.data * b.data, (a, b), bwd)


def add_scalar(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        a._accum(g)

    return _result(a.data + s, (a,), bwd)


def mul_scalar(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        a._accum(g * s)

    return _result(a.data * s, (a,), bwd)


def mean(a: Tensor) -> Tensor:
    size = a.data.size

    def bwd(g):
        a._accum(np.full_like(a.data, g / size))

    return _result(np.asarray(a.data.mean()), (a,), bwd)


def abs_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference; backward uses sign with sign(0) = 0."""
    _check_same_shape(a, b, "abs_mean")
    diff = a.data - b.data
    size = diff.size

    def bwd(g):
        s = np.sign(diff) * (g / size)
        if a.requires_grad:
            a._accum(s)
        if b.requires_grad:
            b._accum(-s)

    return _result(np.asarray(np.abs(diff).mean()), (a, b), bwd)


def log(a: Tensor) -> Tensor:
    def bwd(g):
        a._accum(g / a.data)

    return _result(np.log(a.data), (a,), bwd)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        a._accum(g * inside)

    return _result(np.clip(a.data, lo, hi), (a,), bwd)


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    split = a.data.shape[axis]

    def bwd(g):
        ga, gb = np.split(g, [split], axis=axis)
        if a.requires_grad:
            a._accum(ga)
        if b.requires_grad:
            b._accum(gb)

    return _result(np.concatenate([a.data, b.data], axis=axis), (a, b), bwd)


# --- activations ---

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        a._accum(g * mask)

    return _result(np.where(mask, a.data, 0), (a,), bwd)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)

    def bwd(g):
        a._accum(g * factor)

    return _result(a.data * factor, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def bwd(g):
        a._accum(g * (1.0 - t * t))

    return _result(t, (a,), bwd)


def _sigmoid_stable(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_stable(a.data)

    def bwd(g):
        a._accum(g * s * (1.0 - s))

    return _result(s, (a,), bwd)


# --- structured ops ---

def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation with zero padding; w is (F, C, k, k)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch("conv2d expects 4-d input and weight")
    n, c, h, wi = x.data.shape
    f, cw, k, k2 = w.data.shape
    if cw != c or k != k2:
        raise ShapeMismatch(f"conv2d weight {w.data.shape} vs input channels {c}")
    if h + 2 * pad < k or wi + 2 * pad < k:
        raise ShapeMismatch("kernel larger than padded input")
    if b is not None and b.data.shape != (f,):
        raise ShapeMismatch(f"bias shape {b.data.shape} != ({f},)")
    y = kernels.conv2d_forward(x.data, w.data, stride, pad)
    if b is not None:
        y += b.data.reshape(1, f, 1, 1)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x._accum(kernels.conv2d_input_grad(g, w.data, stride, pad, h, wi))
        if w.requires_grad:
            w._accum(kernels.conv2d_weight_grad(x.data, g, stride, pad, k))
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    return _result(y, parents, bwd)


def conv2d_transpose(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed convolution; w is (C_in, C_out, k, k).

    Forward is exactly the input-gradient of the matching conv2d, so
    output size is (H-1)*stride - 2*pad + k.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch("conv2d_transpose expects 4-d input and weight")
    n, c_in, h, wi = x.data.shape
    cw, c_out, k, k2 = w.data.shape
    if cw != c_in or k != k2:
        raise ShapeMismatch(f"transpose weight {w.data.shape} vs input channels {c_in}")
    h_out = (h - 1) * stride - 2 * pad + k
    w_out = (wi - 1) * stride - 2 * pad + k
    if h_out < 1 or w_out < 1:
        raise ShapeMismatch("transposed output size would be empty")
    if b is not None and b.data.shape != (c_out,):
        raise ShapeMismatch(f"bias shape {b.data.shape} != ({c_out},)")
    y = kernels.conv2d_input_grad(
        np.ascontiguousarray(x.data), w.data, stride, pad, h_out, w_out
    )
    if b is not None:
        y = y + b.data.reshape(1, c_out, 1, 1)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x._accum(kernels.conv2d_forward(g, w.data, stride, pad))
        if w.requires_grad:
            w._accum(kernels.conv2d_weight_grad(g, np.ascontiguousarray(x.data), stride, pad, k))
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    return _result(y, parents, bwd)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    training: bool = True,
    eps: float = 1e-5,
    momentum: float = 0.9,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes with batch statistics and, when running
    arrays are supplied, updates them in place by EMA with the given
    momentum. Eval mode normalizes with the running statistics.
    """
    if x.data.ndim != 4:
        raise ShapeMismatch("batch_norm expects (N, C, H, W)")
    n, c, h, wi = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeMismatch("batch_norm affine parameters must be (C,)")
    if training:
        m = n * h * wi
        if m < 2:
            raise DegenerateBatch(f"batch_norm needs N*H*W >= 2, got {m}")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        if running_mean is not None:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mu
        if running_var is not None:
            running_var *= momentum
            running_var += (1.0 - momentum) * var
    else:
        if running_mean is None or running_var is None:
            raise ShapeMismatch("eval-mode batch_norm requires running statistics")
        mu = running_mean
        var = running_var
        m = n * h * wi
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    y = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def bwd(g):
        if beta.requires_grad:
            beta._accum(g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma._accum((g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(1, c, 1, 1)
            if training:
                sum_g = gxhat.sum(axis=(0, 2, 3), keepdims=True)
                sum_gx = (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (inv_std.reshape(1, c, 1, 1) / m) * (
                    m * gxhat - sum_g - xhat * sum_gx
                )
            else:
                gx = gxhat * inv_std.reshape(1, c, 1, 1)
            x._accum(gx)

    return _result(y, (x, gamma, beta), bwd)


# --- optimizer ---

@dataclass
class AdamState:
    """Adam moments and step counter for a named parameter set."""

    lr: float
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One Adam update, in place; bias correction uses the incremented t."""
    if state.lr <= 0:
        raise ValueError(f"learning rate must be positive, got {state.lr}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g is None:
            raise ShapeMismatch(f"missing gradient for {name!r}")
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name!r}: grad {g.shape} vs param {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# --- verification ---

def grad_check(f, xs, h: float = 1e-5, sample: int | None = None, rng=None) -> float:
    """Compare reverse-mode gradients of scalar f(*xs) to central differences.

    Perturbs each coordinate of each tensor in xs (or `sample` random
    coordinates per tensor) by +-h and returns the max relative error
    with denominator max(|analytic|, |numeric|, 1e-8). f must be pure.
    """
    xs = list(xs)
    for x in xs:
        x.zero_grad()
    out = f(*xs)
    out.backward()
    analytic = [
        x.grad.copy() if x.grad is not None else np.zeros_like(x.data) for x in xs
    ]
    if rng is None:
        rng = np.random.default_rng(0)
    max_err = 0.0
    for xi, x in enumerate(xs):
        flat = x.data.reshape(-1)
        n = flat.size
        if sample is not None and sample < n:
            idxs = rng.choice(n, size=sample, replace=False)
        else:
            idxs = range(n)
        aflat = analytic[xi].reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f(*xs).data)
            flat[i] = orig - h
            f_minus = float(f(*xs).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(aflat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > max_err:
                max_err = err
    return max_err
