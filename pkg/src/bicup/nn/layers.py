"""Layer definitions with explicit forward/backward passes.

Four layer kinds: dense, conv2d (valid padding), layer_norm (last axis)
and pointwise activations (elu, tanh, softplus, identity). Each forward
returns the output plus a cache consumed by the matching backward.
Parameter arrays are treated as immutable everywhere: updates allocate
new arrays, so caches stay valid across optimizer steps.
"""

from dataclasses import dataclass

import numpy as np

from bicup import kernels

ACTIVATIONS = ("elu", "tanh", "softplus", "identity")


class ShapeError(ValueError):
    """Raised when an input does not match a layer's declared shape."""


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer."""

    kind: str
    in_size: int = 0          # dense
    out_size: int = 0         # dense
    in_channels: int = 0      # conv2d
    out_channels: int = 0     # conv2d
    kernel: int = 0           # conv2d, square
    stride: int = 1           # conv2d
    size: int = 0             # layer_norm
    fn: str = ""              # activation

    @staticmethod
    def dense(in_size: int, out_size: int) -> "LayerSpec":
        if in_size <= 0 or out_size <= 0:
            raise ValueError(f"bad dense sizes {in_size}x{out_size}")
        return LayerSpec("dense", in_size=in_size, out_size=out_size)

    @staticmethod
    def conv2d(in_channels: int, out_channels: int, kernel: int,
               stride: int) -> "LayerSpec":
        if min(in_channels, out_channels, kernel, stride) <= 0:
            raise ValueError("conv2d sizes must be positive")
        return LayerSpec("conv2d", in_channels=in_channels,
                         out_channels=out_channels, kernel=kernel, stride=stride)

    @staticmethod
    def layer_norm(size: int) -> "LayerSpec":
        if size <= 0:
            raise ValueError(f"bad layer_norm size {size}")
        return LayerSpec("layer_norm", size=size)

    @staticmethod
    def activation(fn: str) -> "LayerSpec":
        if fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {fn!r}, expected one of {ACTIVATIONS}")
        return LayerSpec("activation", fn=fn)

    def param_shapes(self) -> dict:
        if self.kind == "dense":
            return {"W": (self.in_size, self.out_size), "b": (self.out_size,)}
        if self.kind == "conv2d":
            return {"W": (self.out_channels, self.in_channels, self.kernel, self.kernel),
                    "b": (self.out_channels,)}
        if self.kind == "layer_norm":
            return {"gain": (self.size,), "bias": (self.size,)}
        return {}

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> dict:
        """Fan-in scaled uniform init; layer_norm starts as identity."""
        out = {}
        if self.kind == "dense":
            lim = 1.0 / np.sqrt(self.in_size)
            out["W"] = rng.uniform(-lim, lim, (self.in_size, self.out_size))
            out["b"] = rng.uniform(-lim, lim, (self.out_size,))
        elif self.kind == "conv2d":
            fan_in = self.in_channels * self.kernel * self.kernel
            lim = 1.0 / np.sqrt(fan_in)
            out["W"] = rng.uniform(-lim, lim, (self.out_channels, self.in_channels,
                                               self.kernel, self.kernel))
            out["b"] = rng.uniform(-lim, lim, (self.out_channels,))
        elif self.kind == "layer_norm":
            out["gain"] = np.ones(self.size)
            out["bias"] = np.zeros(self.size)
        return {k: v.astype(dtype) for k, v in out.items()}


LN_EPS = 1e-5


def dense_forward(spec, params, x):
    if x.ndim < 2:
        raise ShapeError(f"dense expects a batch dimension, got shape {x.shape}")
    orig_shape = None
    if x.ndim != 2:
        orig_shape = x.shape
        x = x.reshape(x.shape[0], -1)
    if x.shape[1] != spec.in_size:
        raise ShapeError(f"dense expects {spec.in_size} inputs, got {x.shape[1]}")
    y = x @ params["W"] + params["b"]
    return y, (x, params["W"], orig_shape)


def dense_backward(spec, cache, dy):
    x, w, orig_shape = cache
    grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
    dx = dy @ w.T
    if orig_shape is not None:
        dx = dx.reshape(orig_shape)
    return dx, grads


def conv2d_forward(spec, params, x):
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv2d expects (B,{spec.in_channels},H,W), got {x.shape}")
    b, _, h, w = x.shape
    k, s = spec.kernel, spec.stride
    if h < k or w < k:
        raise ShapeError(f"conv2d kernel {k} larger than input {h}x{w}")
    ho = kernels.conv_out_size(h, k, s)
    wo = kernels.conv_out_size(w, k, s)
    cols = kernels.im2col(x, k, k, s)                      # (B, C*k*k, L)
    wmat = params["W"].reshape(spec.out_channels, -1)       # (O, C*k*k)
    y = np.matmul(wmat, cols) + params["b"][:, None]        # (B, O, L)
    y = y.reshape(b, spec.out_channels, ho, wo)
    return y, (cols, wmat, x.shape)


def conv2d_backward(spec, cache, dy):
    cols, wmat, x_shape = cache
    b = dy.shape[0]
    dyl = dy.reshape(b, spec.out_channels, -1)              # (B, O, L)
    dw = np.einsum("bol,bkl->ok", dyl, cols).reshape(
        spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
    db = dyl.sum(axis=(0, 2))
    dcols = np.matmul(wmat.T, dyl)                          # (B, C*k*k, L)
    dx = kernels.col2im(dcols, x_shape[1], x_shape[2], x_shape[3],
                        spec.kernel, spec.kernel, spec.stride)
    return dx, {"W": dw, "b": db}


def layer_norm_forward(spec, params, x):
    if x.shape[-1] != spec.size:
        raise ShapeError(f"layer_norm expects width {spec.size}, got {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    y = params["gain"] * xhat + params["bias"]
    return y, (xhat, inv, params["gain"])


def layer_norm_backward(spec, cache, dy):
    xhat, inv, gain = cache
    n = spec.size
    dxhat = dy * gain
    # standard layer-norm backward, all reductions over the last axis
    dx = inv / n * (n * dxhat
                    - dxhat.sum(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    axes = tuple(range(dy.ndim - 1))
    grads = {"gain": (dy * xhat).sum(axis=axes), "bias": dy.sum(axis=axes)}
    return dx, grads


def activation_forward(spec, params, x):
    if spec.fn == "elu":
        neg = x < 0
        y = np.where(neg, np.expm1(np.minimum(x, 0.0)), x)
        return y, (neg, y)
    if spec.fn == "tanh":
        y = np.tanh(x)
        return y, (y,)
    if spec.fn == "softplus":
        y = np.logaddexp(0.0, x)
        return y, (x,)
    return x, ()


def activation_backward(spec, cache, dy):
    if spec.fn == "elu":
        neg, y = cache
        return dy * np.where(neg, y + 1.0, 1.0), {}
    if spec.fn == "tanh":
        (y,) = cache
        return dy * (1.0 - y * y), {}
    if spec.fn == "softplus":
        (x,) = cache
        # d/dx log(1+e^x) = sigmoid(x), computed stably
        return dy / (1.0 + np.exp(-x)), {}
    return dy, {}


FORWARD = {
    "dense": dense_forward,
    "conv2d": conv2d_forward,
    "layer_norm": layer_norm_forward,
    "activation": activation_forward,
}

BACKWARD = {
    "dense": dense_backward,
    "conv2d": conv2d_backward,
    "layer_norm": layer_norm_backward,
    "activation": activation_backward,
}
