"""Minimal differentiable-layer kit: just enough to express small 1D
convolutional GAN components with explicit forward/backward passes.

Layers cache what their backward pass needs; parameter gradients
accumulate into Tensor.grad until zeroed. There is no computation-graph
autodiff — composition order is the caller's responsibility (Sequential
covers the straight-line case).
"""

import json
import math
from typing import Optional

import numpy as np


class Tensor:
    """A float64 array plus a same-shaped gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad[...] = 0.0


def _init_rng(rng):
    return rng if rng is not None else np.random.default_rng(0)


def _uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


# ---------------------------------------------------------------------------
# Convolution primitives (cross-correlation convention, zero padding)
# ---------------------------------------------------------------------------

def _im2col(xp, k, stride, lout):
    """(B, C, Lp) padded input -> (C*K, B*Lout) patch matrix."""
    cols = np.empty((xp.shape[1], k, xp.shape[0], lout))
    for t in range(k):
        cols[:, t] = xp[:, :, t : t + stride * lout : stride].transpose(1, 0, 2)
    return cols.reshape(xp.shape[1] * k, xp.shape[0] * lout)


def conv1d_forward(x, w, b=None, stride=1, padding=0):
    """x: (B, Cin, L), w: (Cout, Cin, K) -> (B, Cout, Lout)."""
    batch, cin, length = x.shape
    cout, cin_w, k = w.shape
    if cin != cin_w:
        raise ValueError(f"input channels {cin} != weight channels {cin_w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if k > length + 2 * padding:
        raise ValueError("kernel longer than padded input")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    lout = (length + 2 * padding - k) // stride + 1
    cols = _im2col(xp, k, stride, lout)
    y = (w.reshape(cout, cin * k) @ cols).reshape(cout, batch, lout)
    y = np.ascontiguousarray(y.transpose(1, 0, 2))
    if b is not None:
        y += b[None, :, None]
    return y


def conv1d_backward(gy, x, w, stride=1, padding=0):
    """Gradients of conv1d_forward: returns (gx, gw, gb)."""
    batch, cin, length = x.shape
    cout, _, k = w.shape
    if gy.shape[:2] != (batch, cout):
        raise ValueError("grad_out shape mismatch")
    lout = gy.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = _im2col(xp, k, stride, lout)
    gy2 = gy.transpose(1, 0, 2).reshape(cout, batch * lout)
    gw = (gy2 @ cols.T).reshape(w.shape)
    gcols = (w.reshape(cout, cin * k).T @ gy2).reshape(cin, k, batch, lout)
    gxp = np.zeros_like(xp)
    for t in range(k):
        gxp[:, :, t : t + stride * lout : stride] += gcols[:, t].transpose(1, 0, 2)
    gb = gy.sum(axis=(0, 2))
    gx = gxp[:, :, padding : padding + length] if padding else gxp
    return gx, gw, gb


def conv1d_transposed_forward(x, w, b=None, stride=1, padding=0,
                              output_padding=0):
    """x: (B, Cin, L), w: (Cin, Cout, K) -> (B, Cout, Lout).

    Lout = (L - 1)*stride - 2*padding + K + output_padding. This is the
    adjoint of conv1d_forward on the same geometry.
    """
    batch, cin, length = x.shape
    cin_w, cout, k = w.shape
    if cin != cin_w:
        raise ValueError(f"input channels {cin} != weight channels {cin_w}")
    if not 0 <= output_padding < max(stride, 1):
        raise ValueError("output_padding must be in [0, stride)")
    lout = (length - 1) * stride - 2 * padding + k + output_padding
    if lout <= 0:
        raise ValueError("invalid geometry: non-positive output length")
    x2 = x.transpose(1, 0, 2).reshape(cin, batch * length)
    v = w.transpose(1, 2, 0).reshape(cout * k, cin)
    prod = (v @ x2).reshape(cout, k, batch, length)
    full = np.zeros((batch, cout, (length - 1) * stride + k))
    for t in range(k):
        full[:, :, t : t + stride * length : stride] += prod[:, t].transpose(1, 0, 2)
    # crop `padding` on the left and `padding - output_padding` on the
    # right; positions past the natural support stay zero
    y = np.zeros((batch, cout, lout))
    avail = max(0, min(lout, full.shape[2] - padding))
    y[:, :, :avail] = full[:, :, padding : padding + avail]
    if b is not None:
        y += b[None, :, None]
    return y


def conv1d_transposed_backward(gy, x, w, stride=1, padding=0,
                               output_padding=0):
    """Gradients of conv1d_transposed_forward: returns (gx, gw, gb)."""
    batch, cin, length = x.shape
    _, cout, k = w.shape
    gb = gy.sum(axis=(0, 2))
    gfull = np.zeros((batch, cout, (length - 1) * stride + k))
    avail = max(0, min(gy.shape[2], gfull.shape[2] - padding))
    gfull[:, :, padding : padding + avail] = gy[:, :, :avail]
    gcols = np.empty((cout, k, batch, length))
    for t in range(k):
        gcols[:, t] = gfull[:, :, t : t + stride * length : stride].transpose(1, 0, 2)
    gcols = gcols.reshape(cout * k, batch * length)
    v = w.transpose(1, 2, 0).reshape(cout * k, cin)
    gx = (v.T @ gcols).reshape(cin, batch, length).transpose(1, 0, 2)
    x2 = x.transpose(1, 0, 2).reshape(cin, batch * length)
    gw = (gcols @ x2.T).reshape(cout, k, cin).transpose(2, 0, 1)
    return gx, gw, gb


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class Layer:
    training = False

    def params(self):
        return []

    def state(self):
        """Named live arrays (parameters and buffers) for checkpointing."""
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError


class Conv1d(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None):
        rng = _init_rng(rng)
        self.stride, self.padding = stride, padding
        self.weight = Tensor(
            _uniform_fan_in(rng, (out_ch, in_ch, kernel), in_ch * kernel)
        )
        self.bias = Tensor(np.zeros(out_ch))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def state(self):
        return {"weight": self.weight.data, "bias": self.bias.data}

    def forward(self, x):
        self._x = x
        return conv1d_forward(x, self.weight.data, self.bias.data,
                              self.stride, self.padding)

    def backward(self, gy):
        gx, gw, gb = conv1d_backward(gy, self._x, self.weight.data,
                                     self.stride, self.padding)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class ConvTranspose1d(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0,
                 output_padding=0, rng=None):
        rng = _init_rng(rng)
        self.stride, self.padding = stride, padding
        self.output_padding = output_padding
        self.weight = Tensor(
            _uniform_fan_in(rng, (in_ch, out_ch, kernel), in_ch * kernel)
        )
        self.bias = Tensor(np.zeros(out_ch))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def state(self):
        return {"weight": self.weight.data, "bias": self.bias.data}

    def forward(self, x):
        self._x = x
        return conv1d_transposed_forward(
            x, self.weight.data, self.bias.data, self.stride, self.padding,
            self.output_padding,
        )

    def backward(self, gy):
        gx, gw, gb = conv1d_transposed_backward(
            gy, self._x, self.weight.data, self.stride, self.padding,
            self.output_padding,
        )
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class BatchNorm1d(Layer):
    """Per-channel normalization over (batch, length) with running stats."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.momentum, self.eps = momentum, eps
        self.weight = Tensor(np.ones(channels))
        self.bias = Tensor(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def state(self):
        return {
            "weight": self.weight.data,
            "bias": self.bias.data,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def forward(self, x):
        if self.training:
            b, _, length = x.shape
            if b * length < 2:
                raise ValueError("batch norm needs B*L >= 2 in train mode")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv[None, :, None]
        self._cache = (x, xhat, mean, inv)
        return self.weight.data[None, :, None] * xhat + self.bias.data[None, :, None]

    def backward(self, gy):
        x, xhat, mean, inv = self._cache
        self.weight.grad += (gy * xhat).sum(axis=(0, 2))
        self.bias.grad += gy.sum(axis=(0, 2))
        gxhat = gy * self.weight.data[None, :, None]
        if not self.training:
            return gxhat * inv[None, :, None]
        n = x.shape[0] * x.shape[2]
        xc = x - mean[None, :, None]
        gvar = (gxhat * xc).sum(axis=(0, 2)) * (-0.5) * inv**3
        gmean = -(gxhat.sum(axis=(0, 2))) * inv + gvar * (
            -2.0 / n
        ) * xc.sum(axis=(0, 2))
        return (
            gxhat * inv[None, :, None]
            + gvar[None, :, None] * 2.0 * xc / n
            + gmean[None, :, None] / n
        )


class LayerNorm(Layer):
    """Normalize over the last axis per sample, then affine."""

    def __init__(self, length, eps=1e-5):
        self.eps = eps
        self.weight = Tensor(np.ones(length))
        self.bias = Tensor(np.zeros(length))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def state(self):
        return {"weight": self.weight.data, "bias": self.bias.data}

    def forward(self, x):
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv)
        return self.weight.data * xhat + self.bias.data

    def backward(self, gy):
        xhat, inv = self._cache
        reduce_axes = tuple(range(gy.ndim - 1))
        self.weight.grad += (gy * xhat).sum(axis=reduce_axes)
        self.bias.grad += gy.sum(axis=reduce_axes)
        gxhat = gy * self.weight.data
        return inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )


class Linear(Layer):
    def __init__(self, in_features, out_features, rng=None):
        rng = _init_rng(rng)
        self.weight = Tensor(
            _uniform_fan_in(rng, (out_features, in_features), in_features)
        )
        self.bias = Tensor(np.zeros(out_features))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def state(self):
        return {"weight": self.weight.data, "bias": self.bias.data}

    def forward(self, x):
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, gy):
        self.weight.grad += gy.T @ self._x
        self.bias.grad += gy.sum(axis=0)
        return gy @ self.weight.data


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy):
        return np.where(self._mask, gy, 0.0)


class Sigmoid(Layer):
    def forward(self, x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        # keep the open-interval contract even where exp underflows
        out = np.clip(out, 1e-12, 1.0 - 1e-12)
        self._y = out
        return out

    def backward(self, gy):
        return gy * self._y * (1.0 - self._y)


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape)


class Scale(Layer):
    """Multiply by a fixed constant (no parameters)."""

    def __init__(self, factor):
        self.factor = float(factor)

    def forward(self, x):
        return x * self.factor

    def backward(self, gy):
        return gy * self.factor


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)

    def set_training(self, flag: bool):
        for layer in self.layers:
            if isinstance(layer, Sequential):
                layer.set_training(flag)
            else:
                layer.training = flag
        self.training = flag

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def state(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.state().items():
                out[f"{i}.{name}"] = arr
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy):
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

_BCE_CLAMP = 1e-7


def bce_loss(pred, target):
    """Mean binary cross-entropy. Returns (loss, grad wrt pred).

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs; clamped
    coordinates get zero gradient.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if target.min(initial=0.0) < 0.0 or target.max(initial=0.0) > 1.0:
        raise ValueError("targets must lie in [0, 1]")
    p = np.clip(pred, _BCE_CLAMP, 1.0 - _BCE_CLAMP)
    loss = float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log1p(-p))))
    inside = (pred > _BCE_CLAMP) & (pred < 1.0 - _BCE_CLAMP)
    grad = np.where(inside, (-target / p + (1.0 - target) / (1.0 - p)), 0.0)
    return loss, grad / pred.size


def mse_loss(pred, target):
    """Mean squared error. Returns (loss, grad wrt pred = 2(p-t)/n)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / pred.size


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction, applied to Tensor.grad."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g.shape != m.shape:
                raise ValueError("gradient/state size mismatch")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

def grad_check(loss_fn, tensors, eps=1e-5):
    """Compare analytic gradients against central differences.

    loss_fn() must run a full forward+backward pass, accumulate gradients
    into the given tensors, and return the scalar loss. Returns the
    maximum relative error |analytic - numeric| / max(1, |a|, |n|)
    over all coordinates of all tensors.
    """
    for t in tensors:
        t.zero_grad()
    loss_fn()
    analytic = [t.grad.copy() for t in tensors]
    worst = 0.0
    for t, ga in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            rel = abs(numeric - gflat[i]) / max(1.0, abs(numeric), abs(gflat[i]))
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Parameter serialization
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_params(path, named_arrays, meta: Optional[dict] = None):
    """Serialize named float64 arrays plus a JSON metadata blob (.npz).

    Doubles round-trip bit-exactly.
    """
    meta = dict(meta or {})
    meta["checkpoint_version"] = CHECKPOINT_VERSION
    payload = {name: np.asarray(arr) for name, arr in named_arrays.items()}
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **payload)


def load_params(path):
    """Inverse of save_params: returns (named arrays, metadata dict)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {meta.get('checkpoint_version')}"
        )
    return arrays, meta
