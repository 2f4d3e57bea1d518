"""Differentiable layer kernels over float64 numpy arrays.

Each forward returns (output, cache); each backward consumes (upstream grad,
cache) and returns exact analytic gradients of the forward definition.
Stride-1 convolutions run through an FFT cross-correlation path (identical
math, large speedup for wide kernels); strided convolutions use an im2col
fallback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import next_fast_len


@dataclass(frozen=True)
class Conv1D:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: str = "same"  # "same" | "none"

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        if self.padding not in ("same", "none"):
            raise ValueError(f"padding must be 'same' or 'none', got {self.padding!r}")


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Activation:
    kind: str  # "relu" | "identity"

    def __post_init__(self):
        if self.kind not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.kind!r}")


LayerSpec = Union[Conv1D, Dense, Dropout, Flatten, Activation]


def conv_padding(layer: Conv1D) -> tuple[int, int]:
    """(left, right) zero padding; 'same' keeps length under stride 1."""
    if layer.padding == "none":
        return 0, 0
    total = layer.kernel - 1
    left = total // 2
    return left, total - left


def conv_output_len(layer: Conv1D, length: int) -> int:
    left, right = conv_padding(layer)
    padded = length + left + right
    if padded < layer.kernel:
        raise ValueError(f"kernel {layer.kernel} exceeds padded length {padded}")
    return (padded - layer.kernel) // layer.stride + 1


def _pad(x: np.ndarray, left: int, right: int) -> np.ndarray:
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


def _freq_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # (.., A, C, F) x (.., C, B, F) contracted over C, per frequency.
    at = np.ascontiguousarray(a.transpose(2, 0, 1))
    bt = np.ascontiguousarray(b.transpose(2, 0, 1))
    return (at @ bt).transpose(1, 2, 0)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, layer: Conv1D):
    """Cross-correlation of (batch, in_ch, len) with (out_ch, in_ch, kernel).

    out[n,o,i] = b[o] + sum_{c,j} w[o,c,j] * xpad[n,c,i*stride+j]
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != layer.in_channels:
        raise ValueError(f"expected input (batch, {layer.in_channels}, len), got {x.shape}")
    if w.shape != (layer.out_channels, layer.in_channels, layer.kernel):
        raise ValueError(f"bad weight shape {w.shape}")
    left, right = conv_padding(layer)
    out_len = conv_output_len(layer, x.shape[2])
    xpad = _pad(x, left, right)

    if layer.stride == 1:
        n = next_fast_len(xpad.shape[2])
        xf = np.fft.rfft(xpad, n=n, axis=-1)                    # (B, C, F)
        wf = np.fft.rfft(w, n=n, axis=-1)                       # (O, C, F)
        yf = _freq_matmul(xf, np.conj(wf).transpose(1, 0, 2))   # (B, O, F)
        y = np.fft.irfft(yf, n=n, axis=-1)[..., :out_len]
        cache = ("fft", layer, x.shape, xf, wf, n, out_len)
    else:
        windows = sliding_window_view(xpad, layer.kernel, axis=2)[:, :, :: layer.stride]
        y = np.tensordot(windows, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        cache = ("im2col", layer, x.shape, xpad, w)
    return y + b[None, :, None], cache


def conv1d_backward(grad: np.ndarray, cache, need_dx: bool = True):
    """Gradients of conv1d_forward: (dx, dw, db).

    need_dx=False skips the input gradient (None returned); the first layer
    of a network never uses it and it is the single priciest backward term.
    """
    kind = cache[0]
    if kind == "fft":
        _, layer, x_shape, xf, wf, n, out_len = cache
        left, _ = conv_padding(layer)
        length = x_shape[2]
        gf = np.fft.rfft(grad, n=n, axis=-1)                    # (B, O, F)
        dx = None
        if need_dx:
            # dxpad[t] = sum_o g[t-j] w[j] -> product spectrum (no conjugation)
            dxf = _freq_matmul(gf, wf)                          # (B, C, F)
            dxpad = np.fft.irfft(dxf, n=n, axis=-1)
            dx = dxpad[..., left : left + length]
        # dw[o,c,j] = sum_{b,i} xpad[b,c,i+j] g[b,o,i] -> correlation
        dwf = _freq_matmul(np.conj(gf).transpose(1, 0, 2), xf)  # (O, C, F)
        dw = np.ascontiguousarray(np.fft.irfft(dwf, n=n, axis=-1)[..., : layer.kernel])
        db = grad.sum(axis=(0, 2))
        return dx, dw, db

    _, layer, x_shape, xpad, w = cache
    left, _ = conv_padding(layer)
    length = x_shape[2]
    k, stride = layer.kernel, layer.stride
    windows = sliding_window_view(xpad, k, axis=2)[:, :, ::stride]  # (B, C, L', K)
    dw = np.tensordot(grad, windows, axes=([0, 2], [0, 2]))         # (O, C, K)
    db = grad.sum(axis=(0, 2))
    if not need_dx:
        return None, dw, db
    dxpad = np.zeros_like(xpad)
    out_len = grad.shape[2]
    # scatter each kernel tap's contribution back onto the padded input
    for j in range(k):
        idx = j + stride * np.arange(out_len)
        dxpad[:, :, idx] += np.einsum("bol,oc->bcl", grad, w[:, :, j])
    dx = dxpad[..., left : left + length]
    return dx, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x @ w + b for (batch, in_dim) inputs."""
    y = x @ w + b
    return y, (x, w)


def dense_backward(grad: np.ndarray, cache):
    x, w = cache
    return grad @ w.T, x.T @ grad, grad.sum(axis=0)


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad * mask


def flatten_forward(x: np.ndarray):
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(grad: np.ndarray, shape) -> np.ndarray:
    return grad.reshape(shape)


def dropout_forward(
    x: np.ndarray, rate: float, mode: str, rng: Optional[np.random.Generator] = None
):
    """Inverted dropout: training keeps each element with prob 1-rate and
    rescales by 1/(1-rate); eval mode is the identity."""
    if mode == "eval" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("training-mode dropout needs an RNG")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad: np.ndarray, mask) -> np.ndarray:
    return grad if mask is None else grad * mask
