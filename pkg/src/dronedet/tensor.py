"""Dense NCHW tensors and the handful of kernels the detector needs.

Tensors are plain ``float32`` numpy arrays of shape (batch, channels,
height, width). Kernels never modify their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError

LEAKY_SLOPE = 0.1
BN_EPS = 1e-5
ACTIVATIONS = ("linear", "relu", "leaky")


def as_tensor(x) -> np.ndarray:
    t = np.asarray(x, dtype=np.float32)
    if t.ndim != 4:
        raise ShapeError(f"expected rank-4 NCHW tensor, got shape {t.shape}")
    if min(t.shape) < 1:
        raise ShapeError(f"all tensor dims must be >= 1, got {t.shape}")
    return t


@dataclass(frozen=True)
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.variance) < 0):
            raise ConfigError("batch-norm running variance must be >= 0")


@dataclass(frozen=True)
class ConvParams:
    """Weights of one convolution, shape (out, in, fh, fw).

    When ``batch_norm`` is set the convolution carries no bias of its own
    (darknet layout) and ``bias`` is expected to be zero.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: int = 0
    batch_norm: Optional[BatchNorm] = None
    activation: str = "linear"

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 4:
            raise ConfigError(f"conv weights must be (out, in, fh, fw), got {w.shape}")
        if np.asarray(self.bias).shape != (w.shape[0],):
            raise ConfigError("bias length must equal out_channels")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.stride < 1 or self.pad < 0:
            raise ConfigError("stride must be >= 1 and pad >= 0")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


def apply_activation(x, kind: str):
    """Elementwise activation; works on scalars and arrays."""
    if kind == "linear":
        return x
    if kind == "relu":
        return np.maximum(x, 0) if isinstance(x, np.ndarray) else max(0.0, x)
    if kind == "leaky":
        if isinstance(x, np.ndarray):
            return np.where(x > 0, x, x * np.float32(LEAKY_SLOPE)).astype(x.dtype, copy=False)
        return x if x > 0 else LEAKY_SLOPE * x
    raise ConfigError(f"unknown activation {kind!r}")


def batch_norm(x: np.ndarray, bn: BatchNorm) -> np.ndarray:
    """Inference-time batch norm over the channel axis of an NCHW tensor."""
    scale = np.asarray(bn.gamma, np.float64) / np.sqrt(np.asarray(bn.variance, np.float64) + BN_EPS)
    shift = np.asarray(bn.beta, np.float64) - np.asarray(bn.mean, np.float64) * scale
    y = x * scale[None, :, None, None].astype(np.float32) + shift[None, :, None, None].astype(np.float32)
    return y.astype(np.float32, copy=False)


def fold_batch_norm(p: ConvParams) -> ConvParams:
    """Absorb batch norm into the weights and bias of ``p``."""
    if p.batch_norm is None:
        return p
    bn = p.batch_norm
    scale = np.asarray(bn.gamma, np.float64) / np.sqrt(np.asarray(bn.variance, np.float64) + BN_EPS)
    w = (np.asarray(p.weights, np.float64) * scale[:, None, None, None]).astype(np.float32)
    b = np.asarray(bn.beta, np.float64) + (np.asarray(p.bias, np.float64) - bn.mean) * scale
    return ConvParams(w, b.astype(np.float32), p.stride, p.pad, None, p.activation)


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d(x, p: ConvParams) -> np.ndarray:
    """Cross-correlation + bias, then batch norm, then activation."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    oc, ic, fh, fw = p.weights.shape
    if c != ic:
        raise ConfigError(f"conv expects {ic} input channels, got {c}")
    if fh > h + 2 * p.pad or fw > w + 2 * p.pad:
        raise ConfigError(
            f"kernel {fh}x{fw} larger than padded input {h + 2 * p.pad}x{w + 2 * p.pad}"
        )
    weights = np.asarray(p.weights, np.float32)
    s = p.stride
    oh = conv_output_size(h, fh, s, p.pad)
    ow = conv_output_size(w, fw, s, p.pad)

    if fh == 1 and fw == 1 and p.pad == 0:
        cols = x[:, :, ::s, ::s].transpose(0, 2, 3, 1).reshape(-1, c)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (p.pad, p.pad), (p.pad, p.pad))) if p.pad else x
        win = np.lib.stride_tricks.sliding_window_view(xp, (fh, fw), axis=(2, 3))
        win = win[:, :, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s]
        # (n, c, oh, ow, fh, fw) -> rows of (c, fh, fw) patches
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * fh * fw)
    out = cols @ weights.reshape(oc, -1).T
    out += np.asarray(p.bias, np.float32)
    y = out.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2)
    y = np.ascontiguousarray(y, dtype=np.float32)
    if p.batch_norm is not None:
        y = batch_norm(y, p.batch_norm)
    return apply_activation(y, p.activation)


def maxpool_output_size(size: int, pool: int, stride: int, pad: int) -> int:
    return (size + pad - pool) // stride + 1


def maxpool(x, size: int, stride: int, pad: int = 0) -> np.ndarray:
    """Darknet max-pool: windows start at ``-pad // 2``, padding is -inf.

    With ``size=2, stride=1, pad=1`` the spatial dims are preserved and the
    extra row/column sits on the bottom/right.
    """
    x = as_tensor(x)
    if size < 1 or stride < 1:
        raise ConfigError("pool size and stride must be >= 1")
    n, c, h, w = x.shape
    oh = maxpool_output_size(h, size, stride, pad)
    ow = maxpool_output_size(w, size, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(f"pool {size} does not fit input {h}x{w}")
    off = pad // 2
    # enough -inf border that every window is in range
    lo = off
    hi_h = max(0, (oh - 1) * stride + size - off - h)
    hi_w = max(0, (ow - 1) * stride + size - off - w)
    xp = np.pad(x, ((0, 0), (0, 0), (lo, hi_h), (lo, hi_w)), constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(xp, (size, size), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    return np.ascontiguousarray(win.max(axis=(4, 5)), dtype=np.float32)


def upsample_nearest(x, factor: int) -> np.ndarray:
    x = as_tensor(x)
    if factor < 1:
        raise ConfigError("upsample factor must be >= 1")
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def concat_channels(*tensors) -> np.ndarray:
    """Stack tensors along the channel axis, first operand first."""
    ts = [np.asarray(t, dtype=np.float32) for t in tensors]
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != 4 or (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ConfigError(f"cannot concatenate {t.shape} onto {ref}: batch/spatial mismatch")
    return np.concatenate(ts, axis=1)
