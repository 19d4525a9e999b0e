"""Darknet ``.weights`` files.

Layout (all little-endian)::

    int32 major, int32 minor, int32 revision
    seen: int64 if major*10 + minor >= 2 else int32
    for each convolutional layer, in order:
        batch-normalized: beta[n], gamma[n], mean[n], variance[n], weights
        otherwise:        bias[n], weights
    weights are float32 in (out, in, kh, kw) order

Files are always written as version 0.2.0.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cfg import ConvLayer, NetworkDef, infer_shapes
from .errors import WeightsError
from .tensor import BatchNorm, ConvParams

HEADER_VERSION = (0, 2, 0)
F32 = np.dtype("<f4")


@dataclass(frozen=True)
class WeightsHeader:
    major: int
    minor: int
    revision: int
    seen: int

    @property
    def size(self) -> int:
        return 12 + (8 if self.major * 10 + self.minor >= 2 else 4)


def read_header(data: bytes) -> WeightsHeader:
    if len(data) < 12:
        raise WeightsError(f"truncated header: expected at least 12 bytes, got {len(data)}")
    major, minor, revision = struct.unpack_from("<3i", data, 0)
    wide = major * 10 + minor >= 2
    need = 20 if wide else 16
    if len(data) < need:
        raise WeightsError(f"truncated header: expected {need} bytes, got {len(data)}")
    (seen,) = struct.unpack_from("<q" if wide else "<i", data, 12)
    return WeightsHeader(major, minor, revision, seen)


def _conv_layers(net: NetworkDef):
    if any(l.out_shape is None for l in net.layers):
        net = infer_shapes(net)
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvLayer):
            yield i, layer, net.input_shape_of(i)[0]


def expected_size(net: NetworkDef, header_size: int = 20) -> int:
    """Byte length of a weights file for ``net``."""
    total = 0
    for _, layer, in_c in _conv_layers(net):
        n = layer.filters
        total += (4 * n if layer.batch_normalize else n) + n * in_c * layer.size ** 2
    return header_size + 4 * total


def load_weights(data, net: NetworkDef) -> dict[int, ConvParams]:
    """Read conv parameters keyed by layer index. ``data`` is bytes or a binary file."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = data.read()
    data = bytes(data)
    header = read_header(data)
    want = expected_size(net, header.size)
    if len(data) < want:
        raise WeightsError(f"truncated weights: expected {want} bytes, got {len(data)}")
    if len(data) > want:
        raise WeightsError(
            f"trailing data: expected {want} bytes, got {len(data)} ({len(data) - want} extra)"
        )
    floats = np.frombuffer(data, dtype=F32, offset=header.size).astype(np.float32)
    pos = 0

    def take(count):
        nonlocal pos
        chunk = floats[pos:pos + count]
        pos += count
        return chunk

    params = {}
    for i, layer, in_c in _conv_layers(net):
        n = layer.filters
        if layer.batch_normalize:
            beta, gamma, mean, var = take(n), take(n), take(n), take(n)
            bn = BatchNorm(gamma=gamma, beta=beta, mean=mean, variance=var)
            bias = np.zeros(n, np.float32)
        else:
            bn = None
            bias = take(n)
        w = take(n * in_c * layer.size ** 2).reshape(n, in_c, layer.size, layer.size)
        params[i] = ConvParams(w, bias, layer.stride, layer.pad, bn, layer.activation)
    return params


def save_weights(params: dict[int, ConvParams], net: NetworkDef, seen: int = 0) -> bytes:
    parts = [struct.pack("<3iq", *HEADER_VERSION, seen)]
    for i, layer, in_c in _conv_layers(net):
        p = params[i]
        shape = (layer.filters, in_c, layer.size, layer.size)
        if p.weights.shape != shape:
            raise WeightsError(f"layer {i}: weights {p.weights.shape} do not match {shape}")
        if layer.batch_normalize:
            bn = p.batch_norm
            if bn is None:
                raise WeightsError(f"layer {i}: batch-normalized layer has no batch-norm params")
            if np.any(np.asarray(p.bias) != 0):
                raise WeightsError(f"layer {i}: conv bias must be zero when batch-normalized")
            arrays = (bn.beta, bn.gamma, bn.mean, bn.variance, p.weights)
        else:
            arrays = (p.bias, p.weights)
        parts += [np.asarray(a, dtype=F32).tobytes() for a in arrays]
    return b"".join(parts)
