"""Tiny-YOLOv3 layer tables and forward inference.

Two architectures are emitted:

* ``build_baseline_tiny``: the standard 24-layer Tiny-YOLOv3, detecting on
  13x13 and 26x26 grids (3 anchors each).
* ``build_custom_tiny``: the same trunk plus a second upsampling branch,
  31 layers detecting on 13x13, 26x26 and 52x52 grids (2 anchors each).

Custom layer table at 416x416 (index: layer -> output)::

     0 conv 16 3x3      416      16 yolo (anchors 4,5)     13
     1 max 2/2          208      17 route 13               13
     2 conv 32 3x3      208      18 conv 128 1x1           13
     3 max 2/2          104      19 upsample x2            26
     4 conv 64 3x3      104      20 route 19, 8     384ch  26
     5 max 2/2           52      21 conv 256 3x3           26
     6 conv 128 3x3      52      22 conv B(5+C) 1x1        26
     7 max 2/2           26      23 yolo (anchors 2,3)     26
     8 conv 256 3x3      26      24 route 21               26
     9 max 2/2           13      25 conv 64 1x1            26
    10 conv 512 3x3      13      26 upsample x2            52
    11 max 2/1           13      27 route 26, 6     192ch  52
    12 conv 1024 3x3     13      28 conv 128 3x3           52
    13 conv 256 1x1      13      29 conv B(5+C) 1x1        52
    14 conv 512 3x3      13      30 yolo (anchors 0,1)     52
    15 conv B(5+C) 1x1   13
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .cfg import (ConvLayer, MaxPoolLayer, NetOptions, NetworkDef, RouteLayer,
                  UpsampleLayer, YoloLayer, infer_shapes)
from .errors import ConfigError, ShapeError
from .head import YoloScale
from .tensor import BatchNorm, ConvParams

DEFAULT_ANCHORS = ((10, 14), (23, 27), (37, 58), (81, 82), (135, 169), (344, 319))


def _conv(filters, size, bn=True, activation="leaky"):
    return ConvLayer(filters=filters, size=size, stride=1, pad=size // 2,
                     batch_normalize=bn, activation=activation)


def _detector(anchors_per_scale, classes):
    return ConvLayer(filters=anchors_per_scale * (5 + classes), size=1, activation="linear")


def _trunk():
    layers = []
    for filters in (16, 32, 64, 128, 256):
        layers += [_conv(filters, 3), MaxPoolLayer(2, 2, 1)]
    layers += [_conv(512, 3), MaxPoolLayer(2, 1, 1), _conv(1024, 3), _conv(256, 1), _conv(512, 3)]
    return layers  # indices 0..14


def _check_anchors(anchors):
    anchors = tuple((int(w), int(h)) for w, h in anchors)
    if len(anchors) != 6:
        raise ConfigError(f"expected 6 anchors, got {len(anchors)}")
    areas = [w * h for w, h in anchors]
    if areas != sorted(areas):
        raise ConfigError("anchors must be sorted by ascending area")
    return anchors


def baseline_def(classes=1, anchors=DEFAULT_ANCHORS, width=416, height=416) -> NetworkDef:
    anchors = _check_anchors(anchors)
    yolo = lambda mask: YoloLayer(mask=mask, anchors=anchors, classes=classes)
    layers = _trunk() + [
        _detector(3, classes), yolo((3, 4, 5)),            # 15, 16
        RouteLayer((13,)), _conv(128, 1), UpsampleLayer(2),  # 17-19
        RouteLayer((19, 8)), _conv(256, 3),                 # 20, 21
        _detector(3, classes), yolo((0, 1, 2)),             # 22, 23
    ]
    opts = NetOptions(batch=64, subdivisions=8, width=width, height=height, channels=3,
                      momentum=0.9, decay=0.0005, learning_rate=0.001, max_batches=50000)
    return infer_shapes(NetworkDef(opts, tuple(layers)))


def custom_def(classes=1, anchors=DEFAULT_ANCHORS, width=416, height=416) -> NetworkDef:
    anchors = _check_anchors(anchors)
    yolo = lambda mask: YoloLayer(mask=mask, anchors=anchors, classes=classes)
    layers = _trunk() + [
        _detector(2, classes), yolo((4, 5)),                # 15, 16
        RouteLayer((13,)), _conv(128, 1), UpsampleLayer(2),  # 17-19
        RouteLayer((19, 8)), _conv(256, 3),                 # 20, 21
        _detector(2, classes), yolo((2, 3)),                # 22, 23
        RouteLayer((21,)), _conv(64, 1), UpsampleLayer(2),  # 24-26
        RouteLayer((26, 6)), _conv(128, 3),                 # 27, 28
        _detector(2, classes), yolo((0, 1)),                # 29, 30
    ]
    opts = NetOptions(batch=64, subdivisions=8, width=width, height=height, channels=3,
                      momentum=0.9, decay=0.0005, learning_rate=0.001, max_batches=50000)
    return infer_shapes(NetworkDef(opts, tuple(layers)))


# ------------------------------------------------------------- parameters

def zero_params(net: NetworkDef) -> dict[int, ConvParams]:
    return random_params(net, seed=None, scale=0.0)


def random_params(net: NetworkDef, seed=0, scale=1.0) -> dict[int, ConvParams]:
    """He-style random conv weights; batch-norm stats drawn near identity."""
    if any(l.out_shape is None for l in net.layers):
        net = infer_shapes(net)
    rng = np.random.default_rng(seed)
    params = {}
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, ConvLayer):
            continue
        in_c = net.input_shape_of(i)[0]
        n, k = layer.filters, layer.size
        std = scale * np.sqrt(2.0 / (in_c * k * k))
        w = (rng.standard_normal((n, in_c, k, k)) * std).astype(np.float32)
        if layer.batch_normalize:
            bn = BatchNorm(
                gamma=(1 + 0.1 * scale * rng.standard_normal(n)).astype(np.float32),
                beta=(0.1 * scale * rng.standard_normal(n)).astype(np.float32),
                mean=(0.1 * scale * rng.standard_normal(n)).astype(np.float32),
                variance=(1 + 0.1 * scale * rng.random(n)).astype(np.float32),
            )
            bias = np.zeros(n, np.float32)
        else:
            bn = None
            bias = (0.1 * scale * rng.standard_normal(n)).astype(np.float32)
        params[i] = ConvParams(w, bias, layer.stride, layer.pad, bn, layer.activation)
    return params


# ---------------------------------------------------------------- network

def yolo_scales(net: NetworkDef) -> list[YoloScale]:
    scales = []
    o = net.options
    for i in net.yolo_indices():
        layer = net.layers[i]
        _, h, w = layer.out_shape
        if o.width % w or o.height % h or o.width // w != o.height // h:
            raise ShapeError(f"yolo layer {i}: grid {w}x{h} is not an integer stride of the input")
        scales.append(YoloScale(i, o.width // w, layer.scale_anchors, layer.classes, o.width, o.height))
    return scales


@dataclass
class BuiltNetwork:
    netdef: NetworkDef
    params: dict[int, ConvParams]
    yolo_outputs: list[YoloScale] = field(init=False)
    folded: dict[int, ConvParams] = field(init=False, repr=False)
    last_use: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        if any(l.out_shape is None for l in self.netdef.layers):
            self.netdef = infer_shapes(self.netdef)
        for i in self.netdef.conv_indices():
            p = self.params.get(i)
            layer = self.netdef.layers[i]
            want = (layer.filters, self.netdef.input_shape_of(i)[0], layer.size, layer.size)
            if p is None or p.weights.shape != want:
                got = None if p is None else p.weights.shape
                raise ShapeError(f"layer {i}: expected weights {want}, got {got}")
        self.yolo_outputs = yolo_scales(self.netdef)
        self.folded = {i: T.fold_batch_norm(p) for i, p in self.params.items()}
        # last layer that reads each output; -1 if none
        n = len(self.netdef.layers)
        last = [-1] * n
        for i, layer in enumerate(self.netdef.layers):
            if i > 0 and not isinstance(layer, RouteLayer):
                last[i - 1] = i
            if isinstance(layer, RouteLayer):
                for s in layer.sources:
                    last[s] = max(last[s], i)
        self.last_use = last

    @classmethod
    def from_def(cls, netdef, params=None, seed=None):
        netdef = infer_shapes(netdef)
        if params is None:
            params = random_params(netdef, seed) if seed is not None else zero_params(netdef)
        return cls(netdef, params)


def build_custom_tiny(classes=1, anchors=DEFAULT_ANCHORS, params=None, seed=None,
                      width=416, height=416) -> BuiltNetwork:
    """Three-scale network. Without ``params`` weights are zero, or random when ``seed`` is set."""
    return BuiltNetwork.from_def(custom_def(classes, anchors, width, height), params, seed)


def build_baseline_tiny(classes=1, anchors=DEFAULT_ANCHORS, params=None, seed=None,
                        width=416, height=416) -> BuiltNetwork:
    return BuiltNetwork.from_def(baseline_def(classes, anchors, width, height), params, seed)


@dataclass(frozen=True)
class YoloMap:
    scale: YoloScale
    raw: np.ndarray  # (1, channels, grid_h, grid_w)


def run_layer(layer, x, cache, params):
    """One layer; ``cache`` maps layer index to its retained output."""
    if isinstance(layer, ConvLayer):
        return T.conv2d(x, params)
    if isinstance(layer, MaxPoolLayer):
        return T.maxpool(x, layer.size, layer.stride, layer.pad)
    if isinstance(layer, RouteLayer):
        srcs = [cache[s] for s in layer.sources]
        return srcs[0] if len(srcs) == 1 else T.concat_channels(*srcs)
    if isinstance(layer, UpsampleLayer):
        return T.upsample_nearest(x, layer.factor)
    return x  # yolo: identity on the raw map


def forward(net: BuiltNetwork, image, on_layer: Optional[Callable] = None,
            stats: Optional[dict] = None) -> list[YoloMap]:
    """Run ``image`` (1, C, H, W) through ``net`` and return the raw yolo maps.

    Layer outputs are kept only while a later layer still reads them.
    ``on_layer(index, output)`` is called after every layer; ``stats``
    receives ``peak_live`` (tensors) and ``peak_bytes``.
    """
    x = T.as_tensor(image)
    want = (1,) + net.netdef.input_shape
    if x.shape != want:
        raise ShapeError(f"input shape {x.shape} does not match network input {want}")
    layers = net.netdef.layers
    cache = {}
    peak_live = peak_bytes = 0
    maps = []
    scales = {s.layer_index: s for s in net.yolo_outputs}
    for i, layer in enumerate(layers):
        x = run_layer(layer, x, cache, net.folded.get(i))
        if i in scales:
            maps.append(YoloMap(scales[i], x))
        if on_layer is not None:
            on_layer(i, x)
        if net.last_use[i] > i:
            cache[i] = x
        for j in [j for j in cache if net.last_use[j] <= i]:
            del cache[j]
        peak_live = max(peak_live, len(cache))
        peak_bytes = max(peak_bytes, sum(t.nbytes for t in cache.values()))
    if stats is not None:
        stats.update(peak_live=peak_live, peak_bytes=peak_bytes)
    return maps
