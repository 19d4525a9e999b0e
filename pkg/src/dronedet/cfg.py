"""Darknet ``.cfg`` parsing, rendering and shape inference.

A cfg file is a list of ``[section]`` headers each followed by ``key=value``
lines; ``#`` and ``;`` start comments. The first section is ``[net]``; the
rest become layers indexed from zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import ParseError, ShapeError, ValidationError
from .tensor import ACTIVATIONS, conv_output_size, maxpool_output_size

Shape = tuple[int, int, int]  # (channels, height, width)


@dataclass(frozen=True)
class NetOptions:
    batch: int = 1
    subdivisions: int = 1
    width: int = 416
    height: int = 416
    channels: int = 3
    momentum: float = 0.9
    decay: float = 0.0005
    learning_rate: float = 0.001
    max_batches: int = 0
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.width % 32 or self.height % 32:
            raise ValidationError(
                f"input {self.width}x{self.height} must be divisible by 32"
            )
        if self.channels < 1:
            raise ValidationError("channels must be >= 1")
        if not self.batch >= self.subdivisions >= 1:
            raise ValidationError("need batch >= subdivisions >= 1")


@dataclass(frozen=True)
class ConvLayer:
    filters: int
    size: int = 1
    stride: int = 1
    pad: int = 0  # pixels per side
    batch_normalize: bool = False
    activation: str = "linear"
    out_shape: Optional[Shape] = None
    extra: dict = field(default_factory=dict)
    kind = "convolutional"


@dataclass(frozen=True)
class MaxPoolLayer:
    size: int = 2
    stride: int = 2
    pad: int = 1
    out_shape: Optional[Shape] = None
    extra: dict = field(default_factory=dict)
    kind = "maxpool"


@dataclass(frozen=True)
class RouteLayer:
    sources: tuple[int, ...]  # absolute indices of earlier layers
    out_shape: Optional[Shape] = None
    extra: dict = field(default_factory=dict)
    kind = "route"


@dataclass(frozen=True)
class UpsampleLayer:
    factor: int = 2
    out_shape: Optional[Shape] = None
    extra: dict = field(default_factory=dict)
    kind = "upsample"


@dataclass(frozen=True)
class YoloLayer:
    mask: tuple[int, ...]
    anchors: tuple[tuple[int, int], ...]  # all anchors, input pixels
    classes: int = 1
    out_shape: Optional[Shape] = None
    extra: dict = field(default_factory=dict)
    kind = "yolo"

    @property
    def scale_anchors(self) -> tuple[tuple[int, int], ...]:
        return tuple(self.anchors[i] for i in self.mask)


LayerDef = Union[ConvLayer, MaxPoolLayer, RouteLayer, UpsampleLayer, YoloLayer]

SECTION_ALIASES = {
    "convolutional": "convolutional",
    "conv": "convolutional",
    "maxpool": "maxpool",
    "max": "maxpool",
    "route": "route",
    "upsample": "upsample",
    "yolo": "yolo",
}


@dataclass(frozen=True)
class NetworkDef:
    options: NetOptions
    layers: tuple[LayerDef, ...]

    def census(self) -> dict[str, int]:
        counts = {"convolutional": 0, "yolo": 0, "maxpool": 0, "route": 0, "upsample": 0}
        for layer in self.layers:
            counts[layer.kind] += 1
        return counts

    @property
    def input_shape(self) -> Shape:
        o = self.options
        return (o.channels, o.height, o.width)

    def conv_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "convolutional"]

    def yolo_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "yolo"]

    def input_shape_of(self, index: int) -> Shape:
        if index == 0:
            return self.input_shape
        prev = self.layers[index - 1].out_shape
        if prev is None:
            raise ShapeError("shapes not inferred; call infer_shapes first")
        return prev


# ---------------------------------------------------------------- parsing

def _sections(text: str):
    """Yield (name, header_line, {key: (value, line)}) triples."""
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {raw.strip()!r}", lineno)
            if current is not None:
                yield current
            current = (line[1:-1].strip().lower(), lineno, {})
            continue
        if current is None:
            raise ParseError("key=value before any section header", lineno)
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        current[2][key.lower()] = (value, lineno)
    if current is not None:
        yield current


class _Opts:
    """Typed access to a section's key/values that remembers line numbers."""

    def __init__(self, name, header_line, kv):
        self.name = name
        self.header_line = header_line
        self.kv = dict(kv)
        self.used = set()

    def _get(self, key):
        self.used.add(key)
        return self.kv.get(key)

    def int(self, key, default):
        item = self._get(key)
        if item is None:
            return default
        value, line = item
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"[{self.name}] {key}: expected integer, got {value!r}", line) from None

    def float(self, key, default):
        item = self._get(key)
        if item is None:
            return default
        value, line = item
        try:
            return float(value)
        except ValueError:
            raise ParseError(f"[{self.name}] {key}: expected number, got {value!r}", line) from None

    def str(self, key, default):
        item = self._get(key)
        return default if item is None else item[0]

    def ints(self, key, default):
        item = self._get(key)
        if item is None:
            return default
        value, line = item
        try:
            return tuple(int(v) for v in value.split(",") if v.strip())
        except ValueError:
            raise ParseError(f"[{self.name}] {key}: expected integer list, got {value!r}", line) from None

    def line_of(self, key):
        item = self.kv.get(key)
        return item[1] if item else self.header_line

    def extra(self):
        return {k: v for k, (v, _) in self.kv.items() if k not in self.used}


def _parse_net(o: _Opts) -> NetOptions:
    d = NetOptions()
    return NetOptions(
        batch=o.int("batch", d.batch),
        subdivisions=o.int("subdivisions", d.subdivisions),
        width=o.int("width", d.width),
        height=o.int("height", d.height),
        channels=o.int("channels", d.channels),
        momentum=o.float("momentum", d.momentum),
        decay=o.float("decay", d.decay),
        learning_rate=o.float("learning_rate", d.learning_rate),
        max_batches=o.int("max_batches", d.max_batches),
        extra=o.extra(),
    )


def _parse_conv(o: _Opts) -> ConvLayer:
    filters = o.int("filters", 1)
    if filters < 1:
        raise ParseError("[convolutional] filters must be >= 1", o.line_of("filters"))
    size = o.int("size", 1)
    stride = o.int("stride", 1)
    pad = o.int("padding", 0)
    if o.int("pad", 0):
        pad = size // 2
    activation = o.str("activation", "linear")
    if activation not in ACTIVATIONS:
        raise ParseError(f"unsupported activation {activation!r}", o.line_of("activation"))
    return ConvLayer(
        filters=filters,
        size=size,
        stride=stride,
        pad=pad,
        batch_normalize=bool(o.int("batch_normalize", 0)),
        activation=activation,
        extra=o.extra(),
    )


def _parse_maxpool(o: _Opts) -> MaxPoolLayer:
    stride = o.int("stride", 1)
    size = o.int("size", stride)
    pad = o.int("padding", size - 1)
    return MaxPoolLayer(size=size, stride=stride, pad=pad, extra=o.extra())


def _parse_route(o: _Opts, index: int) -> RouteLayer:
    raw = o.ints("layers", None)
    if not raw:
        raise ParseError("[route] needs layers=", o.header_line)
    sources = tuple(index + r if r < 0 else r for r in raw)
    for s in sources:
        if not 0 <= s < index:
            raise ParseError(
                f"[route] layer {index} references {s}, which is not an earlier layer",
                o.line_of("layers"),
            )
    return RouteLayer(sources=sources, extra=o.extra())


def _parse_upsample(o: _Opts) -> UpsampleLayer:
    return UpsampleLayer(factor=o.int("stride", 2), extra=o.extra())


def _parse_yolo(o: _Opts) -> YoloLayer:
    flat = o.ints("anchors", ())
    if len(flat) % 2:
        raise ParseError("[yolo] anchors must be w,h pairs", o.line_of("anchors"))
    anchors = tuple(zip(flat[0::2], flat[1::2]))
    mask = o.ints("mask", tuple(range(len(anchors))))
    num = o.int("num", len(anchors))
    if num != len(anchors):
        raise ParseError(f"[yolo] num={num} but {len(anchors)} anchors given", o.line_of("num"))
    if not mask or max(mask) >= len(anchors) or min(mask) < 0:
        raise ParseError("[yolo] mask indexes missing anchors", o.line_of("mask"))
    return YoloLayer(mask=mask, anchors=anchors, classes=o.int("classes", 20), extra=o.extra())


def parse_cfg(text: str) -> NetworkDef:
    sections = list(_sections(text))
    if not sections or sections[0][0] not in ("net", "network"):
        line = sections[0][1] if sections else None
        raise ParseError("first section must be [net]", line)
    options = _parse_net(_Opts(*sections[0]))
    layers = []
    for name, lineno, kv in sections[1:]:
        kind = SECTION_ALIASES.get(name)
        if kind is None:
            raise ParseError(f"unknown section [{name}]", lineno)
        o = _Opts(name, lineno, kv)
        if kind == "convolutional":
            layers.append(_parse_conv(o))
        elif kind == "maxpool":
            layers.append(_parse_maxpool(o))
        elif kind == "route":
            layers.append(_parse_route(o, len(layers)))
        elif kind == "upsample":
            layers.append(_parse_upsample(o))
        else:
            layers.append(_parse_yolo(o))
    return NetworkDef(options, tuple(layers))


# -------------------------------------------------------------- rendering

def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def render_cfg(net: NetworkDef) -> str:
    o = net.options
    lines = ["[net]"]
    for key in ("batch", "subdivisions", "width", "height", "channels",
                "momentum", "decay", "learning_rate", "max_batches"):
        lines.append(f"{key}={_fmt(getattr(o, key))}")
    lines += [f"{k}={v}" for k, v in o.extra.items()]
    for i, layer in enumerate(net.layers):
        lines += ["", f"[{layer.kind}]"]
        if isinstance(layer, ConvLayer):
            if layer.batch_normalize:
                lines.append("batch_normalize=1")
            lines += [f"filters={layer.filters}", f"size={layer.size}",
                      f"stride={layer.stride}", f"padding={layer.pad}",
                      f"activation={layer.activation}"]
        elif isinstance(layer, MaxPoolLayer):
            lines += [f"size={layer.size}", f"stride={layer.stride}", f"padding={layer.pad}"]
        elif isinstance(layer, RouteLayer):
            lines.append("layers=" + ", ".join(str(s - i) for s in layer.sources))
        elif isinstance(layer, UpsampleLayer):
            lines.append(f"stride={layer.factor}")
        elif isinstance(layer, YoloLayer):
            lines.append("mask=" + ",".join(map(str, layer.mask)))
            lines.append("anchors=" + ",  ".join(f"{w},{h}" for w, h in layer.anchors))
            lines += [f"classes={layer.classes}", f"num={len(layer.anchors)}"]
        lines += [f"{k}={v}" for k, v in layer.extra.items()]
    return "\n".join(lines) + "\n"


# -------------------------------------------------------- shape inference

def infer_shapes(net: NetworkDef) -> NetworkDef:
    """Return a copy of ``net`` with every layer's ``out_shape`` filled in."""
    net.options.validate()
    shapes: list[Shape] = []
    out = []
    prev = net.input_shape
    for i, layer in enumerate(net.layers):
        c, h, w = prev
        if isinstance(layer, ConvLayer):
            if layer.size > h + 2 * layer.pad or layer.size > w + 2 * layer.pad:
                raise ShapeError(f"layer {i}: kernel {layer.size} larger than padded input {h}x{w}")
            shape = (layer.filters,
                     conv_output_size(h, layer.size, layer.stride, layer.pad),
                     conv_output_size(w, layer.size, layer.stride, layer.pad))
        elif isinstance(layer, MaxPoolLayer):
            shape = (c,
                     maxpool_output_size(h, layer.size, layer.stride, layer.pad),
                     maxpool_output_size(w, layer.size, layer.stride, layer.pad))
            if shape[1] < 1 or shape[2] < 1:
                raise ShapeError(f"layer {i}: maxpool leaves no output for {h}x{w}")
        elif isinstance(layer, RouteLayer):
            first = layer.sources[0]
            _, sh, sw = shapes[first]
            for s in layer.sources[1:]:
                if shapes[s][1:] != (sh, sw):
                    raise ShapeError(
                        f"layer {i}: route sources {first} {shapes[first]} and {s} {shapes[s]} "
                        "differ in spatial size"
                    )
            shape = (sum(shapes[s][0] for s in layer.sources), sh, sw)
        elif isinstance(layer, UpsampleLayer):
            shape = (c, h * layer.factor, w * layer.factor)
        else:
            pred = net.layers[i - 1] if i else None
            expected = len(layer.mask) * (5 + layer.classes)
            if not isinstance(pred, ConvLayer) or c != expected:
                raise ShapeError(
                    f"layer {i}: yolo needs a preceding convolution with "
                    f"{len(layer.mask)}*(5+{layer.classes})={expected} filters, got {c} channels"
                )
            shape = prev
        shapes.append(shape)
        out.append(replace(layer, out_shape=shape))
        prev = shape
    return NetworkDef(net.options, tuple(out))
