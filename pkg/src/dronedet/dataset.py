"""Images, YOLO label files, list files and train/test splits.

Binary netpbm (P5 grey, P6 RGB) is read and written natively. PNG and JPEG
go through Pillow when it is installed.
"""
from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DetectorError, ParseError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthLabel:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    @property
    def box(self):
        return (self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True)
class DatasetItem:
    image_path: str
    labels: tuple = field(default_factory=tuple)


# ------------------------------------------------------------------ labels

def parse_label_file(text: str, classes=None) -> list[GroundTruthLabel]:
    labels = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields (class cx cy w h), got {len(parts)}", lineno)
        try:
            cls = int(float(parts[0]))
            cx, cy, w, h = (float(v) for v in parts[1:])
        except ValueError:
            raise ParseError(f"non-numeric field in {raw.strip()!r}", lineno) from None
        for v in (cx, cy, w, h):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"line {lineno}: box value {v} outside [0, 1]")
        if cls < 0 or (classes is not None and cls >= classes):
            raise ValidationError(f"line {lineno}: class id {cls} out of range")
        labels.append(GroundTruthLabel(cls, cx, cy, w, h))
    return labels


def render_label_file(labels) -> str:
    return "".join(f"{l.class_id} {l.cx:.6f} {l.cy:.6f} {l.w:.6f} {l.h:.6f}\n" for l in labels)


def label_path_for(image_path) -> Path:
    """Label file next to the image, or under a sibling ``labels`` directory."""
    p = Path(image_path)
    beside = p.with_suffix(".txt")
    if beside.exists():
        return beside
    parts = list(p.parts)
    if "images" in parts:
        parts[len(parts) - 1 - parts[::-1].index("images")] = "labels"
        alt = Path(*parts).with_suffix(".txt")
        if alt.exists():
            return alt
    return beside


def load_labels(image_path, classes=None) -> list[GroundTruthLabel]:
    """Labels for an image; a missing label file means no objects (logged)."""
    path = label_path_for(image_path)
    if not path.exists():
        log.warning("no label file for %s; treating as an image without objects", image_path)
        return []
    return parse_label_file(path.read_text(), classes)


def read_list_file(path) -> list[str]:
    base = Path(path).parent
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            p = Path(line)
            out.append(str(p if p.is_absolute() else base / p))
    return out


def write_list_file(path, entries):
    Path(path).write_text("".join(f"{e}\n" for e in entries))


# ------------------------------------------------------------------ images

_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def decode_netpbm(data: bytes) -> np.ndarray:
    """Decode binary P5/P6 into an (H, W, 3) float32 array in [0, 1]."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"not a binary netpbm file (magic {magic!r})")
    pos = 2
    vals = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise ValueError("truncated netpbm header")
        vals.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = vals
    pos += 1  # single whitespace byte before the raster
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = width * height * channels
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    img = raster.reshape(height, width, channels).astype(np.float32) / maxval
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def encode_netpbm(img: np.ndarray) -> bytes:
    """Encode (H, W, 3) floats in [0, 1] as an 8-bit P6 file."""
    h, w = img.shape[:2]
    px = np.clip(np.rint(np.asarray(img) * 255), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (w, h) + px.tobytes()


def to_tensor(img: np.ndarray) -> np.ndarray:
    """(H, W, 3) image -> (1, 3, H, W) float32 tensor."""
    return np.ascontiguousarray(img.transpose(2, 0, 1)[None], dtype=np.float32)


def from_tensor(t: np.ndarray) -> np.ndarray:
    return np.asarray(t)[0].transpose(1, 2, 0)


def load_image(path):
    """Read an image as an RGB (1, 3, H, W) tensor in [0, 1]; returns (tensor, (w, h))."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DetectorError(f"cannot read image {path}: {e}") from None
    if data[:2] in (b"P5", b"P6"):
        try:
            img = decode_netpbm(data)
        except ValueError as e:
            raise DetectorError(f"cannot decode image {path}: {e}") from None
    else:
        try:
            from PIL import Image
        except ImportError:
            raise DetectorError(f"unsupported image format for {path} (install Pillow)") from None
        try:
            with Image.open(path) as im:
                img = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except OSError as e:
            raise DetectorError(f"cannot decode image {path}: {e}") from None
    return to_tensor(img), (img.shape[1], img.shape[0])


def save_image(path, tensor):
    Path(path).write_bytes(encode_netpbm(from_tensor(tensor)))


def resize_to_net(image, w: int, h: int) -> np.ndarray:
    """Bilinear stretch of a (1, C, H, W) tensor to (1, C, h, w).

    Corner pixels map onto corner pixels (source step ``(in - 1) / (out - 1)``).
    """
    x = np.asarray(image, dtype=np.float32)
    _, _, ih, iw = x.shape
    if (ih, iw) == (h, w):
        return x.copy()

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (pos - lo).astype(np.float32)

    y0, y1, fy = axis(ih, h)
    x0, x1, fx = axis(iw, w)
    fx = fx[None, None, None, :]
    fy = fy[None, None, :, None]
    top = x[:, :, y0][..., x0] * (1 - fx) + x[:, :, y0][..., x1] * fx
    bot = x[:, :, y1][..., x0] * (1 - fx) + x[:, :, y1][..., x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(out, x.min(), x.max()).astype(np.float32)


def draw_boxes(image, boxes, color=(1.0, 0.0, 0.0), stroke=2) -> np.ndarray:
    """Burn rectangle outlines (center-form, normalized) into a copy of ``image``."""
    out = np.array(image, dtype=np.float32, copy=True)
    _, _, h, w = out.shape
    col = np.asarray(color, np.float32)[:, None]
    for cx, cy, bw, bh in boxes:
        x1 = int(np.clip(round((cx - bw / 2) * w), 0, w - 1))
        x2 = int(np.clip(round((cx + bw / 2) * w), 0, w - 1))
        y1 = int(np.clip(round((cy - bh / 2) * h), 0, h - 1))
        y2 = int(np.clip(round((cy + bh / 2) * h), 0, h - 1))
        for k in range(stroke):
            out[0, :, min(y1 + k, h - 1), x1:x2 + 1] = col
            out[0, :, max(y2 - k, 0), x1:x2 + 1] = col
            out[0, :, y1:y2 + 1, min(x1 + k, w - 1)] = col
            out[0, :, y1:y2 + 1, max(x2 - k, 0)] = col
    return out


# ------------------------------------------------------------------- split

def split_dataset(items, train_fraction: float, seed: int = 0):
    """Seeded Fisher-Yates shuffle, then cut at ``round(n * train_fraction)`` (half up)."""
    items = list(items)
    if not items:
        raise ValidationError("cannot split an empty item list")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    random.Random(seed).shuffle(items)
    n_train = int(math.floor(len(items) * train_fraction + 0.5))
    return items[:n_train], items[n_train:]
