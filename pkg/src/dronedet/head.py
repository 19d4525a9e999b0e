"""YOLO detection head: raw feature maps to boxes and labels to targets.

Raw maps are laid out darknet style: for each anchor of the scale, the
channels ``tx, ty, tw, th, tobj, cls_0 .. cls_{C-1}``. Decoding follows the
usual YOLOv3 parameterization::

    cx = (sigmoid(tx) + col) / grid_w      w = anchor_w * exp(tw) / input_w
    cy = (sigmoid(ty) + row) / grid_h      h = anchor_h * exp(th) / input_h
    objectness = sigmoid(tobj),  class score = sigmoid(cls)

Targets store box sizes as image fractions; ``TargetTensor.y_vector`` gives
the per-cell form where sizes are fractions of one cell.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ValidationError

# keeps sigmoid strictly inside (0, 1) in float64
LOGIT_CLIP = 30.0


def sigmoid(x):
    x = np.clip(np.asarray(x, dtype=np.float64), -LOGIT_CLIP, LOGIT_CLIP)
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def output_shape(grid: int, anchors: int, classes: int) -> tuple[int, int, int]:
    if min(grid, anchors, classes) < 1:
        raise ValueError("grid, anchors and classes must all be >= 1")
    return (grid, grid, anchors * (5 + classes))


@dataclass(frozen=True)
class YoloScale:
    """One detection scale of a network."""

    layer_index: int
    stride: int
    anchors: tuple[tuple[float, float], ...]
    classes: int
    input_w: int
    input_h: int

    @property
    def grid_w(self) -> int:
        return self.input_w // self.stride

    @property
    def grid_h(self) -> int:
        return self.input_h // self.stride

    @property
    def grid(self) -> int:
        return self.grid_w

    @property
    def channels(self) -> int:
        return len(self.anchors) * (5 + self.classes)


@dataclass(frozen=True)
class Detection:
    cx: float
    cy: float
    w: float
    h: float
    objectness: float
    class_scores: tuple[float, ...]
    score: float
    class_id: int

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


def _input_wh(input_size):
    if np.isscalar(input_size):
        return int(input_size), int(input_size)
    w, h = input_size
    return int(w), int(h)


def decode(raw, anchors: Sequence[tuple[float, float]], input_size, conf_thresh: float = 0.25,
           stride=None) -> list[Detection]:
    """Turn one raw map of shape (C, H, W) or (1, C, H, W) into detections.

    Only boxes whose ``objectness * best class score`` reaches ``conf_thresh``
    are returned, ordered by (row, col, anchor).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 4:
        if raw.shape[0] != 1:
            raise ConfigError("decode takes a single image")
        raw = raw[0]
    c, gh, gw = raw.shape
    na = len(anchors)
    if na == 0 or c % na or c // na < 6:
        raise ConfigError(f"{c} channels do not split into {na} anchors x (5 + classes)")
    classes = c // na - 5
    in_w, in_h = _input_wh(input_size)
    if stride is not None and (gw * stride != in_w or gh * stride != in_h):
        raise ConfigError(f"grid {gw}x{gh} at stride {stride} does not cover input {in_w}x{in_h}")

    t = raw.reshape(na, 5 + classes, gh, gw)
    aw = np.array([a[0] for a in anchors], np.float64)[:, None, None]
    ah = np.array([a[1] for a in anchors], np.float64)[:, None, None]
    cols = np.arange(gw)[None, None, :]
    rows = np.arange(gh)[None, :, None]
    cx = (sigmoid(t[:, 0]) + cols) / gw
    cy = (sigmoid(t[:, 1]) + rows) / gh
    w = aw * np.exp(np.minimum(t[:, 2], LOGIT_CLIP)) / in_w
    h = ah * np.exp(np.minimum(t[:, 3], LOGIT_CLIP)) / in_h
    obj = sigmoid(t[:, 4])
    cls = sigmoid(t[:, 5:])  # (na, classes, gh, gw)
    best = cls.argmax(axis=1)
    score = obj * cls.max(axis=1)

    dets = []
    # iterate row, col, anchor
    for r, col, a in zip(*np.nonzero((score >= conf_thresh).transpose(1, 2, 0))):
        dets.append(Detection(
            float(cx[a, r, col]), float(cy[a, r, col]), float(w[a, r, col]), float(h[a, r, col]),
            float(obj[a, r, col]), tuple(float(v) for v in cls[a, :, r, col]),
            float(score[a, r, col]), int(best[a, r, col]),
        ))
    return dets


def encode_logits(box, cell, anchor, grid, input_size, eps=1e-7):
    """Inverse of the decode box formulas: logits (tx, ty, tw, th) for ``box``.

    ``cell`` is (col, row); ``grid`` is a size or (grid_w, grid_h).
    """
    cx, cy, w, h = box
    gw, gh = _input_wh(grid)
    in_w, in_h = _input_wh(input_size)
    fx = np.clip(cx * gw - cell[0], eps, 1 - eps)
    fy = np.clip(cy * gh - cell[1], eps, 1 - eps)
    return (float(logit(fx)), float(logit(fy)),
            float(np.log(w * in_w / anchor[0])), float(np.log(h * in_h / anchor[1])))


# ------------------------------------------------------------------ encoding

@dataclass
class TargetTensor:
    """Training targets for one scale.

    ``objectness`` is (grid_h, grid_w, anchors) of 0/1. ``boxes`` holds
    (bx, by, bw, bh): bx/by are the midpoint's position inside the cell and
    bw/bh are image fractions; entries are NaN where objectness is 0.
    ``class_ids`` is -1 where objectness is 0.
    """

    scale: YoloScale
    objectness: np.ndarray
    boxes: np.ndarray
    class_ids: np.ndarray

    @property
    def dont_care(self) -> np.ndarray:
        return self.objectness == 0

    def y_vector(self, row: int, col: int, anchor: int = 0) -> list:
        """Per-cell label ``[pc, bx, by, bh, bw, c_0, ...]`` with sizes in cells.

        Empty slots give ``[0, nan, ...]``.
        """
        classes = self.scale.classes
        if not self.objectness[row, col, anchor]:
            return [0.0] + [float("nan")] * (4 + classes)
        bx, by, bw, bh = self.boxes[row, col, anchor]
        onehot = [0.0] * classes
        onehot[self.class_ids[row, col, anchor]] = 1.0
        return [1.0, float(bx), float(by), float(bh * self.scale.grid_h),
                float(bw * self.scale.grid_w)] + onehot


def co_centered_iou(wh_a, wh_b) -> float:
    inter = min(wh_a[0], wh_b[0]) * min(wh_a[1], wh_b[1])
    union = wh_a[0] * wh_a[1] + wh_b[0] * wh_b[1] - inter
    return inter / union if union > 0 else 0.0


def responsible_anchor(label, scales: Sequence[YoloScale]) -> tuple[int, int]:
    """(scale index, anchor index) of the anchor with the best co-centered IoU.

    Ties go to the first anchor in scale order.
    """
    best, best_iou = (0, 0), -1.0
    for si, s in enumerate(scales):
        for ai, (aw, ah) in enumerate(s.anchors):
            iou = co_centered_iou((label.w, label.h), (aw / s.input_w, ah / s.input_h))
            if iou > best_iou:
                best, best_iou = (si, ai), iou
    return best


def encode_ground_truth(labels, net) -> list[TargetTensor]:
    """Build one ``TargetTensor`` per scale of ``net`` (a network or list of scales).

    When two labels land on the same (cell, anchor) slot the larger box wins.
    """
    scales = list(getattr(net, "yolo_outputs", net))
    if not scales or not any(s.anchors for s in scales):
        raise ConfigError("at least one anchor is required")
    targets = []
    for s in scales:
        na = len(s.anchors)
        targets.append(TargetTensor(
            s,
            np.zeros((s.grid_h, s.grid_w, na), np.int8),
            np.full((s.grid_h, s.grid_w, na, 4), np.nan),
            np.full((s.grid_h, s.grid_w, na), -1, np.int64),
        ))
    area = {}
    for label in labels:
        vals = (label.cx, label.cy, label.w, label.h)
        if not all(0.0 <= v <= 1.0 for v in vals):
            raise ValidationError(f"label box {vals} outside [0, 1]")
        si, ai = responsible_anchor(label, scales)
        t = targets[si]
        s = t.scale
        col = min(int(label.cx * s.grid_w), s.grid_w - 1)
        row = min(int(label.cy * s.grid_h), s.grid_h - 1)
        key = (si, row, col, ai)
        a = label.w * label.h
        if key in area and area[key] >= a:
            continue
        area[key] = a
        t.objectness[row, col, ai] = 1
        t.boxes[row, col, ai] = (label.cx * s.grid_w - col, label.cy * s.grid_h - row,
                                 label.w, label.h)
        if not 0 <= label.class_id < s.classes:
            raise ValidationError(f"class id {label.class_id} outside 0..{s.classes - 1}")
        t.class_ids[row, col, ai] = label.class_id
    return targets
