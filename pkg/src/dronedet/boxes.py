"""Box overlap and non-max suppression. Boxes are (cx, cy, w, h)."""
from __future__ import annotations

import numpy as np


def corners(box):
    cx, cy, w, h = box
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def from_corners(x1, y1, x2, y2):
    return ((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)


def iou(a, b) -> float:
    """Intersection over union of two center-form boxes; 0 for an empty union."""
    ax1, ay1, ax2, ay2 = corners(a)
    bx1, by1, bx2, by2 = corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a[2] * a[3] + b[2] * b[3] - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def iou_many(box, boxes: np.ndarray) -> np.ndarray:
    """``iou(box, b)`` for each row of an (n, 4) array, same arithmetic as ``iou``."""
    ax1, ay1, ax2, ay2 = corners(box)
    cx, cy, w, h = boxes.T
    bx1, by1, bx2, by2 = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = box[2] * box[3] + w * h - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.clip(inter / union, 0.0, 1.0)
    return np.where(union > 0, out, 0.0)


def nms(dets, iou_thresh: float = 0.45):
    """Greedy per-class suppression.

    Detections are taken in descending score (ties keep input order); a box
    is dropped when it overlaps an already kept box of the same class by
    strictly more than ``iou_thresh``.
    """
    if not dets:
        return []
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    ranked = [dets[i] for i in order]
    boxes = np.array([d.box for d in ranked], dtype=np.float64)
    classes = np.array([d.class_id for d in ranked])
    alive = np.ones(len(ranked), dtype=bool)
    kept = []
    for i, d in enumerate(ranked):
        if not alive[i]:
            continue
        kept.append(d)
        rest = slice(i + 1, None)
        overlap = iou_many(d.box, boxes[rest]) > iou_thresh
        alive[rest] &= ~(overlap & (classes[rest] == d.class_id))
    return kept
