"""Image in, filtered detections out."""
from __future__ import annotations

from .boxes import nms
from .head import decode
from .network import BuiltNetwork, forward


def detect(net: BuiltNetwork, image, conf_thresh=0.25, nms_thresh=0.45):
    """Forward pass, decode every scale, then per-class NMS."""
    dets = []
    for m in forward(net, image):
        s = m.scale
        dets += decode(m.raw, s.anchors, (s.input_w, s.input_h), conf_thresh, stride=s.stride)
    return nms(dets, nms_thresh)
