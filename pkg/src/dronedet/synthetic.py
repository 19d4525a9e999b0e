"""Hand-built weights that make the custom network emit known boxes.

Every conv is zero except a channel-0 pass-through along
input -> 0 -> 2 -> 4 -> 6 -> (route 27) -> 28 -> 29, so the red channel of
the image reaches the 52x52 head unchanged (up to pooling). The 52x52
detector turns a bright 8x8 block into objectness ~1 at that cell, with box
logits fixed by the bias, i.e. the inverse of the decode formulas. The
13x13 and 26x26 heads are biased to objectness ~0.
"""
import numpy as np

from .head import encode_logits
from .network import custom_def, zero_params
from .tensor import ConvParams

GRID = 52
CELL = 416 // GRID
PLANT_FX, PLANT_FY = 0.8, 0.4  # midpoint inside the cell
PLANT_W, PLANT_H = 0.1, 0.15  # image fractions


def _with(p, weights=None, bias=None):
    return ConvParams(p.weights if weights is None else weights,
                      p.bias if bias is None else bias,
                      p.stride, p.pad, p.batch_norm, p.activation)


def planted_box(row, col):
    return ((col + PLANT_FX) / GRID, (row + PLANT_FY) / GRID, PLANT_W, PLANT_H)


def plant_params(netdef=None):
    netdef = netdef or custom_def(1)
    params = zero_params(netdef)
    for i in (0, 2, 4, 6):
        w = np.zeros_like(params[i].weights)
        w[0, 0, 1, 1] = 1.0
        params[i] = _with(params[i], w)
    w = np.zeros_like(params[28].weights)
    w[0, 64, 1, 1] = 1.0  # channel 0 of layer 6 sits after the 64 upsampled channels
    params[28] = _with(params[28], w)

    anchor = netdef.layers[30].scale_anchors[0]
    tx, ty, tw, th = encode_logits(planted_box(0, 0), (0, 0), anchor, GRID, 416)
    w = np.zeros_like(params[29].weights)
    w[4, 0, 0, 0] = 40.0
    bias = np.zeros(12, np.float32)
    bias[:6] = (tx, ty, tw, th, -20.0, 20.0)
    bias[10] = -20.0
    params[29] = _with(params[29], w, bias)
    for i in (15, 22):
        bias = np.zeros(12, np.float32)
        bias[[4, 10]] = -20.0
        params[i] = _with(params[i], bias=bias)
    return params


def plant_image(blocks, size=416):
    """RGB image tensor with red blocks; ``blocks`` is [(row, col, brightness)]."""
    img = np.zeros((1, 3, size, size), np.float32)
    for row, col, value in blocks:
        img[0, 0, row * CELL:(row + 1) * CELL, col * CELL:(col + 1) * CELL] = value
    return img
