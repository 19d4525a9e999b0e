import struct

import numpy as np
import pytest

from dronedet.cfg import NetOptions, NetworkDef, infer_shapes, parse_cfg
from dronedet.errors import WeightsError
from dronedet.network import baseline_def, custom_def, random_params, zero_params
from dronedet.weights import expected_size, load_weights, read_header, save_weights

SMALL = """\
[net]
width=32
height=32
channels=3
[convolutional]
batch_normalize=1
filters=4
size=3
pad=1
activation=leaky
[convolutional]
filters=2
size=1
"""


def small():
    return parse_cfg(SMALL)


def test_zero_stream_loads():
    net = small()
    n = expected_size(net)
    assert n == 20 + 4 * (4 * 4 + 4 * 3 * 9 + 2 + 2 * 4)
    data = struct.pack("<3iq", 0, 2, 0, 0) + bytes(n - 20)
    params = load_weights(data, net)
    assert all(not p.weights.any() and not p.bias.any() for p in params.values())


def test_truncated_and_trailing():
    net = small()
    data = save_weights(zero_params(net), net)
    with pytest.raises(WeightsError, match=f"expected {len(data)} bytes, got {len(data) - 4}"):
        load_weights(data[:-4], net)
    with pytest.raises(WeightsError, match="trailing"):
        load_weights(data + b"\0\0\0\0", net)
    with pytest.raises(WeightsError):
        load_weights(data[:10], net)


def test_header_only():
    net = NetworkDef(NetOptions(), ())
    data = save_weights({}, net)
    assert len(data) == 20
    h = read_header(data)
    assert (h.major, h.minor, h.revision, h.seen) == (0, 2, 0, 0)
    assert struct.unpack("<3iq", data) == (0, 2, 0, 0)


def test_old_header_32bit_seen():
    net = small()
    body = save_weights(random_params(net, 1), net)[20:]
    old = struct.pack("<3ii", 0, 1, 0, 1234) + body
    h = read_header(old)
    assert (h.minor, h.seen, h.size) == (1, 1234, 16)
    params = load_weights(old, net)
    again = save_weights(params, net)
    assert again[20:] == body


def test_batch_norm_order_on_disk():
    net = small()
    params = random_params(net, 3)
    data = save_weights(params, net)
    floats = np.frombuffer(data, "<f4", offset=20)
    bn = params[0].batch_norm
    np.testing.assert_array_equal(floats[0:4], bn.beta)
    np.testing.assert_array_equal(floats[4:8], bn.gamma)
    np.testing.assert_array_equal(floats[8:12], bn.mean)
    np.testing.assert_array_equal(floats[12:16], bn.variance)
    np.testing.assert_array_equal(floats[16:16 + 108], params[0].weights.ravel())


@pytest.mark.parametrize("builder", [custom_def, baseline_def])
def test_round_trip(builder):
    net = builder(1)
    params = random_params(net, 11)
    data = save_weights(params, net, seen=987654321)
    assert len(data) == expected_size(net)
    loaded = load_weights(data, net)
    for i, p in params.items():
        q = loaded[i]
        assert p.weights.tobytes() == q.weights.tobytes()
        assert p.bias.tobytes() == q.bias.tobytes()
        if p.batch_norm is not None:
            for f in ("gamma", "beta", "mean", "variance"):
                assert getattr(p.batch_norm, f).tobytes() == getattr(q.batch_norm, f).tobytes()
    assert save_weights(loaded, net, seen=read_header(data).seen) == data


def test_weight_count_per_layer():
    net = custom_def(1)
    params = load_weights(save_weights(zero_params(net), net), net)
    for i in net.conv_indices():
        layer = net.layers[i]
        in_c = net.input_shape_of(i)[0]
        assert params[i].weights.size == layer.filters * in_c * layer.size ** 2


def test_documented_example_matches_writer():
    import re
    from pathlib import Path
    from dronedet.tensor import BatchNorm, ConvParams

    doc = (Path(__file__).parents[1] / "docs" / "formats.md").read_text()
    blocks = re.findall(r"```\n(.*?)```", doc, re.S)
    cfg_text = next(b for b in blocks if b.startswith("[net]"))
    dump = next(b for b in blocks if b.startswith("0000:"))
    net = infer_shapes(parse_cfg(cfg_text))
    f = lambda *v: np.array(v, np.float32)
    params = {
        0: ConvParams(f(1, 2, 3, 4, 5, 6).reshape(2, 3, 1, 1), f(0, 0), 1, 0,
                      BatchNorm(f(1, 1), f(0.5, -0.5), f(0, 0), f(1, 1)), "leaky"),
        1: ConvParams(np.full((6, 2, 1, 1), 0.25, np.float32), f(0, 0, 0, 0, -2, 2), 1, 0, None, "linear"),
    }
    hexed = ""
    for line in dump.splitlines():
        m = re.match(r"([0-9a-f]{4}): ([0-9a-f]{8}[^|]*)", line)
        if not m:
            continue
        words = m.group(2).split()
        if "x" in words:
            words = [words[0]] * int(words[-1])
        hexed += "".join(words)
    assert save_weights(params, net) == bytes.fromhex(hexed)
