"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input or parse error.
Flags can also be set through ``DRONEDET_<FLAG>`` environment variables
(e.g. ``DRONEDET_CONF=0.3``); explicit flags win.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from .cfg import ConvLayer, MaxPoolLayer, RouteLayer, UpsampleLayer, YoloLayer, infer_shapes, parse_cfg, render_cfg
from .errors import DetectorError
from .metadata import parse_data_file, parse_names_file
from .metrics import evaluate, render_report, render_report_kv
from .network import BuiltNetwork, baseline_def, custom_def, random_params, zero_params
from .pipeline import detect
from .weights import load_weights, save_weights

log = logging.getLogger("dronedet")

ENV_PREFIX = "DRONEDET_"
EVAL_DECODE_FLOOR = 0.005  # decode threshold for the AP ranking in eval


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _probability(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _env(name, default):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _add_model_args(p, parallel=True):
    p.add_argument("--cfg", default=_env("cfg", None), help="darknet .cfg file")
    p.add_argument("--weights", default=_env("weights", None),
                   help="darknet .weights file (random weights from --seed when omitted)")
    p.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    p.add_argument("--conf", type=_probability, default=_probability(_env("conf", "0.25")))
    p.add_argument("--nms-iou", type=_probability, default=_probability(_env("nms-iou", "0.45")))
    if parallel:
        p.add_argument("--parallel", type=int, default=int(_env("parallel", 1)),
                       help="images processed concurrently")


def build_parser():
    parser = _Parser(prog="dronedet", description="Tiny-YOLOv3 drone detector toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="detect objects in images")
    _add_model_args(p)
    p.add_argument("images", nargs="+")
    p.add_argument("--names", default=_env("names", None))
    p.add_argument("--out", default=_env("out", None), help="directory for annotated .ppm copies")

    p = sub.add_parser("eval", help="evaluate against YOLO label files")
    _add_model_args(p)
    p.add_argument("--data", default=_env("data", None), help=".data file (valid=, names=)")
    p.add_argument("--valid", default=_env("valid", None), help="list of validation images")
    p.add_argument("--names", default=_env("names", None))
    p.add_argument("--eval-iou", type=_probability, default=_probability(_env("eval-iou", "0.5")))
    p.add_argument("--out", default=_env("out", None), help="machine-readable report path")

    p = sub.add_parser("bench", help="time forward + decode + NMS")
    _add_model_args(p, parallel=False)
    p.add_argument("--iterations", type=int, default=int(_env("iterations", 10)))

    p = sub.add_parser("inspect", help="print the layer table and census")
    p.add_argument("--cfg", default=_env("cfg", None))
    p.add_argument("--arch", choices=("custom", "baseline"))
    p.add_argument("--classes", type=int, default=1)

    p = sub.add_parser("split", help="split an image list into train/valid lists")
    p.add_argument("list")
    p.add_argument("--fraction", type=float, default=float(_env("fraction", 0.9)))
    p.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    p.add_argument("--out", default=_env("out", None), help="output directory")

    p = sub.add_parser("export", help="write a built-in architecture as .cfg/.weights")
    p.add_argument("--arch", choices=("custom", "baseline"), default="custom")
    p.add_argument("--classes", type=int, default=1)
    p.add_argument("--size", type=int, default=416)
    p.add_argument("--cfg", required=True)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=None, help="random weights (zeros when omitted)")
    return parser


# ---------------------------------------------------------------- helpers

def load_network(args) -> BuiltNetwork:
    if not args.cfg:
        raise UsageError("--cfg is required")
    netdef = infer_shapes(parse_cfg(Path(args.cfg).read_text()))
    if args.weights:
        params = load_weights(Path(args.weights).read_bytes(), netdef)
    else:
        log.warning("no --weights given; using random weights (seed %d)", args.seed)
        params = random_params(netdef, args.seed)
    return BuiltNetwork(netdef, params)


def _class_names(args, classes, meta=None):
    if getattr(args, "names", None):
        return parse_names_file(Path(args.names).read_text())
    if meta is not None and meta.names:
        return list(meta.names)
    return [f"class_{i}" for i in range(classes)]


def _net_input(net, path):
    image, _ = ds.load_image(path)
    o = net.netdef.options
    return image, ds.resize_to_net(image, o.width, o.height)


def _map(fn, items, workers):
    """Ordered map, threaded when ``workers > 1``."""
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _classes(net):
    return net.yolo_outputs[0].classes


# --------------------------------------------------------------- commands

def cmd_detect(args, out):
    net = load_network(args)
    names = _class_names(args, _classes(net))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)

    def run(path):
        image, x = _net_input(net, path)
        return image, detect(net, x, args.conf, args.nms_iou)

    results = _map(run, args.images, args.parallel)
    for path, (image, dets) in zip(args.images, results):
        out.write(f"{path}: {len(dets)} detection(s)\n")
        for d in dets:
            out.write(f"{names[d.class_id]}: {d.score * 100:.0f}% "
                      f"cx={d.cx:.6f} cy={d.cy:.6f} w={d.w:.6f} h={d.h:.6f}\n")
        if args.out:
            target = Path(args.out) / (Path(path).stem + ".ppm")
            ds.save_image(target, ds.draw_boxes(image, [d.box for d in dets]))
    return 0


def cmd_eval(args, out):
    net = load_network(args)
    meta = None
    if args.data:
        data_path = Path(args.data)
        names = parse_names_file(Path(args.names).read_text()) if args.names else None
        meta = parse_data_file(data_path.read_text(), names=names, base_dir=data_path.parent)
    valid = args.valid or (meta.valid_list_path if meta else None)
    if not valid:
        raise UsageError("eval needs --valid or a .data file with valid=")
    vpath = Path(valid)
    if not vpath.is_absolute() and not vpath.exists() and args.data:
        vpath = Path(args.data).parent / vpath
    images = ds.read_list_file(vpath)
    if not images:
        raise DetectorError(f"validation list {vpath} is empty")
    classes = _classes(net)
    names = _class_names(args, classes, meta)

    def run(path):
        _, x = _net_input(net, path)
        return detect(net, x, EVAL_DECODE_FLOOR, args.nms_iou)

    start = time.perf_counter()
    dets = _map(run, images, args.parallel)
    elapsed = time.perf_counter() - start
    gts = [ds.load_labels(p, classes) for p in images]
    report = evaluate(dets, gts, names, args.conf, args.eval_iou, elapsed)
    out.write(render_report(report))
    if args.out:
        Path(args.out).write_text(render_report_kv(report))
    return 0


def bench(net, iterations, conf=0.25, nms_iou=0.45, seed=0):
    """Per-iteration wall seconds for forward + decode + NMS on a fixed random image."""
    o = net.netdef.options
    image = np.random.default_rng(seed).random((1, o.channels, o.height, o.width), dtype=np.float32)
    times = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        detect(net, image, conf, nms_iou)
        times.append(time.perf_counter() - t0)
    return times


def cmd_bench(args, out):
    if args.iterations < 1:
        raise UsageError("--iterations must be >= 1")
    net = load_network(args)
    times = bench(net, args.iterations, args.conf, args.nms_iou, args.seed)
    total = 0.0
    for k, dt in enumerate(times, 1):
        total += dt
        out.write(f"FPS:{1.0 / dt:.1f}      AVG_FPS:{k / total:.1f}\n")
    out.write(f"AVG_FPS:{len(times) / total:.2f}\n")
    return 0


def _layer_desc(layer):
    if isinstance(layer, ConvLayer):
        bn = " bn" if layer.batch_normalize else ""
        return (f"filters={layer.filters} size={layer.size} stride={layer.stride} "
                f"pad={layer.pad}{bn} {layer.activation}")
    if isinstance(layer, MaxPoolLayer):
        return f"size={layer.size} stride={layer.stride}"
    if isinstance(layer, RouteLayer):
        return "layers=" + ",".join(map(str, layer.sources))
    if isinstance(layer, UpsampleLayer):
        return f"factor={layer.factor}"
    if isinstance(layer, YoloLayer):
        return f"mask={','.join(map(str, layer.mask))} anchors={list(layer.scale_anchors)} classes={layer.classes}"
    return ""


def cmd_inspect(args, out):
    if args.cfg:
        netdef = infer_shapes(parse_cfg(Path(args.cfg).read_text()))
    elif args.arch:
        netdef = (custom_def if args.arch == "custom" else baseline_def)(args.classes)
    else:
        raise UsageError("inspect needs --cfg or --arch")
    o = netdef.options
    out.write(f"input {o.channels}x{o.height}x{o.width}\n")
    for i, layer in enumerate(netdef.layers):
        c, h, w = layer.out_shape
        out.write(f"{i:3d} {layer.kind:<14} {_layer_desc(layer):<52} -> {c}x{h}x{w}\n")
    n = netdef.census()
    out.write(f"conv={n['convolutional']} yolo={n['yolo']} maxpool={n['maxpool']} "
              f"route={n['route']} upsample={n['upsample']} total={len(netdef.layers)}\n")
    return 0


def cmd_split(args, out):
    entries = [l.strip() for l in Path(args.list).read_text().splitlines() if l.strip()]
    train, valid = ds.split_dataset(entries, args.fraction, args.seed)
    out_dir = Path(args.out) if args.out else Path(args.list).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    ds.write_list_file(out_dir / "train.txt", train)
    ds.write_list_file(out_dir / "valid.txt", valid)
    out.write(f"train={len(train)} valid={len(valid)}\n")
    return 0


def cmd_export(args, out):
    builder = custom_def if args.arch == "custom" else baseline_def
    netdef = builder(args.classes, width=args.size, height=args.size)
    Path(args.cfg).write_text(render_cfg(netdef))
    if args.weights:
        params = random_params(netdef, args.seed) if args.seed is not None else zero_params(netdef)
        Path(args.weights).write_bytes(save_weights(params, netdef))
    out.write(f"wrote {args.cfg}" + (f" and {args.weights}" if args.weights else "") + "\n")
    return 0


COMMANDS = {
    "detect": cmd_detect,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
    "split": cmd_split,
    "export": cmd_export,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except (argparse.ArgumentTypeError, ValueError) as e:  # bad env-var default
        print(f"dronedet: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return e.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        print(f"dronedet {args.command}: error: {e}", file=sys.stderr)
        return 1
    except BrokenPipeError:  # e.g. piped into `head`
        sys.stderr.close()
        return 0
    except (DetectorError, OSError, ValueError) as e:
        print(f"dronedet {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
