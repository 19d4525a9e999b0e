"""Compare the two-scale baseline and three-scale custom networks.

For each architecture and input size this reports layer census, parameter
count, weights-file size, detection grids and forward+decode+NMS latency.

    python scripts/compare_architectures.py --sizes 320 416 --iterations 5
"""
from __future__ import annotations

import argparse
import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

from dronedet.cli import bench
from dronedet.network import build_baseline_tiny, build_custom_tiny
from dronedet.weights import expected_size


@dataclass
class Config:
    sizes: list[int] = field(default_factory=lambda: [416])
    iterations: int = 5
    classes: int = 1
    seed: int = 0
    out: Path | None = None


@dataclass
class Row:
    arch: str
    size: int
    layers: int
    conv: int
    yolo: int
    params: int
    weights_bytes: int
    grids: list[int]
    anchors_per_scale: list[int]
    median_ms: float
    fps: float


def measure(arch: str, builder, size: int, cfg: Config) -> Row:
    net = builder(cfg.classes, seed=cfg.seed, width=size, height=size)
    census = net.netdef.census()
    params = sum(p.weights.size + p.bias.size + (4 * p.bias.size if p.batch_norm else 0)
                 for p in net.params.values())
    bench(net, 1, seed=cfg.seed)  # warm-up
    times = bench(net, cfg.iterations, seed=cfg.seed)
    med = statistics.median(times)
    return Row(arch, size, len(net.netdef.layers), census["convolutional"], census["yolo"], params,
               expected_size(net.netdef), [s.grid for s in net.yolo_outputs],
               [len(s.anchors) for s in net.yolo_outputs], round(med * 1e3, 1), round(1 / med, 2))


def run(cfg: Config) -> list[Row]:
    rows = []
    for size in cfg.sizes:
        for arch, builder in (("baseline", build_baseline_tiny), ("custom", build_custom_tiny)):
            rows.append(measure(arch, builder, size, cfg))
    return rows


def main():
    d = Config()
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=d.sizes)
    ap.add_argument("--iterations", type=int, default=d.iterations)
    ap.add_argument("--classes", type=int, default=d.classes)
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--out", type=Path, help="write rows as JSON")
    ns = ap.parse_args()
    cfg = Config(**vars(ns))
    rows = run(cfg)
    head = f"{'arch':<9}{'size':>5}{'layers':>7}{'params':>11}{'grids':>14}{'ms':>9}{'fps':>7}"
    print(head)
    for r in rows:
        grids = "/".join(map(str, r.grids))
        print(f"{r.arch:<9}{r.size:>5}{r.layers:>7}{r.params:>11}{grids:>14}{r.median_ms:>9}{r.fps:>7}")
    if cfg.out:
        cfg.out.write_text(json.dumps({"config": {**asdict(cfg), "out": str(cfg.out)},
                                       "rows": [asdict(r) for r in rows]}, indent=2))


if __name__ == "__main__":
    main()
