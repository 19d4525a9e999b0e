"""Precision/recall/F1 against confidence threshold on a synthetic planted set.

Each image carries one bright block, whose brightness sets the detector's
score, and one matching truth box. A fraction of images also get an extra
truth with no block (a guaranteed miss) or have their truth moved away
(turning the hit into a false positive). The sweep shows how the metrics
trade off as the threshold moves; AP is threshold-free.

    python scripts/planted_threshold_sweep.py --images 40 --out sweep.json
"""
from __future__ import annotations

import argparse
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from dronedet.dataset import GroundTruthLabel
from dronedet.metrics import evaluate
from dronedet.network import build_custom_tiny
from dronedet.pipeline import detect
from dronedet.synthetic import GRID, plant_image, plant_params, planted_box


@dataclass
class Config:
    images: int = 24
    min_brightness: float = 0.35
    miss_rate: float = 0.15
    displaced_rate: float = 0.15
    thresholds: list[float] = field(default_factory=lambda: [0.1, 0.25, 0.5, 0.75, 0.9])
    seed: int = 0
    out: Path | None = None


def make_set(cfg: Config):
    rng = random.Random(cfg.seed)
    images, truths = [], []
    for _ in range(cfg.images):
        row, col = rng.randrange(4, GRID - 4), rng.randrange(4, GRID - 4)
        images.append(plant_image([(row, col, rng.uniform(cfg.min_brightness, 1.0))]))
        box = planted_box(row, col)
        if rng.random() < cfg.displaced_rate:
            box = planted_box((row + GRID // 2) % GRID, col)
        gts = [GroundTruthLabel(0, *box)]
        if rng.random() < cfg.miss_rate:
            gts.append(GroundTruthLabel(0, rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), 0.05, 0.05))
        truths.append(gts)
    return images, truths


def run(cfg: Config):
    net = build_custom_tiny(1, params=plant_params())
    images, truths = make_set(cfg)
    dets = [detect(net, x, conf_thresh=0.005) for x in images]
    rows = []
    for t in cfg.thresholds:
        rep = evaluate(dets, truths, ["drone"], conf_thresh=t)
        rows.append({"conf": t, "tp": rep.tp, "fp": rep.fp, "fn": rep.fn,
                     "precision": rep.precision, "recall": rep.recall, "f1": rep.f1, "ap": rep.map50})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in asdict(Config()).items():
        if name == "out":
            ap.add_argument("--out", type=Path)
        elif isinstance(default, list):
            ap.add_argument(f"--{name}", type=float, nargs="+", default=default)
        else:
            ap.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    cfg = Config(**vars(ap.parse_args()))
    rows = run(cfg)
    print(f"{'conf':>5} {'TP':>4} {'FP':>4} {'FN':>4} {'P':>6} {'R':>6} {'F1':>6} {'AP':>6}")
    for r in rows:
        print(f"{r['conf']:>5.2f} {r['tp']:>4} {r['fp']:>4} {r['fn']:>4} "
              f"{r['precision']:>6.3f} {r['recall']:>6.3f} {r['f1']:>6.3f} {r['ap']:>6.3f}")
    if cfg.out:
        cfg.out.write_text(json.dumps({"config": {**asdict(cfg), "out": str(cfg.out)}, "rows": rows}, indent=2))


if __name__ == "__main__":
    main()
