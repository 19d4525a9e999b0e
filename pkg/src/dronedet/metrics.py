"""Detection evaluation: matching, precision/recall/F1, average IoU, AP, mAP.

Matching is greedy and one-to-one: within each image, detections are taken
in descending score and each claims the highest-IoU same-class ground truth
not yet claimed, provided the IoU reaches the threshold.

AP integrates the precision envelope (precision at recall r is the best
precision at any recall >= r) over the unique recall values of the full,
unthresholded ranking.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boxes import iou
from .errors import ValidationError

log = logging.getLogger(__name__)


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ious: list = field(default_factory=list)  # one per true positive
    per_class_tp: dict = field(default_factory=dict)
    per_class_fp: dict = field(default_factory=dict)


def _check_aligned(dets, gts):
    if len(dets) != len(gts):
        raise ValidationError(f"{len(dets)} detection lists for {len(gts)} images")


def _match_image(dets, gts, iou_thresh):
    """Yield (detection, matched IoU or None) in descending score order."""
    used = [False] * len(gts)
    for d in sorted(dets, key=lambda d: -d.score):
        best, best_iou = -1, -1.0
        for j, g in enumerate(gts):
            if used[j] or g.class_id != d.class_id:
                continue
            v = iou(d.box, (g.cx, g.cy, g.w, g.h))
            if v > best_iou:
                best, best_iou = j, v
        if best >= 0 and best_iou >= iou_thresh:
            used[best] = True
            yield d, best_iou
        else:
            yield d, None


def match_detections(dets, gts, iou_thresh=0.5, conf_thresh=0.25) -> MatchResult:
    """Count TP/FP/FN over aligned per-image lists of detections and labels."""
    _check_aligned(dets, gts)
    r = MatchResult()
    for img_dets, img_gts in zip(dets, gts):
        kept = [d for d in img_dets if d.score >= conf_thresh]
        hits = 0
        for d, v in _match_image(kept, img_gts, iou_thresh):
            c = d.class_id
            if v is None:
                r.fp += 1
                r.per_class_fp[c] = r.per_class_fp.get(c, 0) + 1
            else:
                hits += 1
                r.tp += 1
                r.ious.append(v)
                r.per_class_tp[c] = r.per_class_tp.get(c, 0) + 1
        r.fn += len(img_gts) - hits
    return r


def precision_recall_f1(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def average_iou(matches) -> float:
    ious = matches.ious if isinstance(matches, MatchResult) else list(matches)
    return float(np.mean(ious)) if len(ious) else 0.0


def ap_from_flags(flags, n_truth) -> float:
    """AP of a ranking given as TP (True) / FP (False) flags, best first."""
    if n_truth == 0:
        log.warning("no ground truth for this class; AP defined as 0")
        return 0.0
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_truth
    precision = tp / (tp + fp)
    # envelope: best precision at this recall or beyond
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recall, env):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def ranked_flags(dets, gts, iou_thresh=0.5, class_id=None):
    """Globally rank detections (score descending, stable) and mark each TP/FP.

    Returns (flags, scores, number of ground truths of the class).
    """
    _check_aligned(dets, gts)
    pool = []
    for img, img_dets in enumerate(dets):
        for d in img_dets:
            if class_id is None or d.class_id == class_id:
                pool.append((img, d))
    pool.sort(key=lambda t: -t[1].score)
    truths = [[g for g in img_gts if class_id is None or g.class_id == class_id] for img_gts in gts]
    used = [[False] * len(t) for t in truths]
    flags = []
    for img, d in pool:
        best, best_iou = -1, -1.0
        for j, g in enumerate(truths[img]):
            if used[img][j] or g.class_id != d.class_id:
                continue
            v = iou(d.box, (g.cx, g.cy, g.w, g.h))
            if v > best_iou:
                best, best_iou = j, v
        hit = best >= 0 and best_iou >= iou_thresh
        if hit:
            used[img][best] = True
        flags.append(hit)
    return flags, [d.score for _, d in pool], sum(len(t) for t in truths)


def compute_ap(dets, gts, iou_thresh=0.5, class_id=None) -> float:
    flags, _, n = ranked_flags(dets, gts, iou_thresh, class_id)
    return ap_from_flags(flags, n)


# ----------------------------------------------------------------- report

@dataclass
class ClassResult:
    class_id: int
    name: str
    ap: float
    tp: int
    fp: int


@dataclass
class EvalReport:
    detections_count: int
    unique_truth_count: int
    classes: list
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    average_iou: float
    map50: float
    total_detection_time: float = 0.0
    conf_thresh: float = 0.25
    iou_thresh: float = 0.5


def evaluate(dets, gts, names, conf_thresh=0.25, iou_thresh=0.5, detection_time=0.0) -> EvalReport:
    """Full metric slate over aligned per-image detections and labels."""
    m = match_detections(dets, gts, iou_thresh, conf_thresh)
    p, r, f1 = precision_recall_f1(m.tp, m.fp, m.fn)
    classes = []
    for c, name in enumerate(names):
        ap = compute_ap(dets, gts, iou_thresh, class_id=c)
        classes.append(ClassResult(c, name, ap, m.per_class_tp.get(c, 0), m.per_class_fp.get(c, 0)))
    return EvalReport(
        detections_count=sum(1 for ds in dets for d in ds if d.score > 0),
        unique_truth_count=sum(len(g) for g in gts),
        classes=classes,
        tp=m.tp, fp=m.fp, fn=m.fn,
        precision=p, recall=r, f1=f1,
        average_iou=average_iou(m),
        map50=float(np.mean([c.ap for c in classes])) if classes else 0.0,
        total_detection_time=detection_time,
        conf_thresh=conf_thresh,
        iou_thresh=iou_thresh,
    )


def render_report(rep: EvalReport) -> str:
    """Darknet ``detector map`` style text block."""
    ct = f"{rep.conf_thresh:.2f}"
    lines = [f"detections_count = {rep.detections_count}, unique_truth_count = {rep.unique_truth_count}"]
    for c in rep.classes:
        lines.append(f"class_id = {c.class_id}, name = {c.name}, ap = {c.ap * 100:.2f}% "
                     f"(TP = {c.tp}, FP = {c.fp})")
    lines += [
        "",
        f"for conf_thresh = {ct}, precision = {rep.precision:.2f}, recall = {rep.recall:.2f}, "
        f"F1-score = {rep.f1:.2f}",
        f"for conf_thresh = {ct}, TP = {rep.tp}, FP = {rep.fp}, FN = {rep.fn}, "
        f"average IoU = {rep.average_iou * 100:.2f} %",
        "",
        f"IoU threshold = {rep.iou_thresh * 100:.0f} %, used Area-Under-Curve for each unique Recall",
        f"mean average precision (mAP@{rep.iou_thresh:.2f}) = {rep.map50:.6f}, or {rep.map50 * 100:.2f} %",
        f"Total Detection Time: {int(rep.total_detection_time)} Seconds",
    ]
    return "\n".join(lines) + "\n"


def render_report_kv(rep: EvalReport) -> str:
    """Flat ``key = value`` form of the report, one field per line."""
    lines = []
    for key in ("detections_count", "unique_truth_count", "tp", "fp", "fn", "precision",
                "recall", "f1", "average_iou", "map50", "total_detection_time",
                "conf_thresh", "iou_thresh"):
        v = getattr(rep, key)
        lines.append(f"{key} = {v:.6f}" if isinstance(v, float) else f"{key} = {v}")
    for c in rep.classes:
        lines += [f"class_{c.class_id}_name = {c.name}", f"class_{c.class_id}_ap = {c.ap:.6f}",
                  f"class_{c.class_id}_tp = {c.tp}", f"class_{c.class_id}_fp = {c.fp}"]
    return "\n".join(lines) + "\n"
