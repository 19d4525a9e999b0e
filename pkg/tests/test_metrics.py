import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dronedet.dataset import GroundTruthLabel
from dronedet.errors import ValidationError
from dronedet.head import Detection
from dronedet.metrics import (ClassResult, EvalReport, ap_from_flags, average_iou, compute_ap,
                              evaluate, match_detections, precision_recall_f1, ranked_flags,
                              render_report, render_report_kv)
from oracles import rectangle_ap


def det(box, score, cls=0):
    return Detection(*box, objectness=score, class_scores=(score,), score=score, class_id=cls)


def gt(box, cls=0):
    return GroundTruthLabel(cls, *box)


BOX = (0.5, 0.5, 0.2, 0.2)


def test_perfect_match():
    m = match_detections([[det(BOX, 0.9)]], [[gt(BOX)]])
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)
    assert average_iou(m) == pytest.approx(1.0)


def test_no_detections():
    m = match_detections([[]], [[gt(BOX), gt((0.1, 0.1, 0.1, 0.1))]])
    assert (m.tp, m.fp, m.fn) == (0, 0, 2)


def test_duplicate_becomes_fp():
    near = (0.51, 0.5, 0.2, 0.2)
    m = match_detections([[det(near, 0.8), det(BOX, 0.9)]], [[gt(BOX)]])
    assert (m.tp, m.fp, m.fn) == (1, 1, 0)
    assert m.ious == [pytest.approx(1.0)]  # the 0.9 detection matched


def test_conf_thresh_and_alignment():
    m = match_detections([[det(BOX, 0.2)]], [[gt(BOX)]], conf_thresh=0.25)
    assert (m.tp, m.fp, m.fn) == (0, 0, 1)
    with pytest.raises(ValidationError):
        match_detections([[], []], [[]])


def test_precision_recall_f1_reference_counts():
    p, r, f1 = precision_recall_f1(248, 25, 18)
    assert (round(p, 4), round(r, 4), round(f1, 4)) == (0.9084, 0.9323, 0.9202)
    p, r, f1 = precision_recall_f1(240, 13, 26)
    assert (round(p, 4), round(r, 4), round(f1, 4)) == (0.9486, 0.9023, 0.9249)
    assert precision_recall_f1(0, 0, 0) == (0.0, 0.0, 0.0)


def test_average_iou():
    assert average_iou([0.7037]) == 0.7037
    assert average_iou([0.6, 0.8]) == pytest.approx(0.7)
    assert average_iou([]) == 0.0


def test_ap_examples():
    assert ap_from_flags([True, False, True], 2) == pytest.approx(5 / 6, abs=1e-12)
    assert rectangle_ap([True, False, True], 2) == pytest.approx(5 / 6, abs=1e-4)
    assert ap_from_flags([True, True], 2) == 1.0
    assert ap_from_flags([False], 1) == 0.0
    assert ap_from_flags([], 3) == 0.0
    assert ap_from_flags([True], 0) == 0.0


def test_compute_ap_from_detections():
    far = (0.1, 0.1, 0.05, 0.05)
    dets = [[det(BOX, 0.9), det(far, 0.8)], [det(BOX, 0.7)]]
    gts = [[gt(BOX)], [gt(BOX)]]
    assert ranked_flags(dets, gts)[0] == [True, False, True]
    assert compute_ap(dets, gts) == pytest.approx(5 / 6)


flags_st = st.lists(st.booleans(), min_size=1, max_size=12)


@settings(max_examples=200)
@given(flags_st, st.integers(0, 3), st.integers(0, 12))
def test_fp_insertion_never_raises_ap(flags, extra_truth, pos):
    n = sum(flags) + extra_truth
    if n == 0:
        return
    base = ap_from_flags(flags, n)
    pos = min(pos, len(flags))
    assert ap_from_flags(flags[:pos] + [False] + flags[pos:], n) <= base + 1e-12
    assert 0.0 <= base <= 1.0


@settings(max_examples=200)
@given(flags_st, st.integers(0, 3))
def test_ap_one_iff_clean_prefix(flags, extra_truth):
    n = sum(flags) + extra_truth
    if n == 0:
        return
    clean = any(sum(flags[:k]) == n and all(flags[:k]) for k in range(1, len(flags) + 1))
    assert (ap_from_flags(flags, n) == pytest.approx(1.0)) == clean


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=6), st.integers(0, 2))
def test_ap_matches_rectangle_oracle(flags, extra):
    n = sum(flags) + extra
    if n == 0:
        return
    assert ap_from_flags(flags, n) == pytest.approx(rectangle_ap(flags, n, steps=20000), abs=2e-4)


def test_invariants_random():
    rng = random.Random(0)
    for _ in range(50):
        dets, gts = [], []
        for _ in range(rng.randint(1, 4)):
            g = [gt((rng.random(), rng.random(), 0.1, 0.1)) for _ in range(rng.randint(0, 3))]
            d = [det((x.cx + rng.uniform(-0.03, 0.03), x.cy, 0.1, 0.1), rng.random()) for x in g]
            d += [det((rng.random(), rng.random(), 0.1, 0.1), rng.random()) for _ in range(2)]
            dets.append(d)
            gts.append(g)
        m = match_detections(dets, gts, conf_thresh=0.0)
        assert m.tp + m.fn == sum(len(g) for g in gts)
        rep = evaluate(dets, gts, ["drone"], 0.0)
        for v in (rep.precision, rep.recall, rep.f1, rep.average_iou, rep.map50):
            assert 0.0 <= v <= 1.0
        # a lower-scored duplicate of a matched gt adds exactly one FP
        if m.tp:
            i = next(k for k, g in enumerate(gts) if g)
            dup = det(gts[i][0].box, 0.0)
            dets[i] = dets[i] + [dup]
            m2 = match_detections(dets, gts, conf_thresh=0.0)
            assert (m2.tp, m2.fp) == (m.tp, m.fp + 1)


REFERENCE_REPORT = EvalReport(
    detections_count=394, unique_truth_count=266,
    classes=[ClassResult(0, "Drone", 0.918130, 248, 25)],
    tp=248, fp=25, fn=18,
    precision=248 / 273, recall=248 / 266, f1=precision_recall_f1(248, 25, 18)[2],
    average_iou=0.7037, map50=0.918130, total_detection_time=2.0)


def test_render_reference_block():
    text = render_report(REFERENCE_REPORT)
    assert text == (
        "detections_count = 394, unique_truth_count = 266\n"
        "class_id = 0, name = Drone, ap = 91.81% (TP = 248, FP = 25)\n"
        "\n"
        "for conf_thresh = 0.25, precision = 0.91, recall = 0.93, F1-score = 0.92\n"
        "for conf_thresh = 0.25, TP = 248, FP = 25, FN = 18, average IoU = 70.37 %\n"
        "\n"
        "IoU threshold = 50 %, used Area-Under-Curve for each unique Recall\n"
        "mean average precision (mAP@0.50) = 0.918130, or 91.81 %\n"
        "Total Detection Time: 2 Seconds\n")


def test_render_empty_and_multiclass():
    rep = evaluate([[]], [[]], ["drone"])
    text = render_report(rep)
    assert "detections_count = 0, unique_truth_count = 0" in text
    assert "precision = 0.00, recall = 0.00, F1-score = 0.00" in text
    assert "mean average precision (mAP@0.50) = 0.000000, or 0.00 %" in text

    a, b = (0.2, 0.2, 0.1, 0.1), (0.7, 0.7, 0.1, 0.1)
    dets = [[det(a, 0.9, 0), det(b, 0.8, 1), det((0.4, 0.9, 0.1, 0.1), 0.95, 1)]]
    gts = [[gt(a, 0), gt(b, 1)]]
    rep = evaluate(dets, gts, ["drone", "bird"])
    lines = render_report(rep).splitlines()
    assert lines[1].startswith("class_id = 0, name = drone, ap = 100.00%")
    assert lines[2].startswith("class_id = 1, name = bird, ap = 50.00%")
    assert rep.map50 == pytest.approx(0.75)
    assert "mean average precision (mAP@0.50) = 0.750000, or 75.00 %" in lines


def test_kv_report():
    text = render_report_kv(REFERENCE_REPORT)
    kv = dict(line.split(" = ", 1) for line in text.splitlines())
    assert kv["tp"] == "248" and kv["map50"] == "0.918130" and kv["class_0_name"] == "Drone"
