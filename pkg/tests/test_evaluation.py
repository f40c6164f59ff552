from fractions import Fraction

import numpy as np
import pytest

from heare.helmet.core import (
    BoundingBox,
    ClassId,
    Detection,
    FrameAddress,
    GroundTruthRecord,
    iou,
)
from heare.helmet.evaluation import (
    NoGroundTruthError,
    average_precision,
    evaluate,
    evaluate_per_frame,
    match_detections,
    pr_curve,
)

FRAME = FrameAddress(1, 1)


def gt(left, top, width, height, class_id=ClassId.MOTORCYCLE, addr=FRAME):
    return GroundTruthRecord(addr, BoundingBox(left, top, width, height), class_id)


def det(left, top, width, height, confidence, class_id=ClassId.MOTORCYCLE, addr=FRAME):
    return Detection(addr, BoundingBox(left, top, width, height), class_id, confidence)


def perfect(gts):
    return [Detection(g.addr, g.box, g.class_id, 1.0) for g in gts]


def brute_force_map(dets, gts, threshold):
    """Independent scorer: global greedy matching, explicit envelope over recall steps."""
    classes = sorted({g.class_id for g in gts})
    aps = []
    for class_id in classes:
        class_gts = [g for g in gts if g.class_id == class_id]
        class_dets = sorted(
            (d for d in dets if d.class_id == class_id), key=lambda d: -d.confidence
        )
        used = set()
        hits = []
        for d in class_dets:
            candidates = [
                (iou(d.box, g.box), -i)
                for i, g in enumerate(class_gts)
                if g.addr == d.addr and i not in used
            ]
            if candidates:
                best_iou, neg_index = max(candidates)
                if best_iou >= threshold:
                    used.add(-neg_index)
                    hits.append(True)
                    continue
            hits.append(False)

        points = []
        tp = 0
        for k, hit in enumerate(hits, start=1):
            tp += hit
            points.append((Fraction(tp, len(class_gts)), Fraction(tp, k)))
        ap = Fraction(0)
        previous_recall = Fraction(0)
        for recall, _ in points:
            if recall > previous_recall:
                best = max(p for r, p in points if r >= recall)
                ap += (recall - previous_recall) * best
                previous_recall = recall
        aps.append(ap)
    return float(sum(aps, Fraction(0)) / len(aps)), [float(a) for a in aps]


def random_instance(rng):
    picked = rng.choice(np.arange(1, 8), size=int(rng.integers(1, 4)), replace=False)
    classes = [ClassId(int(c)) for c in picked]
    frames = [FrameAddress(1, 1), FrameAddress(1, 2), FrameAddress(2, 1)]
    gts = []
    for _ in range(int(rng.integers(1, 7))):
        gts.append(
            GroundTruthRecord(
                frames[int(rng.integers(0, 3))],
                BoundingBox(
                    float(rng.integers(0, 80)),
                    float(rng.integers(0, 80)),
                    float(rng.integers(10, 30)),
                    float(rng.integers(10, 30)),
                ),
                classes[int(rng.integers(0, len(classes)))],
            )
        )
    n_dets = int(rng.integers(0, 13))
    # distinct confidences keep the ranking free of tie-break subtleties
    confidences = rng.permutation(np.arange(1, 100))[:n_dets] / 100
    dets = []
    for confidence in confidences:
        if rng.random() < 0.6:
            anchor = gts[int(rng.integers(0, len(gts)))]
            box = BoundingBox(
                anchor.box.left + float(rng.integers(-6, 7)),
                anchor.box.top + float(rng.integers(-6, 7)),
                anchor.box.width,
                anchor.box.height,
            )
            addr, class_id = anchor.addr, anchor.class_id
        else:
            box = BoundingBox(
                float(rng.integers(0, 80)), float(rng.integers(0, 80)), 20.0, 20.0
            )
            addr = frames[int(rng.integers(0, 3))]
            class_id = classes[int(rng.integers(0, len(classes)))]
        dets.append(Detection(addr, box, class_id, float(confidence)))
    return dets, gts


def test_match_identity_and_duplicates():
    truth = [gt(0, 0, 10, 10)]
    result = match_detections([det(0, 0, 10, 10, 0.9)], truth)
    assert result.flags == (True,)
    assert result.matched_gt == (0,)
    assert result.unmatched_gt == 0

    result = match_detections([det(1, 0, 10, 10, 0.8), det(0, 0, 10, 10, 0.9)], truth)
    assert result.flags == (True, False)
    assert result.detections[0].confidence == 0.9
    assert result.true_positives == 1


def test_match_without_ground_truth():
    result = match_detections([det(0, 0, 10, 10, 0.9), det(5, 5, 10, 10, 0.3)], [])
    assert result.flags == (False, False)
    assert result.matched_gt == (None, None)


def test_match_prefers_highest_overlap():
    truth = [gt(0, 0, 10, 10), gt(4, 0, 10, 10)]
    result = match_detections([det(4, 0, 10, 10, 0.9)], truth)
    assert result.matched_gt == (1,)
    assert result.unmatched_gt == 1


def test_pr_curve_points():
    assert pr_curve([True], 1).points == [(1.0, 1.0)]
    assert pr_curve([True, False, True], 2).points == [(0.5, 1.0), (0.5, 0.5), (1.0, 2 / 3)]
    assert pr_curve([False], 1).points == [(0.0, 0.0)]
    assert pr_curve([], 0).points == []


def test_average_precision_examples():
    assert average_precision(pr_curve([True], 1)) == 1.0
    assert average_precision(pr_curve([True, False, True], 2)) == float(Fraction(5, 6))
    assert average_precision(pr_curve([False, False], 3)) == 0.0
    with pytest.raises(NoGroundTruthError):
        average_precision(pr_curve([False], 0))


def test_average_precision_monotone_in_false_positives():
    rng = np.random.default_rng(4)
    for _ in range(200):
        flags = [bool(f) for f in rng.random(int(rng.integers(1, 15))) < 0.5]
        n_gt = sum(flags) + int(rng.integers(0, 3)) or 1
        base = average_precision(pr_curve(flags, n_gt))
        assert 0.0 <= base <= 1.0
        for i, flag in enumerate(flags):
            if not flag:
                pruned = flags[:i] + flags[i + 1 :]
                assert average_precision(pr_curve(pruned, n_gt)) >= base


def test_evaluate_perfect_and_empty():
    truth = [
        gt(0, 0, 10, 10, ClassId.MOTORCYCLE),
        gt(50, 50, 10, 20, ClassId.DRIVER_NO_HELMET, FrameAddress(1, 2)),
        gt(80, 0, 10, 20, ClassId.DRIVER_NO_HELMET, FrameAddress(3, 7)),
    ]
    report = evaluate(perfect(truth), truth)
    assert report.mean_ap == 1.0
    assert report.n_classes == 2
    assert report.gt_counts == {ClassId.MOTORCYCLE: 1, ClassId.DRIVER_NO_HELMET: 2}

    empty = evaluate([], truth)
    assert empty.mean_ap == 0.0
    assert set(empty.per_class_ap.values()) == {0.0}

    with pytest.raises(NoGroundTruthError):
        evaluate(perfect(truth), [])


def test_evaluate_ignores_classes_without_ground_truth():
    truth = [gt(0, 0, 10, 10)]
    stray = det(0, 0, 10, 10, 0.95, ClassId.PASSENGER1_NO_HELMET)
    report = evaluate(perfect(truth) + [stray], truth)
    assert list(report.per_class_ap) == [ClassId.MOTORCYCLE]
    assert report.mean_ap == 1.0


def test_report_format_and_dict():
    truth = [gt(0, 0, 10, 10), gt(0, 0, 10, 10, ClassId.DRIVER_WITH_HELMET)]
    report = evaluate(perfect(truth[:1]), truth)
    assert report.format() == "1 1.000000\n2 0.000000\nmAP 0.500000\n"
    data = report.to_dict()
    assert data["mAP"] == 0.5
    assert data["N"] == 2
    assert data["AP"] == {"1": 1.0, "2": 0.0}


def test_mean_is_average_of_classes():
    rng = np.random.default_rng(21)
    for _ in range(100):
        dets, gts = random_instance(rng)
        report = evaluate(dets, gts)
        values = list(report.per_class_ap.values())
        assert abs(report.mean_ap - sum(values) / len(values)) <= 1e-12


def test_evaluate_matches_brute_force():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        dets, gts = random_instance(rng)
        report = evaluate(dets, gts)
        want_map, want_aps = brute_force_map(dets, gts, 0.5)
        assert report.mean_ap == want_map
        assert list(report.per_class_ap.values()) == want_aps


def test_ranking_invariance_under_monotone_rescale():
    rng = np.random.default_rng(5)
    for _ in range(100):
        dets, gts = random_instance(rng)
        squashed = [
            Detection(d.addr, d.box, d.class_id, d.confidence**3) for d in dets
        ]
        assert evaluate(squashed, gts).mean_ap == evaluate(dets, gts).mean_ap


def test_stricter_threshold_never_helps():
    truth = [gt(0, 0, 10, 10)]
    dets = [det(4, 0, 10, 10, 0.9)]  # IoU 6/14
    scores = [evaluate(dets, truth, t).mean_ap for t in (0.1, 0.3, 0.5, 0.7)]
    assert scores == [1.0, 1.0, 0.0, 0.0]


def test_per_frame_variant():
    one = FrameAddress(1, 1)
    two = FrameAddress(1, 2)
    truth = [gt(0, 0, 10, 10, addr=one)]
    assert evaluate_per_frame(perfect(truth), truth) == 1.0

    truth = [gt(0, 0, 10, 10, addr=one), gt(0, 0, 10, 10, addr=two)]
    dets = [det(0, 0, 10, 10, 0.9, addr=one), det(50, 50, 10, 10, 0.9, addr=two)]
    assert evaluate_per_frame(dets, truth) == 0.5

    extra = dets + [det(0, 0, 10, 10, 0.9, addr=FrameAddress(4, 4))]
    assert evaluate_per_frame(extra, truth) == 0.5
    assert evaluate_per_frame(dets, []) == 0.0
