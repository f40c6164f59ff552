"""
PASCAL VOC 2012 style scoring: greedy TP/FP matching, precision/recall curves,
all-point interpolated average precision and the mean over classes.

AP is accumulated with exact rational arithmetic over cumulative TP counts and
converted to float once, so equal inputs always give bit-identical scores.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from heare.helmet.core import (
    ClassId,
    Detection,
    FrameAddress,
    GroundTruthRecord,
    iou,
)

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5


class NoGroundTruthError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    """
    Outcome of matching one (video, frame, class) group. ``flags`` and
    ``matched_gt`` follow the detections in ranked order; ``matched_gt[i]`` is
    the index of the ground truth a true positive claimed, else None.
    """

    detections: Tuple[Detection, ...]
    flags: Tuple[bool, ...]
    matched_gt: Tuple[Optional[int], ...]
    unmatched_gt: int

    @property
    def true_positives(self) -> int:
        return sum(self.flags)


@dataclass(frozen=True)
class PRCurve:
    cumulative_tp: Tuple[int, ...]
    n_gt: int

    @property
    def points(self) -> List[Tuple[float, float]]:
        """(recall, precision) after each ranked detection."""
        return [
            (tp / self.n_gt if self.n_gt else 0.0, tp / k)
            for k, tp in enumerate(self.cumulative_tp, start=1)
        ]


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: Dict[ClassId, float]
    mean_ap: float
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    n_detections: int = 0
    n_ground_truth: int = 0
    gt_counts: Dict[ClassId, int] = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.per_class_ap)

    def format(self) -> str:
        lines = [f"{int(c)} {ap:.6f}" for c, ap in sorted(self.per_class_ap.items())]
        lines.append(f"mAP {self.mean_ap:.6f}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "mAP": self.mean_ap,
            "N": self.n_classes,
            "iou_threshold": self.iou_threshold,
            "detections": self.n_detections,
            "ground_truth": self.n_ground_truth,
            "AP": {str(int(c)): ap for c, ap in sorted(self.per_class_ap.items())},
            "gt_counts": {str(int(c)): n for c, n in sorted(self.gt_counts.items())},
        }


def _rank_key(det: Detection) -> Tuple[float, float, float, int, int]:
    return det.rank_key() + (det.addr.video_id, det.addr.frame)


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """
    Each detection, highest confidence first, claims the still-unmatched ground
    truth it overlaps most; it is a true positive when that overlap reaches the
    threshold. Later duplicates of a claimed object are false positives.
    """
    ranked = tuple(sorted(dets, key=_rank_key))
    taken = [False] * len(gts)
    flags: List[bool] = []
    matched: List[Optional[int]] = []
    for det in ranked:
        best, best_iou = None, -1.0
        for i, gt in enumerate(gts):
            if taken[i]:
                continue
            overlap = iou(det.box, gt.box)
            if overlap > best_iou:
                best, best_iou = i, overlap
        if best is not None and best_iou >= iou_threshold:
            taken[best] = True
            flags.append(True)
            matched.append(best)
        else:
            flags.append(False)
            matched.append(None)
    return MatchResult(ranked, tuple(flags), tuple(matched), taken.count(False))


def pr_curve(flags: Sequence[bool], n_gt: int) -> PRCurve:
    if n_gt < 0:
        raise ValueError(f"n_gt must be non-negative, got {n_gt}")
    cumulative = []
    tp = 0
    for flag in flags:
        tp += bool(flag)
        cumulative.append(tp)
    return PRCurve(tuple(cumulative), n_gt)


def _exact_average_precision(curve: PRCurve) -> Fraction:
    if curve.n_gt == 0:
        raise NoGroundTruthError("Average precision is undefined without ground truth")
    # Walk from the lowest-ranked detection up, carrying the precision envelope;
    # every step where the TP count grows adds 1/n_gt of recall at that envelope.
    total = Fraction(0)
    envelope = Fraction(0)
    previous_tp = [0] + list(curve.cumulative_tp[:-1])
    for k in range(len(curve.cumulative_tp), 0, -1):
        tp = curve.cumulative_tp[k - 1]
        envelope = max(envelope, Fraction(tp, k))
        if tp > previous_tp[k - 1]:
            total += envelope
    return total / curve.n_gt


def average_precision(curve: PRCurve) -> float:
    return float(_exact_average_precision(curve))


def _group_by_frame_and_class(items: Iterable) -> Dict[Tuple[FrameAddress, ClassId], list]:
    groups = defaultdict(list)
    for item in items:
        groups[(item.addr, item.class_id)].append(item)
    return groups


def _pooled_curve(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float,
) -> PRCurve:
    """Match per (frame, class) group, then rank every detection together."""
    det_groups = _group_by_frame_and_class(dets)
    gt_groups = _group_by_frame_and_class(gts)
    ranked: List[Tuple[Tuple, bool]] = []
    for key, group in det_groups.items():
        result = match_detections(group, gt_groups.get(key, []), iou_threshold)
        ranked.extend(zip((_rank_key(d) for d in result.detections), result.flags))
    ranked.sort(key=lambda item: item[0])
    return pr_curve([flag for _, flag in ranked], len(gts))


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    """Per-class AP pooled over all videos and frames; mAP over classes present in ground truth."""
    if not gts:
        raise NoGroundTruthError("Cannot evaluate against empty ground truth")

    dets_by_class: Dict[ClassId, List[Detection]] = defaultdict(list)
    gts_by_class: Dict[ClassId, List[GroundTruthRecord]] = defaultdict(list)
    for det in dets:
        dets_by_class[det.class_id].append(det)
    for gt in gts:
        gts_by_class[gt.class_id].append(gt)

    exact: Dict[ClassId, Fraction] = {}
    for class_id in sorted(gts_by_class):
        curve = _pooled_curve(
            dets_by_class.get(class_id, []), gts_by_class[class_id], iou_threshold
        )
        exact[class_id] = _exact_average_precision(curve)
        logger.debug("Class %d: AP %.6f", class_id, float(exact[class_id]))

    skipped = sorted(set(dets_by_class) - set(gts_by_class))
    if skipped:
        logger.info(
            "Classes without ground truth excluded from mAP: %s",
            ", ".join(str(int(c)) for c in skipped),
        )

    mean_ap = sum(exact.values(), Fraction(0)) / len(exact)
    return EvalReport(
        per_class_ap={c: float(ap) for c, ap in exact.items()},
        mean_ap=float(mean_ap),
        iou_threshold=iou_threshold,
        n_detections=len(dets),
        n_ground_truth=len(gts),
        gt_counts={c: len(g) for c, g in gts_by_class.items()},
    )


def evaluate_per_frame(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> float:
    """
    Alternate reading of the leaderboard metric: AP within each frame (classes
    pooled), averaged over the frames that contain ground truth.
    """
    dets_by_frame: Dict[FrameAddress, List[Detection]] = defaultdict(list)
    gts_by_frame: Dict[FrameAddress, List[GroundTruthRecord]] = defaultdict(list)
    for det in dets:
        dets_by_frame[det.addr].append(det)
    for gt in gts:
        gts_by_frame[gt.addr].append(gt)

    if not gts_by_frame:
        return 0.0
    total = Fraction(0)
    for addr in sorted(gts_by_frame):
        curve = _pooled_curve(dets_by_frame.get(addr, []), gts_by_frame[addr], iou_threshold)
        total += _exact_average_precision(curve)
    return float(total / len(gts_by_frame))
