"""
Per-model non-maximum suppression and multi-model ensemble fusion.

Fusion clusters same-class detections of one frame greedily in descending
confidence and averages each cluster, either plainly (``mean``) or weighted by
confidence with the score scaled by how many models agree (``weighted``).
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from heare.helmet.core import (
    BoundingBox,
    ClassId,
    Detection,
    FrameAddress,
    iou,
)

logger = logging.getLogger(__name__)


class FusionMode(Enum):
    MEAN = "mean"
    WEIGHTED = "weighted"


class DuplicateModelError(ValueError):
    pass


class MixedFrameError(ValueError):
    pass


@dataclass(frozen=True)
class ModelOutput:
    model_id: str
    detections: Tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))


class FusionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iou_cluster_threshold: float = Field(0.55, ge=0.0, le=1.0)
    mode: FusionMode = FusionMode.WEIGHTED
    skip_threshold: float = Field(0.0, ge=0.0, le=1.0)


class ModelHyperparameters(BaseModel):
    """Descriptive training metadata for one ensemble member."""

    model_id: str
    learning_rate: PositiveFloat
    image_size: PositiveInt
    optimizer: str
    epochs: PositiveInt
    momentum: PositiveFloat
    weight_decay: PositiveFloat
    warmup_epochs: PositiveInt
    iou: float = Field(gt=0.0, le=1.0)


class EnsembleManifest(BaseModel):
    models: List[ModelHyperparameters] = Field(min_length=1, max_length=5)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "EnsembleManifest":
        with open(path, "r") as f:
            data = yaml.safe_load(f)
        manifest = cls.model_validate(data)
        ids = [m.model_id for m in manifest.models]
        if len(set(ids)) != len(ids):
            raise DuplicateModelError(f"Duplicate model_id in manifest {path}")
        return manifest

    @property
    def model_ids(self) -> List[str]:
        return [m.model_id for m in self.models]


def _fusion_key(det: Detection) -> Tuple[float, float, float, float, float]:
    return det.rank_key() + (det.box.width, det.box.height)


def nms(dets: Sequence[Detection], iou_threshold: float) -> List[Detection]:
    """
    Greedy per-class suppression within one frame: a detection survives iff its
    IoU with every already-kept detection of its class is below the threshold.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    if len({d.addr for d in dets}) > 1:
        raise MixedFrameError("nms expects detections from a single frame")

    kept: List[Detection] = []
    for det in sorted(dets, key=lambda d: d.rank_key()):
        if all(
            iou(det.box, k.box) < iou_threshold
            for k in kept
            if k.class_id == det.class_id
        ):
            kept.append(det)
    return kept


def group_by_frame(
    dets: Iterable[Detection],
) -> Dict[FrameAddress, List[Detection]]:
    groups: Dict[FrameAddress, List[Detection]] = defaultdict(list)
    for det in dets:
        groups[det.addr].append(det)
    return dict(sorted(groups.items()))


def nms_per_frame(dets: Iterable[Detection], iou_threshold: float) -> List[Detection]:
    """Apply nms frame by frame; output ordered by frame address."""
    kept: List[Detection] = []
    for frame_dets in group_by_frame(dets).values():
        kept.extend(nms(frame_dets, iou_threshold))
    return kept


class _Cluster:
    def __init__(self, first: Tuple[str, Detection]):
        self.members: List[Tuple[str, Detection]] = [first]
        self.box = first[1].box

    def add(self, member: Tuple[str, Detection], mode: FusionMode):
        self.members.append(member)
        self.box = self._average_box(mode)

    def _average_box(self, mode: FusionMode) -> BoundingBox:
        dets = [d for _, d in self.members]
        if len(dets) == 1:
            return dets[0].box
        if mode is FusionMode.MEAN:
            weights = [1.0] * len(dets)
        else:
            weights = [d.confidence for d in dets]
        total = sum(weights)
        if total == 0.0:
            weights, total = [1.0] * len(dets), float(len(dets))

        def avg(attr: str) -> float:
            return sum(w * getattr(d.box, attr) for w, d in zip(weights, dets)) / total

        return BoundingBox(avg("left"), avg("top"), avg("width"), avg("height"))

    def fused(self, mode: FusionMode, total_models: int) -> Detection:
        first = self.members[0][1]
        if len(self.members) == 1 and mode is FusionMode.MEAN:
            return first
        confidence = sum(d.confidence for _, d in self.members) / len(self.members)
        if mode is FusionMode.WEIGHTED:
            contributing = len({model_id for model_id, _ in self.members})
            confidence = confidence * contributing / total_models
        if len(self.members) == 1 and confidence == first.confidence:
            return first
        return Detection(first.addr, self.box, first.class_id, min(confidence, 1.0))


def _fuse_group(
    members: List[Tuple[str, Detection]], cfg: FusionConfig, total_models: int
) -> List[Detection]:
    members = sorted(members, key=lambda m: _fusion_key(m[1]))
    clusters: List[_Cluster] = []
    for member in members:
        for cluster in clusters:
            if iou(cluster.box, member[1].box) >= cfg.iou_cluster_threshold:
                cluster.add(member, cfg.mode)
                break
        else:
            clusters.append(_Cluster(member))
    return [cluster.fused(cfg.mode, total_models) for cluster in clusters]


def fuse(
    outputs: Sequence[ModelOutput], cfg: FusionConfig = FusionConfig()
) -> List[Detection]:
    if not outputs:
        raise ValueError("fuse needs at least one model output")
    model_ids = [o.model_id for o in outputs]
    duplicates = sorted({m for m in model_ids if model_ids.count(m) > 1})
    if duplicates:
        raise DuplicateModelError(f"Duplicate model_id: {', '.join(duplicates)}")

    groups: Dict[Tuple[FrameAddress, ClassId], List[Tuple[str, Detection]]] = (
        defaultdict(list)
    )
    for output in outputs:
        for det in output.detections:
            groups[(det.addr, det.class_id)].append((output.model_id, det))

    fused: List[Detection] = []
    for key in sorted(groups):
        fused.extend(
            d
            for d in _fuse_group(groups[key], cfg, len(outputs))
            if d.confidence >= cfg.skip_threshold
        )
    logger.info(
        "Fused %d detections from %d models into %d",
        sum(len(o.detections) for o in outputs),
        len(outputs),
        len(fused),
    )
    return fused
