"""
Reading, writing and validating the challenge text formats.

Submission lines carry ``video_id frame bb_left bb_top bb_width bb_height class
confidence``; ground truth lines are the same without confidence. Input may be
comma or whitespace separated; output always uses single spaces.
"""

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from heare.helmet.core import (
    BoundingBox,
    ClassId,
    Detection,
    FrameAddress,
    FrameDims,
    GroundTruthRecord,
)

SUBMISSION_FIELDS = (
    "video_id",
    "frame",
    "bb_left",
    "bb_top",
    "bb_width",
    "bb_height",
    "class",
    "confidence",
)
GROUND_TRUTH_FIELDS = SUBMISSION_FIELDS[:-1]

_INT_FIELDS = {"video_id", "frame", "class"}
_COMMA = re.compile(r"\s*,\s*")
_INTEGER = re.compile(r"[+-]?[0-9]+")
_DECIMAL = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_NON_FINITE = re.compile(r"[+-]?(?:nan|inf|infinity)", re.IGNORECASE)
_VALID_CLASSES = {int(c) for c in ClassId}


class SubmissionParseError(ValueError):
    def __init__(self, line: int, message: str, field: Optional[str] = None):
        self.line = line
        self.field = field
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class SubmissionRecord:
    """One parsed line, numerically typed but not yet range checked."""

    line: int
    video_id: int
    frame: int
    left: float
    top: float
    width: float
    height: float
    class_id: int
    confidence: float

    def to_detection(self) -> Detection:
        try:
            return Detection(
                FrameAddress(self.video_id, self.frame),
                BoundingBox(self.left, self.top, self.width, self.height),
                ClassId(self.class_id),
                self.confidence,
            )
        except ValueError as e:
            raise SubmissionParseError(self.line, str(e)) from e

    @classmethod
    def from_detection(cls, det: Detection, line: int = 0) -> "SubmissionRecord":
        return cls(
            line,
            det.addr.video_id,
            det.addr.frame,
            det.box.left,
            det.box.top,
            det.box.width,
            det.box.height,
            int(det.class_id),
            det.confidence,
        )


@dataclass(frozen=True)
class SubmissionFile:
    records: Tuple[SubmissionRecord, ...]

    def detections(self) -> List[Detection]:
        return [r.to_detection() for r in self.records]

    @classmethod
    def from_detections(cls, dets: Iterable[Detection]) -> "SubmissionFile":
        return cls(
            tuple(
                SubmissionRecord.from_detection(d, line)
                for line, d in enumerate(dets, start=1)
            )
        )


@dataclass(frozen=True)
class Finding:
    line: int
    field: str
    rule: str
    message: str = ""


@dataclass(frozen=True)
class ValidationReport:
    findings: Tuple[Finding, ...] = ()
    n_records: int = 0
    counts: Counter = field(default_factory=Counter)

    @property
    def is_valid(self) -> bool:
        return not self.findings


def format_number(value: float) -> str:
    """Integral values bare, everything else with up to 6 decimals, zeros trimmed."""
    if float(value).is_integer():
        return str(int(value))
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _split_fields(line_no: int, line: str, names: Sequence[str]) -> List[str]:
    stripped = line.strip()
    if not stripped:
        return []
    fields = []
    for part in _COMMA.split(stripped):
        tokens = part.split()
        if not tokens:
            position = len(fields)
            raise SubmissionParseError(
                line_no,
                f"empty field at position {position + 1}",
                field=names[position] if position < len(names) else None,
            )
        fields.extend(tokens)
    return fields


def _parse_fields(
    line_no: int,
    fields: Sequence[str],
    names: Sequence[str],
    allow_non_finite: bool = False,
) -> List[float]:
    values = []
    for name, text in zip(names, fields):
        if name in _INT_FIELDS:
            if not _INTEGER.fullmatch(text):
                raise SubmissionParseError(
                    line_no, f"{name} must be an integer, got {text!r}", field=name
                )
            values.append(int(text))
            continue
        value = float(text) if _DECIMAL.fullmatch(text) else None
        if value is None and allow_non_finite and _NON_FINITE.fullmatch(text):
            value = float(text)
        if value is None or not (allow_non_finite or math.isfinite(value)):
            raise SubmissionParseError(
                line_no, f"{name} must be a finite number, got {text!r}", field=name
            )
        values.append(value)
    return values


def _check_ranges(line_no: int, class_id: int, confidence: Optional[float]) -> None:
    if class_id not in _VALID_CLASSES:
        raise SubmissionParseError(
            line_no, f"class must be in 1..7, got {class_id}", field="class"
        )
    if confidence is not None and not 0.0 <= confidence <= 1.0:
        raise SubmissionParseError(
            line_no, f"confidence must be in [0, 1], got {confidence}", field="confidence"
        )


def _numbered_lines(text: str, names: Sequence[str]):
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = _split_fields(line_no, line, names)
        if fields:
            yield line_no, fields


def parse_submission(text: str, strict: bool = True) -> SubmissionFile:
    """
    Parse submission text. With ``strict`` the class and confidence ranges are
    enforced and every real must be finite; without it those problems are left
    for validate_submission to report.
    """
    records = []
    for line_no, fields in _numbered_lines(text, SUBMISSION_FIELDS):
        if len(fields) != len(SUBMISSION_FIELDS):
            raise SubmissionParseError(
                line_no,
                f"expected {len(SUBMISSION_FIELDS)} fields, got {len(fields)}",
            )
        values = _parse_fields(
            line_no, fields, SUBMISSION_FIELDS, allow_non_finite=not strict
        )
        if strict:
            _check_ranges(line_no, values[6], values[7])
        records.append(SubmissionRecord(line_no, *values))
    return SubmissionFile(tuple(records))


def emit_submission(file: SubmissionFile) -> str:
    lines = [
        " ".join(
            format_number(v)
            for v in (
                r.video_id,
                r.frame,
                r.left,
                r.top,
                r.width,
                r.height,
                r.class_id,
                r.confidence,
            )
        )
        for r in file.records
    ]
    return "".join(line + "\n" for line in lines)


def emit_detections(dets: Iterable[Detection]) -> str:
    return emit_submission(SubmissionFile.from_detections(dets))


def parse_ground_truth(text: str) -> List[GroundTruthRecord]:
    records = []
    for line_no, fields in _numbered_lines(text, GROUND_TRUTH_FIELDS):
        if len(fields) == len(SUBMISSION_FIELDS):
            raise SubmissionParseError(
                line_no,
                "8 fields look like a submission line with confidence; "
                "use the submission parser for prediction files",
            )
        if len(fields) != len(GROUND_TRUTH_FIELDS):
            raise SubmissionParseError(
                line_no,
                f"expected {len(GROUND_TRUTH_FIELDS)} fields, got {len(fields)}",
            )
        video_id, frame, left, top, width, height, class_id = _parse_fields(
            line_no, fields, GROUND_TRUTH_FIELDS
        )
        _check_ranges(line_no, class_id, None)
        try:
            records.append(
                GroundTruthRecord(
                    FrameAddress(video_id, frame),
                    BoundingBox(left, top, width, height),
                    ClassId(class_id),
                )
            )
        except ValueError as e:
            raise SubmissionParseError(line_no, str(e)) from e
    return records


def emit_ground_truth(gts: Iterable[GroundTruthRecord]) -> str:
    lines = [
        " ".join(
            format_number(v)
            for v in (
                g.addr.video_id,
                g.addr.frame,
                g.box.left,
                g.box.top,
                g.box.width,
                g.box.height,
                int(g.class_id),
            )
        )
        for g in gts
    ]
    return "".join(line + "\n" for line in lines)


def validate_submission(
    file: SubmissionFile, dims: FrameDims, max_frame: int
) -> ValidationReport:
    findings: List[Finding] = []

    def report(record: SubmissionRecord, field_name: str, rule: str, message: str):
        findings.append(Finding(record.line, field_name, rule, message))

    for r in file.records:
        if r.video_id < 1:
            report(r, "video_id", "video_id_range", f"video_id {r.video_id} < 1")
        if not 1 <= r.frame <= max_frame:
            report(r, "frame", "frame_range", f"frame {r.frame} outside 1..{max_frame}")
        if r.class_id not in _VALID_CLASSES:
            report(r, "class", "class_range", f"class {r.class_id} outside 1..7")

        reals = {
            "bb_left": r.left,
            "bb_top": r.top,
            "bb_width": r.width,
            "bb_height": r.height,
            "confidence": r.confidence,
        }
        for name, value in reals.items():
            if not math.isfinite(value):
                report(r, name, "non_finite", f"{name} {value} is not finite")

        if math.isfinite(r.confidence) and not 0.0 <= r.confidence <= 1.0:
            report(
                r,
                "confidence",
                "confidence_range",
                f"confidence {r.confidence} outside [0, 1]",
            )
        if not all(math.isfinite(v) for v in (r.left, r.top, r.width, r.height)):
            continue
        if not r.width > 0:
            report(r, "bb_width", "box_non_positive", f"bb_width {r.width} <= 0")
        if not r.height > 0:
            report(r, "bb_height", "box_non_positive", f"bb_height {r.height} <= 0")
        if r.left < 0:
            report(r, "bb_left", "box_out_of_frame", f"bb_left {r.left} < 0")
        if r.top < 0:
            report(r, "bb_top", "box_out_of_frame", f"bb_top {r.top} < 0")
        if r.left + r.width > dims.width:
            report(
                r,
                "bb_width",
                "box_out_of_frame",
                f"bb_left + bb_width = {format_number(r.left + r.width)} > {dims.width}",
            )
        if r.top + r.height > dims.height:
            report(
                r,
                "bb_height",
                "box_out_of_frame",
                f"bb_top + bb_height = {format_number(r.top + r.height)} > {dims.height}",
            )

    return ValidationReport(
        tuple(findings), len(file.records), Counter(f.rule for f in findings)
    )
