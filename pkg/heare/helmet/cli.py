#!/usr/bin/env python3
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel

from heare.helmet.augment import (
    DEFAULT_MIN_BOX_VISIBILITY,
    LabeledSample,
    MosaicConfig,
    augment_blur,
    augment_flip,
    augment_rotate,
    augment_rotate_arbitrary,
    load_sample,
    mosaic,
    save_sample,
    split_dataset,
    write_labels,
)
from heare.helmet.core import (
    CHALLENGE_FPS,
    CHALLENGE_FRAME_HEIGHT,
    CHALLENGE_FRAME_WIDTH,
    CHALLENGE_MAX_FRAME,
    Detection,
    FrameDims,
    GroundTruthRecord,
    clip_box,
)
from heare.helmet.evaluation import (
    DEFAULT_IOU_THRESHOLD,
    evaluate,
    evaluate_per_frame,
)
from heare.helmet.fusion import (
    EnsembleManifest,
    FusionConfig,
    FusionMode,
    ModelOutput,
    fuse,
    nms_per_frame,
)
from heare.helmet.imaging import FRAME_NAME_TEMPLATE, save_image
from heare.helmet.submission import (
    SubmissionParseError,
    emit_detections,
    parse_ground_truth,
    parse_submission,
    validate_submission,
)
from heare.helmet.utils import APP_NAME, load_config, serialize_to_file, write_text
from heare.helmet.video import DEFAULT_SAMPLE_COUNT, FrameSequence, estimate_background

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2


class InputError(Exception):
    """A user-supplied file is missing or malformed; the message names it."""


def _read_text(path: str) -> str:
    try:
        with open(path, "r") as f:
            return f.read()
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None


def load_detections(path: str) -> List[Detection]:
    try:
        return parse_submission(_read_text(path)).detections()
    except SubmissionParseError as e:
        raise InputError(f"{path}: {e}") from None


def load_ground_truth(path: str) -> List[GroundTruthRecord]:
    try:
        return parse_ground_truth(_read_text(path))
    except SubmissionParseError as e:
        raise InputError(f"{path}: {e}") from None


def _emit(text: str, out: Optional[str], console: Console, what: str) -> None:
    if out:
        write_text(out, text)
        console.print(f"[green]Wrote {what} to {escape(out)}[/green]", soft_wrap=True)
    else:
        print(text, end="")


def _parse_rgb(value: str) -> Tuple[int, int, int]:
    parts = value.split(",")
    try:
        rgb = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid color: {value}") from None
    if len(rgb) != 3 or not all(0 <= c <= 255 for c in rgb):
        raise argparse.ArgumentTypeError(f"Color must be r,g,b in 0..255: {value}")
    return rgb


def evaluate_command(args, console: Console) -> int:
    """Score a submission against ground truth."""
    gts = load_ground_truth(args.gt)
    if not gts:
        raise InputError(f"{args.gt}: no ground truth records to evaluate against")
    dets = load_detections(args.pred)
    if args.per_frame:
        score = evaluate_per_frame(dets, gts, args.iou_threshold)
        text = f"per_frame_mAP {score:.6f}\n"
        summary = {"per_frame_mAP": score, "iou_threshold": args.iou_threshold}
    else:
        report = evaluate(dets, gts, args.iou_threshold)
        text = report.format()
        summary = report.to_dict()
    print(text, end="")
    if args.out:
        write_text(args.out, text)
    if args.json_out:
        Path(args.json_out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.json_out, "w") as f:
            serialize_to_file(summary, f, indent=2)
    return EXIT_OK


def model_ids_for(paths: Sequence[str]) -> List[str]:
    """
    File stems, unless two stems collide; then every id is the path relative to
    the deepest directory shared by all files, without the extension.
    """
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    resolved = [Path(p).resolve() for p in paths]
    root = Path(os.path.commonpath([str(r.parent) for r in resolved]))
    return [r.relative_to(root).with_suffix("").as_posix() for r in resolved]


def _model_outputs(paths: Sequence[str]) -> List[ModelOutput]:
    return [
        ModelOutput(model_id, tuple(load_detections(p)))
        for model_id, p in zip(model_ids_for(paths), paths)
    ]


def fuse_command(args, console: Console) -> int:
    """Fuse detections from several models into one submission."""
    outputs = _model_outputs(args.pred)
    if args.manifest:
        manifest = EnsembleManifest.from_yaml(args.manifest)
        expected = set(manifest.model_ids)
        supplied = {o.model_id for o in outputs}
        if expected != supplied:
            raise InputError(
                f"{args.manifest}: manifest models {sorted(expected)} do not match "
                f"prediction files {sorted(supplied)}"
            )
        for model in manifest.models:
            logger.info("Ensemble member %s: %s", model.model_id, model.model_dump())
    if args.nms:
        outputs = [
            ModelOutput(o.model_id, tuple(nms_per_frame(o.detections, args.nms_threshold)))
            for o in outputs
        ]
    cfg = FusionConfig(
        iou_cluster_threshold=args.iou_threshold,
        mode=FusionMode(args.mode),
        skip_threshold=args.skip_threshold,
    )
    fused = fuse(outputs, cfg)
    _emit(emit_detections(fused), args.out, console, f"{len(fused)} fused detections")
    return EXIT_OK


def nms_command(args, console: Console) -> int:
    """Apply per-frame non-maximum suppression to one submission."""
    kept = nms_per_frame(load_detections(args.pred), args.iou_threshold)
    _emit(emit_detections(kept), args.out, console, f"{len(kept)} detections")
    return EXIT_OK


def augment_command(args, console: Console) -> int:
    """Augment one labeled frame."""
    sample = load_sample(args.image)
    if args.op == "flip":
        result = augment_flip(sample)
    elif args.op == "rotate90":
        result = augment_rotate(sample, args.turns)
    elif args.op == "rotate":
        result = augment_rotate_arbitrary(
            sample, args.angle, args.fill, args.min_visibility
        )
    else:
        result = augment_blur(sample, args.sigma)
    save_sample(result, args.out)
    print(f"{args.op} boxes {len(sample.boxes)} -> {len(result.boxes)}")
    return EXIT_OK


def mosaic_command(args, console: Console) -> int:
    """Build a mosaic training sample from four labeled frames."""
    if len(args.image) != 4:
        raise InputError(f"mosaic needs exactly 4 --image arguments, got {len(args.image)}")
    samples: List[LabeledSample] = [load_sample(p) for p in args.image]
    cfg = MosaicConfig(
        target_dims=FrameDims(args.width, args.height),
        min_box_visibility=args.min_visibility,
        seed=args.seed,
    )
    result = mosaic(samples, cfg)
    save_sample(result, args.out)
    print(f"mosaic boxes {sum(len(s.boxes) for s in samples)} -> {len(result.boxes)}")
    return EXIT_OK


def background_command(args, console: Console) -> int:
    """Estimate a video's static background."""
    sequence = FrameSequence.from_directory(args.frames, fps=args.fps)
    background = estimate_background(sequence, args.k, args.seed)
    save_image(background, args.out)
    print(f"background from {args.k} of {len(sequence)} frames")
    return EXIT_OK


def split_command(args, console: Console) -> int:
    """Split a sample manifest into train and validation lists."""
    ids = [line.strip() for line in _read_text(args.manifest).splitlines() if line.strip()]
    if not ids:
        raise InputError(f"{args.manifest}: manifest is empty")
    train, val = split_dataset(ids, args.val_fraction, args.seed)
    print(f"train {len(train)}")
    print(f"val {len(val)}")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        write_text(out_dir / "train.txt", "".join(f"{i}\n" for i in train))
        write_text(out_dir / "val.txt", "".join(f"{i}\n" for i in val))
    return EXIT_OK


def validate_command(args, console: Console) -> int:
    """Check a submission against the challenge rules."""
    try:
        submission = parse_submission(_read_text(args.sub), strict=False)
    except SubmissionParseError as e:
        raise InputError(f"{args.sub}: {e}") from None
    report = validate_submission(
        submission, FrameDims(args.width, args.height), args.max_frame
    )
    for finding in report.findings:
        print(f"line {finding.line}: {finding.field}: {finding.rule}: {finding.message}")

    if report.is_valid:
        summary = f"[bold green]{report.n_records} records, no findings[/bold green]"
    else:
        counts = "\n".join(f"  {rule}: {n}" for rule, n in sorted(report.counts.items()))
        summary = (
            f"[bold red]{len(report.findings)} findings in "
            f"{report.n_records} records[/bold red]\n{counts}"
        )
    console.print(Panel(summary, title=escape(args.sub), expand=False))
    return EXIT_OK if report.is_valid else EXIT_FINDINGS


def export_labels_command(args, console: Console) -> int:
    """Write per-frame annotation sidecars for one video's ground truth."""
    dims = FrameDims(args.width, args.height)
    by_frame: Dict[int, list] = {}
    for gt in load_ground_truth(args.gt):
        if gt.addr.video_id != args.video_id:
            continue
        clipped = clip_box(gt.box, dims)
        if clipped is not None:
            by_frame.setdefault(gt.addr.frame, []).append((clipped, gt.class_id))
    out_dir = Path(args.out_dir)
    for frame, boxes in sorted(by_frame.items()):
        name = Path(FRAME_NAME_TEMPLATE.format(frame)).with_suffix(".txt")
        write_text(out_dir / name, write_labels(boxes, dims))
    print(f"labels for {len(by_frame)} frames")
    return EXIT_OK


def _add_dims(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--width", type=int, default=CHALLENGE_FRAME_WIDTH, help="Frame width")
    parser.add_argument(
        "--height", type=int, default=CHALLENGE_FRAME_HEIGHT, help="Frame height"
    )


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog=APP_NAME, description="Helmet-violation detection pipeline toolkit"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--config", help="YAML file of per-subcommand flag defaults")
    subparsers = parser.add_subparsers(dest="command", help="Commands")
    commands = {}

    # evaluate
    p = subparsers.add_parser("evaluate", help="Score predictions against ground truth")
    p.add_argument("--gt", required=True, help="Ground truth file")
    p.add_argument("--pred", required=True, help="Submission file")
    p.add_argument(
        "--iou-threshold",
        type=float,
        default=DEFAULT_IOU_THRESHOLD,
        help="IoU needed for a true positive",
    )
    p.add_argument(
        "--per-frame", action="store_true", help="Average AP over frames instead of classes"
    )
    p.add_argument("--out", help="Also write the report here")
    p.add_argument("--json-out", help="Write a JSON key-value report here")
    p.set_defaults(func=evaluate_command)
    commands["evaluate"] = p

    # fuse
    p = subparsers.add_parser("fuse", help="Fuse several models' detections")
    p.add_argument(
        "--pred",
        action="append",
        required=True,
        help="Submission file (repeat per model). The model id is the file stem; "
        "when stems collide it is the path below the shared parent directory, "
        "e.g. a/pred and b/pred",
    )
    p.add_argument(
        "--mode", choices=[m.value for m in FusionMode], default=FusionMode.WEIGHTED.value
    )
    p.add_argument(
        "--iou-threshold", type=float, default=0.55, help="IoU for joining a cluster"
    )
    p.add_argument(
        "--skip-threshold", type=float, default=0.0, help="Drop fused detections below this"
    )
    p.add_argument(
        "--nms",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="Run per-model NMS before fusing",
    )
    p.add_argument("--nms-threshold", type=float, default=0.5)
    p.add_argument("--manifest", help="Ensemble manifest YAML")
    p.add_argument("--out", help="Output submission file (default: stdout)")
    p.set_defaults(func=fuse_command)
    commands["fuse"] = p

    # nms
    p = subparsers.add_parser("nms", help="Non-maximum suppression per frame")
    p.add_argument("--pred", required=True, help="Submission file")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out", help="Output submission file (default: stdout)")
    p.set_defaults(func=nms_command)
    commands["nms"] = p

    # augment
    p = subparsers.add_parser("augment", help="Augment a labeled frame")
    p.add_argument("--image", required=True, help="Input .ppm (labels from the .txt sidecar)")
    p.add_argument("--op", choices=["flip", "rotate90", "rotate", "blur"], required=True)
    p.add_argument("--turns", type=int, default=1, help="Quarter turns for rotate90")
    p.add_argument("--angle", type=float, default=0.0, help="Degrees for rotate")
    p.add_argument("--fill", type=_parse_rgb, default=(0, 0, 0), help="r,g,b fill for rotate")
    p.add_argument("--sigma", type=float, default=1.0, help="Blur sigma")
    p.add_argument("--min-visibility", type=float, default=DEFAULT_MIN_BOX_VISIBILITY)
    p.add_argument("--out", required=True, help="Output .ppm (sidecar written alongside)")
    p.set_defaults(func=augment_command)
    commands["augment"] = p

    # mosaic
    p = subparsers.add_parser("mosaic", help="Combine four labeled frames into a mosaic")
    p.add_argument("--image", action="append", required=True, help="Input .ppm, four times")
    _add_dims(p)
    p.add_argument("--min-visibility", type=float, default=DEFAULT_MIN_BOX_VISIBILITY)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="Output .ppm (sidecar written alongside)")
    p.set_defaults(func=mosaic_command)
    commands["mosaic"] = p

    # background
    p = subparsers.add_parser("background", help="Median background of a frame directory")
    p.add_argument("--frames", required=True, help=f"Directory of {FRAME_NAME_TEMPLATE}")
    p.add_argument("--k", type=int, default=DEFAULT_SAMPLE_COUNT, help="Frames to sample")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fps", type=float, default=CHALLENGE_FPS)
    p.add_argument("--out", required=True, help="Output background .ppm")
    p.set_defaults(func=background_command)
    commands["background"] = p

    # split
    p = subparsers.add_parser("split", help="Seeded train/validation split")
    p.add_argument("--manifest", required=True, help="One sample id per line")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", help="Write train.txt and val.txt here")
    p.set_defaults(func=split_command)
    commands["split"] = p

    # validate
    p = subparsers.add_parser("validate", help="Validate a submission file")
    p.add_argument("--sub", required=True, help="Submission file")
    _add_dims(p)
    p.add_argument("--max-frame", type=int, default=CHALLENGE_MAX_FRAME)
    p.set_defaults(func=validate_command)
    commands["validate"] = p

    # export-labels
    p = subparsers.add_parser(
        "export-labels", help="Write per-frame label sidecars from ground truth"
    )
    p.add_argument("--gt", required=True, help="Ground truth file")
    p.add_argument("--video-id", type=int, required=True)
    _add_dims(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=export_labels_command)
    commands["export-labels"] = p

    return parser, commands


def _apply_config(
    parser: argparse.ArgumentParser,
    commands: Dict[str, argparse.ArgumentParser],
    path: str,
) -> None:
    try:
        config = load_config(path)
    except (OSError, ValueError) as e:
        parser.error(f"cannot load config {path}: {e}")
    for name, values in config.items():
        if name not in commands:
            parser.error(f"config {path}: unknown subcommand {name!r}")
        known = {a.dest for a in commands[name]._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            parser.error(f"config {path}: unknown {name} options {', '.join(unknown)}")
        commands[name].set_defaults(**values)


def _setup_logging(console: Console, verbose: bool) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=console, show_path=False))
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser, commands = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre_args, _ = parser.parse_known_args(argv)
        if pre_args.config:
            _apply_config(parser, commands, pre_args.config)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    console = Console(stderr=True)
    _setup_logging(console, args.verbose)

    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_USAGE

    try:
        return args.func(args, console)
    except (InputError, ValueError, OSError) as e:
        console.print(f"[bold red]Error: {escape(str(e))}[/bold red]", soft_wrap=True)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
