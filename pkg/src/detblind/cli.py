"""Command-line entry point.

Subcommands: ``attack``, ``eval``, ``reconstruct``, ``segmask`` and
``gradcheck``. Exit codes are 0 on success, 1 on a stage error (the error
JSON goes to stderr) and 2 on configuration or usage errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .common.errors import ConfigError, DetblindError, StageError, stage_context
from .common.identifiers import canonical_json
from .config import ENV_LOG_LEVEL, AttackConfig, load_config
from .evaluation.compare import AttackedTarget, compare_attacks, target_suppression
from .evaluation.detections import DetectionSet, parse_detections
from .inversion.classifier import LinearSoftmaxClassifier
from .inversion.gradcheck import DEFAULT_TOLERANCE, gradient_check
from .pipeline import obtain_classifier, render_manifest, run_attack, run_reconstruction, run_segmentation
from .segmentation.coco import ground_truth_boxes, load_coco_document
from .visualizations.exporters import ArtifactExporter
from .visualizations.renderers import render_comparison_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE_ERROR = 1
EXIT_USAGE_ERROR = 2

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")
LINEAR_CONTROL_TOLERANCE = 1e-6

# argparse dest -> location in AttackConfig
FLAG_PATHS: Dict[str, Tuple[str, ...]] = {
    "output_dir": ("output_dir",),
    "seed": ("seed",),
    "log_level": ("log_level",),
    "workers": ("workers",),
    "annotations": ("annotations",),
    "mask": ("mask",),
    "target_label": ("target_labels",),
    "reconstruction_label": ("reconstruction_label",),
    "step": ("replace", "step"),
    "epsilon": ("replace", "epsilon"),
    "lambda1": ("inversion", "lambda1"),
    "lambda2": ("inversion", "lambda2"),
    "alpha": ("inversion", "alpha"),
    "beta": ("inversion", "beta"),
    "max_iters": ("inversion", "max_iters"),
    "target_prob": ("inversion", "target_prob"),
    "update_rule": ("inversion", "update_rule"),
    "n": ("perturb", "n"),
    "m": ("perturb", "m"),
    "stride": ("perturb", "stride"),
    "horizontal_stride": ("perturb", "horizontal_stride"),
    "offset": ("perturb", "offset"),
    "eta": ("perturb", "eta"),
    "extract_mode": ("perturb", "extract_mode"),
    "on_rle": ("segmentation", "on_rle"),
    "separate_instances": ("segmentation", "separate_instances"),
    "palette_size": ("segmentation", "palette_size"),
    "samples_per_class": ("classifier", "samples_per_class"),
    "epochs": ("classifier", "epochs"),
    "weights_dir": ("classifier", "weights_dir"),
    "threshold": ("evaluation", "threshold"),
}


class UsageError(ConfigError):
    """Bad command-line usage detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file (schema_version 1)")
    parser.add_argument("--output-dir", type=Path)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])


def _add_classifier(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--samples-per-class", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--weights-dir", type=Path, help="load saved classifier weights instead of training")


def _add_inversion(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda1", type=float)
    parser.add_argument("--lambda2", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--target-prob", type=float)
    parser.add_argument("--update-rule", choices=["momentum", "literal"])


def _add_sources(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--image", action="append", type=Path, dest="image", help="input image (repeatable)")
    parser.add_argument("--image-dir", type=Path, help="attack every PNG/PPM/PGM in a directory")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--annotations", type=Path, help="COCO instances JSON")
    source.add_argument("--mask", type=Path, help="painted mask PNG, or a directory of <image stem>.png")
    parser.add_argument("--on-rle", choices=["error", "skip"])
    parser.add_argument("--palette-size", type=int, help="number of generated palette colors for painted masks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="detblind", description="Black-box adversarial examples for object detectors")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    attack = sub.add_parser("attack", help="locate, replace, reconstruct and perturb")
    _add_common(attack)
    _add_sources(attack)
    _add_inversion(attack)
    _add_classifier(attack)
    attack.add_argument("--target-label", type=int, action="append", help="class id to attack (repeatable)")
    attack.add_argument("--reconstruction-label", type=int, help="classifier class to reconstruct")
    attack.add_argument("--separate-instances", action="store_true", default=None)
    attack.add_argument("--step", type=int)
    attack.add_argument("--epsilon", type=float)
    attack.add_argument("--n", type=int, help="horizontal band thickness")
    attack.add_argument("--m", type=int, help="vertical band length")
    attack.add_argument("--stride", type=int)
    attack.add_argument("--horizontal-stride", type=int)
    attack.add_argument("--offset", type=int, nargs=2, metavar=("I", "J"))
    attack.add_argument("--eta", type=float)
    attack.add_argument("--extract-mode", choices=["delta", "copy", "whole"])
    attack.add_argument("--workers", type=int)

    evaluate = sub.add_parser("eval", help="compare detector dumps")
    _add_common(evaluate)
    evaluate.add_argument("--origin", type=Path, required=True, help="detections on the clean images")
    evaluate.add_argument("--adv", action="append", required=True, help="adversarial dump, PATH or NAME=PATH (repeatable)")
    evaluate.add_argument("--gt", type=Path, required=True, help="COCO ground-truth JSON")
    evaluate.add_argument("--threshold", type=float)
    evaluate.add_argument("--targets", type=Path, help="JSON list of attacked {image_id, label, bbox}")

    recon = sub.add_parser("reconstruct", help="run the reconstruction stage alone")
    _add_common(recon)
    _add_inversion(recon)
    _add_classifier(recon)
    recon.add_argument("--label", type=int, required=True, help="classifier class to reconstruct")

    segmask = sub.add_parser("segmask", help="run the segmentation stage alone")
    _add_common(segmask)
    _add_sources(segmask)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of the classifier gradient")
    _add_common(gradcheck)
    _add_classifier(gradcheck)
    gradcheck.add_argument("--probes", type=int, default=50)
    gradcheck.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config mapping of the flags that were actually given."""
    overrides: Dict[str, Any] = {}
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if isinstance(value, Path):
            value = str(value)
        node = overrides
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = list(value) if isinstance(value, (list, tuple)) else value
    images = list(getattr(args, "image", None) or [])
    image_dir = getattr(args, "image_dir", None)
    if image_dir is not None:
        if not Path(image_dir).is_dir():
            raise UsageError(f"--image-dir {image_dir} is not a directory")
        images.extend(sorted(p for p in Path(image_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES))
    if images:
        overrides["images"] = [str(p) for p in images]
    return overrides


def configure_logging(level: Optional[str]) -> None:
    level = (level or os.environ.get(ENV_LOG_LEVEL) or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _report_stage_error(error: StageError) -> int:
    print(error.to_json(), file=sys.stderr)
    return EXIT_STAGE_ERROR


def cmd_attack(config: AttackConfig) -> int:
    results, collector = run_attack(config)
    if len(results) > 1:
        ArtifactExporter(config.output_dir).write_text("batch.json", render_manifest(results))
    failed = [result for result in results if not result.ok]
    if failed:
        for result in failed:
            print(json.dumps(result.error, sort_keys=True), file=sys.stderr)
        return EXIT_STAGE_ERROR
    return EXIT_OK


def cmd_reconstruct(config: AttackConfig, label: int) -> int:
    _, state = run_reconstruction(config, label)
    print(canonical_json({"label": label, "iterations": state.iteration, "final_prob": state.final_prob}), end="")
    return EXIT_OK


def cmd_segmask(config: AttackConfig) -> int:
    masks = run_segmentation(config)
    print(canonical_json({name: mask.labels() for name, mask in masks.items()}), end="")
    return EXIT_OK


def _named_dumps(values: Sequence[str]) -> List[Tuple[str, Path]]:
    named = []
    for value in values:
        name, sep, path = value.partition("=")
        named.append((name, Path(path)) if sep else (Path(value).stem, Path(value)))
    return named


def _read_dump(path: Path) -> DetectionSet:
    with stage_context("eval", file=path):
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            raise StageError("eval", "input file not found", file=path) from None
        return parse_detections(raw)


def cmd_eval(config: AttackConfig, origin_path: Path, adv_values: Sequence[str], gt_path: Path, targets_path: Optional[Path]) -> int:
    threshold = config.evaluation.threshold
    origin = _read_dump(origin_path)
    attacks = {name: _read_dump(path) for name, path in _named_dumps(adv_values)}
    with stage_context("eval", file=gt_path):
        try:
            ground_truth = ground_truth_boxes(load_coco_document(gt_path.read_bytes()))
        except FileNotFoundError:
            raise StageError("eval", "input file not found", file=gt_path) from None

    table = compare_attacks(origin, attacks, ground_truth, threshold)
    exporter = ArtifactExporter(config.output_dir)
    exporter.write_json("comparison.json", table)
    if len(table.attacks) == 1:
        exporter.write_json("diff_report.json", table.attacks[0].diff)
        exporter.write_json("eval_report.json", table.attacks[0].metrics)
    text = render_comparison_table(table)

    if targets_path is not None:
        with stage_context("eval", file=targets_path):
            try:
                raw_targets = json.loads(targets_path.read_text(encoding="utf-8"))
                targets = [AttackedTarget.model_validate(item) for item in raw_targets]
            except (OSError, ValueError) as e:
                raise StageError("eval", f"unreadable targets file: {e}", file=targets_path) from e
        suppression = {}
        for name, adv in attacks.items():
            results = target_suppression(origin, adv, targets, threshold, config.evaluation.suppression_iou)
            suppression[name] = [r.model_dump(mode="json") | {"suppressed": r.suppressed} for r in results]
        exporter.write_json("suppression.json", suppression)
    exporter.write_text("report.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(config: AttackConfig, probes: int, tolerance: float) -> int:
    classifier = obtain_classifier(config)
    rng = np.random.default_rng(config.seed)
    with stage_context("gradcheck"):
        toy = gradient_check(classifier, probes, rng=rng, tolerance=tolerance)
        control = LinearSoftmaxClassifier.random(rng, input_shape=classifier.input_shape)
        linear = gradient_check(control, probes, rng=rng, tolerance=LINEAR_CONTROL_TOLERANCE)
    summary = {
        "toy": toy.model_dump(mode="json", exclude={"details"}),
        "linear_control": linear.model_dump(mode="json", exclude={"details"}),
    }
    print(canonical_json(summary), end="")
    return EXIT_OK if toy.passed and linear.passed else EXIT_STAGE_ERROR


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"detblind: error: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR
    configure_logging(args.log_level)

    try:
        config = load_config(args.config, collect_overrides(args))
        if args.log_level is None:
            logging.getLogger().setLevel(config.log_level)
        logger.info(f"detblind {__version__}: {args.command} (seed {config.seed})")
        if args.command == "attack":
            config.require_attack_inputs()
            return cmd_attack(config)
        if args.command == "reconstruct":
            return cmd_reconstruct(config, args.label)
        if args.command == "segmask":
            return cmd_segmask(config)
        if args.command == "eval":
            return cmd_eval(config, args.origin, args.adv, args.gt, args.targets)
        return cmd_gradcheck(config, args.probes, args.tolerance)
    except ConfigError as e:
        print(f"detblind: error: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR
    except StageError as e:
        return _report_stage_error(e)
    except DetblindError as e:
        return _report_stage_error(StageError(args.command, str(e)))


if __name__ == "__main__":
    sys.exit(main())
