"""End-to-end attack runs: locate, replace, reconstruct, perturb.

Each image gets its own bundle directory. Stages write their artifacts as
soon as they finish, so a failing stage leaves the earlier artifacts plus a
``failure.json`` holding the error JSON.
"""

import concurrent.futures
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from . import __version__
from .attack.perturbation import Perturbation, compose_adversarial, encode_perturbation, extract_perturbation, perturbation_report
from .attack.replacement import ReplacementPlan, apply_replacement, plan_replacement
from .attack.stripes import build_stripe_masks, whole_object_masks
from .common.errors import DomainError, ErrorCollector, StageError, ValidationError, stage_context
from .common.identifiers import canonical_json, generate_run_id, hash_path
from .config import AttackConfig
from .imaging.buffer import ImageBuffer
from .imaging.interpolation import resize_bilinear
from .imaging.io import encode_class_map_pgm, load_image
from .inversion.classifier import ClassifierInterface, ToyClassifier
from .inversion.reconstruction import ReconstructionState, reconstruct
from .inversion.training import build_toy_classifier
from .segmentation.coco import CocoDocument, load_coco_document, polygon_index
from .segmentation.masks import (
    SegmentationMask,
    TargetRegion,
    build_mask_from_annotations,
    decode_painted_mask,
    locate_instances,
    locate_target,
    paint_mask,
)
from .visualizations.exporters import ArtifactExporter
from .visualizations.renderers import render_difference_heat

logger = logging.getLogger(__name__)

ADVERSARIAL_FILE = "adversarial.png"
PLAN_FILE = "replacement_plan.json"
TRAJECTORY_FILE = "reconstruction.csv"
SAMPLE_FILE = "reconstruction.png"
HEAT_FILE = "difference_heat.png"
RUN_MANIFEST_FILE = "manifest.json"
FAILURE_FILE = "failure.json"

# Fields that change where and how a run executes but not what it produces.
RUNTIME_FIELDS = {"output_dir", "workers", "log_level"}


def reproducible_config(config: AttackConfig) -> Dict[str, Any]:
    dump = config.effective_dump()
    for key in RUNTIME_FIELDS:
        dump.pop(key, None)
    return dump


def ensure_inputs_exist(paths: Sequence[Optional[Path]]) -> None:
    """Fail before any output is written when an input file is missing."""
    for path in paths:
        if path is not None and not Path(path).exists():
            raise StageError("load", "input file not found", file=path)


def obtain_classifier(config: AttackConfig) -> ToyClassifier:
    """Load saved weights when configured, otherwise train from the run seed."""
    settings = config.classifier
    if settings.weights_dir is not None:
        weights_dir = Path(settings.weights_dir)
        with stage_context("classifier", file=weights_dir):
            files = {p.name: p.read_bytes() for p in weights_dir.iterdir() if p.is_file()}
            classifier = ToyClassifier.from_files(files)
        logger.info(f"Loaded classifier weights from {weights_dir}")
        return classifier
    with stage_context("classifier"):
        classifier, report = build_toy_classifier(
            config.seed,
            samples_per_class=settings.samples_per_class,
            epochs=settings.epochs,
            logit_scale=settings.logit_scale,
            inversion=config.inversion,
        )
    logger.info(
        f"Trained classifier from seed {config.seed}: accuracy {report.train_accuracy:.3f}, "
        f"held-out {report.heldout_accuracy:.3f}, logit scale {report.logit_scale:.4g}"
    )
    return classifier


def load_segmentation(
    config: AttackConfig, image_path: Path, image: ImageBuffer, document: Optional[CocoDocument] = None
) -> SegmentationMask:
    """Class-id map for one image from COCO polygons or a painted mask."""
    if config.annotations is not None:
        if document is None:
            document = load_coco_document(Path(config.annotations).read_bytes())
        entry = document.image_by_file_name(image_path.name)
        if entry is None:
            raise ValidationError("No annotation image entry for file", offending=[image_path.name])
        if (entry.width, entry.height) != (image.width, image.height):
            raise DomainError(
                f"Annotated size {entry.width}x{entry.height} differs from image {image.width}x{image.height}"
            )
        annotations = polygon_index(document, on_rle=config.segmentation.on_rle).get(entry.id, [])
        return build_mask_from_annotations(entry, annotations, palette=config.segmentation.resolved_palette())

    mask_path = Path(config.mask)  # type: ignore[arg-type]
    if mask_path.is_dir():
        mask_path = mask_path / f"{image_path.stem}.png"
    mask = decode_painted_mask(load_image(mask_path), palette=config.segmentation.resolved_palette())
    if (mask.width, mask.height) != (image.width, image.height):
        raise DomainError(f"Mask size {mask.width}x{mask.height} differs from image {image.width}x{image.height}")
    return mask


def locate_regions(mask: SegmentationMask, labels: Sequence[int], separate_instances: bool = False) -> List[TargetRegion]:
    regions: List[TargetRegion] = []
    for label in labels:
        if separate_instances:
            regions.extend(locate_instances(mask, label))
        else:
            regions.append(locate_target(mask, label))
    return regions


def fit_sample(sample: ImageBuffer, width: int, height: int, channels: int) -> ImageBuffer:
    """Resize a reconstructed sample to the image dims and channel count."""
    resized = resize_bilinear(sample, width, height)
    data = resized.data
    if data.shape[2] != channels:
        data = data.mean(axis=2, keepdims=True) if channels == 1 else np.repeat(data, channels, axis=2)
    return ImageBuffer.from_array(data)


def build_perturbation(config: AttackConfig, sample: ImageBuffer, baseline: ImageBuffer, anchor: TargetRegion) -> Perturbation:
    settings = config.perturb
    if settings.extract_mode == "whole":
        masks = whole_object_masks(baseline.dims)
    else:
        masks = build_stripe_masks(
            baseline.dims,
            n=settings.n,
            m=settings.m,
            stride=settings.stride,
            horizontal_stride=settings.horizontal_stride,
        )
    return extract_perturbation(sample, baseline, masks, eta=settings.eta, mode=settings.extract_mode, anchor=anchor)


class ImageResult(BaseModel):
    image: str
    output_dir: str
    ok: bool
    regions: List[Dict[str, Any]] = Field(default_factory=list)
    final_prob: Optional[float] = None
    l2: Optional[float] = None
    changed_pixels: Optional[int] = None
    files: Dict[str, str] = Field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None


class AttackPipeline:
    """Runs the attack for one image at a time with a fixed classifier."""

    def __init__(self, config: AttackConfig, classifier: ClassifierInterface):
        self.config = config
        self.classifier = classifier
        self.run_id = generate_run_id(reproducible_config(config), config.seed)
        self._document: Optional[CocoDocument] = None

    def _coco_document(self) -> Optional[CocoDocument]:
        if self.config.annotations is not None and self._document is None:
            with stage_context("segment", file=self.config.annotations):
                self._document = load_coco_document(Path(self.config.annotations).read_bytes())
        return self._document

    def run_image(self, image_path: Path, output_dir: Path) -> ImageResult:
        """Run every stage for one image; stage errors become a failure manifest."""
        exporter = ArtifactExporter(output_dir)
        result = ImageResult(image=image_path.name, output_dir=str(output_dir), ok=False)
        try:
            self._run_stages(image_path, exporter, result)
            result.ok = True
        except StageError as e:
            result.error = e.to_dict()
            exporter.write_json(FAILURE_FILE, e.to_dict())
            raise
        finally:
            result.files = exporter.hashes()
        return result

    def _run_stages(self, image_path: Path, exporter: ArtifactExporter, result: ImageResult) -> None:
        config = self.config
        with stage_context("load", file=image_path):
            image = load_image(image_path)

        document = self._coco_document()
        with stage_context("segment", file=config.annotations or config.mask):
            mask = load_segmentation(config, image_path, image, document)

        with stage_context("locate", file=image_path):
            regions = locate_regions(mask, config.target_labels, config.segmentation.separate_instances)
        result.regions = [region.to_dict() for region in regions]

        with stage_context("replace", file=image_path):
            plans: List[ReplacementPlan] = [
                plan_replacement(image, region, step=config.replace.step, epsilon=config.replace.epsilon)
                for region in regions
            ]
            replaced = apply_replacement(image, plans)
        exporter.write_json(PLAN_FILE, {"plans": [plan.model_dump(mode="json") for plan in plans]})

        with stage_context("reconstruct"):
            sample, state = reconstruct(self.classifier, int(config.reconstruction_label), config.inversion)  # type: ignore[arg-type]
        exporter.write_text(TRAJECTORY_FILE, state.to_csv())
        result.final_prob = state.final_prob

        with stage_context("perturb", file=image_path):
            fitted = fit_sample(sample, image.width, image.height, image.channels)
            perturbation = build_perturbation(config, fitted, replaced, regions[0])
            adversarial = compose_adversarial(replaced, perturbation, regions, config.perturb.offset)
            report = perturbation_report(image, adversarial)
        exporter.write_files(encode_perturbation(perturbation, config.perturb.offset))
        exporter.write_image(ADVERSARIAL_FILE, adversarial)
        exporter.write_image(HEAT_FILE, render_difference_heat(image, adversarial))
        result.l2 = report.l2
        result.changed_pixels = report.changed_pixels

        manifest = {
            "run_id": self.run_id,
            "tool_version": __version__,
            "seed": config.seed,
            "config": reproducible_config(config),
            "image": {"name": image_path.name, "sha256": hash_path(image_path)},
            "regions": result.regions,
            "reconstruction": {"iterations": state.iteration, "final_prob": state.final_prob},
            "perturbation": report.model_dump(mode="json"),
            "artifacts": exporter.hashes(),
        }
        exporter.write_json(RUN_MANIFEST_FILE, manifest)
        logger.info(
            f"{image_path.name}: {len(regions)} region(s), p = {state.final_prob:.3f}, "
            f"||X_adv - X||_2 = {report.l2:.4f}, {report.changed_pixels} pixels changed"
        )


def image_output_dir(config: AttackConfig, image_path: Path) -> Path:
    if len(config.images) == 1:
        return Path(config.output_dir)
    return Path(config.output_dir) / Path(image_path).stem


def _attack_worker(args: Tuple[AttackConfig, ToyClassifier, Path]) -> ImageResult:
    config, classifier, image_path = args
    pipeline = AttackPipeline(config, classifier)
    output_dir = image_output_dir(config, image_path)
    try:
        return pipeline.run_image(image_path, output_dir)
    except StageError as e:
        return ImageResult(image=image_path.name, output_dir=str(output_dir), ok=False, error=e.to_dict())


def run_attack(config: AttackConfig, classifier: Optional[ToyClassifier] = None) -> Tuple[List[ImageResult], ErrorCollector]:
    """Attack every configured image; images run in a process pool when ``workers > 1``."""
    config.require_attack_inputs()
    ensure_inputs_exist([*config.images, config.annotations, config.mask])
    classifier = classifier if classifier is not None else obtain_classifier(config)

    jobs = [(config, classifier, Path(path)) for path in config.images]
    if config.workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(config.workers, len(jobs))) as pool:
            results = list(pool.map(_attack_worker, jobs))
    else:
        results = [_attack_worker(job) for job in jobs]

    collector = ErrorCollector()
    for result in results:
        if result.ok:
            collector.add_success()
        else:
            error = StageError(**result.error) if result.error else StageError("attack", "unknown failure")
            collector.add_error(result.image, error, {"output_dir": result.output_dir})
    collector.log_summary("attack")
    return results, collector


def run_reconstruction(
    config: AttackConfig, label: int, classifier: Optional[ToyClassifier] = None
) -> Tuple[ImageBuffer, ReconstructionState]:
    """Reconstruction stage alone: trajectory CSV, sample image and a small manifest."""
    classifier = classifier if classifier is not None else obtain_classifier(config)
    exporter = ArtifactExporter(config.output_dir)
    with stage_context("reconstruct"):
        sample, state = reconstruct(classifier, label, config.inversion)
    exporter.write_text(TRAJECTORY_FILE, state.to_csv())
    exporter.write_image(SAMPLE_FILE, sample)
    exporter.write_json(
        RUN_MANIFEST_FILE,
        {
            "run_id": generate_run_id(reproducible_config(config), config.seed),
            "tool_version": __version__,
            "label": label,
            "iterations": state.iteration,
            "final_prob": state.final_prob,
            "config": reproducible_config(config),
            "artifacts": exporter.hashes(),
        },
    )
    return sample, state


def run_segmentation(config: AttackConfig) -> Dict[str, SegmentationMask]:
    """Segmentation stage alone: a painted mask and a class-id PGM per image."""
    if not config.images or (config.annotations is None and config.mask is None):
        raise StageError("segment", "segmask needs images and an annotation source")
    ensure_inputs_exist([*config.images, config.annotations, config.mask])
    exporter = ArtifactExporter(config.output_dir)
    document = None
    if config.annotations is not None:
        with stage_context("segment", file=config.annotations):
            document = load_coco_document(Path(config.annotations).read_bytes())

    masks: Dict[str, SegmentationMask] = {}
    for path in map(Path, config.images):
        with stage_context("load", file=path):
            image = load_image(path)
        with stage_context("segment", file=config.annotations or config.mask):
            mask = load_segmentation(config, path, image, document)
            exporter.write_image(f"{path.stem}_mask.png", paint_mask(mask))
            exporter.write_bytes(f"{path.stem}_classes.pgm", encode_class_map_pgm(mask.class_ids))
        masks[path.name] = mask
        logger.info(f"{path.name}: labels {mask.labels()}")
    return masks


def render_manifest(results: Sequence[ImageResult]) -> str:
    return canonical_json([result.model_dump(mode="json") for result in results])
