"""
detblind - black-box adversarial examples for object detectors

Builds adversarial images from a segmentation mask without querying the
detector: neighbor-background pixel replacement on the target object, a
model-inversion sample from a small classifier, and stripe-masked
perturbations under an L2 budget. Detector output dumps are then compared
with label-churn counts and COCO-style AP/AR.
"""

__version__ = "0.1.0"

from .attack import (
    Perturbation,
    ReplacementPlan,
    StripeMask,
    apply_replacement,
    build_stripe_masks,
    compose_adversarial,
    extract_perturbation,
    plan_replacement,
)
from .evaluation import DetectionSet, DiffReport, EvalReport, compute_map, diff_labels, parse_detections
from .imaging import ImageBuffer, load_image, save_image
from .inversion import InversionConfig, ToyClassifier, build_toy_classifier, reconstruct
from .segmentation import SegmentationMask, TargetRegion, locate_target, parse_coco_annotations

__all__ = [
    # Imaging
    "ImageBuffer",
    "load_image",
    "save_image",

    # Segmentation
    "SegmentationMask",
    "TargetRegion",
    "locate_target",
    "parse_coco_annotations",

    # Attack
    "ReplacementPlan",
    "plan_replacement",
    "apply_replacement",
    "StripeMask",
    "build_stripe_masks",
    "Perturbation",
    "extract_perturbation",
    "compose_adversarial",

    # Inversion
    "InversionConfig",
    "ToyClassifier",
    "build_toy_classifier",
    "reconstruct",

    # Evaluation
    "DetectionSet",
    "DiffReport",
    "EvalReport",
    "parse_detections",
    "diff_labels",
    "compute_map",
]
