"""Background replacement, stripe perturbations and adversarial composition."""

from .perturbation import (
    DEFAULT_ETA,
    Perturbation,
    PerturbationManifest,
    PerturbationReport,
    application_mask,
    application_window,
    compose_adversarial,
    decode_perturbation,
    encode_perturbation,
    extract_perturbation,
    perturbation_report,
)
from .replacement import (
    DEFAULT_EPSILON,
    DEFAULT_STEP,
    ReplacementPlan,
    apply_replacement,
    chebyshev_distance_to_background,
    plan_replacement,
)
from .stripes import StripeMask, build_stripe_masks, union_active, whole_object_masks

__all__ = [
    # Replacement
    "ReplacementPlan",
    "plan_replacement",
    "apply_replacement",
    "chebyshev_distance_to_background",
    "DEFAULT_STEP",
    "DEFAULT_EPSILON",

    # Stripes
    "StripeMask",
    "build_stripe_masks",
    "whole_object_masks",
    "union_active",

    # Perturbation
    "Perturbation",
    "PerturbationReport",
    "PerturbationManifest",
    "extract_perturbation",
    "compose_adversarial",
    "application_window",
    "application_mask",
    "perturbation_report",
    "encode_perturbation",
    "decode_perturbation",
    "DEFAULT_ETA",
]
