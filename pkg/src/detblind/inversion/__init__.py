"""Model inversion: classifiers, synthetic data, reconstruction and gradient checks."""

from .classifier import (
    ClassifierInterface,
    LinearSoftmaxClassifier,
    ScaleTrial,
    ToyClassifier,
    TrainingReport,
    oriented_edge_bank,
    softmax,
)
from .dataset import CLASS_NAMES, synthetic_shapes_dataset
from .gradcheck import GradientCheckReport, GradientProbe, gradient_check, relative_error
from .reconstruction import (
    InversionConfig,
    ReconstructionState,
    inversion_loss,
    momentum_update,
    reconstruct,
    total_variation,
)
from .training import ACCURACY_GATE, LOGIT_SCALES, build_toy_classifier, calibrate_logit_scale

__all__ = [
    # Classifiers
    "ClassifierInterface",
    "ToyClassifier",
    "LinearSoftmaxClassifier",
    "TrainingReport",
    "ScaleTrial",
    "oriented_edge_bank",
    "softmax",

    # Training
    "build_toy_classifier",
    "calibrate_logit_scale",
    "LOGIT_SCALES",
    "ACCURACY_GATE",

    # Data
    "CLASS_NAMES",
    "synthetic_shapes_dataset",

    # Reconstruction
    "InversionConfig",
    "ReconstructionState",
    "inversion_loss",
    "momentum_update",
    "total_variation",
    "reconstruct",

    # Gradient checks
    "GradientCheckReport",
    "GradientProbe",
    "gradient_check",
    "relative_error",
]
