"""Seeded construction of the toy classifier.

Training fixes the weights at unit logit scale. The logit scale is then
chosen by running the inversion loop itself: the smallest candidate at
which every class reaches the target probability wins. Too small a scale
leaves the decayed sample without enough pull; too large a one lets the
first momentum steps jump into another class, where the gradient of
``1 - p`` vanishes.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..common.errors import DomainError
from .classifier import ScaleTrial, ToyClassifier, TrainingReport
from .dataset import synthetic_shapes_dataset
from .reconstruction import InversionConfig, reconstruct

logger = logging.getLogger(__name__)

ACCURACY_GATE = 0.95
HELDOUT_PER_CLASS = 100
# 1 .. 4096 in steps of sqrt(2)
LOGIT_SCALES: Tuple[float, ...] = tuple(float(2.0 ** (k / 2.0)) for k in range(25))


def calibrate_logit_scale(
    classifier: ToyClassifier,
    cfg: Optional[InversionConfig] = None,
    scales: Sequence[float] = LOGIT_SCALES,
) -> Tuple[float, Sequence[ScaleTrial]]:
    """Smallest scale whose reconstructions reach ``cfg.target_prob`` for every class.

    Each candidate stops at its first failing class. Without a passing
    candidate the one with the best worst-class probability is used. The
    classifier is left at the chosen scale.
    """
    cfg = cfg or InversionConfig()
    if not scales:
        raise DomainError("No candidate logit scales given")
    trials = []
    for scale in sorted(float(s) for s in scales):
        classifier.logit_scale = scale
        trial = ScaleTrial(logit_scale=scale)
        for target in range(classifier.num_classes):
            _, state = reconstruct(classifier, target, cfg)
            trial.final_probs.append(float(state.final_prob))
            trial.iterations.append(state.iteration)
            if state.final_prob < cfg.target_prob:
                break
        else:
            trial.passed = True
        trials.append(trial)
        logger.debug(f"Logit scale {scale:.4g}: probabilities {trial.final_probs}")
        if trial.passed:
            break

    chosen = next((trial for trial in trials if trial.passed), None)
    if chosen is None:
        chosen = max(trials, key=lambda trial: min(trial.final_probs))
        logger.warning(
            f"No logit scale reaches p >= {cfg.target_prob} for every class; "
            f"using {chosen.logit_scale:.4g} (worst class p = {min(chosen.final_probs):.3f})"
        )
    classifier.logit_scale = chosen.logit_scale
    logger.info(f"Calibrated logit scale {chosen.logit_scale:.4g} after {len(trials)} candidate(s)")
    return chosen.logit_scale, trials


def build_toy_classifier(
    seed: int,
    samples_per_class: int = 150,
    epochs: int = 60,
    logit_scale: Optional[float] = None,
    inversion: Optional[InversionConfig] = None,
) -> Tuple[ToyClassifier, TrainingReport]:
    """Seeded dataset, training, held-out accuracy and logit scale in one call.

    ``logit_scale=None`` calibrates the scale against ``inversion``.
    """
    rng = np.random.default_rng(seed)
    images, labels = synthetic_shapes_dataset(samples_per_class, rng=rng)
    classifier = ToyClassifier.initialize(rng)
    report = classifier.train(images, labels, rng=rng, epochs=epochs)

    heldout_images, heldout_labels = synthetic_shapes_dataset(HELDOUT_PER_CLASS, rng=rng)
    report.heldout_accuracy = classifier.accuracy(heldout_images, heldout_labels)
    if report.heldout_accuracy < ACCURACY_GATE:
        logger.warning(f"Held-out accuracy {report.heldout_accuracy:.3f} is below {ACCURACY_GATE}")

    if logit_scale is None:
        report.logit_scale, trials = calibrate_logit_scale(classifier, inversion)
        report.scale_trials = list(trials)
    else:
        if logit_scale <= 0:
            raise DomainError(f"logit_scale must be positive, got {logit_scale}")
        classifier.logit_scale = report.logit_scale = float(logit_scale)
    return classifier, report
