"""Finite-difference check of a classifier's input gradient."""

import logging
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..common.errors import DomainError
from .classifier import ClassifierInterface
from .reconstruction import inversion_loss

logger = logging.getLogger(__name__)

FD_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-3
_DENOMINATOR_FLOOR = 1e-12
_MAX_RESAMPLES = 50


class GradientProbe(BaseModel):
    row: int
    col: int
    channel: int
    target: int
    analytic: float
    numeric: float
    relative_error: float


class GradientCheckReport(BaseModel):
    probes: int
    tolerance: float
    max_relative_error: float = Field(..., ge=0.0)
    passed: bool
    worst: Optional[GradientProbe] = None
    details: List[GradientProbe] = Field(default_factory=list)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), _DENOMINATOR_FLOOR)


def gradient_check(
    cls: ClassifierInterface,
    probe_count: int,
    rng: Optional[np.random.Generator] = None,
    h: float = FD_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    targets: Literal["predicted", "random"] = "predicted",
) -> GradientCheckReport:
    """Compare ``input_gradient`` with central differences of ``inversion_loss(forward(.))``.

    Each probe draws a uniform random image, pixel and channel. The target is
    the predicted class unless ``targets="random"``; a confidently rejected
    target has a loss of nearly 1 whose differences are pure rounding.
    Classifiers exposing ``smooth_at`` get probes redrawn where the step would
    straddle a non-differentiable point.
    """
    if probe_count < 1:
        raise DomainError(f"probe_count must be at least 1, got {probe_count}")
    rng = rng if rng is not None else np.random.default_rng(0)
    height, width, channels = cls.input_shape
    smooth_at = getattr(cls, "smooth_at", None)

    details: List[GradientProbe] = []
    for _ in range(probe_count):
        for _attempt in range(_MAX_RESAMPLES):
            image = rng.uniform(0.0, 1.0, size=(height, width, channels))
            row = int(rng.integers(height))
            col = int(rng.integers(width))
            if smooth_at is None or smooth_at(image, row, col, h):
                break
        channel = int(rng.integers(channels))
        if targets == "random":
            target = int(rng.integers(cls.num_classes))
        else:
            target = int(np.argmax(cls.forward(image)))

        analytic = float(np.asarray(cls.input_gradient(image, target))[row, col, channel])
        plus = image.copy()
        minus = image.copy()
        plus[row, col, channel] += h
        minus[row, col, channel] -= h
        numeric = (inversion_loss(cls.forward(plus), target) - inversion_loss(cls.forward(minus), target)) / (2.0 * h)
        details.append(
            GradientProbe(
                row=row,
                col=col,
                channel=channel,
                target=target,
                analytic=analytic,
                numeric=numeric,
                relative_error=relative_error(analytic, numeric),
            )
        )

    worst = max(details, key=lambda probe: probe.relative_error)
    report = GradientCheckReport(
        probes=probe_count,
        tolerance=tolerance,
        max_relative_error=worst.relative_error,
        passed=worst.relative_error <= tolerance,
        worst=worst,
        details=details,
    )
    log = logger.info if report.passed else logger.warning
    log(f"Gradient check over {probe_count} probes: max relative error {report.max_relative_error:.3e}")
    return report
