"""Label-fixed sample reconstruction by model inversion.

Starting from an all-zero sample ``S`` and momentum ``V``, each iteration
takes the input gradient of ``1 - p[target]``, folds it into ``V`` and moves
``S`` against ``V`` with a decay towards zero, clamping to [0, 1]:

    V <- lambda1 * grad + lambda2 * V
    S <- clamp((1 - alpha) * S - beta * V)

The ``literal`` update rule instead adds the scalar ``beta * TV(V)`` to every
pixel of the decayed sample.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..common.errors import DomainError, NumericError
from ..imaging.buffer import ImageBuffer
from .classifier import ClassifierInterface

logger = logging.getLogger(__name__)

UpdateRule = Literal["momentum", "literal"]
TRAJECTORY_HEADER = ("iteration", "loss", "target_prob", "tv")
SIMPLEX_TOLERANCE = 1e-6


class InversionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda1: float = Field(0.5, ge=0.0, le=1.0)
    lambda2: float = Field(0.5, ge=0.0, le=1.0)
    alpha: float = Field(0.1, ge=0.0, lt=1.0)
    beta: float = Field(0.01, gt=0.0)
    max_iters: int = Field(500, ge=0)
    target_prob: float = Field(0.9, gt=0.0, le=1.0)
    update_rule: UpdateRule = "momentum"

    @model_validator(mode="after")
    def _check_lambdas(self) -> "InversionConfig":
        if abs(self.lambda1 + self.lambda2 - 1.0) > 1e-9:
            raise ValueError(f"lambda1 + lambda2 must equal 1, got {self.lambda1} + {self.lambda2}")
        return self


@dataclass
class ReconstructionState:
    """Sample, momentum buffer and per-iteration trajectory."""

    sample: ImageBuffer
    momentum: np.ndarray
    iteration: int = 0
    loss_history: List[float] = field(default_factory=list)
    prob_history: List[float] = field(default_factory=list)
    tv_history: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.momentum.shape != self.sample.shape:
            raise DomainError(f"Momentum shape {self.momentum.shape} differs from sample shape {self.sample.shape}")

    @classmethod
    def initial(cls, shape: Tuple[int, int, int]) -> "ReconstructionState":
        return cls(sample=ImageBuffer(np.zeros(shape)), momentum=np.zeros(shape))

    def record(self, loss: float, target_prob: float) -> None:
        self.loss_history.append(float(loss))
        self.prob_history.append(float(target_prob))
        self.tv_history.append(total_variation(self.sample.data))

    def copy(self) -> "ReconstructionState":
        return ReconstructionState(
            sample=self.sample,
            momentum=self.momentum.copy(),
            iteration=self.iteration,
            loss_history=list(self.loss_history),
            prob_history=list(self.prob_history),
            tv_history=list(self.tv_history),
        )

    @property
    def final_prob(self) -> Optional[float]:
        return self.prob_history[-1] if self.prob_history else None

    def to_csv(self) -> str:
        """Trajectory rows ``iteration,loss,target_prob,tv`` (iteration 0 first)."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for i, (loss, prob, tv) in enumerate(zip(self.loss_history, self.prob_history, self.tv_history)):
            writer.writerow([i, repr(loss), repr(prob), repr(tv)])
        return buffer.getvalue()


def inversion_loss(probs: np.ndarray, target: int) -> float:
    """``1 - probs[target]`` for a probability vector.

    On the simplex that equals the mass of the other classes, which is what
    gets summed so saturated probabilities keep their precision.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise DomainError(f"Expected a probability vector, got shape {probs.shape}")
    if not (0 <= target < probs.shape[0]):
        raise DomainError(f"Target class {target} outside [0, {probs.shape[0]})")
    if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or abs(probs.sum() - 1.0) > SIMPLEX_TOLERANCE:
        raise DomainError(f"Probabilities must be non-negative and sum to 1, got {probs.tolist()}")
    return float(np.delete(probs, target).sum())


def momentum_update(momentum: np.ndarray, grad: np.ndarray, cfg: InversionConfig) -> np.ndarray:
    momentum = np.asarray(momentum, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if momentum.shape != grad.shape:
        raise DomainError(f"Momentum shape {momentum.shape} differs from gradient shape {grad.shape}")
    return cfg.lambda1 * grad + cfg.lambda2 * momentum


def total_variation(grid: np.ndarray) -> float:
    """Anisotropic TV: absolute down and right neighbor differences, summed over channels."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    if grid.ndim != 3:
        raise DomainError(f"TV expects an (h, w) or (h, w, c) grid, got {grid.shape}")
    down = np.abs(np.diff(grid, axis=0)).sum()
    right = np.abs(np.diff(grid, axis=1)).sum()
    return float(down + right)


def _step(state: ReconstructionState, grad: np.ndarray, cfg: InversionConfig) -> ReconstructionState:
    momentum = momentum_update(state.momentum, grad, cfg)
    decayed = (1.0 - cfg.alpha) * state.sample.data
    if cfg.update_rule == "momentum":
        raw = decayed - cfg.beta * momentum
    else:
        raw = decayed + cfg.beta * total_variation(momentum)
    if not np.all(np.isfinite(raw)):
        raise NumericError(f"Non-finite sample at iteration {state.iteration + 1}", state=state)
    return ReconstructionState(
        sample=ImageBuffer(np.clip(raw, 0.0, 1.0)),
        momentum=momentum,
        iteration=state.iteration + 1,
        loss_history=state.loss_history,
        prob_history=state.prob_history,
        tv_history=state.tv_history,
    )


def reconstruct(
    cls: ClassifierInterface, target: int, cfg: Optional[InversionConfig] = None
) -> Tuple[ImageBuffer, ReconstructionState]:
    """Ascend ``p[target]`` from the zero image until ``target_prob`` or ``max_iters``.

    Every visited state is recorded, iteration 0 included. A non-finite
    gradient raises ``NumericError`` carrying the last finite state.
    """
    cfg = cfg or InversionConfig()
    if not (0 <= target < cls.num_classes):
        raise DomainError(f"Target class {target} outside [0, {cls.num_classes})")
    state = ReconstructionState.initial(cls.input_shape)

    while True:
        probs = cls.forward(state.sample)
        prob = float(probs[target])
        state.record(inversion_loss(probs, target), prob)
        logger.debug(f"iter {state.iteration}: p[{target}] = {prob:.4f}")
        if prob >= cfg.target_prob or state.iteration >= cfg.max_iters:
            break
        grad = np.asarray(cls.input_gradient(state.sample, target), dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient at iteration {state.iteration}", state=state.copy())
        state = _step(state, grad, cfg)

    logger.info(
        f"Reconstruction for class {target}: {state.iteration} iterations, "
        f"p = {state.prob_history[-1]:.4f}, loss = {state.loss_history[-1]:.4f}"
    )
    return state.sample, state
