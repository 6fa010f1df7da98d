"""Classifiers exposing probabilities and input gradients.

``ToyClassifier`` is a single conv layer (3x3 filters, valid padding) with
ReLU, global average pooling and a dense layer, all bias-free. Being
bias-free it is positively homogeneous: the all-zero image scores exactly
uniform, and rescaling an input rescales its logits.
"""

import json
import logging
import math
from typing import Dict, List, Optional, Protocol, Tuple, Union, runtime_checkable

import numpy as np
from pydantic import BaseModel, Field

from ..common.errors import DomainError, ValidationError
from ..imaging.buffer import ImageBuffer
from ..imaging.convolution import conv2d_bank, conv2d_bank_input_grad, conv2d_bank_kernel_grad

logger = logging.getLogger(__name__)

ImageLike = Union[ImageBuffer, np.ndarray]
Shape = Tuple[int, int, int]

INPUT_SHAPE: Shape = (16, 16, 3)
KERNEL_SIZE = 3
NUM_FILTERS = 8
NUM_CLASSES = 3
HEAD_STEPS = 200
HEAD_LEARNING_RATE = 1.0
HEAD_L2 = 1e-3
_EIGEN_FLOOR = 1e-8

WEIGHTS_FILE = "classifier.bin"
MANIFEST_FILE = "classifier.json"


@runtime_checkable
class ClassifierInterface(Protocol):
    """Probabilities over ``num_classes`` and the gradient of ``1 - p[target]``."""

    num_classes: int
    input_shape: Shape

    def forward(self, image: ImageLike) -> np.ndarray: ...

    def input_gradient(self, image: ImageLike, target: int) -> np.ndarray: ...


def _as_hwc(image: ImageLike, shape: Shape) -> np.ndarray:
    data = image.data if isinstance(image, ImageBuffer) else np.asarray(image, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.shape != shape:
        raise DomainError(f"Classifier expects input shape {shape}, got {data.shape}")
    return data


def _check_target(target: int, num_classes: int) -> None:
    if not (0 <= int(target) < num_classes):
        raise DomainError(f"Target class {target} outside [0, {num_classes})")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=-1, keepdims=True)


def loss_logit_gradient(probs: np.ndarray, target: int) -> np.ndarray:
    """``d(1 - p[target]) / d logits``.

    The target entry is written with the mass of the other classes instead of
    ``1 - p[target]`` so saturated probabilities keep their precision.
    """
    p_t = probs[target]
    grad = p_t * probs
    grad[target] = -p_t * (probs.sum() - p_t)
    return grad


class LinearSoftmaxClassifier:
    """``softmax(W . x)`` with a closed-form input gradient."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 4:
            raise DomainError(f"Weights must be (classes, h, w, c), got {weights.shape}")
        self.weights = weights
        self.num_classes = int(weights.shape[0])
        self.input_shape: Shape = tuple(int(v) for v in weights.shape[1:])  # type: ignore[assignment]

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        input_shape: Shape = INPUT_SHAPE,
        num_classes: int = NUM_CLASSES,
        scale: float = 0.05,
    ) -> "LinearSoftmaxClassifier":
        return cls(rng.normal(0.0, scale, size=(num_classes,) + tuple(input_shape)))

    def logits(self, image: ImageLike) -> np.ndarray:
        data = _as_hwc(image, self.input_shape)
        return np.tensordot(self.weights, data, axes=3)

    def forward(self, image: ImageLike) -> np.ndarray:
        return softmax(self.logits(image))

    def input_gradient(self, image: ImageLike, target: int) -> np.ndarray:
        _check_target(target, self.num_classes)
        d_logits = loss_logit_gradient(self.forward(image), target)
        return np.tensordot(d_logits, self.weights, axes=1)


class ScaleTrial(BaseModel):
    """Inversion outcome at one candidate logit scale."""

    logit_scale: float
    final_probs: List[float] = Field(default_factory=list)
    iterations: List[int] = Field(default_factory=list)
    passed: bool = False


class TrainingReport(BaseModel):
    epochs: int
    learning_rate: float
    batch_size: int
    head_steps: int
    epoch_losses: List[float] = Field(default_factory=list)
    epoch_accuracies: List[float] = Field(default_factory=list)
    best_epoch: int = 0
    train_accuracy: float = 0.0
    heldout_accuracy: Optional[float] = None
    logit_scale: float = 1.0
    scale_trials: List[ScaleTrial] = Field(default_factory=list)


def oriented_edge_bank(channels: int = 3) -> np.ndarray:
    """First-derivative 3x3 filters at 0, 45, 90 and 135 degrees, both polarities.

    Shape ``(8, channels, 3, 3)``; each channel carries ``1/channels`` of the
    2-D filter so gray inputs respond like the plain filter. Every filter sums
    to zero, so flat areas give no response.
    """
    offsets = np.arange(KERNEL_SIZE, dtype=np.float64) - (KERNEL_SIZE - 1) / 2.0
    rows, cols = np.meshgrid(offsets, offsets, indexing="ij")
    filters = []
    for angle in (0.0, 45.0, 90.0, 135.0):
        theta = math.radians(angle)
        ramp = math.cos(theta) * cols + math.sin(theta) * rows
        ramp /= np.abs(ramp).sum()
        filters.extend([ramp, -ramp])
    return np.repeat(np.stack(filters)[:, None, :, :], channels, axis=1) / channels


class ToyClassifier:
    """conv(3x3, valid) -> ReLU -> global average pool -> dense -> softmax."""

    def __init__(
        self,
        kernels: np.ndarray,
        dense: np.ndarray,
        logit_scale: float = 1.0,
        input_shape: Shape = INPUT_SHAPE,
    ):
        kernels = np.asarray(kernels, dtype=np.float64)
        dense = np.asarray(dense, dtype=np.float64)
        if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
            raise DomainError(f"Kernels must be (filters, c, k, k), got {kernels.shape}")
        if kernels.shape[1] != input_shape[2]:
            raise DomainError(f"Kernel channels {kernels.shape[1]} do not match input channels {input_shape[2]}")
        if dense.ndim != 2 or dense.shape[1] != kernels.shape[0]:
            raise DomainError(f"Dense weights {dense.shape} do not match {kernels.shape[0]} filters")
        if logit_scale <= 0:
            raise DomainError(f"logit_scale must be positive, got {logit_scale}")
        self.kernels = kernels
        self.dense = dense
        self.logit_scale = float(logit_scale)
        self.input_shape: Shape = tuple(int(v) for v in input_shape)  # type: ignore[assignment]
        self.num_classes = int(dense.shape[0])

    @classmethod
    def initialize(
        cls,
        rng: np.random.Generator,
        input_shape: Shape = INPUT_SHAPE,
        num_classes: int = NUM_CLASSES,
    ) -> "ToyClassifier":
        kernels = oriented_edge_bank(input_shape[2])
        dense = rng.normal(0.0, 0.1, size=(num_classes, kernels.shape[0]))
        return cls(kernels, dense, logit_scale=1.0, input_shape=input_shape)

    @property
    def kernel_size(self) -> int:
        return int(self.kernels.shape[-1])

    # Forward / backward

    def _forward_batch(self, batch: np.ndarray, scale: float) -> Dict[str, np.ndarray]:
        pre = conv2d_bank(batch, self.kernels)
        act = np.maximum(pre, 0.0)
        pooled = act.mean(axis=(1, 2))
        logits = scale * pooled @ self.dense.T
        return {"pre": pre, "pooled": pooled, "logits": logits}

    def _backward_pool(self, d_pooled: np.ndarray, pre: np.ndarray) -> np.ndarray:
        """``dL/dpre`` from ``dL/dpooled``; ReLU derivative is ``1[u >= 0]``."""
        _, oh, ow, _ = pre.shape
        return (pre >= 0.0) * (d_pooled[:, None, None, :] / float(oh * ow))

    def logits_batch(self, batch: np.ndarray) -> np.ndarray:
        return self._forward_batch(np.asarray(batch, dtype=np.float64), self.logit_scale)["logits"]

    def forward(self, image: ImageLike) -> np.ndarray:
        data = _as_hwc(image, self.input_shape)
        return softmax(self.logits_batch(data[None])[0])

    def input_gradient(self, image: ImageLike, target: int) -> np.ndarray:
        _check_target(target, self.num_classes)
        batch = _as_hwc(image, self.input_shape)[None]
        cache = self._forward_batch(batch, self.logit_scale)
        probs = softmax(cache["logits"][0])
        d_logits = loss_logit_gradient(probs, target)[None]
        d_pooled = self.logit_scale * d_logits @ self.dense
        d_pre = self._backward_pool(d_pooled, cache["pre"])
        return conv2d_bank_input_grad(d_pre, self.kernels, batch.shape)[0]

    def smooth_at(self, image: ImageLike, row: int, col: int, h: float) -> bool:
        """False when nudging pixel ``(row, col)`` by ``h`` may cross a ReLU kink."""
        data = _as_hwc(image, self.input_shape)
        pre = conv2d_bank(data[None], self.kernels)[0]
        k = self.kernel_size
        oh, ow = pre.shape[:2]
        window = pre[max(0, row - k + 1) : min(oh, row + 1), max(0, col - k + 1) : min(ow, col + 1)]
        margin = 2.0 * h * float(np.abs(self.kernels).max())
        return bool(np.all(np.abs(window) > margin))

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits_batch(images), axis=1)

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        labels = np.asarray(labels)
        if labels.size == 0:
            return 0.0
        return float(np.mean(self.predict(images) == labels))

    # Training

    def features(self, images: np.ndarray) -> np.ndarray:
        """Pooled ReLU responses, ``(n, filters)``."""
        return self._forward_batch(np.asarray(images, dtype=np.float64), 1.0)["pooled"]

    def fit_head(
        self,
        images: np.ndarray,
        labels: np.ndarray,
        steps: int = HEAD_STEPS,
        learning_rate: float = HEAD_LEARNING_RATE,
        l2: float = HEAD_L2,
    ) -> float:
        """Refit ``dense`` by full-batch descent on whitened pooled features; returns the final loss.

        Whitening uses the uncentered second moment, a linear map that folds
        back into ``dense`` so the network stays bias-free. The current
        ``dense`` is the starting point.
        """
        pooled = self.features(images)
        labels = np.asarray(labels, dtype=np.intp)
        eigvals, eigvecs = np.linalg.eigh(pooled.T @ pooled / len(pooled))
        top = float(eigvals.max())
        eigvals = np.maximum(eigvals, _EIGEN_FLOOR * top if top > 0 else 1.0)
        whiten = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
        root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T

        white = pooled @ whiten
        weights = self.dense @ root
        onehot = np.eye(self.num_classes)[labels]
        rows = np.arange(len(labels))
        loss = 0.0
        for _ in range(steps):
            probs = softmax(white @ weights.T)
            loss = float(-np.log(np.clip(probs[rows, labels], 1e-300, None)).mean())
            weights -= learning_rate * ((probs - onehot).T @ white / len(white) + l2 * weights)
        self.dense = weights @ whiten
        return loss

    def train(
        self,
        images: np.ndarray,
        labels: np.ndarray,
        rng: np.random.Generator,
        epochs: int = 60,
        learning_rate: float = 0.005,
        batch_size: int = 32,
        head_steps: int = HEAD_STEPS,
    ) -> TrainingReport:
        """Alternate a dense refit with a minibatch SGD pass over the kernels.

        Training runs at unit logit scale. Every epoch starts by refitting the
        dense layer to the current features; the weights with the best
        training accuracy are kept, the starting edge bank included.
        """
        images = np.asarray(images, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.intp)
        if images.ndim != 4 or images.shape[1:] != self.input_shape:
            raise DomainError(f"Training images must be (n,) + {self.input_shape}, got {images.shape}")
        if len(images) != len(labels) or len(images) == 0:
            raise DomainError("Training set is empty or labels do not match images")

        report = TrainingReport(
            epochs=epochs,
            learning_rate=learning_rate,
            batch_size=batch_size,
            head_steps=head_steps,
        )
        onehot = np.eye(self.num_classes)[labels]
        best = (-1.0, self.kernels.copy(), self.dense.copy(), 0)
        for epoch in range(epochs + 1):
            self.fit_head(images, labels, steps=head_steps)
            accuracy = self.accuracy(images, labels)
            report.epoch_accuracies.append(accuracy)
            if accuracy > best[0]:
                best = (accuracy, self.kernels.copy(), self.dense.copy(), epoch)
            if epoch == epochs:
                break

            order = rng.permutation(len(images))
            total = 0.0
            for start in range(0, len(order), batch_size):
                idx = order[start : start + batch_size]
                batch = images[idx]
                cache = self._forward_batch(batch, 1.0)
                probs = softmax(cache["logits"])
                total += float(-np.log(np.clip(probs[np.arange(len(idx)), labels[idx]], 1e-300, None)).sum())

                d_logits = (probs - onehot[idx]) / len(idx)
                d_pre = self._backward_pool(d_logits @ self.dense, cache["pre"])
                self.kernels -= learning_rate * conv2d_bank_kernel_grad(batch, d_pre, self.kernel_size)
            report.epoch_losses.append(total / len(images))
            logger.debug(f"Epoch {epoch + 1}/{epochs}: loss {report.epoch_losses[-1]:.4f}, accuracy {accuracy:.3f}")

        report.train_accuracy, self.kernels, self.dense, report.best_epoch = best
        logger.info(
            f"Trained toy classifier: accuracy {report.train_accuracy:.3f} "
            f"(epoch {report.best_epoch} of {epochs})"
        )
        return report

    # Serialization

    def to_files(self) -> Dict[str, bytes]:
        """Flat little-endian float64 tensor file plus a JSON shape manifest."""
        tensors = [("kernels", self.kernels), ("dense", self.dense)]
        manifest = {
            "dtype": "<f8",
            "input_shape": list(self.input_shape),
            "logit_scale": self.logit_scale,
            "num_classes": self.num_classes,
            "tensors": [],
        }
        blobs = []
        offset = 0
        for name, tensor in tensors:
            manifest["tensors"].append({"name": name, "shape": list(tensor.shape), "offset": offset})  # type: ignore[union-attr]
            blob = np.ascontiguousarray(tensor, dtype="<f8").tobytes()
            blobs.append(blob)
            offset += len(blob)
        return {
            WEIGHTS_FILE: b"".join(blobs),
            MANIFEST_FILE: (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"),
        }

    @classmethod
    def from_files(cls, files: Dict[str, bytes]) -> "ToyClassifier":
        try:
            manifest = json.loads(files[MANIFEST_FILE])
            raw = files[WEIGHTS_FILE]
        except KeyError as e:
            raise ValidationError("Classifier bundle is incomplete", offending=[e.args[0]]) from e
        tensors = {}
        for entry in manifest["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            end = entry["offset"] + 8 * count
            if end > len(raw):
                raise ValidationError("Classifier tensor file is truncated", offending=[entry["name"]])
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=entry["offset"]).reshape(shape)
        return cls(
            tensors["kernels"].copy(),
            tensors["dense"].copy(),
            logit_scale=manifest["logit_scale"],
            input_shape=tuple(manifest["input_shape"]),
        )
