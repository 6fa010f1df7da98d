"""Stripe-selected perturbations, adversarial composition and the perturbation bundle.

``extract_perturbation`` turns a reconstructed sample into a budgeted delta
``R`` supported on the stripe union; ``compose_adversarial`` adds it to the
replaced image inside a window of the target's bounding box.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ..common.errors import DomainError, EmptyApplicationError, ImageFormatError
from ..common.identifiers import canonical_json, generate_file_hash
from ..imaging.buffer import ImageBuffer
from ..imaging.io import decode_uint16_png, encode_uint16_png
from ..segmentation.masks import TargetRegion
from .stripes import StripeMask, union_active

logger = logging.getLogger(__name__)

ExtractMode = Literal["delta", "copy", "whole"]

DEFAULT_ETA = 5.0
UINT16_SCALE = 65535.0
_BUDGET_SLACK = 1e-9

POSITIVE_FILE = "perturbation_pos.png"
NEGATIVE_FILE = "perturbation_neg.png"
MANIFEST_FILE = "perturbation.json"


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Pixel deltas ``R`` in [-1, 1], zero off ``active_mask``, with ``||R||_2 <= eta``.

    In ``copy`` mode the deltas are those that paste the sample's stripe
    values over the baseline, and composition writes ``baseline + R`` rather
    than adding to whatever image it is given.
    """

    delta: np.ndarray = field(repr=False)
    active_mask: np.ndarray = field(repr=False)
    eta: float
    mode: ExtractMode = "delta"
    scale: float = 1.0
    masks: Optional[Tuple[StripeMask, StripeMask]] = field(default=None, repr=False)
    anchor: Optional[TargetRegion] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        delta = np.array(self.delta, dtype=np.float64, copy=True)
        active = np.array(self.active_mask, dtype=bool, copy=True)
        if delta.ndim != 3 or delta.shape[:2] != active.shape:
            raise DomainError(f"Delta {delta.shape} does not match active mask {active.shape}")
        if self.eta < 0:
            raise DomainError(f"eta must be non-negative, got {self.eta}")
        if np.any(delta[~active] != 0.0):
            raise DomainError("Perturbation must be zero outside its active mask")
        if np.any(np.abs(delta) > 1.0):
            raise DomainError("Perturbation deltas must lie in [-1, 1]")
        norm = float(np.linalg.norm(delta))
        if norm > self.eta * (1.0 + _BUDGET_SLACK) + _BUDGET_SLACK:
            raise DomainError(f"||R||_2 = {norm:.6g} exceeds eta = {self.eta}")
        delta.setflags(write=False)
        active.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "active_mask", active)
        if self.values is not None:
            values = np.array(self.values, dtype=np.float64, copy=True)
            values.setflags(write=False)
            object.__setattr__(self, "values", values)

    @property
    def l2(self) -> float:
        return float(np.linalg.norm(self.delta))

    @property
    def dims(self) -> Tuple[int, int, int]:
        height, width, channels = self.delta.shape
        return (width, height, channels)


def extract_perturbation(
    s_star: ImageBuffer,
    baseline: ImageBuffer,
    masks: Tuple[StripeMask, StripeMask],
    eta: float = DEFAULT_ETA,
    mode: ExtractMode = "delta",
    anchor: Optional[TargetRegion] = None,
) -> Perturbation:
    """Restrict ``S* - baseline`` to the stripe union and project onto the L2 ball of radius ``eta``."""
    if not s_star.same_dims(baseline):
        raise DomainError(f"Sample dims {s_star.dims} differ from baseline dims {baseline.dims}")
    if mode not in ("delta", "copy", "whole"):
        raise DomainError(f"Unknown extract mode: {mode}")
    if eta < 0:
        raise DomainError(f"eta must be non-negative, got {eta}")
    active = union_active(masks)
    if active.shape != (s_star.height, s_star.width):
        raise DomainError(f"Stripe masks {active.shape} do not match image {s_star.height}x{s_star.width}")

    raw = (s_star.data - baseline.data) * active[:, :, None]
    norm = float(np.linalg.norm(raw))
    scale = 1.0 if norm <= eta or norm == 0.0 else eta / norm
    delta = raw * scale

    values = None
    if mode == "copy":
        values = np.where(active[:, :, None], baseline.data + delta, 0.0)
    logger.info(f"Extracted {mode} perturbation: ||R||_2 {norm:.4f} -> {norm * scale:.4f} (eta {eta})")
    return Perturbation(
        delta=delta,
        active_mask=active,
        eta=float(eta),
        mode=mode,
        scale=scale,
        masks=masks,
        anchor=anchor,
        values=values,
    )


def application_window(
    region: TargetRegion, offset: Tuple[int, int], width: int, height: int
) -> Tuple[int, int, int, int]:
    """Inclusive ``(top, bottom, left, right)`` of rows ``[t+i, b]`` and cols ``[l+j, r]``, clipped."""
    i, j = offset
    top = max(region.top + i, region.top, 0)
    left = max(region.left + j, region.left, 0)
    bottom = min(region.bottom, height - 1)
    right = min(region.right, width - 1)
    if top > bottom or left > right:
        raise EmptyApplicationError(
            f"Offset {offset} leaves no window inside region bbox {region.bbox}"
        )
    return top, bottom, left, right


def application_mask(
    regions: Sequence[TargetRegion], offset: Tuple[int, int], width: int, height: int
) -> np.ndarray:
    """Union of the regions' application windows as a boolean ``(height, width)`` mask."""
    apply = np.zeros((height, width), dtype=bool)
    for region in regions:
        top, bottom, left, right = application_window(region, offset, width, height)
        apply[top : bottom + 1, left : right + 1] = True
    return apply


def compose_adversarial(
    base: ImageBuffer,
    perturbation: Perturbation,
    regions: Union[TargetRegion, Sequence[TargetRegion]],
    offset: Tuple[int, int] = (0, 0),
) -> ImageBuffer:
    """``X_adv = clamp(base + R)`` on the union of windows ∩ active pixels; everything else is copied.

    Overlapping windows still receive ``R`` once, so ``||X_adv - base||_2 <= eta``.
    """
    if base.shape != perturbation.delta.shape:
        raise DomainError(f"Base shape {base.shape} does not match perturbation {perturbation.delta.shape}")
    if isinstance(regions, TargetRegion):
        regions = [regions]
    if not regions:
        raise EmptyApplicationError("No target regions to apply the perturbation to")
    apply = application_mask(regions, offset, base.width, base.height)
    apply &= perturbation.active_mask

    out = base.as_array()
    if perturbation.mode == "copy" and perturbation.values is not None:
        out[apply] = perturbation.values[apply]
    else:
        out[apply] = np.clip(out[apply] + perturbation.delta[apply], 0.0, 1.0)
    logger.debug(f"Composed perturbation over {len(regions)} window(s): {int(apply.sum())} pixels")
    return ImageBuffer(out)


class PerturbationReport(BaseModel):
    l2: float = Field(..., ge=0.0)
    linf: float = Field(..., ge=0.0)
    changed_pixels: int = Field(..., ge=0)
    changed_ratio: float = Field(..., ge=0.0, le=1.0)


def perturbation_report(x: ImageBuffer, x_adv: ImageBuffer) -> PerturbationReport:
    """Norms of ``X_adv - X``; a pixel counts as changed when any channel differs."""
    if not x.same_dims(x_adv):
        raise DomainError(f"Image dims differ: {x.dims} vs {x_adv.dims}")
    diff = x_adv.data - x.data
    changed = int(np.count_nonzero(np.any(diff != 0.0, axis=2)))
    return PerturbationReport(
        l2=float(np.linalg.norm(diff)),
        linf=float(np.abs(diff).max(initial=0.0)),
        changed_pixels=changed,
        changed_ratio=changed / float(x.width * x.height),
    )


class PerturbationManifest(BaseModel):
    """JSON side of the perturbation bundle."""

    mode: ExtractMode
    eta: float
    scale: float
    l2: float
    width: int
    height: int
    channels: int
    window_offset: Tuple[int, int] = (0, 0)
    masks: Optional[Tuple[StripeMask, StripeMask]] = None
    anchor: Optional[Dict[str, Any]] = None
    files: Dict[str, str] = Field(default_factory=dict)


def encode_perturbation(perturbation: Perturbation, offset: Tuple[int, int] = (0, 0)) -> Dict[str, bytes]:
    """Bundle files: 16-bit positive/negative delta PNGs plus the JSON manifest."""
    width, height, channels = perturbation.dims
    flat = perturbation.delta.reshape(height, width * channels)
    positive = np.rint(np.clip(flat, 0.0, 1.0) * UINT16_SCALE).astype(np.uint16)
    negative = np.rint(np.clip(-flat, 0.0, 1.0) * UINT16_SCALE).astype(np.uint16)
    files = {POSITIVE_FILE: encode_uint16_png(positive), NEGATIVE_FILE: encode_uint16_png(negative)}
    manifest = PerturbationManifest(
        mode=perturbation.mode,
        eta=perturbation.eta,
        scale=perturbation.scale,
        l2=perturbation.l2,
        width=width,
        height=height,
        channels=channels,
        window_offset=offset,
        masks=perturbation.masks,
        anchor=perturbation.anchor.to_dict() if perturbation.anchor is not None else None,
        files={name: generate_file_hash(payload) for name, payload in files.items()},
    )
    files[MANIFEST_FILE] = canonical_json(manifest.model_dump(mode="json")).encode("utf-8")
    return files


def decode_perturbation(files: Dict[str, bytes]) -> Tuple[Perturbation, PerturbationManifest]:
    """Inverse of ``encode_perturbation`` up to 16-bit quantization.

    Copy-mode values are not stored; the decoded perturbation composes as a delta.
    """
    try:
        manifest = PerturbationManifest.model_validate(json.loads(files[MANIFEST_FILE]))
    except KeyError as e:
        raise ImageFormatError(f"Perturbation bundle is missing {e.args[0]}") from e
    for name, digest in manifest.files.items():
        if generate_file_hash(files[name]) != digest:
            raise ImageFormatError(f"Hash mismatch for {name}")
    positive = decode_uint16_png(files[POSITIVE_FILE]).astype(np.float64)
    negative = decode_uint16_png(files[NEGATIVE_FILE]).astype(np.float64)
    shape = (manifest.height, manifest.width, manifest.channels)
    delta = ((positive - negative) / UINT16_SCALE).reshape(shape)

    if manifest.masks is not None:
        active = union_active(manifest.masks)
    else:
        active = np.any(delta != 0.0, axis=2)
    delta = delta * active[:, :, None]
    norm = float(np.linalg.norm(delta))
    if norm > manifest.eta:
        # rounding can push the quantized delta just past the budget
        delta *= manifest.eta / norm
    perturbation = Perturbation(
        delta=delta,
        active_mask=active,
        eta=manifest.eta,
        mode="delta" if manifest.mode == "copy" else manifest.mode,
        scale=manifest.scale,
        masks=manifest.masks,
    )
    return perturbation, manifest
