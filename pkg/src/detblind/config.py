"""Run configuration.

Values resolve as command-line flag > config file > environment > default.
The environment supplies only ``DETBLIND_SEED`` and ``DETBLIND_LOG_LEVEL``.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .attack.perturbation import DEFAULT_ETA, ExtractMode
from .attack.replacement import DEFAULT_EPSILON, DEFAULT_STEP
from .attack.stripes import DEFAULT_LENGTH, DEFAULT_THICKNESS
from .common.errors import ConfigError
from .evaluation.compare import SUPPRESSION_IOU
from .evaluation.detections import DEFAULT_SCORE_THRESHOLD
from .inversion.reconstruction import InversionConfig
from .segmentation.masks import DEFAULT_PALETTE_SIZE, RGB, default_palette, validate_palette

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENV_SEED = "DETBLIND_SEED"
ENV_LOG_LEVEL = "DETBLIND_LOG_LEVEL"
MAX_PALETTE_SIZE = 1 << 16
LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ReplaceSettings(_Section):
    step: int = Field(DEFAULT_STEP, ge=1)
    epsilon: float = Field(DEFAULT_EPSILON, gt=0.0, le=1.0)


class PerturbSettings(_Section):
    n: int = Field(DEFAULT_THICKNESS, ge=1)
    m: int = Field(DEFAULT_LENGTH, ge=1)
    stride: Optional[int] = Field(None, ge=1)
    horizontal_stride: Optional[int] = Field(None, ge=1)
    offset: Tuple[int, int] = (0, 0)
    eta: float = Field(DEFAULT_ETA, ge=0.0)
    extract_mode: ExtractMode = "delta"

    @model_validator(mode="after")
    def _non_overlapping(self) -> "PerturbSettings":
        if self.stride is not None and self.stride < self.m:
            raise ValueError(f"stride {self.stride} must be at least m = {self.m}")
        if self.horizontal_stride is not None and self.horizontal_stride < self.n:
            raise ValueError(f"horizontal_stride {self.horizontal_stride} must be at least n = {self.n}")
        return self


class SegmentationSettings(_Section):
    on_rle: Literal["error", "skip"] = "error"
    separate_instances: bool = False
    palette_size: int = Field(DEFAULT_PALETTE_SIZE, ge=1, le=MAX_PALETTE_SIZE)
    # explicit colors override the generated entries of the same id
    palette: Optional[Dict[int, Tuple[int, int, int]]] = None

    @model_validator(mode="after")
    def _injective_palette(self) -> "SegmentationSettings":
        self.resolved_palette()
        return self

    def resolved_palette(self) -> Dict[int, RGB]:
        palette = default_palette(self.palette_size)
        if self.palette:
            palette.update(self.palette)
        return validate_palette(palette)


class ClassifierSettings(_Section):
    samples_per_class: int = Field(150, ge=1)
    epochs: int = Field(60, ge=1)
    # unset: calibrate against the inversion settings
    logit_scale: Optional[float] = Field(None, gt=0.0)
    weights_dir: Optional[Path] = None


class EvalSettings(_Section):
    threshold: float = Field(DEFAULT_SCORE_THRESHOLD, ge=0.0, le=1.0)
    suppression_iou: float = Field(SUPPRESSION_IOU, gt=0.0, le=1.0)


class AttackConfig(_Section):
    """Every tunable of a run, validated before any work starts."""

    schema_version: Literal[1] = SCHEMA_VERSION
    images: List[Path] = Field(default_factory=list)
    annotations: Optional[Path] = None
    mask: Optional[Path] = None
    target_labels: List[int] = Field(default_factory=list)
    reconstruction_label: Optional[int] = Field(None, ge=0)
    output_dir: Path = Path("detblind-out")
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    log_level: LogLevel = "INFO"

    replace: ReplaceSettings = Field(default_factory=ReplaceSettings)
    inversion: InversionConfig = Field(default_factory=InversionConfig)
    perturb: PerturbSettings = Field(default_factory=PerturbSettings)
    segmentation: SegmentationSettings = Field(default_factory=SegmentationSettings)
    classifier: ClassifierSettings = Field(default_factory=ClassifierSettings)
    evaluation: EvalSettings = Field(default_factory=EvalSettings)

    @model_validator(mode="after")
    def _check_sources(self) -> "AttackConfig":
        if self.annotations is not None and self.mask is not None:
            raise ValueError("annotations and mask are mutually exclusive")
        if any(label <= 0 for label in self.target_labels):
            raise ValueError(f"target labels must be positive class ids, got {self.target_labels}")
        return self

    def require_attack_inputs(self) -> None:
        """Raise ``ConfigError`` unless every field the attack command needs is set."""
        missing = []
        if not self.images:
            missing.append("images")
        if self.annotations is None and self.mask is None:
            missing.append("annotations or mask")
        if not self.target_labels:
            missing.append("target_labels")
        if self.reconstruction_label is None:
            missing.append("reconstruction_label")
        if missing:
            raise ConfigError(f"Missing required settings: {', '.join(missing)}")

    def effective_dump(self) -> Dict[str, Any]:
        """Every effective parameter, defaults included, as JSON-ready data."""
        return self.model_dump(mode="json")


def _deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _deep_merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def environment_settings(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    settings: Dict[str, Any] = {}
    if environ.get(ENV_SEED):
        try:
            settings["seed"] = int(environ[ENV_SEED])
        except ValueError as e:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {environ[ENV_SEED]!r}") from e
    if environ.get(ENV_LOG_LEVEL):
        settings["log_level"] = environ[ENV_LOG_LEVEL].upper()
    return settings


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed config file {path}: {e.msg} (line {e.lineno}, column {e.colno})") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    version = payload.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"Unsupported config schema_version {version}; expected {SCHEMA_VERSION}")
    return payload


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> AttackConfig:
    """Resolve and validate a configuration.

    ``overrides`` is a nested mapping holding only the flags that were given.
    """
    data = environment_settings(environ)
    if path is not None:
        data = _deep_merge(data, read_config_file(path))
    if overrides:
        data = _deep_merge(data, overrides)
    try:
        config = AttackConfig.model_validate(data)
    except PydanticValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}" for error in e.errors()
        )
        raise ConfigError(f"Invalid configuration: {problems}") from e
    logger.debug(f"Resolved configuration: {config.effective_dump()}")
    return config
