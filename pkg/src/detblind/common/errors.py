"""Error types and error handling utilities shared by every pipeline stage.

Library code raises the specific ``DetblindError`` subclasses below. The CLI
and the batch runner wrap them with ``stage_context`` so every failure carries
the stage name and file context, and ``ErrorCollector`` aggregates failures
across a batch of images.
"""

import json
import logging
from collections import Counter
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

logger = logging.getLogger(__name__)


class ErrorSeverity(Enum):
    """Logging levels used when reporting handled errors."""
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


class DetblindError(Exception):
    """Base class for every error raised by the package."""


class DomainError(DetblindError, ValueError):
    """Argument outside the domain of an operation (ranges, shapes, dims)."""


class ImageFormatError(DetblindError):
    """Unreadable or unsupported image file."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class AnnotationParseError(DetblindError):
    """Malformed JSON input."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(DetblindError):
    """Well-formed input whose content violates the expected schema.

    ``offending`` lists the record indices or ids that failed validation.
    """

    def __init__(self, message: str, offending: Optional[Sequence[Any]] = None):
        self.offending = list(offending or [])
        if self.offending:
            shown = ", ".join(str(item) for item in self.offending[:10])
            more = f" (+{len(self.offending) - 10} more)" if len(self.offending) > 10 else ""
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class UnsupportedEncodingError(DetblindError):
    """Segmentation encoding the parser does not decode (COCO RLE)."""


class TargetNotFoundError(DetblindError):
    """Requested label does not occur in the segmentation mask."""


class NoBackgroundError(DetblindError):
    """Target region covers the whole image, nothing to copy from."""


class EmptyApplicationError(DetblindError):
    """Perturbation window does not intersect the target region."""


class ConfigError(DetblindError):
    """Invalid configuration or command-line usage; nothing has run yet."""


class NumericError(DetblindError):
    """Non-finite value in an iterative computation.

    ``state`` holds the last state whose values were all finite.
    """

    def __init__(self, message: str, state: Any = None):
        self.state = state
        super().__init__(message)


class StageError(DetblindError):
    """A ``DetblindError`` annotated with the pipeline stage that raised it."""

    def __init__(
        self,
        stage: str,
        message: str,
        file: Optional[Union[str, Path]] = None,
        record: Optional[Any] = None,
    ):
        self.stage = stage
        self.message = message
        self.file = str(file) if file is not None else None
        self.record = record
        super().__init__(f"{stage}: {message}")

    def to_dict(self) -> Dict[str, Any]:
        """Error JSON schema: ``{stage, message, file, record}``."""
        return {
            "stage": self.stage,
            "message": self.message,
            "file": self.file,
            "record": self.record,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _record_of(error: DetblindError) -> Optional[Any]:
    if isinstance(error, ValidationError) and error.offending:
        return error.offending[0] if len(error.offending) == 1 else list(error.offending)
    if isinstance(error, ImageFormatError):
        return error.offset
    if isinstance(error, AnnotationParseError) and error.line is not None:
        return {"line": error.line, "column": error.column}
    return None


@contextmanager
def stage_context(
    stage: str,
    file: Optional[Union[str, Path]] = None,
    log_level: ErrorSeverity = ErrorSeverity.ERROR,
) -> Iterator[None]:
    """Re-raise any ``DetblindError`` from the block as a ``StageError``.

    Usage:
        with stage_context("locate", file=mask_path):
            region = locate_target(mask, label)
    """
    try:
        yield
    except StageError:
        raise
    except DetblindError as e:
        wrapped = StageError(stage, str(e), file=file, record=_record_of(e))
        getattr(logger, log_level.value)(f"Stage '{stage}' failed: {e}")
        raise wrapped from e


class ErrorCollector:
    """Per-image outcomes of a batch run, summarised once at the end."""

    LOGGED_ERRORS = 5

    def __init__(self) -> None:
        self.errors: List[Dict[str, Any]] = []
        self.success_count = 0

    @property
    def failure_count(self) -> int:
        return len(self.errors)

    def add_error(self, operation: str, error: Exception, context: Optional[Dict[str, Any]] = None) -> None:
        self.errors.append(
            {
                "operation": operation,
                "stage": error.stage if isinstance(error, StageError) else None,
                "type": type(error).__name__,
                "error": str(error),
                "context": dict(context or {}),
            }
        )

    def add_success(self) -> None:
        self.success_count += 1

    def has_errors(self) -> bool:
        return bool(self.errors)

    def failures_by_stage(self) -> Dict[str, int]:
        return dict(Counter(entry["stage"] or "unknown" for entry in self.errors))

    def get_summary(self) -> Dict[str, Any]:
        total = self.success_count + self.failure_count
        return {
            "total_operations": total,
            "successful": self.success_count,
            "failed": self.failure_count,
            "success_rate": self.success_count / total if total else 0.0,
            "by_stage": self.failures_by_stage(),
            "errors": self.errors,
        }

    def log_summary(self, operation_type: str = "batch") -> None:
        summary = self.get_summary()
        done = f"{summary['successful']}/{summary['total_operations']} successful"
        if not self.errors:
            logger.info(f"{operation_type}: {done}")
            return
        stages = ", ".join(f"{stage} {count}" for stage, count in sorted(summary["by_stage"].items()))
        logger.warning(f"{operation_type}: {done}; failures by stage: {stages}")
        for entry in self.errors[: self.LOGGED_ERRORS]:
            logger.warning(f"  {entry['operation']}: {entry['error']}")
        hidden = len(self.errors) - self.LOGGED_ERRORS
        if hidden > 0:
            logger.warning(f"  ... and {hidden} more errors")
