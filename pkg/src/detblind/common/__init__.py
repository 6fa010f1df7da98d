"""Common utilities shared across pipeline stages."""

from .errors import (
    AnnotationParseError,
    ConfigError,
    DetblindError,
    DomainError,
    EmptyApplicationError,
    ErrorCollector,
    ErrorSeverity,
    ImageFormatError,
    NoBackgroundError,
    NumericError,
    StageError,
    TargetNotFoundError,
    UnsupportedEncodingError,
    ValidationError,
    stage_context,
)
from .identifiers import IDGenerator, canonical_json, generate_file_hash, generate_run_id, hash_path

__all__ = [
    # Error types
    "DetblindError",
    "DomainError",
    "ImageFormatError",
    "AnnotationParseError",
    "ValidationError",
    "UnsupportedEncodingError",
    "TargetNotFoundError",
    "NoBackgroundError",
    "EmptyApplicationError",
    "NumericError",
    "ConfigError",
    "StageError",

    # Error handling utilities
    "ErrorSeverity",
    "ErrorCollector",
    "stage_context",

    # Hashing utilities
    "IDGenerator",
    "canonical_json",
    "generate_file_hash",
    "generate_run_id",
    "hash_path",
]
