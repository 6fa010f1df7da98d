"""Content hashes, run identifiers and canonical JSON.

Every artifact the pipeline writes is hashed here, and run manifests are
serialized through ``canonical_json`` so identical runs produce identical
bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Union

logger = logging.getLogger(__name__)


def canonical_json(payload: Any, indent: int = 2) -> str:
    """Serialize with sorted keys and fixed separators, newline-terminated."""
    return json.dumps(payload, sort_keys=True, indent=indent, separators=(",", ": ")) + "\n"


class IDGenerator:
    """Centralized hashing so manifests and bundles agree on identifiers."""

    @staticmethod
    def generate_file_hash(content: Union[str, bytes]) -> str:
        """SHA-256 hex digest of in-memory content."""
        if isinstance(content, str):
            content = content.encode("utf-8")
        return hashlib.sha256(content).hexdigest()

    @staticmethod
    def hash_path(path: Union[str, Path]) -> str:
        """SHA-256 hex digest of a file on disk, streamed in 1 MiB blocks."""
        digest = hashlib.sha256()
        with Path(path).open("rb") as handle:
            for block in iter(lambda: handle.read(1 << 20), b""):
                digest.update(block)
        return digest.hexdigest()

    @staticmethod
    def generate_run_id(config_dump: Any, seed: int) -> str:
        """Deterministic 16-character run id from the effective config and seed."""
        material = canonical_json({"config": config_dump, "seed": seed}, indent=0)
        return hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]


def generate_file_hash(content: Union[str, bytes]) -> str:
    """Convenience function for in-memory content hashing."""
    return IDGenerator.generate_file_hash(content)


def hash_path(path: Union[str, Path]) -> str:
    """Convenience function for file hashing."""
    return IDGenerator.hash_path(path)


def generate_run_id(config_dump: Any, seed: int) -> str:
    """Convenience function for run id generation."""
    return IDGenerator.generate_run_id(config_dump, seed)
