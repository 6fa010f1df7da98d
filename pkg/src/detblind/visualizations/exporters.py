"""Atomic artifact writing for run bundles."""

import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import BaseModel

from ..common.identifiers import canonical_json, generate_file_hash
from ..imaging.buffer import ImageBuffer
from ..imaging.io import encode_image

logger = logging.getLogger(__name__)


class ArtifactExporter:
    """Write files into one output directory, each via temp file + rename.

    Every written file is tracked with its SHA-256 so the run manifest can
    list them.
    """

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.written: Dict[str, str] = {}

    def _ensure_dir(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_bytes(self, name: str, payload: bytes) -> Path:
        self._ensure_dir()
        target = self.output_dir / name
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.output_dir)
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.written[name] = generate_file_hash(payload)
        logger.debug(f"Wrote {target} ({len(payload)} bytes)")
        return target

    def write_text(self, name: str, text: str) -> Path:
        return self.write_bytes(name, text.encode("utf-8"))

    def write_json(self, name: str, payload: Any) -> Path:
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        return self.write_text(name, canonical_json(payload))

    def write_image(self, name: str, img: ImageBuffer) -> Path:
        return self.write_bytes(name, encode_image(img, Path(name).suffix))

    def write_files(self, files: Dict[str, bytes]) -> None:
        for name in sorted(files):
            self.write_bytes(name, files[name])

    def hashes(self) -> Dict[str, str]:
        return dict(sorted(self.written.items()))
