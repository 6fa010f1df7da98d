"""
Pytest configuration and shared fixtures for detblind tests.
============================================================

Shared fixtures: seeded random generators, tiny fixture images, the COCO
annotation and detection-dump fixtures, and a session-scoped trained toy
classifier (training takes a few seconds, so it happens once).
"""

import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, Generator, List, Optional, Tuple

import numpy as np
import pytest

from detblind.imaging import ImageBuffer, save_image
from detblind.inversion import ToyClassifier, TrainingReport, build_toy_classifier
from detblind.segmentation import SegmentationMask, default_palette

FIXTURES = Path(__file__).parent / "fixtures"
CLASSIFIER_SEED = 0

# Keep the environment from leaking into config resolution tests.
os.environ.pop("DETBLIND_SEED", None)
os.environ.pop("DETBLIND_LOG_LEVEL", None)


@pytest.fixture
def temp_directory() -> Generator[Path, None, None]:
    """Create a temporary directory for test files."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_training() -> Tuple[ToyClassifier, TrainingReport]:
    """Seeded, trained and calibrated toy classifier with its report, shared by the whole session."""
    return build_toy_classifier(CLASSIFIER_SEED)


@pytest.fixture(scope="session")
def toy_classifier(toy_training: Tuple[ToyClassifier, TrainingReport]) -> ToyClassifier:
    return toy_training[0]


@pytest.fixture
def coco_bytes() -> bytes:
    return (FIXTURES / "coco_annotations.json").read_bytes()


@pytest.fixture
def detections_bytes() -> bytes:
    return (FIXTURES / "detections.json").read_bytes()


def gradient_image(width: int = 16, height: int = 16, channels: int = 3) -> ImageBuffer:
    """Deterministic smooth image with distinct values per pixel and channel."""
    rows, cols = np.mgrid[0:height, 0:width]
    planes = [(rows * width + cols + 37 * k) % 251 / 250.0 for k in range(channels)]
    return ImageBuffer(np.stack(planes, axis=2))


@pytest.fixture
def small_image() -> ImageBuffer:
    return gradient_image()


@pytest.fixture
def square_mask() -> SegmentationMask:
    """16x16 mask with class 1 on rows/cols 4..11 and class 3 on a 2x2 corner patch."""
    grid = np.zeros((16, 16), dtype=np.int64)
    grid[4:12, 4:12] = 1
    grid[14:16, 0:2] = 3
    return SegmentationMask(class_ids=grid, palette=default_palette())


@pytest.fixture
def scene_files(temp_directory: Path, coco_bytes: bytes) -> Dict[str, Path]:
    """Both fixture images written as PNGs next to the COCO annotation file."""
    annotations = temp_directory / "annotations.json"
    annotations.write_bytes(coco_bytes)
    scene = temp_directory / "scene.png"
    street = temp_directory / "street.png"
    save_image(gradient_image(), scene)
    save_image(ImageBuffer(gradient_image().as_array()[::-1]), street)
    return {"annotations": annotations, "scene": scene, "street": street, "root": temp_directory}


class TestDataFactory:
    """Factory for creating test data."""

    @staticmethod
    def detection(image_id: int = 1, category_id: int = 1, bbox: Optional[List[float]] = None, score: float = 0.9) -> Dict[str, Any]:
        return {
            "image_id": image_id,
            "category_id": category_id,
            "bbox": bbox or [0.0, 0.0, 10.0, 10.0],
            "score": score,
        }

    @staticmethod
    def dump(records: List[Dict[str, Any]]) -> bytes:
        return json.dumps(records).encode("utf-8")

    @staticmethod
    def random_records(rng: np.random.Generator, images: int = 4, categories: int = 3, count: int = 20) -> List[Dict[str, Any]]:
        records = []
        for _ in range(count):
            x, y = rng.uniform(0, 50, size=2)
            w, h = rng.uniform(1, 30, size=2)
            records.append(
                {
                    "image_id": int(rng.integers(1, images + 1)),
                    "category_id": int(rng.integers(1, categories + 1)),
                    "bbox": [float(x), float(y), float(w), float(h)],
                    "score": float(rng.uniform(0, 1)),
                }
            )
        return records


@pytest.fixture
def test_data_factory() -> TestDataFactory:
    """Provide test data factory."""
    return TestDataFactory()


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "unit: fast tests without file system or training")
    config.addinivalue_line("markers", "integration: tests that run whole stages or the CLI")
    config.addinivalue_line("markers", "slow: tests that train the classifier or iterate to convergence")
