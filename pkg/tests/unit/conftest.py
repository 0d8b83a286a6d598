from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from frames import FrameSequence, MaskSequence
from selection import reference_table


def write_image(path: Path, array: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(path)
    return path


@pytest.fixture
def image_writer():
    return write_image


@pytest.fixture
def gradient():
    """Eight 6x8 RGB frames, every pixel different across frames and channels."""
    t, h, w = np.meshgrid(np.arange(8), np.arange(6), np.arange(8), indexing="ij")
    frames = np.stack([t * 20 + h, t * 20 + w, (h * w) % 256], axis=-1).astype(np.uint8)
    return FrameSequence.from_array(frames)


@pytest.fixture
def centre_masks(gradient):
    masks = np.zeros(gradient.shape, dtype=np.uint8)
    masks[:, 2:4, 2:6] = 1
    return MaskSequence.from_array(masks)


@pytest.fixture(scope="session")
def reference():
    return reference_table()
