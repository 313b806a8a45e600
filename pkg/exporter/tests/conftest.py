import numpy as np
import pytest
from PIL import Image

from feature_exporter.backbone import load_backbone


@pytest.fixture(scope="session")
def backbone():
    """One backbone for the whole session; loading it repeatedly is slow."""
    return load_backbone()


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Two small RGB images: a structured scene and an all-black square."""
    root = tmp_path_factory.mktemp("images")
    scene = np.zeros((96, 128, 3), dtype=np.uint8)
    scene[:, :, 0] = np.linspace(0, 255, 128, dtype=np.uint8)[None, :]
    scene[:, :, 1] = np.linspace(0, 200, 96, dtype=np.uint8)[:, None]
    scene[30:60, 40:80, 2] = 230
    Image.fromarray(scene).save(root / "scene.png")
    Image.fromarray(np.zeros((64, 64, 3), dtype=np.uint8)).save(root / "black.png")
    return str(root)
