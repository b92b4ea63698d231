"""Shared fixtures: a tiny image directory and one extraction run."""

import numpy as np
import pytest
from PIL import Image

from nicap_extract.extractor import ExtractionConfig, extract, load_backbone
from nicap_extract.nicf import write_nicf


def _write_images(root):
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    # a solid color image and an exact copy of it, plus two distinct images
    solid = Image.new("RGB", (300, 220), (200, 40, 40))
    solid.save(root / "a_solid.png")
    solid.save(root / "b_solid_copy.png")
    noise = Image.fromarray(rng.integers(0, 256, (240, 320, 3), dtype=np.uint8))
    noise.save(root / "c_noise.png")
    grad = np.tile(np.linspace(0, 255, 320, dtype=np.uint8), (240, 1))
    mid = np.full_like(grad, 128)
    Image.fromarray(np.stack([grad, mid, grad[:, ::-1]], axis=-1)) \
        .save(root / "d_gradient.png")
    return root


@pytest.fixture(scope="session")
def backbone():
    net, pretrained = load_backbone("resnet50", log=None)
    return net


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    return _write_images(tmp_path_factory.mktemp("images"))


@pytest.fixture(scope="session")
def extraction(tmp_path_factory, image_dir, backbone):
    records = extract(image_dir, ExtractionConfig(), net=backbone, log=None)
    out = tmp_path_factory.mktemp("nicf") / "features.nicf"
    write_nicf(out, records)
    return records, out
