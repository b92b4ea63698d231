"""Resnet feature extraction: pooled global vector plus the pre-pool grid."""

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision import models, transforms

BACKBONES = {
    "resnet50": (models.resnet50, "ResNet50_Weights"),
    "resnet101": (models.resnet101, "ResNet101_Weights"),
    "resnet152": (models.resnet152, "ResNet152_Weights"),
}

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".webp"}

# imagenet normalization, matching what the backbones were trained with
_PREPROCESS = transforms.Compose([
    transforms.Resize(256),
    transforms.CenterCrop(224),
    transforms.ToTensor(),
    transforms.Normalize(mean=[0.485, 0.456, 0.406],
                         std=[0.229, 0.224, 0.225]),
])

FALLBACK_SEED = 0


@dataclass
class ExtractionConfig:
    backbone: str = "resnet50"
    feature_dim: int = 2048  # pooled penultimate activations
    region_grid: int = 7  # 7x7 pre-pool grid -> R=49
    region_dim: int = 2048

    def validate(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}; "
                             f"choose from {sorted(BACKBONES)}")


def load_backbone(name, log=sys.stderr):
    """Pretrained resnet when weights are reachable; otherwise a seeded
    random-init copy so the pipeline stays runnable (and deterministic)
    offline. The fallback is only useful for format/pipeline testing."""
    ctor, weights_attr = BACKBONES[name]
    try:
        weights = getattr(models, weights_attr).DEFAULT
        net = ctor(weights=weights)
        pretrained = True
    except Exception as exc:  # download failure, missing cache, etc.
        if log is not None:
            print(f"warning: pretrained weights for {name} unavailable "
                  f"({exc}); using seeded random initialization", file=log)
        torch.manual_seed(FALLBACK_SEED)
        net = ctor(weights=None)
        pretrained = False
    net.eval()
    return net, pretrained


def _forward_features(net, batch):
    """Run the resnet trunk by hand so we get the pre-pool grid too."""
    x = net.conv1(batch)
    x = net.bn1(x)
    x = net.relu(x)
    x = net.maxpool(x)
    x = net.layer1(x)
    x = net.layer2(x)
    x = net.layer3(x)
    grid = net.layer4(x)  # B x C x 7 x 7
    pooled = net.avgpool(grid).flatten(1)  # B x C
    return pooled, grid


def list_images(image_dir):
    """Lexicographic filename order fixes both record order and image ids."""
    root = Path(image_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")
    return sorted(p for p in root.iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)


def extract(image_dir, config=None, net=None, batch_size=8, log=sys.stderr):
    """Yield (image_id, global_feature, regions) per readable image.

    Image ids are the indices of the lexicographically sorted filenames;
    unreadable files are skipped with a logged message and their id retired.
    """
    config = config or ExtractionConfig()
    config.validate()
    if net is None:
        net, _ = load_backbone(config.backbone, log=log)
    paths = list_images(image_dir)
    if not paths:
        raise FileNotFoundError(f"no images under {image_dir}")

    loaded = []
    for image_id, path in enumerate(paths):
        try:
            with Image.open(path) as img:
                tensor = _PREPROCESS(img.convert("RGB"))
        except (UnidentifiedImageError, OSError) as exc:
            if log is not None:
                print(f"warning: skipping unreadable image {image_id} "
                      f"({path.name}): {exc}", file=log)
            continue
        loaded.append((image_id, tensor))

    records = []
    with torch.no_grad():
        for start in range(0, len(loaded), batch_size):
            chunk = loaded[start:start + batch_size]
            batch = torch.stack([t for _, t in chunk])
            pooled, grid = _forward_features(net, batch)
            b, c, gh, gw = grid.shape
            if c != config.region_dim or gh * gw != config.region_grid ** 2:
                raise ValueError(
                    f"backbone emitted {c}-dim {gh}x{gw} grid, config declares "
                    f"{config.region_dim}-dim {config.region_grid}x{config.region_grid}")
            regions = grid.permute(0, 2, 3, 1).reshape(b, gh * gw, c)
            for (image_id, _), gvec, rmat in zip(chunk, pooled, regions):
                records.append((image_id,
                                gvec.numpy().astype(np.float32),
                                rmat.numpy().astype(np.float32)))
    return records
