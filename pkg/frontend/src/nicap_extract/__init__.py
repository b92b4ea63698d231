"""Image -> NICF feature extraction on top of torchvision resnets."""

__version__ = "0.1.0"
