"""Decomposed depth / ego-motion / object-motion fitting on synthetic dynamic scenes."""
from .camera import EulerPose, Intrinsics, PoseSE3
from .loss import LossWeights

__version__ = "0.1.0"

__all__ = ["EulerPose", "Intrinsics", "PoseSE3", "LossWeights", "__version__"]
