"""Semi-supervised 3D object detection via pseudo-label self-training."""

__version__ = "0.1.0"

from .geometry import Box3D, Detection, PointCloud
from .scene import CLASS_NAMES, NUM_CLASSES, Difficulty, Scene

__all__ = [
    "Box3D",
    "Detection",
    "PointCloud",
    "Scene",
    "Difficulty",
    "CLASS_NAMES",
    "NUM_CLASSES",
    "__version__",
]
