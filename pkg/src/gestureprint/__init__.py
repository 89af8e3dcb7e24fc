"""Gesture recognition and user identification from mmWave radar point clouds."""
from .cloud import CloudCollection, Frame, FrameStream, GestureCloud, chamfer, hausdorff, jsd
from .errors import GesturePrintError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "CloudCollection", "Frame", "FrameStream", "GestureCloud", "GesturePrintError",
    "ValidationError", "chamfer", "hausdorff", "jsd",
]
