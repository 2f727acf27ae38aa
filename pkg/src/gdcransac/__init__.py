"""Depth-consistency filtering and nested sampling for RGB-D RANSAC."""
__version__ = "0.1.0"

from . import errors
from .geometry import CameraIntrinsics, DepthGradient, Feature, Pose
from .ransac import Correspondence, Matches, RansacConfig, RansacReport, Strategy, estimate

__all__ = ["CameraIntrinsics", "Correspondence", "DepthGradient", "Feature", "Matches", "Pose",
           "RansacConfig", "RansacReport", "Strategy", "errors", "estimate", "__version__"]
