"""Visual-odometry geometry, pseudo-label gating, and trajectory evaluation."""

from .se3 import Pose, Trajectory, accumulate, compose, geodesic_angle, inverse, relative

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "Trajectory",
    "accumulate",
    "compose",
    "geodesic_angle",
    "inverse",
    "relative",
    "__version__",
]
