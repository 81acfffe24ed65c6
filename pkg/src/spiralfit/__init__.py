"""Rotation-axis detection for spiral surfaces by robust kinematic surface fitting."""

__version__ = "0.1.0"

from .fitting import FitConfig, FitReport, assemble, fit_gaussian
from .geometry import (
    AxisLine,
    KinematicMotion,
    OrientedPoint,
    aml_distance,
    angular_error,
    distance_error,
    plucker_feature,
    quadratic_forms,
    velocity,
    zero_velocity_point,
)
from .pipeline import RoiSpec, detect_axis, normalize_points
from .robust import RobustConfig, fit_robust

__all__ = [
    "AxisLine",
    "FitConfig",
    "FitReport",
    "KinematicMotion",
    "OrientedPoint",
    "RobustConfig",
    "RoiSpec",
    "aml_distance",
    "angular_error",
    "assemble",
    "detect_axis",
    "distance_error",
    "fit_gaussian",
    "fit_robust",
    "normalize_points",
    "plucker_feature",
    "quadratic_forms",
    "velocity",
    "zero_velocity_point",
]
