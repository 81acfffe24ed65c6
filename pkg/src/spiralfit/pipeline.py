"""Mesh-to-axis pipeline: ROI crop, component selection, normals, normalisation, fit."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud, EmptyRoi, PipelineError, SpiralFitError
from .fitting import MIN_POINTS, FitReport, fit_gaussian
from .geometry import AxisLine, KinematicMotion, canonicalize
from .mesh import TriangleMesh, largest_component_near, vertex_normals
from .robust import RobustConfig, fit_robust
from .synthetic import pca_axis

log = logging.getLogger(__name__)

METHODS = ("robust", "gaussian", "pca")


@dataclass(frozen=True)
class RoiSpec:
    """Landmarks: ``l1`` at the helicotrema, ``l2`` at the basal modiolus."""

    l1: np.ndarray
    l2: np.ndarray

    def __post_init__(self):
        l1 = np.asarray(self.l1, dtype=float).reshape(3)
        l2 = np.asarray(self.l2, dtype=float).reshape(3)
        if np.linalg.norm(l1 - l2) == 0:
            raise ValueError("landmarks must be distinct")
        object.__setattr__(self, "l1", l1)
        object.__setattr__(self, "l2", l2)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.l1 + self.l2)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.l1 - self.l2))

    def contains(self, points) -> np.ndarray:
        """Closed spherical segment: inside the sphere and between the two landmark planes."""
        points = np.asarray(points, dtype=float)
        axis = (self.l1 - self.l2) / self.radius
        in_sphere = np.linalg.norm(points - self.center, axis=1) <= self.radius
        h = (points - self.l2) @ axis
        return in_sphere & (h >= 0) & (h <= self.radius)


@dataclass(frozen=True)
class NormalizationTransform:
    centroid: np.ndarray
    scale: float

    def apply(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.centroid) / self.scale

    def invert(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float) * self.scale + self.centroid

    def invert_axis(self, axis: AxisLine) -> AxisLine:
        return AxisLine(axis.direction, self.invert(axis.anchor))

    def invert_motion(self, m: KinematicMotion) -> KinematicMotion:
        """Same velocity field expressed in input coordinates (up to scale)."""
        c0 = self.centroid
        c = self.scale * m.c - np.cross(m.r, c0) - m.gamma * c0
        return KinematicMotion.from_vector(canonicalize(np.concatenate([m.r, c, [m.gamma]])))


def roi_crop(mesh: TriangleMesh, roi: RoiSpec) -> TriangleMesh:
    keep = roi.contains(mesh.vertices)
    if np.count_nonzero(keep) < MIN_POINTS:
        raise EmptyRoi(f"only {np.count_nonzero(keep)} vertices inside the ROI")
    return mesh.submesh(keep)


def normalize_points(points) -> tuple[np.ndarray, NormalizationTransform]:
    """Centre on the centroid and scale to unit RMS radius. Normals are unaffected."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise DegenerateCloud("no points")
    centroid = points.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1))))
    if rms < 1e-12:
        raise DegenerateCloud(f"RMS radius {rms:.3e} too small")
    tf = NormalizationTransform(centroid, rms)
    return tf.apply(points), tf


def fit_normalized(points, normals, config: RobustConfig | None = None, method: str = "robust") -> FitReport:
    """Normalise, fit with ``method``, and express the result in input coordinates."""
    config = config or RobustConfig()
    q, tf = normalize_points(points)
    if method == "pca":
        axis = pca_axis(points)
        n = len(q)
        motion = KinematicMotion.from_vector(
            canonicalize(np.concatenate([axis.direction, -np.cross(axis.direction, axis.anchor), [0.0]]))
        )
        return FitReport(
            motion=motion, axis=axis,
            per_point_distance=np.full(n, np.nan), per_point_confidence=np.ones(n),
            sigma=float("nan"), nu=float("inf"), iterations_run=0, eigenvalue=float("nan"),
            method="pca",
        )
    if method == "robust":
        report = fit_robust(q, normals, config)
    elif method == "gaussian":
        report = fit_gaussian(q, normals, config.base)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    report.axis = tf.invert_axis(report.axis)
    report.motion = tf.invert_motion(report.motion)
    # distances become input-unit lengths
    report.per_point_distance = report.per_point_distance * tf.scale
    report.sigma = report.sigma * tf.scale ** 2
    return report


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except SpiralFitError as exc:
        raise PipelineError(name, exc) from exc


def detect_axis(mesh: TriangleMesh, roi: RoiSpec, config: RobustConfig | None = None,
                method: str = "robust") -> FitReport:
    """Full pipeline from a mesh (or oriented point set) and two landmarks to an axis.

    The reported direction points from ``l2`` towards ``l1``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    cropped = _stage("roi_crop", roi_crop, mesh, roi)
    if cropped.n_faces:
        surface = _stage("component", largest_component_near, cropped, roi.center)
        normals = _stage("normals", vertex_normals, surface)
        ok = np.all(np.isfinite(normals), axis=1)
        points, normals = surface.vertices[ok], normals[ok]
    elif cropped.normals is not None:
        points, normals = cropped.vertices, cropped.normals
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    else:
        raise PipelineError("normals", EmptyRoi("ROI holds no faces and the input has no normals"))
    if len(points) < MIN_POINTS:
        raise PipelineError("normals", EmptyRoi(f"only {len(points)} oriented points after cropping"))
    report = _stage("fit", fit_normalized, points, normals, config, method)
    if report.axis.direction @ (roi.l1 - roi.l2) < 0:
        report.axis = report.axis.flipped()
    return report
