"""Synthetic cochlea-like scenes with exact ground truth, plus the PCA baseline.

The spiral is a circular tube swept along the orbit of a known spiral motion:
every surface point is ``p0 + exp(g t) Rot(axis, t) (q - p0)`` for ``q`` on a
fixed cross-section circle. Because the surface is the orbit of a curve, the
velocity field is tangent to it everywhere, and noiseless samples have zero
AML distance under the true motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCloud, InvalidSpec
from .geometry import AxisLine, KinematicMotion
from .linalg import sym_eig


@dataclass
class SceneSpec:
    seed: int = 0
    turns: float = 2.5
    noise_sigma: float = 0.15
    samples: int = 20000
    outlier_enabled: bool = True
    outlier_diameter: float = 1.0
    outlier_length: float = 8.0
    outlier_fraction: float = 0.1
    # ranges the per-seed shape parameters are drawn from
    basal_radius: tuple[float, float] = (3.6, 4.4)
    height: tuple[float, float] = (3.5, 4.5)
    apical_shrink: tuple[float, float] = (0.2, 0.3)
    tube_radius: tuple[float, float] = (0.8, 1.0)
    center_box: float = 10.0

    def validate(self) -> None:
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if self.outlier_diameter <= 0:
            raise InvalidSpec("outlier_diameter must be > 0")
        if self.samples < 100:
            raise InvalidSpec("samples must be >= 100")
        if self.turns <= 0:
            raise InvalidSpec("turns must be > 0")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise InvalidSpec("outlier_fraction must be in [0, 1)")
        for name in ("basal_radius", "height", "apical_shrink", "tube_radius"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidSpec(f"{name} must be an increasing positive range")


@dataclass
class SpiralShape:
    """Deterministic geometry of one spiral tube."""

    axis: np.ndarray
    center: np.ndarray          # zero-velocity point p0
    e1: np.ndarray              # radial direction of the basal cross-section
    gamma: float
    turns: float
    basal_radius: float
    height: float
    tube_radius: float

    @property
    def t_max(self) -> float:
        return 2.0 * np.pi * self.turns

    @property
    def motion(self) -> KinematicMotion:
        # unit angular speed; c places the fixed point at `center`
        r = self.axis
        return KinematicMotion(r, -np.cross(r, self.center) - self.gamma * self.center, self.gamma)

    def rotate(self, t) -> np.ndarray:
        """Rotation matrices about the axis by angle(s) ``t``; shape ``(..., 3, 3)``."""
        t = np.asarray(t, dtype=float)
        a = self.axis
        K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
        s = np.sin(t)[..., None, None]
        c = np.cos(t)[..., None, None]
        return np.eye(3) + s * K + (1 - c) * (K @ K)

    def _section(self, phi):
        """Basal cross-section points, outward unit normals, and area density."""
        phi = np.asarray(phi, dtype=float)
        a, e1 = self.axis, self.e1
        q0 = self.center + self.basal_radius * e1 - self.height * a
        u = np.cos(phi)[..., None] * e1 + np.sin(phi)[..., None] * a
        q = q0 + self.tube_radius * u
        dq = self.tube_radius * (-np.sin(phi)[..., None] * e1 + np.cos(phi)[..., None] * a)
        rel = q - self.center
        v = np.cross(a, rel) + self.gamma * rel
        n = np.cross(v, dq)
        area = np.linalg.norm(n, axis=-1)
        n = n / area[..., None]
        n *= np.sign(np.sum(n * u, axis=-1))[..., None]
        return q, n, area

    def surface(self, t, phi) -> tuple[np.ndarray, np.ndarray]:
        """Surface points and unit normals at parameters ``(t, phi)``."""
        q, n0, _ = self._section(phi)
        R = self.rotate(t)
        scale = np.exp(self.gamma * np.asarray(t, dtype=float))[..., None]
        p = self.center + scale * np.einsum("...ij,...j->...i", R, q - self.center)
        n = np.einsum("...ij,...j->...i", R, n0)
        return p, n

    def centerline(self, t) -> np.ndarray:
        q0 = self.center + self.basal_radius * self.e1 - self.height * self.axis
        R = self.rotate(t)
        scale = np.exp(self.gamma * np.asarray(t, dtype=float))[..., None]
        return self.center + scale * np.einsum("...ij,j->...i", R, q0 - self.center)

    def sample(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Area-uniform samples of the tube surface."""
        # t has density ~ exp(2 g t): invert the CDF
        k = 2.0 * self.gamma
        u = rng.random(count)
        if abs(k) < 1e-12:
            t = u * self.t_max
        else:
            t = np.log1p(u * np.expm1(k * self.t_max)) / k
        # phi by rejection against the cross-section area density
        grid = np.linspace(0, 2 * np.pi, 721)
        bound = 1.01 * self._section(grid)[2].max()
        phi = np.empty(0)
        while phi.size < count:
            cand = rng.uniform(0, 2 * np.pi, 2 * count)
            keep = rng.random(cand.size) * bound < self._section(cand)[2]
            phi = np.concatenate([phi, cand[keep]])
        return self.surface(t, phi[:count])


@dataclass
class SceneTruth:
    axis: AxisLine
    motion: KinematicMotion
    apex: np.ndarray


@dataclass
class Scene:
    points: np.ndarray
    normals: np.ndarray
    outlier: np.ndarray = field(repr=False)
    truth: SceneTruth = None
    shape: SpiralShape = field(default=None, repr=False)


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_shape(spec: SceneSpec, rng: np.random.Generator) -> SpiralShape:
    axis = random_unit(rng)
    e1 = np.cross(axis, random_unit(rng))
    e1 /= np.linalg.norm(e1)
    turns = spec.turns
    shrink = rng.uniform(*spec.apical_shrink)
    return SpiralShape(
        axis=axis,
        center=rng.uniform(-spec.center_box, spec.center_box, 3),
        e1=e1,
        gamma=np.log(shrink) / (2 * np.pi * turns),
        turns=turns,
        basal_radius=rng.uniform(*spec.basal_radius),
        height=rng.uniform(*spec.height),
        tube_radius=rng.uniform(*spec.tube_radius),
    )


def _outlier_tube(shape: SpiralShape, spec: SceneSpec, rng: np.random.Generator, count: int):
    """Straight cylinder touching the basal fifth of the spiral, random orientation."""
    t0 = rng.uniform(0, 0.2 * shape.t_max)
    centre_line = shape.centerline(t0)
    radial = centre_line - shape.center
    radial -= (radial @ shape.axis) * shape.axis
    radial /= np.linalg.norm(radial)
    rho = shape.tube_radius * np.exp(shape.gamma * t0)
    radius = 0.5 * spec.outlier_diameter
    # outside the spiral tube, tangent to it
    mid = centre_line + (rho + radius) * radial
    d = random_unit(rng)
    b1 = np.cross(d, random_unit(rng))
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(d, b1)
    s = rng.uniform(-0.5, 0.5, count) * spec.outlier_length
    phi = rng.uniform(0, 2 * np.pi, count)
    n = np.cos(phi)[:, None] * b1 + np.sin(phi)[:, None] * b2
    p = mid + s[:, None] * d + radius * n
    return p, n


def generate_scene(spec: SceneSpec) -> Scene:
    """Sample a noisy spiral tube with an optional attached outlier tube.

    Deterministic in ``spec.seed``. Positions get isotropic Gaussian noise;
    normals stay analytic.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    shape = random_shape(spec, rng)
    n_out = int(round(spec.outlier_fraction * spec.samples)) if spec.outlier_enabled else 0
    n_in = spec.samples - n_out
    p, n = shape.sample(rng, n_in)
    labels = np.zeros(spec.samples, dtype=bool)
    if n_out:
        po, no = _outlier_tube(shape, spec, rng, n_out)
        p = np.concatenate([p, po])
        n = np.concatenate([n, no])
        labels[n_in:] = True
    if spec.noise_sigma > 0:
        p = p + rng.normal(scale=spec.noise_sigma, size=p.shape)
    truth = SceneTruth(
        axis=AxisLine(shape.axis, shape.center),
        motion=shape.motion,
        apex=shape.centerline(shape.t_max),
    )
    return Scene(points=p, normals=n, outlier=labels, truth=truth, shape=shape)


def spiral_mesh(shape: SpiralShape, n_t: int = 600, n_phi: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Triangulated tube surface (open at both ends) with outward-facing winding."""
    t = np.linspace(0, shape.t_max, n_t)
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    T, P = np.meshgrid(t, phi, indexing="ij")
    verts, normals = shape.surface(T, P)
    verts = verts.reshape(-1, 3)
    idx = np.arange(n_t * n_phi).reshape(n_t, n_phi)
    a = idx[:-1, :]
    b = idx[1:, :]
    c = np.roll(idx, -1, axis=1)[1:, :]
    d = np.roll(idx, -1, axis=1)[:-1, :]
    faces = np.concatenate([
        np.stack([a, b, c], axis=-1).reshape(-1, 3),
        np.stack([a, c, d], axis=-1).reshape(-1, 3),
    ])
    # orient winding to agree with the analytic outward normal
    e = verts[faces[0, 1]] - verts[faces[0, 0]]
    f = verts[faces[0, 2]] - verts[faces[0, 0]]
    if np.cross(e, f) @ normals.reshape(-1, 3)[faces[0, 0]] < 0:
        faces = faces[:, ::-1]
    return verts, faces


def coverage_subset(points: np.ndarray, apex, fraction: float) -> tuple[np.ndarray, float]:
    """Indices of points inside an apex-centred sphere holding ``fraction`` of them.

    The radius is found by bisection so the count is within 1% of
    ``fraction * len(points)``. Returns ``(indices, radius)``.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    points = np.asarray(points, dtype=float)
    dist = np.linalg.norm(points - np.asarray(apex, dtype=float), axis=1)
    if fraction == 1.0:
        return np.arange(len(points)), float(dist.max())
    target = fraction * len(points)
    tol = max(0.01 * target, 0.5)
    lo, hi = 0.0, float(dist.max())
    radius = hi
    for _ in range(200):
        radius = 0.5 * (lo + hi)
        count = np.count_nonzero(dist <= radius)
        if abs(count - target) <= tol:
            break
        if count < target:
            lo = radius
        else:
            hi = radius
    return np.flatnonzero(dist <= radius), radius


def pca_axis(points) -> AxisLine:
    """Least-variance principal direction through the centroid."""
    points = np.asarray(points, dtype=float)
    if len(points) < 3:
        raise DegenerateCloud("PCA needs at least 3 points")
    centroid = points.mean(axis=0)
    x = points - centroid
    cov = x.T @ x / len(points)
    w, V = sym_eig(cov)
    if w[0] <= 1e-12 * max(w[2], 1e-300):
        raise DegenerateCloud("position covariance has rank < 3")
    return AxisLine(V[:, 0], centroid)


def truth_landmarks(shape: SpiralShape) -> tuple[np.ndarray, np.ndarray]:
    """Landmarks on the true axis whose ROI segment encloses the whole spiral tube.

    ``l1`` lies beyond the apex, ``l2`` below the basal turn.
    """
    shrink = np.exp(shape.gamma * shape.t_max)
    top = max(-shape.height + shape.tube_radius, (-shape.height + shape.tube_radius) * shrink)
    bottom = -shape.height - shape.tube_radius
    margin = shape.basal_radius
    l1 = shape.center + (top + margin) * shape.axis
    l2 = shape.center + (bottom - margin) * shape.axis
    return l1, l2
