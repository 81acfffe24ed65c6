"""Spiral motion model: velocity field, Plücker features, AML distance.

A spiral (similarity) motion is the velocity field ``v(p) = r x p + c + gamma p``.
An oriented point ``(p, n)`` lies on a surface swept by the motion when
``v(p) . n = 0``.  Packing the point into the 7-vector
``f = (p x n, n, p . n)`` makes that constraint linear in ``m = (r, c, gamma)``.

All functions accept a single point (shape ``(3,)``) or a batch (``(n, 3)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, NoAxis, ZeroVector

EPS_GAMMA = 1e-8


def skew(x: np.ndarray) -> np.ndarray:
    """Cross-product matrix with ``skew(x) @ y == np.cross(x, y)``."""
    x = np.asarray(x, dtype=float)
    return np.array(
        [[0.0, -x[2], x[1]],
         [x[2], 0.0, -x[0]],
         [-x[1], x[0], 0.0]]
    )


@dataclass(frozen=True)
class OrientedPoint:
    p: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(3)
        n = np.asarray(self.n, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("position must be finite")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError(f"normal must have unit length, got |n|={np.linalg.norm(n)!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", n)


@dataclass(frozen=True)
class KinematicMotion:
    """Rotation velocity ``r``, translation velocity ``c``, scaling velocity ``gamma``."""

    r: np.ndarray
    c: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(3))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_vector(cls, m) -> "KinematicMotion":
        m = np.asarray(m, dtype=float).reshape(7)
        return cls(m[:3], m[3:6], m[6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.c, [self.gamma]])

    def canonical(self) -> "KinematicMotion":
        return KinematicMotion.from_vector(canonicalize(self.as_vector()))

    def velocity(self, p) -> np.ndarray:
        return velocity(self, p)


@dataclass(frozen=True)
class AxisLine:
    """Undirected line through ``anchor`` along unit ``direction``."""

    direction: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            raise ZeroVector("axis direction has zero length")
        object.__setattr__(self, "direction", d / norm)
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float).reshape(3))

    def flipped(self) -> "AxisLine":
        return AxisLine(-self.direction, self.anchor)

    def transformed(self, rotation: np.ndarray, translation) -> "AxisLine":
        rotation = np.asarray(rotation, dtype=float)
        return AxisLine(rotation @ self.direction, rotation @ self.anchor + np.asarray(translation, dtype=float))


def canonicalize(m) -> np.ndarray:
    """Unit-normalize a 7-vector and make its largest-magnitude entry positive."""
    m = np.asarray(m, dtype=float)
    norm = np.linalg.norm(m)
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVector("motion vector is zero or non-finite")
    m = m / norm
    if m[int(np.argmax(np.abs(m)))] < 0:
        m = -m
    return m


def _as_motion(m) -> KinematicMotion:
    return m if isinstance(m, KinematicMotion) else KinematicMotion.from_vector(m)


def velocity(m, p) -> np.ndarray:
    m = _as_motion(m)
    p = np.asarray(p, dtype=float)
    return np.cross(m.r, p) + m.c + m.gamma * p


def plucker_feature(p, n) -> np.ndarray:
    """Extended Plücker coordinates ``(p x n, n, p . n)``; shape ``(..., 7)``."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    pn = np.sum(p * n, axis=-1, keepdims=True)
    return np.concatenate([np.cross(p, n), n, pn], axis=-1)


def _gradient_sq(m: KinematicMotion, n: np.ndarray) -> np.ndarray:
    # |grad_p (v . n)|^2 = |n x r|^2 + gamma^2 for unit n
    return np.sum(np.cross(n, m.r) ** 2, axis=-1) + m.gamma ** 2


def aml_denominator_sq(m, p, n, w_p: float) -> np.ndarray:
    """``|v(p)|^2 + w_p |grad_p(v . n)|^2``, equal to ``m^T N m``."""
    m = _as_motion(m)
    v = velocity(m, p)
    return np.sum(v * v, axis=-1) + w_p * _gradient_sq(m, np.asarray(n, dtype=float))


def aml_distance(m, p, n, w_p: float = 1e-3):
    """First-order geometric distance of oriented point(s) to the orbit surface of ``m``."""
    m = _as_motion(m)
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    v = velocity(m, p)
    radicand = np.sum(v * v, axis=-1) + w_p * _gradient_sq(m, n)
    if np.any(radicand < 1e-300):
        raise DegenerateDenominator("AML denominator vanishes; motion is (near) zero")
    d = np.sum(v * n, axis=-1) / np.sqrt(radicand)
    return float(d) if np.ndim(d) == 0 else d


def quadratic_forms(p, n, w_p: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Return the 7x7 matrices ``M = f f^T`` and ``N`` for one oriented point.

    ``m^T M m = (v . n)^2`` and ``m^T N m = |v|^2 + w_p (|n x r|^2 + gamma^2)``.
    """
    p = np.asarray(p, dtype=float).reshape(3)
    n = np.asarray(n, dtype=float).reshape(3)
    f = plucker_feature(p, n)
    M = np.outer(f, f)
    Sp = skew(p)
    Sn = skew(n)
    N = np.zeros((7, 7))
    N[:3, :3] = Sp.T @ Sp + w_p * (Sn.T @ Sn)
    N[:3, 3:6] = Sp
    N[3:6, :3] = Sp.T
    N[3:6, 3:6] = np.eye(3)
    N[3:6, 6] = p
    N[6, 3:6] = p
    N[6, 6] = p @ p + w_p
    return M, N


def weighted_n_sum(p: np.ndarray, n: np.ndarray, weights: np.ndarray, w_p: float) -> np.ndarray:
    """``sum_i weights[i] * N_i`` for a batch, without materialising each ``N_i``."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    wp_ = w[:, None] * p
    pp = p.T @ wp_
    nn = n.T @ (w[:, None] * n)
    p_sq = float(np.sum(wp_ * p))
    n_sq = float(np.sum(w * np.sum(n * n, axis=1)))
    s = wp_.sum(axis=0)
    eye = np.eye(3)
    N = np.zeros((7, 7))
    # skew(p)^T skew(p) = |p|^2 I - p p^T ; skew is linear in p
    N[:3, :3] = (p_sq * eye - pp) + w_p * (n_sq * eye - nn)
    N[:3, 3:6] = skew(s)
    N[3:6, :3] = skew(s).T
    N[3:6, 3:6] = total * eye
    N[3:6, 6] = s
    N[6, 3:6] = s
    N[6, 6] = p_sq + w_p * total
    return N


def zero_velocity_point(m, eps_gamma: float = EPS_GAMMA) -> np.ndarray:
    """Fixed point of the spiral motion, or the closest-to-still point on a helical axis."""
    m = KinematicMotion.from_vector(canonicalize(_as_motion(m).as_vector()))
    r, c, g = m.r, m.c, m.gamma
    rr = float(r @ r)
    if abs(g) >= eps_gamma:
        return (g * np.cross(r, c) - g * g * c - (r @ c) * r) / (g * (rr + g * g))
    if np.sqrt(rr) < eps_gamma:
        raise NoAxis("pure translation has no rotation axis")
    return np.cross(r, c) / rr


def axis_from_motion(m, eps_gamma: float = EPS_GAMMA) -> AxisLine:
    m = _as_motion(m)
    if np.linalg.norm(m.r) < 1e-12:
        raise NoAxis("rotation component vanishes")
    return AxisLine(m.r, zero_velocity_point(m, eps_gamma))


def angular_error(r_est, r_ref) -> float:
    """Angle in degrees between two undirected axes, in ``[0, 90]``."""
    a = np.asarray(r_est, dtype=float)
    b = np.asarray(r_ref, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise ZeroVector("angular error needs nonzero vectors")
    a, b = a / na, b / nb
    # atan2 keeps precision near 0 and 90 degrees, where arcsin/arccos lose it
    s = np.linalg.norm(np.cross(b, a))
    c = abs(float(a @ b))
    return float(np.degrees(np.arctan2(s, c)))


def distance_error(axis_est: AxisLine, p_ref) -> float:
    """Perpendicular distance from ``p_ref`` to the estimated axis line."""
    delta = axis_est.anchor - np.asarray(p_ref, dtype=float)
    d = axis_est.direction
    return float(np.linalg.norm(delta - (delta @ d) * d))
