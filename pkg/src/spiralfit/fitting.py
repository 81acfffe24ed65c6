"""Approximate-maximum-likelihood fit of a spiral motion to oriented points.

The AML cost ``sum_i (m^T M_i m) / (m^T N_i m)`` is minimised by repeatedly
solving ``B_m x = lambda C_m x`` for the eigenvalue closest to zero, with
``B_m`` and ``C_m`` built at the previous estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, NoConvergence, NotPositiveDefinite, NumericalBreakdown
from .geometry import (
    AxisLine,
    KinematicMotion,
    axis_from_motion,
    canonicalize,
    plucker_feature,
    velocity,
    weighted_n_sum,
)
from .linalg import gen_eig_smallest_ridged

MIN_POINTS = 7
DROP_TOL = 1e-14
# mean weighted squared residual below which the current motion is an exact fit
EXACT_FIT = 1e-30


@dataclass
class FitConfig:
    w_p: float = 1e-3
    iterations: int = 5
    convergence_tol: float = 1e-10

    def __post_init__(self):
        if not self.w_p > 0:
            raise ValueError("w_p must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class FitReport:
    motion: KinematicMotion
    axis: AxisLine
    per_point_distance: np.ndarray = field(repr=False)
    per_point_confidence: np.ndarray = field(repr=False)
    sigma: float
    nu: float
    iterations_run: int
    eigenvalue: float
    method: str = "gaussian"
    n_dropped: int = 0

    @property
    def n_points(self) -> int:
        return len(self.per_point_distance)

    def to_dict(self, include_confidence: bool = False) -> dict:
        out = {
            "method": self.method,
            "r": self.motion.r.tolist(),
            "c": self.motion.c.tolist(),
            "gamma": self.motion.gamma,
            "axis": {
                "direction": self.axis.direction.tolist(),
                "anchor": self.axis.anchor.tolist(),
            },
            "sigma": self.sigma,
            "nu": None if math.isinf(self.nu) else self.nu,
            "n_points": self.n_points,
            "n_dropped": self.n_dropped,
            "iterations": self.iterations_run,
        }
        if include_confidence:
            out["per_point_confidence"] = np.asarray(self.per_point_confidence).tolist()
        return out


def as_arrays(points, normals=None) -> tuple[np.ndarray, np.ndarray]:
    """Accept ``(positions, normals)`` arrays or a sequence of OrientedPoint."""
    if normals is None:
        p = np.array([q.p for q in points], dtype=float).reshape(-1, 3)
        n = np.array([q.n for q in points], dtype=float).reshape(-1, 3)
        return p, n
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    n = np.asarray(normals, dtype=float).reshape(-1, 3)
    if p.shape != n.shape:
        raise ValueError(f"positions {p.shape} and normals {n.shape} differ in shape")
    return p, n


def residual_terms(m, p, n, w_p, features=None):
    """Numerators ``(m . f_i)^2`` and denominators ``m^T N_i m`` for every point."""
    m = np.asarray(m, dtype=float)
    F = plucker_feature(p, n) if features is None else features
    motion = KinematicMotion.from_vector(m)
    v = velocity(motion, p)
    grad_sq = np.sum(np.cross(n, motion.r) ** 2, axis=1) + motion.gamma ** 2
    den = np.sum(v * v, axis=1) + w_p * grad_sq
    num = (F @ m) ** 2
    return num, den


def signed_distances(m, p, n, w_p, features=None) -> np.ndarray:
    """AML distances; points with a vanishing denominator get NaN."""
    m = np.asarray(m, dtype=float)
    F = plucker_feature(p, n) if features is None else features
    den = residual_terms(m, p, n, w_p, F)[1]
    out = np.full(len(p), np.nan)
    ok = den >= DROP_TOL
    out[ok] = (F[ok] @ m) / np.sqrt(den[ok])
    return out


def _assemble(F, p, n, m, weights, w_p):
    num, den = residual_terms(m, p, n, w_p, F)
    usable = den >= DROP_TOL
    if np.count_nonzero(usable) < MIN_POINTS:
        raise EmptyInput(f"only {np.count_nonzero(usable)} usable points; need {MIN_POINTS}")
    w = np.where(usable, weights, 0.0)
    safe_den = np.where(usable, den, 1.0)
    b_w = w / safe_den
    B = F.T @ (b_w[:, None] * F)
    C = weighted_n_sum(p, n, w * num / safe_den ** 2, w_p)
    B = 0.5 * (B + B.T)
    C = 0.5 * (C + C.T)
    return B, C, int(np.count_nonzero(~usable)), np.where(usable, num / safe_den, 0.0)


def assemble(points, normals, m, weights, w_p: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Weighted ``B_m = sum w M_i / (m^T N_i m)`` and ``C_m = sum w d_i^2 / (m^T N_i m) N_i``.

    Points whose ``m^T N_i m`` falls below 1e-14 are left out.
    """
    p, n = as_arrays(points, normals)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(p),) or np.any(weights < 0):
        raise ValueError("weights must be a nonnegative vector with one entry per point")
    B, C, _, _ = _assemble(plucker_feature(p, n), p, n, np.asarray(m, dtype=float), weights, w_p)
    return B, C


def _solve(B, C):
    try:
        return gen_eig_smallest_ridged(B, C)
    except (NotPositiveDefinite, NoConvergence) as exc:
        raise NumericalBreakdown(f"generalized eigenproblem failed after ridge retry: {exc}") from exc


def initial_motion(F, p, n, w_p, weights=None) -> tuple[float, np.ndarray]:
    """Motion from the m-independent problem ``sum M_i x = lambda sum N_i x``."""
    w = np.ones(len(p)) if weights is None else weights
    B0 = F.T @ (w[:, None] * F)
    C0 = weighted_n_sum(p, n, w, w_p)
    return _solve(B0, C0)


def _angle_between(a, b) -> float:
    c = min(1.0, abs(float(a @ b)))
    return math.acos(c)


def iterate(F, p, n, m, weights, config: FitConfig):
    """Run up to ``config.iterations`` weighted eigen updates starting at ``m``.

    Returns ``(m, eigenvalue, iterations_run, n_dropped)``; ``eigenvalue`` is
    None when no update was needed.
    """
    lam = None
    dropped = 0
    done = 0
    for _ in range(config.iterations):
        B, C, dropped, d2 = _assemble(F, p, n, m, weights, config.w_p)
        if np.sum(weights * d2) <= EXACT_FIT * max(np.sum(weights), 1.0):
            break
        lam, m_new = _solve(B, C)
        done += 1
        step = _angle_between(m, m_new)
        m = m_new
        if step < config.convergence_tol:
            break
    return m, lam, done, dropped


def fit_gaussian(points, normals=None, config: FitConfig | None = None) -> FitReport:
    """Non-robust AML fit with unit weights.

    Points should already be centred and scaled (see ``normalize_points``).
    """
    config = config or FitConfig()
    p, n = as_arrays(points, normals)
    if len(p) < MIN_POINTS:
        raise EmptyInput(f"need at least {MIN_POINTS} points, got {len(p)}")
    F = plucker_feature(p, n)
    ones = np.ones(len(p))
    lam0, m = initial_motion(F, p, n, config.w_p)
    m, lam, done, dropped = iterate(F, p, n, m, ones, config)
    return _report(m, p, n, F, config.w_p, lam0 if lam is None else lam, done, dropped)


def _report(m, p, n, F, w_p, lam, done, dropped) -> FitReport:
    m = canonicalize(m)
    motion = KinematicMotion.from_vector(m)
    d = signed_distances(m, p, n, w_p, F)
    return FitReport(
        motion=motion,
        axis=axis_from_motion(motion),
        per_point_distance=d,
        per_point_confidence=np.ones(len(p)),
        sigma=float(np.nanmean(d ** 2)),
        nu=math.inf,
        iterations_run=done,
        eigenvalue=float(lam),
        method="gaussian",
        n_dropped=dropped,
    )
