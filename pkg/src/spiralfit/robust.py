"""Student-t robust fitting by expectation-maximisation.

Each point carries a latent precision scale ``z_i``. An outer iteration runs
the E-step (``z``), the variance update, the degrees-of-freedom update, and
one weighted generalized-eigen update of the motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyInput
from .fitting import (
    MIN_POINTS,
    FitConfig,
    FitReport,
    _report,
    as_arrays,
    initial_motion,
    iterate,
    signed_distances,
)
from .geometry import plucker_feature

SIGMA_FLOOR = 1e-30
NU_BOUNDS = (0.5, 1e6)

# Bernoulli-number coefficients of the asymptotic series
#   log(x) - psi(x) = 1/(2x) + sum_k B_2k / (2k x^2k)
_ASYMPTOTIC = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def _log_minus_digamma_large(x: float) -> float:
    inv2 = 1.0 / (x * x)
    acc = 0.0
    for coef in reversed(_ASYMPTOTIC):
        acc = acc * inv2 + coef
    return 0.5 / x + acc * inv2


def digamma(x: float) -> float:
    """Digamma function for ``x > 0``: upward recurrence to ``x >= 6``, then the asymptotic series."""
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise DomainError(f"digamma is only defined here for finite x > 0, got {x}")
    shift = 0.0
    while x < 6.0:
        shift += 1.0 / x
        x += 1.0
    return math.log(x) - _log_minus_digamma_large(x) - shift


def log_minus_digamma(x: float) -> float:
    """``log(x) - digamma(x)`` without cancellation for large ``x``."""
    if x >= 6.0:
        return _log_minus_digamma_large(x)
    return math.log(x) - digamma(x)


@dataclass
class RobustConfig:
    base: FitConfig = field(default_factory=FitConfig)
    nu_init: float = 10.0
    nu_bounds: tuple[float, float] = NU_BOUNDS

    def __post_init__(self):
        lo, hi = self.nu_bounds
        if not 0 < lo <= hi:
            raise ValueError("nu_bounds must satisfy 0 < lo <= hi")
        if not lo <= self.nu_init <= hi:
            raise ValueError(f"nu_init={self.nu_init} outside bounds {self.nu_bounds}")


def e_step(d, sigma: float, nu: float) -> np.ndarray:
    """Posterior precision scales ``z_i = (nu + 1) / (nu + d_i^2 / sigma)``."""
    if not sigma > 0 or not nu > 0:
        raise ValueError("sigma and nu must be positive")
    d = np.asarray(d, dtype=float)
    return (nu + 1.0) / (nu + d * d / sigma)


def m_sigma_step(d, z) -> float:
    d = np.asarray(d, dtype=float)
    z = np.asarray(z, dtype=float)
    if d.size == 0:
        raise EmptyInput("no residuals")
    if d.shape != z.shape:
        raise ValueError("d and z differ in length")
    return max(float(np.mean(z * d * d)), SIGMA_FLOOR)


def nu_equation(nu: float, z_term: float) -> float:
    """Left-hand side of the degrees-of-freedom equation.

    ``z_term`` is ``mean(log z_i - z_i + 1)``, which is <= 0.
    """
    return log_minus_digamma(0.5 * nu) - log_minus_digamma(0.5 * (nu + 1.0)) + z_term


def m_nu_step(z, nu_prev: float | None = None, bounds=NU_BOUNDS) -> float:
    """Degrees of freedom solving the M-step equation, by bisection in ``log(nu)``.

    The equation decreases monotonically in ``nu``; without a root inside
    ``bounds`` the nearest bound is returned. ``nu_prev`` is accepted for
    interface symmetry; bisection does not need a starting point.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if lo == hi:
        return lo
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("z must be strictly positive")
    z_term = float(np.mean(np.log(z) - z + 1.0))
    if nu_equation(hi, z_term) >= 0:
        return hi
    if nu_equation(lo, z_term) <= 0:
        return lo
    a, b = math.log(lo), math.log(hi)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        if nu_equation(math.exp(mid), z_term) > 0:
            a = mid
        else:
            b = mid
    # take the endpoint with the smaller residual
    ra = abs(nu_equation(math.exp(a), z_term))
    rb = abs(nu_equation(math.exp(b), z_term))
    return math.exp(a) if ra <= rb else math.exp(b)


def _finite_e_step(d, sigma, nu):
    z = np.zeros_like(d)
    ok = np.isfinite(d)
    z[ok] = e_step(d[ok], sigma, nu)
    return z, ok


def fit_robust(points, normals=None, config: RobustConfig | None = None) -> FitReport:
    """Student-t AML fit. Confidences near zero mark outliers.

    Points whose AML denominator vanishes at some iterate get zero weight.
    """
    config = config or RobustConfig()
    base = config.base
    p, n = as_arrays(points, normals)
    if len(p) < MIN_POINTS:
        raise EmptyInput(f"need at least {MIN_POINTS} points, got {len(p)}")
    F = plucker_feature(p, n)
    lam, m = initial_motion(F, p, n, base.w_p)
    d = signed_distances(m, p, n, base.w_p, F)
    sigma = max(float(np.nanmean(d * d)), SIGMA_FLOOR)
    nu = config.nu_init
    step_config = FitConfig(w_p=base.w_p, iterations=1, convergence_tol=base.convergence_tol)
    done = 0
    dropped = 0
    for _ in range(base.iterations):
        z, ok = _finite_e_step(d, sigma, nu)
        sigma = m_sigma_step(d[ok], z[ok])
        nu = m_nu_step(z[ok], nu, config.nu_bounds)
        m_prev = m
        m, lam_new, ran, dropped = iterate(F, p, n, m, z, step_config)
        if ran == 0:
            break
        lam = lam_new
        done += 1
        d = signed_distances(m, p, n, base.w_p, F)
        if math.acos(min(1.0, abs(float(m_prev @ m)))) < base.convergence_tol:
            break
    report = _report(m, p, n, F, base.w_p, lam, done, dropped)
    z, _ = _finite_e_step(report.per_point_distance, sigma, nu)
    report.per_point_confidence = z
    report.sigma = sigma
    report.nu = nu
    report.method = "robust"
    return report
