"""Hardy, Bergman and Bloch-type norms of truncated series."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import config
from .errors import DomainError
from .series import PowerSeries, boundary_values, eval_series


@dataclass(frozen=True)
class NormReport:
    value: float
    p: float | str
    quadrature_points: int
    estimated_error: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError("norm value must be finite and nonnegative")
        if not (self.estimated_error >= 0 and math.isfinite(self.estimated_error)):
            raise ValueError("error estimate must be finite and nonnegative")

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_p(p):
    if p < 1:
        raise DomainError(f"unsupported exponent p={p} (need p >= 1)")


def _angular_nodes(f: PowerSeries, m: int | None) -> int:
    m = m or config.ANGULAR_NODES
    while m < 2 * f.degree + 1:
        m *= 2
    return m


def circle_mean(f: PowerSeries, p: float, r: float, m: int) -> float:
    """Trapezoidal mean of ``|f(r e^{it})|^p``."""
    return float(np.mean(np.abs(boundary_values(f, r, m)) ** p))


def hardy_norm(f: PowerSeries, p: float, r: float = 1.0, m: int | None = None) -> NormReport:
    """``(mean |f(r e^{it})|^p)^{1/p}``; at ``r = 1`` the H^p norm of the truncation."""
    _check_p(p)
    if not 0.0 < r <= 1.0:
        raise DomainError("radius must lie in (0, 1]")
    m = _angular_nodes(f, m)
    full = circle_mean(f, p, r, m) ** (1 / p)
    half = circle_mean(f, p, r, m // 2) ** (1 / p) if m // 2 >= 2 else full
    return NormReport(full, p, m, abs(full - half))


def hardy_power(f: PowerSeries, p: float, m: int | None = None) -> float:
    """``||f||_{H^p}^p`` (the p-th power, no root)."""
    _check_p(p)
    return circle_mean(f, p, 1.0, _angular_nodes(f, m))


def mean_function_profile(f: PowerSeries, p: float, radii) -> np.ndarray:
    """Values of the mean function ``M_f(r)^p`` at the given increasing radii."""
    _check_p(p)
    radii = np.asarray(radii, dtype=float)
    if radii.size and (np.any(np.diff(radii) <= 0) or radii[0] <= 0 or radii[-1] > 1):
        raise DomainError("radii must be strictly increasing in (0, 1]")
    m = _angular_nodes(f, None)
    return np.array([circle_mean(f, p, r, m) for r in radii])


def log_convexity_defects(radii, profile) -> np.ndarray:
    """Midpoint convexity defects of ``log M(r)^p`` as a function of ``log r``.

    Entries are ``chord - value`` at interior points; log-convexity means all of
    them are >= 0 (up to rounding).
    """
    x = np.log(np.asarray(radii, dtype=float))
    y = np.log(np.asarray(profile, dtype=float))
    lam = (x[1:-1] - x[:-2]) / (x[2:] - x[:-2])
    chord = (1 - lam) * y[:-2] + lam * y[2:]
    return chord - y[1:-1]


# ----------------------------------------------------------------------
# Bergman


def bergman_coefficient_norm(f: PowerSeries) -> float:
    """Exact ``A_2`` norm: ``(sum |c_n|^2 / (n+1))^{1/2}``."""
    n = np.arange(f.degree + 1)
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2 / (n + 1))))


def area_integral(f: PowerSeries, p: float, n_radial: int | None = None, m: int | None = None) -> float:
    """``iint_D |f|^p dx dy`` by radial Gauss-Legendre x angular trapezoid."""
    n_radial = n_radial or config.RADIAL_NODES
    m = _angular_nodes(f, m)
    x, w = np.polynomial.legendre.leggauss(n_radial)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    means = np.array([circle_mean(f, p, si, m) for si in s])
    return float(2 * np.pi * np.sum(w * s * means))


def bergman_norm(f: PowerSeries, p: float, method: str = "auto") -> NormReport:
    """Normalized Bergman norm ``((1/pi) iint_D |f|^p)^{1/p}``.

    ``method="coefficients"`` (p = 2 only) uses the exact coefficient identity;
    ``"quadrature"`` always uses the polar grid; ``"auto"`` picks the former when
    it applies.
    """
    _check_p(p)
    if method == "auto":
        method = "coefficients" if p == 2 else "quadrature"
    if method == "coefficients":
        if p != 2:
            raise DomainError("the coefficient identity applies only to p = 2")
        return NormReport(bergman_coefficient_norm(f), p, f.degree + 1, 0.0)
    nr, m = config.RADIAL_NODES, _angular_nodes(f, None)
    full = (area_integral(f, p, nr, m) / np.pi) ** (1 / p)
    half = (area_integral(f, p, nr // 2, m // 2) / np.pi) ** (1 / p)
    return NormReport(full, p, nr * m, abs(full - half))


# ----------------------------------------------------------------------
# Bloch-type norm sup (1-|z|^2)^2 |phi(z)|


def _weighted(phi: PowerSeries, r: float, t: float) -> float:
    z = r * np.exp(1j * t)
    return (1 - r * r) ** 2 * abs(eval_series(phi, z))


def bloch_norm(phi: PowerSeries, n_radii: int = 200, m: int = 512, sweeps: int = 4) -> NormReport:
    """Grid supremum of ``(1-|z|^2)^2 |phi(z)|`` refined near the grid argmax.

    The reported value is attained at an explicit point, hence a lower bound for
    the supremum; the error estimate is the gain of the refinement over the grid
    maximum plus the grid modulus of continuity at the argmax.
    """
    radii = np.linspace(0.0, 1.0, n_radii, endpoint=False)
    grid = np.empty((n_radii, m))
    for i, r in enumerate(radii):
        grid[i] = (1 - r * r) ** 2 * np.abs(boundary_values(phi, r, m)) if r > 0 else abs(phi.coeffs[0])
    i, k = np.unravel_index(np.argmax(grid), grid.shape)
    grid_max = float(grid[i, k])
    r0, t0 = float(radii[i]), 2 * np.pi * k / m
    dr, dt = 1.0 / n_radii, 2 * np.pi / m
    best = grid_max
    for _ in range(sweeps):
        lo, hi = max(0.0, r0 - dr), min(1.0 - 1e-12, r0 + dr)
        res = minimize_scalar(lambda r: -_weighted(phi, r, t0), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > best:
            best, r0 = -res.fun, float(res.x)
        if r0 > 0:
            res = minimize_scalar(lambda t: -_weighted(phi, r0, t), bounds=(t0 - dt, t0 + dt), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun > best:
                best, t0 = -res.fun, float(res.x)
    nbrs = grid[max(i - 1, 0) : i + 2, [(k - 1) % m, k, (k + 1) % m]]
    continuity = float(np.max(np.abs(nbrs - grid_max)))
    return NormReport(float(best), "bloch", n_radii * m, (best - grid_max) + continuity)


def embedding_check(f: PowerSeries, p: float) -> dict:
    """Hardy and Bloch norms together with the ball-membership flag.

    ``in_ball`` is ``hardy < 2^{-1/p}``; the tested contract is that it implies
    ``bloch < 2``.
    """
    _check_p(p)
    hardy = hardy_norm(f, p).value
    bloch = bloch_norm(f).value
    in_ball = hardy < 2 ** (-1 / p)
    return {"in_ball": bool(in_ball), "hardy": hardy, "bloch": bloch, "implication_holds": (not in_ball) or bloch < 2}
