"""Schwarzian derivatives of power series, their inversion, and related coefficient maps."""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .errors import ContourError, ContractViolation, DomainError, FamilyMembershipError, PoleError
from .series import PowerSeries, boundary_values, eval_series, is_nonvanishing, reciprocal


def _require_local_univalence(w: PowerSeries):
    if w.degree < 1 or abs(w.coeffs[1]) < 1e-14:
        raise DomainError("w'(0) = 0: w is not locally univalent at the origin")


def schwarzian_of(w: PowerSeries) -> PowerSeries:
    """``(w''/w')' - (1/2) (w''/w')^2``; exact to degree ``deg(w) - 3``."""
    _require_local_univalence(w)
    if w.degree < 3:
        w = w.truncate(3)
    d1 = w.derivative()
    d2 = d1.derivative()
    q = d2 * reciprocal(d1.truncate(d2.degree))
    s = q.derivative() - 0.5 * (q * q).truncate(q.degree - 1)
    return PowerSeries(s.coeffs, w.sample_radius_hint)


def _ode_basis(phi: PowerSeries, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Series solutions of ``2 eta'' + phi eta = 0`` with ``(1, 0)`` and ``(0, 1)`` initial data."""
    c = np.zeros(degree + 1, dtype=complex)
    c[: min(phi.degree, degree) + 1] = phi.coeffs[: degree + 1]
    out = []
    for init in ((1.0, 0.0), (0.0, 1.0)):
        eta = np.zeros(degree + 1, dtype=complex)
        eta[0], eta[1] = init
        for n in range(degree - 1):
            conv = np.dot(c[: n + 1], eta[n::-1])
            eta[n + 2] = -0.5 * conv / ((n + 2) * (n + 1))
        out.append(eta)
    return out[0], out[1]


def solve_schwarzian(phi: PowerSeries, theta: float = 0.0, check_radius: float | None = None) -> PowerSeries:
    """``w = e^{i theta} eta_2 / eta_1`` with ``S_w = phi``, ``w(0) = 0`` and ``w'(0) = e^{i theta}``.

    The result has degree ``deg(phi) + 3`` so that ``schwarzian_of`` recovers
    every coefficient of ``phi``.  A zero of ``eta_1`` (a pole of ``w``) inside
    ``|z| <= check_radius`` raises ``PoleError`` with its location.
    """
    degree = phi.degree + 3
    eta1, eta2 = _ode_basis(phi, degree)
    e1 = PowerSeries(eta1)
    r = min(0.999, phi.sample_radius_hint) if check_radius is None else check_radius
    try:
        ok, _ = is_nonvanishing(e1, r)
    except ContourError as exc:
        raise PoleError(f"w has a pole on |z| = {r}", r * cmath.exp(1j * (exc.angle or 0.0))) from exc
    if not ok:
        roots = np.roots(eta1[::-1])
        inside = roots[np.abs(roots) <= r]
        loc = complex(inside[np.argmin(np.abs(inside))]) if inside.size else None
        raise PoleError(f"w has a pole inside |z| <= {r}", loc)
    w = PowerSeries(eta2) * reciprocal(e1)
    return PowerSeries(w.coeffs * cmath.exp(1j * theta), phi.sample_radius_hint)


# ----------------------------------------------------------------------
# inversion W(z) = 1 / w(1/z)


@dataclass(frozen=True)
class ExteriorSeries:
    """``W(z) = lead z + b_0 + b_1 / z + b_2 / z^2 + ...``"""

    lead: complex
    b: np.ndarray

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        tail = np.polynomial.polynomial.polyval(1.0 / z, self.b)
        return self.lead * z + tail

    def invert(self) -> PowerSeries:
        """Series of ``1 / W(1/z)``."""
        den = PowerSeries(np.concatenate([[self.lead], self.b]))
        inv = reciprocal(den)
        return PowerSeries(np.concatenate([[0.0], inv.coeffs]))


def invert_map(w: PowerSeries) -> ExteriorSeries:
    """Coefficients of ``W(z) = 1 / w(1/z)`` for ``w(0) = 0``, ``w'(0) != 0``.

    Writing ``w = a_1 z u(z)`` and ``1/u = sum v_j z^j`` gives ``W = (1/a_1)
    (z + v_1 + v_2/z + ...)``, i.e. ``b_j = v_{j+1} / a_1``.
    """
    if abs(w.coeffs[0]) > 1e-14:
        raise DomainError("invert_map needs w(0) = 0")
    _require_local_univalence(w)
    a1 = w.coeffs[1]
    u = PowerSeries(w.coeffs[1:] / a1)
    v = reciprocal(u)
    return ExteriorSeries(1.0 / a1, v.coeffs[1:] / a1)


def a_sequence(b, theta: float, n: int) -> np.ndarray:
    """``a_1..a_n`` of ``w`` from the exterior data ``b`` of ``W = e^{-i theta} z + b_0 + ...``.

    Comparing coefficients in ``W(1/z) w(z) = 1`` gives
    ``a_1 = e^{i theta}`` and ``a_{m+1} = -e^{i theta} sum_{j=0}^{m-1} b_j a_{m-j}``.
    """
    b = np.asarray(b, dtype=complex)
    if n < 1:
        raise DomainError("n must be >= 1")
    if b.size < n - 1:
        raise DomainError(f"need b_0..b_{n - 2} ({n - 1} values), got {b.size}")
    rot = cmath.exp(1j * theta)
    a = np.zeros(n + 1, dtype=complex)
    a[1] = rot
    for m in range(1, n):
        a[m + 1] = -rot * np.dot(b[:m], a[m:0:-1])
    return a[1:]


def a_from_b(b, theta: float, n: int) -> complex:
    """The coefficient ``a_n`` determined by ``b_0..b_{n-2}``."""
    return complex(a_sequence(b, theta, n)[-1])


# ----------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class SchwarzianPair:
    w: PowerSeries
    phi: PowerSeries
    theta: float
    tau: float

    def __post_init__(self):
        _require_local_univalence(self.w)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "tau": self.tau,
            "w_coeffs": [[c.real, c.imag] for c in self.w.coeffs],
            "phi_coeffs": [[c.real, c.imag] for c in self.phi.coeffs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def rotate(w: PowerSeries, tau: float, theta: float) -> PowerSeries:
    """``e^{-i theta} w(e^{i tau} z)``."""
    k = np.arange(w.degree + 1)
    return PowerSeries(w.coeffs * np.exp(1j * (k * tau - theta)), w.sample_radius_hint)


def normalize_rotation(w: PowerSeries, tau: float, theta: float = 0.0, tol: float = 1e-9) -> SchwarzianPair:
    """Rotated representative together with its Schwarzian, checked against the rotation rule
    ``S_{w_{tau,theta}}(z) = e^{2 i tau} S_w(e^{i tau} z)``."""
    if abs(w.coeffs[0]) > 1e-12 or w.degree < 1 or abs(w.coeffs[1] - 1) > 1e-12:
        raise DomainError("normalize_rotation needs w(0) = 0 and w'(0) = 1")
    wr = rotate(w, tau, theta)
    s, sr = schwarzian_of(w), schwarzian_of(wr)
    k = np.arange(s.degree + 1)
    expected = s.coeffs * np.exp(1j * (k + 2) * tau)
    scale = max(1.0, float(np.max(np.abs(expected))))
    err = float(np.max(np.abs(sr.coeffs - expected)))
    if err > tol * scale:
        raise ContractViolation("rotation rule", f"Schwarzian coefficients off by {err:.3g}")
    return SchwarzianPair(wr, sr, theta, tau)


# ----------------------------------------------------------------------
# covering radius


@dataclass
class CoveringReport:
    a2_max: float
    min_omitted_modulus: float
    holds: bool
    radii: list
    bound: float

    def to_dict(self) -> dict:
        return {
            "a2_max": self.a2_max,
            "min_omitted_modulus": self.min_omitted_modulus,
            "holds": self.holds,
            "radii": list(self.radii),
            "bound": self.bound,
        }


def injectivity_filter(w: PowerSeries, r: float, grid: int = 64) -> None:
    """Necessary conditions for univalence on ``|z| <= r``; raises ``FamilyMembershipError``.

    Checks that ``w'`` has no zeros there and that distinct points of a
    ``grid x grid`` polar grid have distinct images.
    """
    try:
        ok, winding = is_nonvanishing(w.derivative(), r, rtol=1e-14)
    except ContourError as exc:
        raise FamilyMembershipError(f"w' vanishes near |z| = {r}") from exc
    if not ok:
        raise FamilyMembershipError(f"w' has {winding} zero(s) in |z| <= {r}")
    rad = r * (np.arange(1, grid + 1) / grid)
    ang = 2 * np.pi * np.arange(grid) / grid
    z = (rad[:, None] * np.exp(1j * ang)[None, :]).ravel()
    img = np.array([boundary_values(w, ri, grid) for ri in rad]).ravel()
    scale = float(np.max(np.abs(img)))
    tree = cKDTree(np.column_stack([img.real, img.imag]))
    for i, k in tree.query_pairs(1e-12 * scale):
        if abs(z[i] - z[k]) > 1e-12:
            raise FamilyMembershipError(f"points {z[i]:.4g} and {z[k]:.4g} share an image")


def covered_radius(w: PowerSeries, r: float = 0.995, n_rays: int = 2048) -> float:
    """Radius of the largest disk about 0 inside ``w(|z| < r)``: ``min |w(r e^{it})|``.

    The minimum over ``n_rays`` equispaced rays is refined by a bounded scalar
    search around the best ray.  Valid for univalent ``w``; a lower bound for
    the covering radius of ``w(D)``.
    """
    m = 1
    while m < max(n_rays, 2 * w.degree + 1):
        m *= 2
    vals = np.abs(boundary_values(w, r, m))
    k = int(np.argmin(vals))
    t0, dt = 2 * np.pi * k / m, 2 * np.pi / m
    res = minimize_scalar(lambda t: abs(eval_series(w, r * np.exp(1j * t))), bounds=(t0 - dt, t0 + dt),
                          method="bounded", options={"xatol": 1e-13})
    return float(min(vals[k], res.fun))


def covering_check(family, r: float = 0.995, tol: float = 1e-3, a2_sup: float | None = None,
                   check_injective: bool = True) -> CoveringReport:
    """Compare covered radii with ``1 / (2 sup |a_2|)``.

    ``a2_sup`` declares the supremum of ``|a_2|`` over the whole class when it
    is known; by default the maximum over ``family`` is used.  A zero
    supremum makes the bound infinite and the check hold vacuously.
    """
    family = list(family)
    if not family:
        raise DomainError("empty family")
    for w in family:
        if abs(w.coeffs[0]) > 1e-12 or w.degree < 1 or abs(w.coeffs[1] - 1) > 1e-12:
            raise DomainError("family members need w(0) = 0 and w'(0) = 1")
        if check_injective:
            injectivity_filter(w, r)
    a2 = max(abs(w.coeffs[2]) if w.degree >= 2 else 0.0 for w in family)
    sup = a2 if a2_sup is None else a2_sup
    radii = [covered_radius(w, r) for w in family]
    bound = np.inf if sup == 0 else 1.0 / (2.0 * sup)
    holds = bool(sup == 0 or min(radii) >= bound - tol)
    return CoveringReport(float(a2), float(min(radii)), holds, radii, float(bound))
