"""Cauchy and Beurling transforms on an annulus, and a Neumann-series Beltrami solver.

Everything lives on the annulus ``G = {R < |w - c0| < R + 1}``.  Write
``u = zeta - c0`` for the integration variable and ``v = w - c0`` for the
evaluation point.  Conventions (pinned by tests):

* ``T rho(w) = -(1/pi) iint_G rho(zeta) / (zeta - w) dA``, so ``dbar T rho = rho``;
* ``Pi rho = d_w T rho``;
* ``<nu, phi> = -(1/pi) iint_G nu phi dA``;
* ``phi_k(zeta) = u^{-k-1}`` and ``<conj(phi_k), phi_k> = -r_k^2``.

Densities that are finite sums of monomials ``u^a conj(u)^b`` are handled in
closed form (``LaurentDensity``).  Products of monomials fall out of that family
once ``Pi`` produces logarithms, so the fixed-point iteration runs on a polar
grid (``PolarGrid``/``GridDensity``): angular FFT times Gauss-Legendre nodes in
the radius.  Per angular mode both transforms are one-dimensional radial
integrals with kernels ``(t/s)^{m-1}`` bounded by one, which keeps high modes
stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import config
from .errors import (AnnulusError, BudgetError, DomainError, NonConvergenceError, PreconditionError,
                     SolverInconsistencyError)
from .series import PowerSeries, boundary_values, sup_modulus

BOUNDARY_BAND = 1e-8


@dataclass(frozen=True)
class AnnulusSpec:
    c0: complex
    R: float

    def __post_init__(self):
        object.__setattr__(self, "c0", complex(self.c0))
        object.__setattr__(self, "R", float(self.R))
        if not (self.R > 0 and math.isfinite(self.R)):
            raise DomainError("inner radius R must be positive and finite")
        if not (math.isfinite(self.c0.real) and math.isfinite(self.c0.imag)):
            raise DomainError("center must be finite")

    @property
    def outer(self) -> float:
        return self.R + 1.0

    @classmethod
    def for_series(cls, f: PowerSeries, c0: complex = 0.0, margin: float = 0.0) -> "AnnulusSpec":
        """Smallest admissible annulus for ``f``: ``R = sup|f| + |c0| + 1 + margin``."""
        return cls(c0, sup_modulus(f, 1.0) + abs(c0) + 1.0 + margin)

    def check_for(self, f: PowerSeries) -> None:
        need = sup_modulus(f, 1.0) + abs(self.c0) + 1.0
        if self.R < need - 1e-12:
            raise AnnulusError(f"R={self.R:.6g} is below sup|f| + |c0| + 1 = {need:.6g}")

    def contains(self, w) -> np.ndarray:
        t = np.abs(np.asarray(w) - self.c0)
        return (t > self.R) & (t < self.outer)

    def to_dict(self) -> dict:
        return {"c0": [self.c0.real, self.c0.imag], "R": self.R}

    @classmethod
    def from_dict(cls, data: dict) -> "AnnulusSpec":
        return cls(complex(*data["c0"]), data["R"])


# ----------------------------------------------------------------------
# Monomial densities


@dataclass(frozen=True)
class LaurentDensity:
    """``sum c_{a,b} u^a conj(u)^b`` on the annulus (zero outside it)."""

    terms: dict
    annulus: AnnulusSpec

    def __post_init__(self):
        clean = {}
        for (a, b), amp in dict(self.terms).items():
            amp = complex(amp)
            if not (math.isfinite(amp.real) and math.isfinite(amp.imag)):
                raise ValueError("density amplitudes must be finite")
            clean[(int(a), int(b))] = amp
        object.__setattr__(self, "terms", clean)

    @classmethod
    def zero(cls, annulus: AnnulusSpec) -> "LaurentDensity":
        return cls({}, annulus)

    def _same(self, other: "LaurentDensity"):
        if self.annulus != other.annulus:
            raise DomainError("densities live on different annuli")

    def __add__(self, other: "LaurentDensity") -> "LaurentDensity":
        self._same(other)
        out = dict(self.terms)
        for key, amp in other.terms.items():
            out[key] = out.get(key, 0.0) + amp
        return LaurentDensity(out, self.annulus)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar) -> "LaurentDensity":
        scalar = complex(scalar)
        return LaurentDensity({k: scalar * v for k, v in self.terms.items()}, self.annulus)

    __rmul__ = __mul__

    def conj(self) -> "LaurentDensity":
        return LaurentDensity({(b, a): amp.conjugate() for (a, b), amp in self.terms.items()}, self.annulus)

    def is_zero(self) -> bool:
        return all(amp == 0 for amp in self.terms.values())

    def evaluate(self, w, restrict: bool = False):
        u = np.asarray(w, dtype=complex) - self.annulus.c0
        uc = np.conj(u)
        out = np.zeros_like(u)
        for (a, b), amp in self.terms.items():
            out = out + amp * u**a * uc**b
        if restrict:
            out = np.where(self.annulus.contains(w), out, 0.0)
        return out

    def on_grid(self, grid: "PolarGrid") -> np.ndarray:
        return self.evaluate(grid.points())

    def sup_norm(self, n_radii: int = 65, m: int = 512) -> float:
        """Grid maximum of ``|density|`` over the closed annulus."""
        if not self.terms:
            return 0.0
        t = np.linspace(self.annulus.R, self.annulus.outer, n_radii)
        th = 2 * np.pi * np.arange(m) / m
        w = self.annulus.c0 + t[:, None] * np.exp(1j * th)[None, :]
        return float(np.max(np.abs(self.evaluate(w))))

    def to_dict(self) -> dict:
        return {
            "annulus": self.annulus.to_dict(),
            "terms": [{"a": a, "b": b, "re": amp.real, "im": amp.imag} for (a, b), amp in sorted(self.terms.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LaurentDensity":
        terms = {(t["a"], t["b"]): complex(t["re"], t["im"]) for t in data["terms"]}
        return cls(terms, AnnulusSpec.from_dict(data["annulus"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _power_integral(q: int, lo, hi):
    """``int_lo^hi s^q ds`` (elementwise; zero where ``hi <= lo``)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if q == -1:
        val = np.log(hi / lo)
    else:
        val = (hi ** (q + 1) - lo ** (q + 1)) / (q + 1)
    return np.where(hi > lo, val, 0.0)


def cauchy_T(rho: LaurentDensity, w):
    """Closed-form ``T rho`` at the point(s) ``w`` off the two boundary circles."""
    ann = rho.annulus
    v = np.asarray(w, dtype=complex) - ann.c0
    t = np.abs(v)
    if np.any(np.abs(t - ann.R) < BOUNDARY_BAND) or np.any(np.abs(t - ann.outer) < BOUNDARY_BAND):
        raise DomainError("cauchy_T evaluated within the boundary band of the annulus")
    out = np.zeros_like(v)
    vsafe = np.where(t > 0, v, 1.0)
    for (a, b), amp in rho.terms.items():
        m, q = a - b, 2 * b + 1
        if m >= 1:
            radial = -2.0 * _power_integral(q, np.maximum(t, ann.R), ann.outer)
            out = out + amp * radial * v ** (m - 1)
        else:
            radial = 2.0 * _power_integral(q, ann.R, np.minimum(t, ann.outer))
            out = out + amp * np.where(t > ann.R, radial * vsafe ** (m - 1), 0.0)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class LogRemainder:
    """``sum amp * v^k * log(|v| / ref)`` on the annulus: the part of ``Pi`` outside the monomial family."""

    terms: tuple = ()
    annulus: AnnulusSpec | None = None

    def evaluate(self, w):
        v = np.asarray(w, dtype=complex) - (self.annulus.c0 if self.annulus else 0.0)
        out = np.zeros_like(v)
        for k, ref, amp in self.terms:
            out = out + amp * v**k * np.log(np.abs(v) / ref)
        return out

    def is_zero(self) -> bool:
        return all(amp == 0 for _, _, amp in self.terms)


def beurling_Pi(rho: LaurentDensity) -> tuple[LaurentDensity, LogRemainder]:
    """``Pi rho`` inside the annulus as (monomial part, logarithmic remainder)."""
    ann = rho.annulus
    fam: dict = {}
    logs = []
    for (a, b), amp in rho.terms.items():
        m = a - b
        rb = ann.outer if m >= 1 else ann.R
        if b == -1:
            # T carries a log(|v|) factor; d_w log|v| = 1/(2v).
            fam[(m - 2, 0)] = fam.get((m - 2, 0), 0.0) + amp
            if m != 1:
                logs.append((m - 2, rb, 2.0 * amp * (m - 1)))
            continue
        if a != 0:
            key = (a - 1, b + 1)
            fam[key] = fam.get(key, 0.0) + amp * a / (b + 1)
        if m != 1:
            key = (m - 2, 0)
            fam[key] = fam.get(key, 0.0) - amp * (m - 1) * rb ** (2 * b + 2) / (b + 1)
    return LaurentDensity(fam, ann), LogRemainder(tuple(logs), ann)


def basis_fraction(k: int, annulus: AnnulusSpec) -> LaurentDensity:
    """``phi_k(zeta) = (zeta - c0)^{-k-1}`` as a density."""
    if k < 0:
        raise DomainError("basis index must be >= 0")
    return LaurentDensity({(-k - 1, 0): 1.0}, annulus)


def conj_basis(k: int, annulus: AnnulusSpec) -> LaurentDensity:
    return basis_fraction(k, annulus).conj()


def gram_r2(k: int, annulus: AnnulusSpec) -> float:
    """``r_k^2 = (1/pi) iint_G |phi_k|^2 = 2 int_R^{R+1} s^{-2k-1} ds``."""
    if k < 0:
        raise DomainError("basis index must be >= 0")
    R = annulus.R
    if k == 0:
        return 2.0 * math.log1p(1.0 / R)
    return -math.expm1(2 * k * math.log(R / (R + 1))) * R ** (-2 * k) / k


def pairing(nu, phi: LaurentDensity) -> complex:
    """``<nu, phi> = -(1/pi) iint_G nu phi``; ``nu`` is a LaurentDensity or a GridDensity."""
    if isinstance(nu, GridDensity):
        return nu.pair(phi)
    nu._same(phi)
    ann = nu.annulus
    total = 0j
    for (a1, b1), c1 in nu.terms.items():
        for (a2, b2), c2 in phi.terms.items():
            a, b = a1 + a2, b1 + b2
            if a != b:
                continue
            total += -2.0 * c1 * c2 * float(_power_integral(2 * a + 1, ann.R, ann.outer))
    return complex(total)


# ----------------------------------------------------------------------
# Polar grid on the annulus


def _barycentric_weights(x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


class PolarGrid:
    """Gauss-Legendre radii times equispaced angles on an annulus, with cached operators."""

    def __init__(self, annulus: AnnulusSpec, n_radial: int = 48, n_angular: int = 256, n_quad: int | None = None):
        if n_angular < 8 or n_angular & (n_angular - 1):
            raise DomainError("angular node count must be a power of two >= 8")
        self.annulus = annulus
        self.nr = n_radial
        self.m = n_angular
        self.nq = n_quad or n_radial
        x, w = np.polynomial.legendre.leggauss(n_radial)
        self._x = x
        self._bw = _barycentric_weights(x)
        self.s = annulus.R + 0.5 * (x + 1.0)
        self.ws = 0.5 * w
        self.theta = 2 * np.pi * np.arange(n_angular) / n_angular
        self.modes = np.fft.fftfreq(n_angular, 1.0 / n_angular).astype(int)
        self._qx, self._qw = np.polynomial.legendre.leggauss(self.nq)
        self._node_kernel = None

    def points(self) -> np.ndarray:
        return self.annulus.c0 + self.s[:, None] * np.exp(1j * self.theta)[None, :]

    def interp_matrix(self, radii) -> np.ndarray:
        """Rows interpolate nodal radial values to ``radii`` (barycentric Lagrange)."""
        radii = np.asarray(radii, dtype=float)
        x = 2.0 * (radii - self.annulus.R) - 1.0
        d = x[..., None] - self._x
        hit = d == 0
        d = np.where(hit, 1.0, d)
        mat = self._bw / d
        mat = mat / mat.sum(axis=-1, keepdims=True)
        rows = hit.any(axis=-1)
        mat[rows] = hit[rows].astype(float)
        return mat

    def modes_of(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft(values, axis=-1) / self.m

    def values_of(self, modes: np.ndarray) -> np.ndarray:
        return np.fft.ifft(modes * self.m, axis=-1)

    def _pieces(self, t):
        """Quadrature nodes, weights and kernels of the two radial pieces for targets ``t``."""
        t = np.asarray(t, dtype=float)
        R, R1 = self.annulus.R, self.annulus.outer
        ms = self.modes
        pos = ms >= 1
        hx, hw = 0.5 * (self._qx + 1.0), 0.5 * self._qw
        lo = np.clip(t, R, R1)
        # outer piece [max(t,R), R+1] feeds modes m >= 1
        sig_o = lo[:, None] + (R1 - lo)[:, None] * hx
        w_o = (R1 - lo)[:, None] * hw
        with np.errstate(divide="ignore", invalid="ignore"):
            # t = 0 gives log 0 = -inf; the m = 1 column (0 * -inf) is reset below
            # beyond R + 1 the piece has zero width; clamping keeps its kernel finite
            ratio = np.log(np.minimum(t, R1)[:, None] / sig_o)
            ker_o = np.exp(ratio[:, :, None] * (ms[pos] - 1)[None, None, :])
        ker_o[:, :, ms[pos] == 1] = 1.0
        # inner piece [R, min(t,R+1)] feeds modes m <= 0
        sig_i = R + (lo - R)[:, None] * hx
        w_i = (lo - R)[:, None] * hw
        # below R the piece has zero width; clamping keeps its kernel finite
        ratio = np.log(sig_i / np.maximum(t, R)[:, None])
        ker_i = np.exp(ratio[:, :, None] * (1 - ms[~pos])[None, None, :])
        return pos, (sig_o, -2.0 * w_o, ker_o), (sig_i, 2.0 * w_i, ker_i)

    def profile_kernel(self, t) -> np.ndarray:
        """``K[i, mode, r]`` with ``tau_m(t_i) = sum_r K[i, mode, r] G_m(s_r)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pos, outer, inner = self._pieces(t)
        out = np.empty((t.size, self.m, self.nr))
        for mask, (sig, wq, ker) in ((pos, outer), (~pos, inner)):
            weighted = (wq[:, :, None] * ker).transpose(0, 2, 1)
            out[:, mask, :] = weighted @ self.interp_matrix(sig)
        return out

    def profile(self, modes: np.ndarray, t) -> np.ndarray:
        """``tau_m(t_i)`` for gridded modes ``G`` (shape ``(nr, m)``)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pos, outer, inner = self._pieces(t)
        out = np.empty((t.size, self.m), dtype=complex)
        for mask, (sig, wq, ker) in ((pos, outer), (~pos, inner)):
            vals = (self.interp_matrix(sig).reshape(-1, self.nr) @ modes[:, mask]).reshape(t.size, self.nq, -1)
            out[:, mask] = np.einsum("tq,tqm->tm", wq, ker * vals)
        return out

    @property
    def node_kernel(self) -> np.ndarray:
        if self._node_kernel is None:
            self._node_kernel = self.profile_kernel(self.s)
        return self._node_kernel

    def tau_at_nodes(self, modes: np.ndarray) -> np.ndarray:
        return np.einsum("imr,rm->im", self.node_kernel, modes, optimize=True)

    def apply_pi(self, values: np.ndarray) -> np.ndarray:
        """Grid values of ``Pi rho`` on the annulus nodes."""
        g = self.modes_of(values)
        tau = self.tau_at_nodes(g)
        prof = g + (self.modes - 1)[None, :] * tau / self.s[:, None]
        out = np.zeros_like(prof)
        target = self.modes - 2
        keep = target >= -(self.m // 2)
        out[:, target[keep] % self.m] = prof[:, keep]
        return self.values_of(out)

    def l2_norm(self, values: np.ndarray) -> float:
        dens = np.mean(np.abs(values) ** 2, axis=1) * 2 * np.pi
        return float(np.sqrt(np.sum(self.ws * self.s * dens)))

    def cauchy_T(self, values: np.ndarray, w, chunk: int = 128) -> np.ndarray:
        """``T rho`` at arbitrary points for gridded ``rho``."""
        w = np.asarray(w, dtype=complex)
        flat = w.ravel() - self.annulus.c0
        t, ang = np.abs(flat), np.angle(flat)
        g = self.modes_of(values)
        out = np.empty(flat.size, dtype=complex)
        for start in range(0, flat.size, chunk):
            sl = slice(start, start + chunk)
            tau = self.profile(g, t[sl])
            phase = np.exp(1j * ang[sl, None] * (self.modes - 1)[None, :])
            out[sl] = np.sum(tau * phase, axis=1)
        return out.reshape(w.shape)

    def evaluate(self, values: np.ndarray, w) -> np.ndarray:
        """Interpolate gridded values to points inside the annulus."""
        w = np.asarray(w, dtype=complex)
        flat = w.ravel() - self.annulus.c0
        g = self.modes_of(values)
        radial = self.interp_matrix(np.abs(flat)) @ g
        phase = np.exp(1j * np.angle(flat)[:, None] * self.modes[None, :])
        return np.sum(radial * phase, axis=1).reshape(w.shape)

    def taylor_coeffs(self, values: np.ndarray, count: int | None = None) -> np.ndarray:
        """Coefficients ``beta_k`` of ``T rho = sum beta_k v^k`` on ``|v| < R``.

        ``beta_k = -2 int G_{k+1}(s) s^{-k} ds``; computed with ``(R/s)^k`` and
        rescaled to keep large ``k`` in range.
        """
        count = count or self.m // 2 - 1
        count = min(count, self.m // 2 - 1)
        g = self.modes_of(values)
        k = np.arange(count)
        scaled = -2.0 * np.einsum("r,rk,rk->k", self.ws, (self.annulus.R / self.s)[:, None] ** k[None, :],
                                  g[:, (k + 1) % self.m])
        return scaled * self.annulus.R ** (-k.astype(float))

    def pair(self, values: np.ndarray, phi: LaurentDensity) -> complex:
        """``-(1/pi) iint nu phi`` with ``nu`` gridded."""
        g = self.modes_of(values)
        total = 0j
        for (a, b), amp in phi.terms.items():
            mode = -(a - b)
            if abs(mode) >= self.m // 2:
                continue
            total += -2.0 * amp * np.sum(self.ws * self.s ** (a + b + 1) * g[:, mode % self.m])
        return complex(total)

    def pi_isometry(self, values: np.ndarray) -> tuple[float, float]:
        """``(||rho||_2, ||Pi rho||_2)`` over the whole plane.

        The annulus part of ``Pi rho`` is gridded; the holomorphic pieces inside
        ``|v| < R`` and outside ``|v| > R+1`` are integrated in closed form.
        """
        R, R1 = self.annulus.R, self.annulus.outer
        pi_vals = self.apply_pi(values)
        inside = self.l2_norm(pi_vals) ** 2
        g = self.modes_of(values)
        for idx, m in enumerate(self.modes):
            if m >= 2:
                c = -2.0 * np.sum(self.ws * g[:, idx] * (R / self.s) ** (m - 1))  # C_m R^{m-1}
                inside += np.pi * (m - 1) * abs(c) ** 2
            elif m <= 0:
                d = 2.0 * np.sum(self.ws * g[:, idx] * (self.s / R1) ** (1 - m))  # D_m (R+1)^{m-1}
                inside += np.pi * (1 - m) * abs(d) ** 2
        return self.l2_norm(values), float(np.sqrt(inside))


@lru_cache(maxsize=16)
def default_grid(c0: complex, R: float, n_radial: int = 48, n_angular: int = 256) -> PolarGrid:
    return PolarGrid(AnnulusSpec(c0, R), n_radial, n_angular)


def grid_for(annulus: AnnulusSpec) -> PolarGrid:
    return default_grid(annulus.c0, annulus.R)


@dataclass
class GridDensity:
    grid: PolarGrid
    values: np.ndarray

    @classmethod
    def from_laurent(cls, density: LaurentDensity, grid: PolarGrid | None = None) -> "GridDensity":
        grid = grid or grid_for(density.annulus)
        return cls(grid, density.on_grid(grid))

    def l2_norm(self) -> float:
        return self.grid.l2_norm(self.values)

    def evaluate(self, w):
        return self.grid.evaluate(self.values, w)

    def pair(self, phi: LaurentDensity) -> complex:
        if phi.annulus != self.grid.annulus:
            raise DomainError("densities live on different annuli")
        return self.grid.pair(self.values, phi)


# ----------------------------------------------------------------------
# Laurent data of the area functional


@dataclass
class PhiData:
    """Laurent data ``b_k`` (coefficient of ``phi_k``) and the tail density ``psi``."""

    laurent_b: np.ndarray
    psi: LaurentDensity
    origin_b2: float
    area: float
    active: tuple

    def psi_max_modulus(self, n_radii: int = 17, m: int = 256) -> float:
        return self.psi.sup_norm(n_radii, m)


def _disk_grid(f: PowerSeries, n_radial: int, m: int):
    x, w = np.polynomial.legendre.leggauss(n_radial)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w * s * (2 * np.pi / m)
    vals = np.array([boundary_values(f, si, m) for si in s])
    return vals, w


def phi_functional(f: PowerSeries, p: float, annulus: AnnulusSpec, K: int = config.PSI_ORDER, n: int = 0,
                   j: int = 0, n_radial: int = 64, m: int = 1024, zero_tol: float = 1e-12) -> PhiData:
    """Coefficients ``b_k = (p/2) iint_D |f|^{p-2} conj(f) (f - c0)^k`` for ``k = 0..K``.

    ``psi`` collects ``b_k phi_k`` over the indices outside ``j..n`` (those with
    ``|b_k| >= zero_tol``).  ``origin_b2`` is the coefficient of ``zeta^{-2}``
    in the expansion about the origin, which must equal ``(p/2) iint |f|^p``.
    """
    if p <= 1:
        raise DomainError("p must exceed 1")
    if K < 0:
        raise DomainError("expansion order must be >= 0")
    annulus.check_for(f)
    while m < 2 * f.degree + 1:
        m *= 2
    vals, w = _disk_grid(f, n_radial, m)
    mod = np.abs(vals)
    if np.any(mod == 0) and p < 2:
        raise PreconditionError("f vanishes on the quadrature grid")
    weight = (p / 2.0) * mod ** (p - 2) * np.conj(vals) * w[:, None]
    g = vals - annulus.c0
    b = np.empty(K + 1, dtype=complex)
    gk = np.ones_like(g)
    for k in range(K + 1):
        b[k] = np.sum(weight * gk)
        gk = gk * g
    area = float(np.sum(mod**p * w[:, None]))
    origin_b2 = b[1] + annulus.c0 * b[0] if K >= 1 else complex(np.sum(weight * vals))
    active = tuple(k for k in range(K + 1) if (k < j or k > n) and abs(b[k]) >= zero_tol)
    psi = LaurentDensity({(-k - 1, 0): b[k] for k in active}, annulus)
    return PhiData(b, psi, float(origin_b2.real), area, active)


# ----------------------------------------------------------------------
# Neumann series and the resulting map


@dataclass
class NeumannResult:
    rho: GridDensity
    iterations: int
    converged: bool
    residual: float
    trace: list = field(default_factory=list)


def _check_mu(mu: LaurentDensity, cap: float | None) -> float:
    sup = mu.sup_norm()
    if sup >= 1:
        raise PreconditionError(f"sup |mu| = {sup:.3g} is not below 1")
    if cap is not None and sup >= cap:
        raise BudgetError(f"sup |mu| = {sup:.3g} reaches the policy cap {cap}")
    return sup


def neumann_solve(mu: LaurentDensity, tol: float = config.NEUMANN_TOL, kmax: int = config.NEUMANN_KMAX,
                  grid: PolarGrid | None = None, cap: float | None = config.MU_CAP) -> NeumannResult:
    """Fixed point ``rho = mu + mu Pi rho`` by iteration, stopping on the L2 step size."""
    _check_mu(mu, cap)
    grid = grid or grid_for(mu.annulus)
    muv = mu.on_grid(grid)
    rho = muv.copy()
    trace = []
    iterations = 1
    if not np.any(muv):
        return NeumannResult(GridDensity(grid, rho), 1, True, 0.0, [0.0])
    while True:
        new = muv + muv * grid.apply_pi(rho)
        step = grid.l2_norm(new - rho)
        trace.append(step)
        rho = new
        iterations += 1
        if step < tol:
            break
        if iterations >= kmax:
            raise NonConvergenceError(f"Neumann series did not reach tol={tol:g} in {kmax} iterations", trace)
    residual = grid.l2_norm(rho - muv - muv * grid.apply_pi(rho))
    return NeumannResult(GridDensity(grid, rho), iterations, residual < max(tol, 1e-15) * 10, residual, trace)


def _wirtinger(func, w, h: float = 1e-3):
    """Richardson-extrapolated central differences: returns ``(d_w F, dbar_w F)``."""

    def central(step):
        fx = (func(w + step) - func(w - step)) / (2 * step)
        fy = (func(w + 1j * step) - func(w - 1j * step)) / (2 * step)
        return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)

    d1, db1 = central(h)
    d2, db2 = central(h / 2)
    return (4 * d2 - d1) / 3, (4 * db2 - db1) / 3


def verification_points(annulus: AnnulusSpec, n_radii: int = 6, n_angles: int = 12) -> np.ndarray:
    t = annulus.R + np.linspace(0.15, 0.85, n_radii)
    th = 2 * np.pi * (np.arange(n_angles) + 0.37) / n_angles
    return annulus.c0 + (t[:, None] * np.exp(1j * th)[None, :]).ravel()


def disk_points(annulus: AnnulusSpec, n_radii: int = 6, n_angles: int = 12, frac: float = 0.9) -> np.ndarray:
    t = annulus.R * frac * np.linspace(0.1, 1.0, n_radii)
    th = 2 * np.pi * (np.arange(n_angles) + 0.21) / n_angles
    return annulus.c0 + (t[:, None] * np.exp(1j * th)[None, :]).ravel()


@dataclass
class MapRepresentation:
    """``h(w) = w + T rho(w)``; on ``|w - c0| < R`` this is ``w + sum coeffs_k (w - c0)^k``.

    ``laurent_coeffs`` holds the first-order data ``<mu, phi_k>``; the remainder
    ``omega = h - id - sum <mu, phi_k> (w - c0)^k`` is sampled on ``remainder_points``.
    """

    laurent_coeffs: np.ndarray
    coeffs: np.ndarray
    remainder_points: np.ndarray
    remainder_grid: np.ndarray
    annulus: AnnulusSpec
    mu: LaurentDensity
    rho: GridDensity
    residuals: dict

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        v = w - self.annulus.c0
        inside = np.abs(v) < self.annulus.R - 1e-9
        out = np.empty_like(w)
        if np.any(inside):
            out[inside] = w[inside] + np.polynomial.polynomial.polyval(v[inside], self.coeffs)
        if np.any(~inside):
            out[~inside] = w[~inside] + self.rho.grid.cauchy_T(self.rho.values, w[~inside])
        return out if out.ndim else complex(out)

    def remainder_norm(self) -> float:
        return float(np.max(np.abs(self.remainder_grid))) if self.remainder_grid.size else 0.0

    def compose(self, f: PowerSeries) -> PowerSeries:
        """Series of ``h o f`` truncated at ``f``'s degree (``f`` must map into ``|w - c0| < R``).

        Horner evaluation of ``sum coeffs_k (f - c0)^k``; exact term by term when
        ``f(0) = c0`` and geometrically convergent otherwise.
        """
        g = f - self.annulus.c0
        keep = self.coeffs if abs(g.coeffs[0]) > 0 else self.coeffs[: f.degree + 1]
        acc = PowerSeries.constant(keep[-1], f.degree)
        for c in keep[-2::-1]:
            acc = acc * g + c
        return f + acc

    def to_dict(self) -> dict:
        return {
            "coeffs": [[c.real, c.imag] for c in self.coeffs],
            "laurent_coeffs": [[c.real, c.imag] for c in self.laurent_coeffs],
            "residuals": dict(self.residuals),
            "annulus": self.annulus.to_dict(),
        }


def first_order_coeffs(mu: LaurentDensity, count: int) -> np.ndarray:
    return np.array([pairing(mu, basis_fraction(k, mu.annulus)) for k in range(count)])


def build_map(solution: NeumannResult, mu: LaurentDensity, annulus: AnnulusSpec | None = None,
              residual_tol: float = 1e-10, check: bool = True) -> MapRepresentation:
    """Assemble ``h = id + T rho`` from a converged Neumann solution.

    With ``check`` the Beltrami residual ``dbar h - mu d h`` on interior annulus
    points and ``dbar h`` on the disk ``|w - c0| < R`` are measured by
    Richardson-extrapolated central differences of the gridded ``T rho``.
    """
    if not solution.converged:
        raise PreconditionError("Neumann solution did not converge")
    annulus = annulus or mu.annulus
    if annulus != mu.annulus or solution.rho.grid.annulus != annulus:
        raise DomainError("density, solution and annulus disagree")
    grid, rho = solution.rho.grid, solution.rho.values
    coeffs = grid.taylor_coeffs(rho)
    lin = np.zeros_like(coeffs)
    # <u^a conj(u)^b, phi_k> vanishes unless k = a - b - 1
    top = max([a - b for a, b in mu.terms] + [0])
    used = first_order_coeffs(mu, min(len(coeffs), top))
    lin[: len(used)] = used
    pts = disk_points(annulus, 8, 16, frac=(annulus.R - 1.0) / annulus.R)
    v = pts - annulus.c0
    omega = np.polynomial.polynomial.polyval(v, coeffs - lin)
    residuals = {"beltrami": 0.0, "conformal": 0.0}
    if check and not mu.is_zero():
        T = lambda z: grid.cauchy_T(rho, z)  # noqa: E731
        ver = verification_points(annulus)
        d, db = _wirtinger(T, ver)
        residuals["beltrami"] = float(np.max(np.abs(db - mu.evaluate(ver) * (1 + d))))
        dpts = disk_points(annulus)
        _, db0 = _wirtinger(T, dpts)
        residuals["conformal"] = float(np.max(np.abs(db0)))
        worst = max(residuals.values())
        if worst > 10 * residual_tol:
            raise SolverInconsistencyError(f"map residual {worst:.3g} exceeds 10*tol={10 * residual_tol:.3g}")
    return MapRepresentation(lin, coeffs, pts, omega, annulus, mu, solution.rho, residuals)
