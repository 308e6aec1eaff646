"""Truncated power series on the unit disk.

A :class:`PowerSeries` stores ``c_0 .. c_N`` of ``f(z) = sum c_n z^n`` with an
explicit truncation degree ``N``. Binary operations truncate to the smaller of
the two operand degrees, so coefficients that are known stay exact and nothing
beyond the common order is invented.

Branch-sensitive operations (logarithm and real powers) are anchored at the
principal value of ``log c_0`` and continued by coefficient recurrences, never
by unwrapping sampled arguments.
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import BranchError, ContourError, DegenerateInputError, DomainError, PreconditionError

_EVAL_SLACK = 1e-12


def _as_coeffs(values) -> np.ndarray:
    arr = np.array(values, dtype=complex).ravel()
    if arr.size == 0:
        raise ValueError("a power series needs at least one coefficient")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PowerSeries:
    """Truncated Taylor series ``sum_{n<=N} c_n z^n``.

    ``sample_radius_hint`` is the radius used whenever an operation needs to
    sample the function on a circle (zero-freeness checks before a branch is
    taken, for instance).
    """

    coeffs: np.ndarray
    sample_radius_hint: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))
        r = float(self.sample_radius_hint)
        if not 0.0 < r <= 1.0:
            raise ValueError("sample_radius_hint must lie in (0, 1]")
        object.__setattr__(self, "sample_radius_hint", r)

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, c, degree: int = 0, **kw) -> "PowerSeries":
        out = np.zeros(degree + 1, dtype=complex)
        out[0] = c
        return cls(out, **kw)

    @classmethod
    def identity(cls, degree: int = 1, **kw) -> "PowerSeries":
        out = np.zeros(max(degree, 1) + 1, dtype=complex)
        out[1] = 1.0
        return cls(out, **kw)

    @classmethod
    def monomial(cls, k: int, degree: int | None = None, coeff=1.0, **kw) -> "PowerSeries":
        degree = k if degree is None else degree
        out = np.zeros(degree + 1, dtype=complex)
        out[k] = coeff
        return cls(out, **kw)

    def _new(self, coeffs, hint=None) -> "PowerSeries":
        return PowerSeries(coeffs, self.sample_radius_hint if hint is None else hint)

    # basic accessors --------------------------------------------------
    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __len__(self):
        return self.coeffs.size

    def __getitem__(self, n):
        return self.coeffs[n]

    def __repr__(self):
        head = ", ".join(f"{c:.6g}" for c in self.coeffs[:4])
        more = ", ..." if self.degree > 3 else ""
        return f"PowerSeries([{head}{more}], degree={self.degree})"

    def truncate(self, degree: int) -> "PowerSeries":
        if degree < 0:
            raise ValueError("degree must be >= 0")
        out = np.zeros(degree + 1, dtype=complex)
        m = min(degree, self.degree) + 1
        out[:m] = self.coeffs[:m]
        return self._new(out)

    def with_hint(self, r: float) -> "PowerSeries":
        return PowerSeries(self.coeffs, r)

    def allclose(self, other: "PowerSeries", atol=1e-12) -> bool:
        m = min(self.degree, other.degree) + 1
        return bool(np.allclose(self.coeffs[:m], other.coeffs[:m], rtol=0, atol=atol))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    # arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, PowerSeries):
            return other
        return PowerSeries.constant(other, self.degree, sample_radius_hint=self.sample_radius_hint)

    def __add__(self, other):
        other = self._coerce(other)
        n = min(self.degree, other.degree) + 1
        return self._new(self.coeffs[:n] + other.coeffs[:n])

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, PowerSeries):
            return self._new(self.coeffs * complex(other))
        n = min(self.degree, other.degree) + 1
        return self._new(np.convolve(self.coeffs[:n], other.coeffs[:n])[:n])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, PowerSeries):
            return self._new(self.coeffs / complex(other))
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return self._coerce(other) * reciprocal(self)

    def __pow__(self, k: int):
        if isinstance(k, float) and k.is_integer() and k >= 0:
            k = int(k)
        if not isinstance(k, (int, np.integer)) or k < 0:
            return principal_power(self, float(k))
        result = PowerSeries.constant(1.0, self.degree, sample_radius_hint=self.sample_radius_hint)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __call__(self, z):
        return eval_series(self, z)

    # calculus ---------------------------------------------------------
    def derivative(self) -> "PowerSeries":
        if self.degree == 0:
            return self._new([0.0])
        n = np.arange(1, self.degree + 1)
        return self._new(self.coeffs[1:] * n)

    def integral(self, constant=0.0) -> "PowerSeries":
        n = np.arange(1, self.degree + 2)
        return self._new(np.concatenate([[constant], self.coeffs / n]))

    def compose(self, inner: "PowerSeries") -> "PowerSeries":
        """Series of ``self(inner(z))``; ``inner`` must have zero constant term."""
        if abs(inner.coeffs[0]) != 0.0:
            raise PreconditionError("inner series of a composition must vanish at 0")
        deg = min(self.degree, inner.degree) if inner.degree > 0 else self.degree
        inner = inner.truncate(deg)
        acc = PowerSeries.constant(self.coeffs[-1], deg)
        for c in self.coeffs[-2::-1]:
            acc = acc * inner + c
        return self._new(acc.truncate(deg).coeffs)

    # sampling ---------------------------------------------------------
    def sample(self, r: float = 1.0, m: int | None = None) -> "BoundarySamples":
        if m is None:
            m = _default_nodes(self.degree)
        return BoundarySamples(r, boundary_values(self, r, m))

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs],
            "sample_radius_hint": self.sample_radius_hint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PowerSeries":
        coeffs = [complex(re, im) for re, im in data["coeffs"]]
        if len(coeffs) != int(data["degree"]) + 1:
            raise ValueError("degree field does not match coefficient count")
        return cls(coeffs, data.get("sample_radius_hint", 1.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PowerSeries":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class BoundarySamples:
    """Values ``f(r e^{2 pi i k / M})`` for ``k = 0 .. M-1``; ``M`` a power of two."""

    radius: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex).ravel()
        m = vals.size
        if m < 1 or m & (m - 1):
            raise ValueError("number of samples must be a power of two")
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("radius must lie in (0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.m) / self.m

    def to_dict(self) -> dict:
        return {"radius": self.radius, "values": [[float(v.real), float(v.imag)] for v in self.values]}

    @classmethod
    def from_dict(cls, data: dict) -> "BoundarySamples":
        return cls(data["radius"], [complex(a, b) for a, b in data["values"]])


def _default_nodes(degree: int, minimum: int = 256) -> int:
    m = minimum
    while m < 4 * (degree + 1):
        m *= 2
    return m


def boundary_values(f: PowerSeries, r: float, m: int) -> np.ndarray:
    """Values of ``f`` at ``r e^{2 pi i k/m}`` via one FFT (folding when ``m <= N``)."""
    scaled = f.coeffs * r ** np.arange(f.degree + 1)
    if f.degree >= m:
        folded = np.zeros(m, dtype=complex)
        np.add.at(folded, np.arange(f.degree + 1) % m, scaled)
        scaled = folded
    return np.fft.ifft(scaled, n=m) * m


def eval_series(f: PowerSeries, z):
    """Horner evaluation; ``|z| <= 1`` is required."""
    z_arr = np.asarray(z, dtype=complex)
    if np.any(np.abs(z_arr) > 1.0 + _EVAL_SLACK):
        raise DomainError("power series are evaluated only on the closed unit disk")
    acc = np.zeros_like(z_arr)
    for c in f.coeffs[::-1]:
        acc = acc * z_arr + c
    return complex(acc) if acc.ndim == 0 else acc


def coeffs_from_boundary(s: BoundarySamples, n: int) -> PowerSeries:
    """Recover ``c_0 .. c_n`` from samples on the circle of radius ``s.radius``."""
    if 2 * n + 1 > s.m:
        raise PreconditionError(f"aliasing guard: need M >= 2N+1, got M={s.m}, N={n}")
    c = np.fft.fft(s.values)[: n + 1] / s.m
    c = c / s.radius ** np.arange(n + 1)
    return PowerSeries(c, s.radius)


# ----------------------------------------------------------------------
# series algebra


def _require_c0(f: PowerSeries, what: str):
    if f.is_zero():
        raise DegenerateInputError(f"{what}: the zero series has no branch")
    if f.coeffs[0] == 0:
        raise DegenerateInputError(f"{what}: c_0 = 0")


def reciprocal(f: PowerSeries) -> PowerSeries:
    """Series of ``1/f``; needs ``c_0 != 0``."""
    _require_c0(f, "reciprocal")
    a = f.coeffs
    out = np.zeros_like(a)
    out[0] = 1.0 / a[0]
    for n in range(1, a.size):
        out[n] = -np.dot(a[1 : n + 1], out[n - 1 :: -1][:n]) / a[0]
    return f._new(out)


def exp_series(g: PowerSeries) -> PowerSeries:
    """Series of ``exp(g)`` via ``n e_n = sum_k k g_k e_{n-k}``."""
    a = g.coeffs
    out = np.zeros_like(a)
    out[0] = cmath.exp(a[0])
    k = np.arange(a.size)
    ka = k * a
    for n in range(1, a.size):
        out[n] = np.dot(ka[1 : n + 1], out[n - 1 :: -1][:n]) / n
    return g._new(out)


def _check_branch(f: PowerSeries, what: str):
    _require_c0(f, what)
    ok, winding = is_nonvanishing(f, f.sample_radius_hint)
    if not ok:
        raise BranchError(
            f"{what}: series has {winding} zero(s) in |z| <= {f.sample_radius_hint}; no single-valued branch"
        )


def log_series(f: PowerSeries) -> PowerSeries:
    """Principal logarithm of a zero-free series."""
    _check_branch(f, "log_series")
    a = f.coeffs
    out = np.zeros_like(a)
    out[0] = cmath.log(a[0])
    k = np.arange(a.size)
    for n in range(1, a.size):
        acc = n * a[n] - np.dot(k[1:n] * out[1:n], a[n - 1 : 0 : -1])
        out[n] = acc / (n * a[0])
    return f._new(out)


def principal_power(f: PowerSeries, alpha: float) -> PowerSeries:
    """Series of ``f^alpha`` on the principal branch fixed at ``c_0``.

    Uses the J.C.P. Miller recurrence
    ``n c_0 p_n = sum_{k=1}^n ((alpha + 1) k - n) c_k p_{n-k}``.
    A nonnegative integer ``alpha`` needs no branch: the exact polynomial power
    of degree ``alpha * N`` is returned.
    """
    if float(alpha).is_integer() and alpha >= 0:
        if f.is_zero() and alpha > 0:
            raise DegenerateInputError("principal_power: the zero series")
        out = np.ones(1, dtype=complex)
        for _ in range(int(alpha)):
            out = np.convolve(out, f.coeffs)
        return f._new(out)
    _check_branch(f, "principal_power")
    a = f.coeffs
    out = np.zeros_like(a)
    out[0] = cmath.exp(alpha * cmath.log(a[0]))
    for n in range(1, a.size):
        k = np.arange(1, n + 1)
        out[n] = np.dot(((alpha + 1) * k - n) * a[1 : n + 1], out[n - 1 :: -1][:n]) / (n * a[0])
    return f._new(out)


def compose_power(f: PowerSeries, m: int) -> PowerSeries:
    """Series of ``f(z^m)``; truncation degree becomes ``m N``."""
    if m < 1:
        raise DomainError("compose_power needs m >= 1")
    out = np.zeros(m * f.degree + 1, dtype=complex)
    out[::m] = f.coeffs
    return f._new(out)


def is_nonvanishing(f: PowerSeries, r: float, m: int | None = None,
                    rtol: float = config.ZERO_CONTOUR_RTOL) -> tuple[bool, int]:
    """Argument-principle test on ``|z| = r``.

    Returns ``(winding == 0, winding)``. The sampling is refined until every
    argument increment is below ``pi/4``. A zero on (or numerically on) the
    contour raises :class:`ContourError` carrying the offending angle.
    """
    if not 0.0 < r <= 1.0:
        raise DomainError("radius must lie in (0, 1]")
    if f.is_zero():
        raise DegenerateInputError("is_nonvanishing: the zero series")
    if f.degree == 0:
        return True, 0
    m = m or _default_nodes(f.degree, 1024)
    for _ in range(8):
        vals = boundary_values(f, r, m)
        mod = np.abs(vals)
        k = int(np.argmin(mod))
        if mod[k] <= rtol * mod.max():
            raise ContourError(
                f"zero too close to contour |z|={r} near angle {2 * np.pi * k / m:.6g}", angle=2 * np.pi * k / m
            )
        steps = np.angle(np.roll(vals, -1) / vals)
        if np.max(np.abs(steps)) < np.pi / 4:
            winding = int(round(steps.sum() / (2 * np.pi)))
            return winding == 0, winding
        m *= 4
    raise ContourError(f"argument increments unresolved on |z|={r}; a zero is nearly on the contour")


def sup_modulus(f: PowerSeries, r: float = 1.0, m: int | None = None) -> float:
    """Maximum of ``|f|`` over a fine grid on ``|z| = r`` (maximum principle)."""
    m = m or _default_nodes(f.degree, 2048)
    return float(np.abs(boundary_values(f, r, m)).max())
