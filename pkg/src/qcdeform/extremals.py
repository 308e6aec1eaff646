"""Extremal functions kappa_{n,p}, the coefficient bound and its test harnesses."""

from __future__ import annotations

import cmath
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import config
from .errors import BranchError, DomainError, NormExcessError, PreconditionError, RoucheMarginError
from .norms import bergman_coefficient_norm, hardy_norm
from .series import (
    PowerSeries,
    boundary_values,
    compose_power,
    exp_series,
    is_nonvanishing,
    principal_power,
    reciprocal,
)

INF = math.inf


def hsz_bound(p: float) -> float:
    """``(2/e)^{1 - 1/p}``; ``p = inf`` gives ``2/e``."""
    if p == INF:
        return 2 / math.e
    if not p > 1:
        raise DomainError(f"the bound needs p > 1, got {p}")
    return (2 / math.e) ** (1 - 1 / p)


def _kappa_one(p: float, degree: int) -> PowerSeries:
    """kappa_{1,p} built from [(1+w)^2/2]^{1/p} and exp((1-1/p)(w-1)/(w+1))."""
    pad = [0.0] * max(degree - 2, 0)
    square = PowerSeries(([0.5, 1.0, 0.5] + pad)[: degree + 1], sample_radius_hint=0.999)
    one_plus = PowerSeries(([1.0, 1.0] + pad + [0.0])[: degree + 1])
    mobius = PowerSeries(([-1.0, 1.0] + pad + [0.0])[: degree + 1]) * reciprocal(one_plus)
    weight = 0.0 if p == INF else 1.0 / p
    inner = exp_series(mobius * (1.0 - weight))
    if weight == 0.0:
        return inner
    return principal_power(square, weight) * inner


def _zero_free_radius(f: PowerSeries) -> float:
    for r in (0.999, 0.99, 0.97, 0.95, 0.9, 0.85, 0.8, 0.7, 0.6, 0.5):
        try:
            if is_nonvanishing(f, r)[0]:
                return r
        except PreconditionError:
            continue
    return 0.5


def series_kappa(n: int, p: float, degree: int = config.DEFAULT_DEGREE) -> PowerSeries:
    """Truncated series of kappa_{n,p}(z) = kappa_{1,p}(z^n).

    Truncations of kappa have spurious zeros near the boundary point where the
    singular factor decays, so ``sample_radius_hint`` is set to the largest
    radius on which the truncation itself is zero free.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if p != INF and not p > 1:
        raise DomainError(f"kappa_(n,p) needs p > 1, got {p}")
    if degree < n:
        raise DomainError("truncation degree must be >= n")
    base = _kappa_one(p, -(-degree // n))
    out = compose_power(base, n).truncate(degree)
    return out.with_hint(_zero_free_radius(out))


@dataclass(frozen=True)
class ExtremalSpec:
    """The rotated extremal ``eps2 * kappa_{n,p}(eps1 z)``."""

    n: int
    p: float
    eps1: complex = 1.0
    eps2: complex = 1.0

    def __post_init__(self):
        for e in (self.eps1, self.eps2):
            if abs(abs(e) - 1.0) > 1e-14:
                raise ValueError("rotations must be unimodular")

    def series(self, degree: int = config.DEFAULT_DEGREE) -> PowerSeries:
        k = series_kappa(self.n, self.p, degree)
        rot = self.eps2 * self.eps1 ** np.arange(degree + 1)
        return PowerSeries(k.coeffs * rot, k.sample_radius_hint)


@dataclass(frozen=True)
class BoundReport:
    functional_value: float
    bound: float
    margin: float
    achiever_is_extremal: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def functional_J(f: PowerSeries, n: int) -> complex:
    """``J_n(f) = c_n``."""
    if not 0 <= n <= f.degree:
        raise DomainError(f"coefficient index {n} outside 0..{f.degree}")
    return complex(f.coeffs[n])


def functional_I(f: PowerSeries, n: int) -> float:
    """``max_{1<=m<=n} |c_n(f(z^m))|``, evaluated through the divisors of ``n``.

    ``c_n(f(z^m)) = c_{n/m}(f)`` when ``m | n`` and vanishes otherwise.
    """
    if n < 2:
        raise DomainError("I_n is defined for n >= 2")
    best = 0.0
    for m in range(1, n + 1):
        if n % m == 0 and n // m <= f.degree:
            best = max(best, abs(f.coeffs[n // m]))
    return best


def functional_I_by_composition(f: PowerSeries, n: int) -> float:
    """Literal evaluation of ``I_n`` by composing ``f(z^m)`` (reference path)."""
    vals = []
    for m in range(1, n + 1):
        g = compose_power(f, m)
        vals.append(abs(g.coeffs[n]) if n <= g.degree else 0.0)
    return max(vals)


# ----------------------------------------------------------------------
# Parseval comparison


def parseval_comparison(p: float, degree: int = 128) -> dict:
    """``|c_1|^2`` and the tail ``sum_{n=2}^N |c_n|^2`` of kappa_{1,p}.

    ``inequality_holds`` is the chain ``tail < 0.5 < c1_sq``. For ``p < 2`` the
    report also carries the H^2 and H^p norms of kappa_{1,p} computed by
    quadrature of its closed-form boundary values.
    """
    k = series_kappa(1, p, degree)
    mags = np.abs(k.coeffs) ** 2
    c1_sq, tail_sq = float(mags[1]), float(mags[2:].sum())
    out = {
        "p": p,
        "degree": degree,
        "c1_sq": c1_sq,
        "tail_sq": tail_sq,
        "inequality_holds": bool(tail_sq < 0.5 < c1_sq),
    }
    if p != INF and p < 2:
        out["norm_h2"] = kappa_boundary_norm(p, 2.0)
        out["norm_hp"] = kappa_boundary_norm(p, p)
        out["h2_exceeds_hp"] = bool(out["norm_h2"] > out["norm_hp"])
    return out


def kappa_boundary_norm(p: float, q: float, m: int = 1 << 16) -> float:
    """``||kappa_{1,p}||_{H^q}`` by midpoint quadrature of the boundary modulus.

    On the unit circle ``|kappa_{1,p}|^p = 1 + cos t`` because the exponential
    factor is unimodular there, so ``|kappa|^q = (1 + cos t)^{q/p}``.
    """
    t = 2 * np.pi * (np.arange(m) + 0.5) / m
    return float(np.mean((1 + np.cos(t)) ** (q / p)) ** (1 / q))


# ----------------------------------------------------------------------
# random zero-free samples


def sample_nonvanishing(seed: int, p: float, style: str = "exp_of_series", degree: int = config.DEFAULT_DEGREE,
                        max_tries: int = 50) -> PowerSeries:
    """Deterministic pseudo-random zero-free series with ``||f||_p <= 1``.

    ``exp_of_series``: ``exp(g)`` for a random polynomial ``g`` of degree <= 6.
    ``zero_free_polynomial``: product of factors ``(1 - z/z_k)`` with ``|z_k| > 1``.
    The result is rescaled to a random target norm in ``[0.3, 1]``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        if style == "exp_of_series":
            d = int(rng.integers(1, 7))
            g = np.zeros(degree + 1, dtype=complex)
            scale = 0.8 / np.arange(1, d + 1) ** 0.5
            g[1 : d + 1] = (rng.normal(size=d) + 1j * rng.normal(size=d)) * scale / math.sqrt(2)
            g[0] = 1j * rng.uniform(-np.pi, np.pi)
            f = exp_series(PowerSeries(g))
        elif style == "zero_free_polynomial":
            d = int(rng.integers(1, min(8, degree) + 1))
            mod = 1.0 + rng.exponential(0.8, size=d) + 0.02
            roots = mod * np.exp(1j * rng.uniform(0, 2 * np.pi, size=d))
            poly = np.array([1.0 + 0j])
            for zk in roots:
                poly = np.convolve(poly, [1.0, -1.0 / zk])
            f = PowerSeries(np.concatenate([poly, np.zeros(degree + 1 - poly.size)])[: degree + 1])
        else:
            raise ValueError(f"unknown style {style!r}")
        try:
            ok, _ = is_nonvanishing(f, 0.999)
        except PreconditionError:
            ok = False
        if not ok:
            continue
        target = rng.uniform(0.3, 1.0)
        norm = hardy_norm(f, p).value
        return PowerSeries(f.coeffs * (target / norm))
    raise RuntimeError("could not draw a zero-free sample")


# ----------------------------------------------------------------------
# bound verification


def _check_admissible(f: PowerSeries, p: float, norm_tol: float, check_radius: float | None):
    r = min(0.999, f.sample_radius_hint) if check_radius is None else check_radius
    ok, winding = is_nonvanishing(f, r)
    if not ok:
        raise BranchError(f"f vanishes in |z| <= {r} (winding {winding})")
    norm = hardy_norm(f, p).value
    if norm > 1 + norm_tol:
        raise NormExcessError(f"||f||_{p} = {norm:.12g} exceeds 1 + {norm_tol:g}")


def match_extremal(f: PowerSeries, n: int, p: float, tol: float = config.EXTREMAL_MATCH_TOL) -> bool:
    """True iff ``f`` equals some ``eps2 kappa_{n,p}(eps1 z)`` coefficientwise within ``tol``.

    ``eps2`` is fitted from the phase of ``c_0``; ``eps1^n`` from the phase of
    ``c_n``; each of the ``n`` roots for ``eps1`` is tried.
    """
    k = series_kappa(n, p, f.degree).coeffs
    c = f.coeffs
    if abs(c[0]) == 0 or abs(c[n]) == 0:
        return False
    eps2 = c[0] / abs(c[0]) * (abs(k[0]) / k[0])
    ratio = c[n] / (eps2 * k[n])
    base = cmath.phase(ratio)
    powers = np.arange(f.degree + 1)
    for j in range(n):
        eps1 = cmath.exp(1j * (base + 2 * np.pi * j) / n)
        if np.max(np.abs(c - eps2 * eps1**powers * k)) < tol:
            return True
    return False


def verify_bound(f: PowerSeries, n: int, p: float, norm_tol: float = config.BOUND_TOL,
                 check_radius: float | None = None) -> BoundReport:
    """Compare ``|c_n|`` against ``(2/e)^{1-1/p}`` for an admissible ``f``.

    Admissibility is zero-freeness on ``|z| <= min(0.999, hint)`` and
    ``||f||_p <= 1 + norm_tol``; each failure raises its own error type.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    _check_admissible(f, p, norm_tol, check_radius)
    value = abs(functional_J(f, n)) if n <= f.degree else 0.0
    bound = hsz_bound(p)
    margin = bound - value
    extremal = margin < config.EXTREMAL_MARGIN_TOL and match_extremal(f, n, p)
    return BoundReport(value, bound, margin, bool(extremal))


def brown_check(f: PowerSeries, p: float, norm_tol: float = config.BOUND_TOL,
                check_radius: float | None = None) -> BoundReport:
    """The ``n = 1`` case of :func:`verify_bound`."""
    return verify_bound(f, 1, p, norm_tol=norm_tol, check_radius=check_radius)


def sweep_margins(ps, ns, count: int, seed: int = 0, style: str = "exp_of_series", degree: int = 24) -> list[dict]:
    """Bound margins for ``count`` seeded samples per ``(p, n)`` cell.

    Sample ``i`` of a cell uses seed ``seed + i``, so cells share the same
    underlying draws for a given ``p``.  Up to ``config.thread_cap()`` values
    of ``p`` are processed concurrently; row order does not depend on it.
    """
    ps, ns = list(ps), list(ns)
    if not ps or not ns:
        raise DomainError("empty p or n list")

    def cell(p):
        samples = [sample_nonvanishing(seed + i, p, style, degree) for i in range(count)]
        bound = float(hsz_bound(p))
        out = []
        for n in ns:
            for i, f in enumerate(samples):
                cn = float(abs(f.coeffs[n])) if n <= f.degree else 0.0
                out.append({"seed": seed + i, "p": float(p), "n": int(n), "c_n_abs": cn, "bound": bound,
                            "margin": float(bound - cn)})
        return out

    with ThreadPoolExecutor(max_workers=min(config.thread_cap(), len(ps))) as pool:
        return [row for rows in pool.map(cell, ps) for row in rows]


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={config.CSV_SCHEMA_VERSION}\n")
    cols = ["seed", "p", "n", "c_n_abs", "bound", "margin"]
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in cols})
    return buf.getvalue()


# ----------------------------------------------------------------------
# Bergman A_2 perturbation


def random_zero_free_polynomial(seed: int, max_degree: int = 8, min_root_modulus: float = 1.5) -> PowerSeries:
    """Seeded polynomial of degree ``1..max_degree`` with all roots in ``|z| >= min_root_modulus``.

    The roots have moduli ``min_root_modulus + Exp(1)`` and uniform arguments;
    the result is scaled to an ``A_2`` norm drawn uniformly from ``[0.5, 1]``.
    """
    if min_root_modulus <= 1:
        raise DomainError("roots must lie outside the closed unit disk")
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, max_degree + 1))
    roots = (min_root_modulus + rng.exponential(1.0, size=d)) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=d))
    poly = np.array([1.0 + 0j])
    for zk in roots:
        poly = np.convolve(poly, [1.0, -1.0 / zk])
    f = PowerSeries(poly)
    return PowerSeries(poly * (rng.uniform(0.5, 1.0) / bergman_coefficient_norm(f)))


def bergman_perturb(p_n: PowerSeries, eps: float, norm_tol: float = 1e-12) -> dict:
    """Rouche perturbation ``P = (1-eps) c_0 + c_1 z + ... + c_N z^N + eps z^{N+1}``.

    The ``A_2`` norm after the perturbation satisfies
    ``||P||^2 = ||p_N||^2 - eps (2 - eps) |c_0|^2 + eps^2 / (N + 2)``.
    """
    c = p_n.coeffs
    if c[0] == 0:
        raise PreconditionError("p_N needs c_0 != 0")
    ok, _ = is_nonvanishing(p_n, 1.0)
    if not ok:
        raise BranchError("p_N must be zero free on the closed disk")
    before = bergman_coefficient_norm(p_n)
    if before > 1 + norm_tol:
        raise NormExcessError(f"||p_N||_A2 = {before:.12g} > 1")
    n = p_n.degree
    if eps == 0:
        return {"P": p_n, "norm_before": before, "norm_after": before, "zero_free": True}
    m = 4096
    t = 2 * np.pi * np.arange(m) / m
    pert = np.abs(-eps * c[0] + eps * np.exp(1j * (n + 1) * t))
    base = np.abs(boundary_values(p_n, 1.0, m))
    if not pert.max() < base.min():
        raise RoucheMarginError(
            f"eps={eps:g} too large: max|p_eps| = {pert.max():.6g} >= min|p_N| = {base.min():.6g}"
        )
    out = np.concatenate([c, [eps]])
    out[0] = (1 - eps) * c[0]
    big_p = PowerSeries(out)
    zero_free, _ = is_nonvanishing(big_p, 1.0)
    return {"P": big_p, "norm_before": before, "norm_after": bergman_coefficient_norm(big_p),
            "zero_free": bool(zero_free)}
