"""Coefficient deformation ``f -> h o f`` by a quasiconformal map conformal on ``f(D)``.

The Beltrami coefficient is sought in the form

    mu = sum_{k=j}^{n} xi_k conj(phi_k) + tau conj(psi)

on the annulus, where ``psi`` is the tail of the area functional's Laurent
expansion (``integral_ops.phi_functional``).  The real unknowns
``x = (Re xi_j, Im xi_j, ..., Re xi_n, Im xi_n, tau)`` are found by Newton's
method on the nonlinear map ``W(x)`` that returns the achieved coefficient
shifts and the achieved change of ``iint_D |f|^p``.

First-order facts used for the starting Jacobian (exact as ``x -> 0``):

* ``h(w) = w + sum beta_k (w - c0)^k`` near ``f(D)`` with
  ``beta_k = <mu, phi_k>``, so ``beta_k = -xi_k r_k^2`` for ``k <= n`` and
  ``beta_k = -tau conj(b_k) r_k^2`` for ``k > n``;
* ``c_i(h o f) - c_i(f) = sum_l beta_l [(f - c0)^l]_i``;
* ``A(h o f) - A(f) = 2 Re sum_l beta_l b_l``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import config
from .errors import (BudgetError, ContractViolation, DegenerateInputError, DomainError, NonConvergenceError,
                     PreconditionError, ProblemStructureError)
from .integral_ops import (AnnulusSpec, LaurentDensity, MapRepresentation, _wirtinger, basis_fraction, build_map,
                           cauchy_T, default_grid, gram_r2, neumann_solve, pairing, phi_functional)
from .norms import area_integral, hardy_norm
from .series import PowerSeries, is_nonvanishing


@dataclass
class DeformationProblem:
    f: PowerSeries
    p: float
    n: int
    d: np.ndarray
    a: float = 0.0
    eps_budget: float = 1e-2
    gap: bool = False
    j: int = 0
    K: int = config.PSI_ORDER
    c0: complex | None = None
    R: float | None = None
    mu_cap: float | None = config.MU_CAP

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=complex)
        if self.p <= 1:
            raise DomainError("p must exceed 1")
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if self.d.shape != (self.n + 1,):
            raise DomainError(f"d must hold n+1 = {self.n + 1} entries")
        if not 0 <= self.j <= self.n:
            raise DomainError("j must lie in 0..n")
        if self.K <= self.n:
            raise DomainError("expansion order K must exceed n")
        slack = self.eps_budget * (1 + 1e-12)  # a target of exactly eps may round just above it
        if np.linalg.norm(self.d) > slack or abs(self.a) > slack:
            raise BudgetError(f"targets exceed the budget eps={self.eps_budget:g}")
        if not np.any(np.abs(self.f.coeffs[self.n + 1 :]) > 1e-12):
            raise DegenerateInputError(f"f is a polynomial of degree <= n = {self.n}")
        r = min(0.999, self.f.sample_radius_hint)
        ok, winding = is_nonvanishing(self.f, r)
        if not ok:
            raise PreconditionError(f"f vanishes inside |z| <= {r} (winding {winding})")
        if self.c0 is None:
            self.c0 = complex(self.f.coeffs[0])

    @property
    def eps(self) -> float:
        return max(float(np.linalg.norm(self.d)), abs(self.a))

    @property
    def indices(self) -> range:
        return range(self.j, self.n + 1)

    @cached_property
    def annulus(self) -> AnnulusSpec:
        if self.R is None:
            return AnnulusSpec.for_series(self.f, self.c0)
        ann = AnnulusSpec(self.c0, self.R)
        ann.check_for(self.f)
        return ann

    @cached_property
    def phi(self):
        return phi_functional(self.f, self.p, self.annulus, self.K, self.n, self.j if self.gap else 0)

    @cached_property
    def r2(self) -> np.ndarray:
        return np.array([gram_r2(k, self.annulus) for k in range(self.K + 1)])

    @cached_property
    def powers(self) -> np.ndarray:
        """``[(f - c0)^l]_i`` for ``l = 0..K`` and ``i = 0..n``."""
        g = self.f - self.c0
        out = np.empty((self.K + 1, self.n + 1), dtype=complex)
        acc = PowerSeries.constant(1.0, self.f.degree)
        for l in range(self.K + 1):
            out[l] = acc.coeffs[: self.n + 1]
            acc = acc * g
        return out

    @cached_property
    def area(self) -> float:
        return area_integral(self.f, self.p)

    @cached_property
    def hardy(self) -> float:
        return hardy_norm(self.f, self.p).value

    @property
    def grid(self):
        return default_grid(self.annulus.c0, self.annulus.R)

    def to_dict(self) -> dict:
        return {
            "f": self.f.to_dict(),
            "p": self.p,
            "n": self.n,
            "d": [[c.real, c.imag] for c in self.d],
            "a": self.a,
            "eps_budget": self.eps_budget,
            "gap": self.gap,
            "j": self.j,
            "K": self.K,
            "annulus": self.annulus.to_dict(),
        }


def _split(x: np.ndarray, problem: DeformationProblem):
    xi = x[:-1:2] + 1j * x[1:-1:2]
    return xi, float(x[-1])


def ansatz_mu(xi, tau: float, problem: DeformationProblem, enforce_cap: bool = True) -> LaurentDensity:
    """``sum xi_k conj(phi_k) + tau conj(psi)`` on the annulus; ``xi`` is indexed from ``j``."""
    xi = np.asarray(xi, dtype=complex)
    if xi.shape != (len(problem.indices),):
        raise DomainError("xi must hold one entry per index j..n")
    ann = problem.annulus
    terms = {(0, -k - 1): c for k, c in zip(problem.indices, xi) if c != 0}
    mu = LaurentDensity(terms, ann)
    if tau != 0:
        mu = mu + float(tau) * problem.phi.psi.conj()
    if enforce_cap and problem.mu_cap is not None:
        sup = mu.sup_norm()
        if sup >= problem.mu_cap:
            raise BudgetError(f"sup |mu| = {sup:.4g} reaches the policy cap {problem.mu_cap}")
    return mu


def assemble_targets(problem: DeformationProblem) -> np.ndarray:
    """Real target vector of length ``2(n-j)+3``.

    Default mode: ``(Re d_0, Im d_0, ..., Re d_n, Im d_n, a)``.  Gap mode
    replaces the ``d_j`` slot by the constraint ``sum_k xi_k b_k r_k^2 = 0``,
    whose target is zero.
    """
    d = problem.d[problem.j :].copy()
    if problem.gap:
        d[0] = 0.0
    y = np.empty(2 * len(d) + 1)
    y[:-1:2], y[1:-1:2], y[-1] = d.real, d.imag, problem.a
    return y


def _pack(coeff_part: np.ndarray, area: float) -> np.ndarray:
    y = np.empty(2 * coeff_part.size + 1)
    y[:-1:2], y[1:-1:2], y[-1] = coeff_part.real, coeff_part.imag, area
    return y


def _constraint(xi: np.ndarray, problem: DeformationProblem) -> complex:
    idx = np.array(list(problem.indices))
    return complex(-np.sum(xi * problem.phi.laurent_b[idx] * problem.r2[idx]))


@dataclass
class _Evaluation:
    y: np.ndarray
    mu: LaurentDensity
    h: MapRepresentation | None
    f_star: PowerSeries
    area_delta: float


def _evaluate(x: np.ndarray, problem: DeformationProblem, check: bool = False, enforce_cap: bool = True) -> _Evaluation:
    xi, tau = _split(x, problem)
    mu = ansatz_mu(xi, tau, problem, enforce_cap)
    if mu.is_zero():
        f_star, h = problem.f, None
        dc = np.zeros(problem.n + 1, dtype=complex)
        area_delta = 0.0
    else:
        sol = neumann_solve(mu, grid=problem.grid, cap=problem.mu_cap if enforce_cap else 1.0)
        h = build_map(sol, mu, problem.annulus, check=check)
        f_star = h.compose(problem.f)
        dc = f_star.coeffs[: problem.n + 1] - problem.f.coeffs[: problem.n + 1]
        area_delta = area_integral(f_star, problem.p) - problem.area
    part = dc[problem.j :].copy()
    if problem.gap:
        part[0] = _constraint(xi, problem)
    return _Evaluation(_pack(part, area_delta), mu, h, f_star, area_delta)


def forward_map_W(x, problem: DeformationProblem) -> np.ndarray:
    """Achieved targets for unknowns ``x`` by the full nonlinear solve (no linearization)."""
    return _evaluate(np.asarray(x, dtype=float), problem).y


def linear_jacobian(problem: DeformationProblem) -> np.ndarray:
    """``W'(0)`` from the first-order formulas in the module docstring."""
    b, r2, P = problem.phi.laurent_b, problem.r2, problem.powers
    K = problem.K

    def effect(beta: np.ndarray, xi: np.ndarray) -> np.ndarray:
        dc = beta @ P
        part = dc[problem.j :].copy()
        if problem.gap:
            part[0] = _constraint(xi, problem)
        return _pack(part, 2.0 * float(np.real(np.sum(beta * b))))

    cols = []
    nidx = len(problem.indices)
    for pos, k in enumerate(problem.indices):
        for unit in (1.0, 1j):
            beta = np.zeros(K + 1, dtype=complex)
            beta[k] = -unit * r2[k]
            xi = np.zeros(nidx, dtype=complex)
            xi[pos] = unit
            cols.append(effect(beta, xi))
    beta = np.zeros(K + 1, dtype=complex)
    for k in problem.phi.active:
        beta[k] = -np.conj(b[k]) * r2[k]
    cols.append(effect(beta, np.zeros(nidx, dtype=complex)))
    return np.array(cols).T


def kappa_constant(problem: DeformationProblem) -> float:
    """First-order area change per unit ``tau``: ``-2 sum_{active} |b_k|^2 r_k^2``."""
    b = problem.phi.laurent_b
    return float(-2.0 * sum(abs(b[k]) ** 2 * problem.r2[k] for k in problem.phi.active))


def _check_structure(problem: DeformationProblem, J: np.ndarray):
    if problem.gap and abs(problem.phi.laurent_b[problem.j]) < 1e-12:
        raise ProblemStructureError(f"b_{problem.j} vanishes; the constraint row is degenerate")
    if not problem.phi.active or kappa_constant(problem) == 0:
        raise ProblemStructureError("no active tail coefficients b_k; the area target cannot be reached")
    if np.linalg.cond(J) > 1e14:
        raise ProblemStructureError("first-order Jacobian is numerically singular")


@dataclass
class DeformationResult:
    xi: np.ndarray
    tau: float
    mu: LaurentDensity
    h: MapRepresentation | None
    f_star: PowerSeries
    diagnostics: dict
    converged: bool = True
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "xi": [[c.real, c.imag] for c in self.xi],
            "tau": self.tau,
            "mu": self.mu.to_dict(),
            "map": self.h.to_dict() if self.h is not None else None,
            "f_star": self.f_star.to_dict(),
            "diagnostics": self.diagnostics,
            "converged": self.converged,
            "trace": list(self.trace),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _result(x: np.ndarray, ev: _Evaluation, problem: DeformationProblem, iterations: int, trace, converged=True):
    xi, tau = _split(x, problem)
    dc = ev.f_star.coeffs[: problem.n + 1] - problem.f.coeffs[: problem.n + 1]
    diagnostics = {
        "coeff_residuals": [float(v) for v in np.abs(dc - problem.d)],
        "area_norm_delta": float(ev.area_delta),
        "hardy_norm_delta": float(hardy_norm(ev.f_star, problem.p).value - problem.hardy),
        "newton_iterations": int(iterations),
        "mu_sup_norm": float(ev.mu.sup_norm()),
        "map_residuals": dict(ev.h.residuals) if ev.h is not None else {"beltrami": 0.0, "conformal": 0.0},
    }
    return DeformationResult(xi, tau, ev.mu, ev.h, ev.f_star, diagnostics, converged, list(trace))


def _fd_jacobian(x: np.ndarray, y0: np.ndarray, problem: DeformationProblem) -> np.ndarray:
    scale = max(float(np.max(np.abs(x))), 1e-12)
    J = np.empty((y0.size, x.size))
    for i in range(x.size):
        step = 1e-6 * scale
        xp = x.copy()
        xp[i] += step
        J[:, i] = (_evaluate(xp, problem).y - y0) / step
    return J


def newton_deform(problem: DeformationProblem, tol: float = config.NEWTON_TOL,
                  max_iter: int = config.NEWTON_MAX_ITER) -> DeformationResult:
    """Solve ``W(x) = y`` starting from the first-order Jacobian.

    The Jacobian is refreshed by forward differences when a Newton step fails to
    shrink by a factor 0.5 relative to the previous one.
    """
    y = assemble_targets(problem)
    x = np.zeros(y.size)
    if not np.any(y):
        ev = _evaluate(x, problem, check=True)
        return _result(x, ev, problem, 0, [0.0])
    J = linear_jacobian(problem)
    _check_structure(problem, J)
    res = -y
    trace = []
    prev = None
    for it in range(1, max_iter + 1):
        step = np.linalg.solve(J, -res)
        norm = float(np.linalg.norm(step))
        if prev is not None and norm > 0.5 * prev:
            J = _fd_jacobian(x, res + y, problem)
            step = np.linalg.solve(J, -res)
            norm = float(np.linalg.norm(step))
        prev = norm
        x = x + step
        ev = _evaluate(x, problem)
        res = ev.y - y
        trace.append(float(np.max(np.abs(res))))
        if trace[-1] < tol:
            ev = _evaluate(x, problem, check=True)
            return _result(x, ev, problem, it, trace)
    raise NonConvergenceError(f"Newton did not reach tol={tol:g} in {max_iter} iterations", trace)


def replay(problem: DeformationProblem, xi, tau: float, enforce_cap: bool = True) -> DeformationResult:
    """Evaluate the deformation for given parameters without solving (for audits and negative tests)."""
    xi = np.asarray(xi, dtype=complex)
    x = np.empty(2 * xi.size + 1)
    x[:-1:2], x[1:-1:2], x[-1] = xi.real, xi.imag, tau
    ev = _evaluate(x, problem, check=True, enforce_cap=enforce_cap)
    return _result(x, ev, problem, 0, [])


CONTRACTS = {
    1: "coefficients shifted by d",
    2: "area p-norm preserved up to a",
    3: "Hardy p-norm changed by O(eps)",
    4: "h conformal on f(D)",
    5: "f* nonvanishing",
}


def verify_deformation(result: DeformationResult, problem: DeformationProblem, coeff_tol: float = 1e-9,
                       area_tol: float | None = None, hardy_const: float = 1e4,
                       conformal_tol: float = 1e-9) -> dict:
    """Check the five deformation contracts; raise ``ContractViolation`` naming the failures.

    * (1) ``|c_k(f*) - c_k(f) - d_k| <= coeff_tol`` on the targeted indices;
    * (2) ``|A(f*) - A(f) - a| <= area_tol`` (default ``max(eps^2, 1e-9)``);
    * (3) ``|Delta ||.||_{H^p}| <= ||f* - f||_{H^p} <= hardy_const * eps``;
    * (4) ``|dbar h|`` at images ``f(z)`` of a disk grid below ``conformal_tol``;
    * (5) ``f*`` has no zeros in ``|z| <= 0.999``.
    """
    eps = problem.eps
    area_tol = max(eps**2, 1e-9) if area_tol is None else area_tol
    f, fs = problem.f, result.f_star
    out: dict = {}
    targeted = [k for k in problem.indices if not (problem.gap and k == problem.j)]
    dc = fs.coeffs[: problem.n + 1] - f.coeffs[: problem.n + 1]
    c1 = float(max(np.abs(dc[targeted] - problem.d[targeted]))) if targeted else 0.0
    out[1] = (c1 <= coeff_tol, c1)
    c2 = abs(result.diagnostics["area_norm_delta"] - problem.a)
    out[2] = (c2 <= area_tol, c2)
    diff = hardy_norm(fs - f, problem.p).value
    dh = abs(result.diagnostics["hardy_norm_delta"])
    out[3] = (dh <= diff * (1 + 1e-9) + 1e-14 and diff <= hardy_const * max(eps, 1e-300), dh)
    if result.h is None:
        c4 = 0.0
    else:
        r = np.linspace(0.05, 0.999, 8)
        th = 2 * np.pi * (np.arange(16) + 0.5) / 16
        z = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
        grid, rho = result.h.rho.grid, result.h.rho.values
        _, db = _wirtinger(lambda w: grid.cauchy_T(rho, w), f(z))
        c4 = float(np.max(np.abs(db)))
    out[4] = (c4 <= conformal_tol, c4)
    try:
        ok, winding = is_nonvanishing(fs, min(0.999, fs.sample_radius_hint))
    except PreconditionError:
        ok, winding = False, None
    out[5] = (bool(ok), winding)
    report = {CONTRACTS[k]: {"passed": bool(v[0]), "value": v[1]} for k, v in out.items()}
    failing = [k for k, v in out.items() if not v[0]]
    if failing:
        msg = "; ".join(f"({k}) {CONTRACTS[k]}: {out[k][1]}" for k in failing)
        raise ContractViolation(failing[0], msg, failing)
    return report


# ----------------------------------------------------------------------
# First-order (variational) prediction with three-point normalization


def variational_predict(mu: LaurentDensity, z, cap: float | None = config.MU_CAP):
    """First-order normalized map ``z + V(z)`` for ``mu`` supported on ``R < |zeta| < R+1``.

    With ``F = T mu``,
    ``V(z) = F(z) - F(0) - z F'(0) - z^2 (F(1) - F(0) - F'(0))``,
    which equals ``-(z^2 (z-1)/pi) iint mu(zeta) / (zeta^2 (zeta-1) (zeta-z))``
    and respects ``w(0) = 0``, ``w'(0) = 1``, ``w(1) = 1``.
    """
    ann = mu.annulus
    if ann.c0 != 0:
        raise DomainError("the variational formula is stated for annuli centred at the origin")
    if ann.R < 2:
        raise DomainError("mu must vanish on |zeta| < 2 (need R >= 2)")
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > ann.R - 0.5):
        raise DomainError(f"|z| must not exceed R - 1/2 = {ann.R - 0.5}")
    if cap is not None and mu.sup_norm() > cap:
        raise BudgetError("sup |mu| exceeds the policy cap")
    F0 = pairing(mu, basis_fraction(0, ann))
    F1d = pairing(mu, basis_fraction(1, ann))
    F1 = cauchy_T(mu, 1.0)
    Fz = cauchy_T(mu, z)
    return z + Fz - F0 - z * F1d - z**2 * (F1 - F0 - F1d)


def normalized_full_solve(mu: LaurentDensity, z, tol: float = config.NEUMANN_TOL):
    """``M o h`` at ``z`` where ``h`` solves the Beltrami equation and the Moebius map ``M`` enforces
    ``0 -> 0``, derivative 1 at 0, and ``1 -> 1``."""
    sol = neumann_solve(mu, tol=tol)
    h = build_map(sol, mu, check=False)
    h0, h1 = h(0.0), h(1.0)
    dh0 = 1.0 + h.coeffs[1]
    D = h1 - h0
    a = 1.0 / dh0
    c = (a * D - 1.0) / D
    u = h(np.asarray(z, dtype=complex)) - h0
    return a * u / (1.0 + c * u)


def a2_linkage(coeffs=None, n: int = 2, delta: float = 1e-6, degree: int = config.DEFAULT_DEGREE,
               tol: float = 1e-12) -> dict:
    """Raise ``|c_n|`` of a zero-free polynomial while holding its ``A_2`` norm fixed.

    The default polynomial is ``(1 + z/3)^4`` scaled to unit ``A_2`` norm.  The
    series is padded to ``degree`` so that the non-polynomial part of
    ``h o p`` is retained when the area is measured.
    """
    if coeffs is None:
        coeffs = [math.comb(4, k) / 3.0**k for k in range(5)]
    coeffs = np.asarray(coeffs, dtype=complex)
    coeffs = coeffs / np.sqrt(np.sum(np.abs(coeffs) ** 2 / np.arange(1, coeffs.size + 1)))
    padded = np.zeros(degree + 1, dtype=complex)
    padded[: coeffs.size] = coeffs
    f = PowerSeries(padded)
    d = np.zeros(n + 1, dtype=complex)
    d[n] = delta * coeffs[n] / abs(coeffs[n])
    problem = DeformationProblem(f, 2.0, n, d, a=0.0)
    result = newton_deform(problem, tol=tol)
    before, after = abs(f.coeffs[n]), abs(result.f_star.coeffs[n])
    area_delta = result.diagnostics["area_norm_delta"]
    ok, _ = is_nonvanishing(result.f_star, 0.999)
    return {
        "n": n,
        "delta": delta,
        "c_n_before": before,
        "c_n_after": after,
        "increased": bool(after > before),
        "area_delta": area_delta,
        "area_preserved": bool(abs(area_delta) <= max(delta**2, 10 * tol)),
        "zero_free": bool(ok),
        "newton_iterations": result.diagnostics["newton_iterations"],
    }
