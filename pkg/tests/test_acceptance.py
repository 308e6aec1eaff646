"""End-to-end acceptance criteria, one test per criterion at its stated tolerance.

Each test records PASS or FAIL in ``RESULTS``; the conftest hook prints one
line per criterion after the run.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.special import gamma

from oracles import dft_coeffs, gram_quadrature, kappa_closed, koebe_schwarzian_coeffs
from qcdeform.deform import DeformationProblem, newton_deform, normalized_full_solve, variational_predict
from qcdeform.errors import BudgetError
from qcdeform.extremals import (bergman_perturb, parseval_comparison, random_zero_free_polynomial,
                                sample_nonvanishing, series_kappa, sweep_margins)
from qcdeform.integral_ops import AnnulusSpec, LaurentDensity, PolarGrid, build_map, conj_basis, gram_r2, neumann_solve
from qcdeform.norms import bloch_norm, hardy_norm
from qcdeform.schwarzian import covering_check, rotate, schwarzian_of, solve_schwarzian
from qcdeform.series import PowerSeries, is_nonvanishing

RESULTS = {}

SHARP_N = [1, 2, 3, 5]
SHARP_P = [2.0, 2.5, 3.0, 4.0, 8.0]


@contextmanager
def criterion(num):
    try:
        yield
    except BaseException as exc:
        RESULTS[num] = f"FAIL ({type(exc).__name__}: {str(exc).splitlines()[0][:100] if str(exc) else ''})"
        raise
    RESULTS[num] = "PASS"


def small_mu(scale, annulus):
    return LaurentDensity({(0, -1): 0.6 * scale * annulus.R, (0, -3): 0.4j * scale * annulus.R**3,
                           (1, 0): 0.2 * scale / annulus.outer}, annulus)


def halving_ratios(values):
    values = np.asarray(values)
    return values[:-1] / values[1:]


def test_01_sharpness_two_ways():
    with criterion(1):
        start = time.perf_counter()
        worst = 0.0
        for p in SHARP_P:
            bound = (2 / math.e) ** (1 - 1 / p)
            for n in SHARP_N:
                series = abs(series_kappa(n, p).coeffs[n])
                dft = abs(dft_coeffs(lambda z: kappa_closed(n, p, z), n + 1, r=0.99, m=8192)[n])
                worst = max(worst, abs(series - bound), abs(dft - bound))
        elapsed = time.perf_counter() - start
        assert worst < 1e-8, worst
        assert elapsed < 5.0, elapsed


def test_02_unit_norm_of_extremals():
    with criterion(2):
        errs = [abs(hardy_norm(series_kappa(n, p, 128), p, 1.0).value - 1)
                for n in SHARP_N for p in SHARP_P]
        assert max(errs) < 2e-3, max(errs)


def test_03_no_counterexample_sweep():
    with criterion(3):
        start = time.perf_counter()
        rows = sweep_margins([2.0, 2.5, 4.0], [2, 3, 5], 10_000, seed=0)
        elapsed = time.perf_counter() - start
        assert len(rows) == 9 * 10_000
        assert min(r["margin"] for r in rows) >= -1e-9
        assert elapsed < 120.0, elapsed


def test_04_parseval_chain():
    with criterion(4):
        for p in [2.0 + 0.25 * i for i in range(57)]:
            out = parseval_comparison(p, 128)
            assert out["tail_sq"] < 0.5 < out["c1_sq"], (p, out)
        c1_sq = parseval_comparison(math.inf, 128)["c1_sq"]
        assert abs(c1_sq - (2 / math.e) ** 2) < 1e-12
        assert round(c1_sq, 6) == 0.541341


@pytest.mark.xfail(strict=True, raises=BudgetError,
                   reason="d_3 = 1e-3 i needs sup|mu| ~ 5.3 for this sample, above the 0.1 cap and above 1")
def test_05_deformation_end_to_end():
    with criterion(5):
        f = sample_nonvanishing(7, 2.0, "exp_of_series")
        start = time.perf_counter()
        deltas = []
        for scale in (1.0, 0.5):
            d = np.zeros(4, dtype=complex)
            d[3] = scale * 1e-3j
            res = newton_deform(DeformationProblem(f, 2.0, 3, d, a=0.0))
            diag = res.diagnostics
            assert res.converged and diag["newton_iterations"] <= 8
            assert max(diag["coeff_residuals"]) < 1e-9
            assert abs(diag["area_norm_delta"]) < 1e-5
            assert is_nonvanishing(res.f_star, 0.999)[0]
            deltas.append(diag["hardy_norm_delta"])
        assert abs(deltas[0] / deltas[1] - 2) <= 0.2
        assert time.perf_counter() - start < 30.0


def test_06_quadratic_remainders():
    with criterion(6):
        ann = AnnulusSpec(0.2 - 0.1j, 2.5)
        omega = []
        for eps in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
            mu = small_mu(eps, ann)
            omega.append(build_map(neumann_solve(mu), mu).remainder_norm())
        ratios = halving_ratios(omega)
        assert np.all((ratios > 3.5) & (ratios < 4.5)), ratios

        disk = AnnulusSpec(0.0, 2.0)
        z = np.array([0.3, -0.7j, 1.2 * np.exp(0.4j), 1.5])
        diffs = []
        for eps in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
            mu = (conj_basis(0, disk) * (0.6 * eps * 2.0) + conj_basis(2, disk) * (0.3j * eps * 8.0)
                  + LaurentDensity({(1, 0): 0.1 * eps / 3.0}, disk))
            diffs.append(np.max(np.abs(variational_predict(mu, z) - normalized_full_solve(mu, z))))
        ratios = halving_ratios(diffs)
        assert np.all((ratios > 3.5) & (ratios < 4.5)), ratios


def test_07_operator_layer():
    with criterion(7):
        for R in (2.0, 5.0, 10.0):
            ann = AnnulusSpec(0.0, R)
            for k in range(13):
                want = gram_quadrature(k, R)
                assert abs(gram_r2(k, ann) - want) < 1e-8 * max(1.0, want), (k, R)

        ann = AnnulusSpec(0.3 - 0.2j, 2.5)
        mu = small_mu(0.05, ann)
        assert abs(mu.sup_norm() - 0.05) < 0.02
        sol = neumann_solve(mu, tol=1e-12)
        assert sol.converged and sol.residual < 1e-12
        h = build_map(sol, mu)
        assert h.residuals["beltrami"] < 1e-10

        grid = PolarGrid(ann)
        pts = grid.points()
        t = np.abs(pts - ann.c0) - ann.R
        arg = np.exp(1j * np.angle(pts - ann.c0))
        densities = [np.sin(np.pi * t) ** 2 * arg * (1 + 0.3 * np.cos(3 * t)),
                     np.sin(np.pi * t) ** 4 * arg ** -2,
                     np.sin(np.pi * t) ** 2 * (1 + 0.5 * arg ** 3)]
        for vals in densities:
            before, after = grid.pi_isometry(vals)
            assert abs(after / before - 1) < 0.02


def _small_phi(seed, degree=48):
    rng = np.random.default_rng(seed)
    a = (rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1)) * 0.7 ** np.arange(degree + 1)
    return PowerSeries(a * (0.19 / np.sum(np.abs(a))))


def test_08_schwarzian():
    with criterion(8):
        for seed in range(100):
            phi = _small_phi(seed)
            assert bloch_norm(phi).value < 0.2
            back = schwarzian_of(solve_schwarzian(phi))
            assert np.max(np.abs(back.coeffs[:49] - phi.coeffs)) < 1e-9

        koebe = PowerSeries(np.arange(41, dtype=float))
        s = schwarzian_of(koebe)
        assert np.array_equal(s.coeffs, koebe_schwarzian_coeffs(s.degree + 1))

        big = PowerSeries(np.arange(6001, dtype=float))
        family = [rotate(big, t, t) for t in np.linspace(0, 2 * np.pi, 8, endpoint=False)]
        report = covering_check(family, a2_sup=2.0, check_injective=False)
        assert report.bound == 0.25 and report.holds
        assert abs(report.min_omitted_modulus - 0.25) < 1e-3


def test_09_bergman_demonstration():
    with criterion(9):
        for seed in range(100):
            poly = random_zero_free_polynomial(seed, 8)
            assert poly.degree <= 8
            out = bergman_perturb(poly, 1e-3)
            assert out["norm_after"] < out["norm_before"]
            assert out["zero_free"] and is_nonvanishing(out["P"], 1.0)[0]
        out = bergman_perturb(PowerSeries([1.0]), 0.1)
        assert abs(out["norm_after"] ** 2 - 0.815) < 1e-12


def _circle_mean_oracle(a):
    """(1/2pi) int (1 + cos t)^a dt = 2^a Gamma(a + 1/2) / (sqrt(pi) Gamma(a + 1))."""
    return 2**a * gamma(a + 0.5) / (math.sqrt(math.pi) * gamma(a + 1))


def test_10_norm_comparison_below_two():
    with criterion(10):
        for p in (1.2, 1.5):
            out = parseval_comparison(p)
            h2 = _circle_mean_oracle(2 / p) ** 0.5
            hp = _circle_mean_oracle(1.0) ** (1 / p)
            assert abs(out["norm_h2"] - h2) < 1e-4 and abs(out["norm_hp"] - hp) < 1e-4
            assert out["h2_exceeds_hp"] and out["norm_h2"] - out["norm_hp"] > 1e-4
