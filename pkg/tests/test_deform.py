import json

import numpy as np
import pytest

from qcdeform.deform import (DeformationProblem, a2_linkage, ansatz_mu, assemble_targets, forward_map_W,
                             kappa_constant, linear_jacobian, newton_deform, normalized_full_solve, replay,
                             variational_predict, verify_deformation)
from qcdeform.errors import (AnnulusError, BudgetError, ContractViolation, DegenerateInputError, DomainError,
                             PreconditionError, ProblemStructureError)
from qcdeform.extremals import sample_nonvanishing
from qcdeform.integral_ops import AnnulusSpec, LaurentDensity, conj_basis
from qcdeform.norms import area_integral
from qcdeform.series import PowerSeries, exp_series, is_nonvanishing


def smooth_f(degree=64):
    """0.5 exp(0.9 z + 0.05 z^2): large c_1 relative to the annulus radius, so eps = 1e-2 stays under the cap."""
    g = np.zeros(degree + 1, dtype=complex)
    g[:3] = [np.log(0.5), 0.9, 0.05]
    return exp_series(PowerSeries(g))


def target(n, value):
    d = np.zeros(n + 1, dtype=complex)
    d[n] = value
    return d


def area_neutral(f, n, eps, p=2.0):
    """d_n of modulus eps whose first-order effect on the area integral vanishes."""
    probe = DeformationProblem(f, p, n, target(n, eps))
    ratio = probe.phi.laurent_b[n] / f.coeffs[1] ** n
    return target(n, eps * 1j * abs(ratio) / ratio)


@pytest.fixture(scope="module")
def seed7():
    return sample_nonvanishing(7, 2.0, "exp_of_series", 64)


@pytest.fixture(scope="module")
def seed7_run(seed7):
    problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-5j))
    return problem, newton_deform(problem)


class TestProblem:
    def test_budget(self, seed7):
        with pytest.raises(BudgetError):
            DeformationProblem(seed7, 2.0, 3, target(3, 0.05))
        with pytest.raises(BudgetError):
            DeformationProblem(seed7, 2.0, 3, target(3, 0.0), a=0.02)

    def test_polynomial_of_low_degree(self):
        with pytest.raises(DegenerateInputError):
            DeformationProblem(PowerSeries([1.0, 0.2, 0.1, 0, 0]), 2.0, 2, target(2, 1e-4))

    def test_vanishing(self):
        with pytest.raises(PreconditionError):
            DeformationProblem(PowerSeries([0.1, 1.0, 0.1, 0.1]), 2.0, 1, target(1, 1e-4))

    @pytest.mark.parametrize("kw", [{"p": 1.0}, {"n": 0}, {"d": np.zeros(2)}, {"j": 5}, {"K": 2}])
    def test_domain(self, seed7, kw):
        args = {"f": seed7, "p": 2.0, "n": 3, "d": target(3, 1e-4)}
        args.update(kw)
        with pytest.raises(DomainError):
            DeformationProblem(**args)

    def test_small_annulus(self, seed7):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-4), R=1.0)
        with pytest.raises(AnnulusError):
            problem.annulus

    def test_defaults(self, seed7):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-4))
        assert problem.c0 == seed7.coeffs[0]
        assert list(problem.indices) == [0, 1, 2, 3]
        assert json.loads(json.dumps(problem.to_dict()))["n"] == 3


class TestAnsatz:
    def test_zero(self, seed7):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-4))
        assert ansatz_mu(np.zeros(4), 0.0, problem).is_zero()

    @pytest.mark.parametrize("k", [0, 1, 3])
    def test_single_term(self, seed7, k):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-4))
        xi = np.zeros(4)
        xi[k] = 0.05
        mu = ansatz_mu(xi, 0.0, problem)
        assert mu.sup_norm() == pytest.approx(0.05 * problem.annulus.R ** (-k - 1), rel=1e-12)

    def test_cap(self, seed7):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-4))
        with pytest.raises(BudgetError):
            ansatz_mu(np.array([0, 0, 0, 100.0]), 0.0, problem)

    def test_targets(self, seed7):
        assert not np.any(assemble_targets(DeformationProblem(seed7, 2.0, 3, target(3, 0))))
        y = assemble_targets(DeformationProblem(seed7, 2.0, 3, target(3, 3e-4 - 4e-4j)))
        assert np.allclose(y, [0, 0, 0, 0, 0, 0, 3e-4, -4e-4, 0])


class TestForwardMap:
    def test_identity(self, seed7):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 1e-4))
        assert np.array_equal(forward_map_W(np.zeros(9), problem), np.zeros(9))

    def test_jacobian_is_first_order_exact(self):
        problem = DeformationProblem(smooth_f(), 2.0, 1, target(1, 1e-3j))
        J = linear_jacobian(problem)
        x = np.array([1e-3, -2e-3, 3e-3, 1e-3, 2e-1])
        errs = []
        for s in (1.0, 0.5):
            errs.append(np.max(np.abs(forward_map_W(s * x, problem) - J @ (s * x))))
        # residual of the linear model is quadratic in the step
        assert 3.5 < errs[0] / errs[1] < 4.5

    def test_kappa_is_area_slope(self):
        problem = DeformationProblem(smooth_f(), 2.0, 1, target(1, 1e-3j))
        tau = 1e-1
        x = np.array([0, 0, 0, 0, tau])
        slope = (forward_map_W(x, problem)[-1] - forward_map_W(-x, problem)[-1]) / (2 * tau)
        assert slope == pytest.approx(kappa_constant(problem), rel=1e-6)

    def test_linear_step_area_error_is_quadratic(self):
        errs = []
        for eps in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
            problem = DeformationProblem(smooth_f(), 2.0, 1, target(1, eps * 1j))
            x = np.linalg.solve(linear_jacobian(problem), assemble_targets(problem))
            errs.append(abs(forward_map_W(x, problem)[-1] - problem.a))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios > 3.5) & (ratios < 4.5))


class TestNewton:
    def test_zero_targets(self, seed7):
        problem = DeformationProblem(seed7, 2.0, 3, target(3, 0))
        res = newton_deform(problem)
        assert not np.any(res.xi) and res.tau == 0 and res.f_star is seed7
        report = verify_deformation(res, problem)
        assert all(v["value"] == 0 for k, v in report.items() if k != "f* nonvanishing")

    def test_seed7_feasible(self, seed7_run):
        problem, res = seed7_run
        assert res.converged and res.diagnostics["newton_iterations"] <= 8
        assert max(res.diagnostics["coeff_residuals"]) < 1e-9
        assert abs(res.diagnostics["area_norm_delta"]) < 1e-5
        assert res.diagnostics["mu_sup_norm"] < 0.1
        assert is_nonvanishing(res.f_star, 0.999)[0]
        verify_deformation(res, problem)

    def test_seed7_hardy_first_order(self, seed7, seed7_run):
        _, full = seed7_run
        half = newton_deform(DeformationProblem(seed7, 2.0, 3, target(3, 5e-6j)))
        ratio = full.diagnostics["hardy_norm_delta"] / half.diagnostics["hardy_norm_delta"]
        assert abs(ratio - 2) < 0.2

    def test_seed7_stated_target_exceeds_cap(self, seed7):
        with pytest.raises(BudgetError):
            newton_deform(DeformationProblem(seed7, 2.0, 3, target(3, 1e-3j)))

    @pytest.mark.parametrize("eps", [1e-2, 5e-3, 2.5e-3])
    def test_smooth_fixture(self, eps):
        problem = DeformationProblem(smooth_f(), 2.0, 1, target(1, eps * 1j))
        res = newton_deform(problem)
        assert res.diagnostics["newton_iterations"] <= 8
        verify_deformation(res, problem)
        # the area integral, measured independently of the solver's bookkeeping
        assert abs(area_integral(res.f_star, 2.0) - area_integral(problem.f, 2.0)) < 1e-9

    def test_seed_sweep(self):
        for seed in range(5):
            f = sample_nonvanishing(seed, 2.0, "exp_of_series", 64)
            problem = DeformationProblem(f, 2.0, 1, area_neutral(f, 1, 1e-3))
            res = newton_deform(problem)
            assert res.diagnostics["newton_iterations"] <= 8
            verify_deformation(res, problem)

    def test_exchange_symmetry(self):
        f = smooth_f()
        tol = 1e-10
        d = area_neutral(f, 1, 5e-3)
        first = newton_deform(DeformationProblem(f, 2.0, 1, d), tol=tol)
        back = newton_deform(DeformationProblem(first.f_star, 2.0, 1, -d), tol=tol)
        assert np.max(np.abs(back.f_star.coeffs[:2] - f.coeffs[:2])) < 10 * tol

    def test_area_target(self):
        problem = DeformationProblem(smooth_f(), 2.0, 1, target(1, 0), a=1e-3)
        res = newton_deform(problem)
        assert res.diagnostics["area_norm_delta"] == pytest.approx(1e-3, abs=1e-10)
        verify_deformation(res, problem)

    def test_gap_mode(self):
        f = smooth_f()
        problem = DeformationProblem(f, 3.0, 2, target(2, 2e-4j), gap=True, j=1)
        res = newton_deform(problem)
        assert abs(res.f_star.coeffs[2] - f.coeffs[2] - 2e-4j) < 1e-9
        verify_deformation(res, problem)

    def test_degenerate_gap_constraint(self):
        # centring the annulus at iint|f|^2 / iint conj(f) makes b_1 vanish for p = 2
        f = smooth_f()
        c0 = area_integral(f, 2.0) / (np.pi * np.conj(f.coeffs[0]))
        problem = DeformationProblem(f, 2.0, 2, target(2, 1e-4), gap=True, j=1, c0=c0)
        assert abs(problem.phi.laurent_b[1]) < 1e-12
        with pytest.raises(ProblemStructureError):
            newton_deform(problem)

    def test_result_json(self, seed7_run):
        _, res = seed7_run
        data = json.loads(res.to_json())
        assert set(data["diagnostics"]) >= {"coeff_residuals", "area_norm_delta", "hardy_norm_delta",
                                            "newton_iterations", "mu_sup_norm"}


class TestContracts:
    def test_corrupted_tau(self, seed7_run):
        problem, res = seed7_run
        bad = replay(problem, res.xi, res.tau * 1.5)
        with pytest.raises(ContractViolation) as exc:
            verify_deformation(bad, problem)
        assert exc.value.contract == 2 and 2 in exc.value.failing

    def test_corrupted_xi(self, seed7_run):
        problem, res = seed7_run
        bad = replay(problem, res.xi * 1.01, res.tau)
        with pytest.raises(ContractViolation) as exc:
            verify_deformation(bad, problem)
        assert 1 in exc.value.failing

    def test_replay_reproduces(self, seed7_run):
        problem, res = seed7_run
        again = replay(problem, res.xi, res.tau)
        assert np.allclose(again.f_star.coeffs, res.f_star.coeffs, atol=1e-15)


def variational_mu(eps, R=2.0):
    ann = AnnulusSpec(0.0, R)
    return (conj_basis(0, ann) * (0.6 * eps * R) + conj_basis(2, ann) * (0.3j * eps * R**3)
            + LaurentDensity({(1, 0): 0.1 * eps / (R + 1)}, ann))


class TestVariational:
    z = np.array([0.3, -0.7j, 1.2 * np.exp(0.4j), 1.5])

    def test_zero(self):
        mu = LaurentDensity.zero(AnnulusSpec(0.0, 2.0))
        assert np.allclose(variational_predict(mu, self.z), self.z, atol=1e-15)

    def test_normalization(self):
        mu = variational_mu(1e-2)
        w = variational_predict(mu, np.array([0.0, 1.0]))
        assert abs(w[0]) < 1e-15 and abs(w[1] - 1) < 1e-15

    def test_linear_in_mu(self):
        m1, m2 = variational_mu(1e-2), LaurentDensity({(2, 0): 3e-4}, AnnulusSpec(0.0, 2.0))
        lhs = variational_predict(m1 * 2.0 + m2 * (-1j), self.z) - self.z
        rhs = 2 * (variational_predict(m1, self.z) - self.z) - 1j * (variational_predict(m2, self.z) - self.z)
        assert np.max(np.abs(lhs - rhs)) < 1e-15

    def test_second_order_agreement(self):
        diffs = []
        for eps in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
            mu = variational_mu(eps)
            diffs.append(np.max(np.abs(variational_predict(mu, self.z) - normalized_full_solve(mu, self.z))))
        ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
        assert np.all((ratios > 3.5) & (ratios < 4.5))

    def test_domain(self):
        with pytest.raises(DomainError):
            variational_predict(variational_mu(1e-2), 1.8)
        with pytest.raises(DomainError):
            variational_predict(LaurentDensity.zero(AnnulusSpec(0.5, 2.0)), 0.1)
        with pytest.raises(DomainError):
            variational_predict(LaurentDensity.zero(AnnulusSpec(0.0, 1.5)), 0.1)


class TestA2Linkage:
    def test_coefficient_grows_norm_kept(self):
        out = a2_linkage()
        assert out["increased"] and out["area_preserved"] and out["zero_free"]
        assert out["c_n_after"] - out["c_n_before"] == pytest.approx(out["delta"], rel=1e-6)

    def test_other_index(self):
        out = a2_linkage(n=1, delta=2e-6)
        assert out["increased"] and out["area_preserved"]
