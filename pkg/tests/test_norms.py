import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcdeform.errors import DomainError
from qcdeform.extremals import sample_nonvanishing, series_kappa
from qcdeform.norms import (NormReport, bergman_norm, bloch_norm, embedding_check, hardy_norm,
                            log_convexity_defects, mean_function_profile)
from qcdeform.schwarzian import schwarzian_of
from qcdeform.series import PowerSeries

coeff_lists = st.lists(st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False), min_size=1,
                       max_size=16)


def koebe(degree):
    return PowerSeries([0.0] + [float(n) for n in range(1, degree + 1)])


class TestHardy:
    @pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
    def test_constant(self, p):
        assert hardy_norm(PowerSeries([0.3 - 0.4j]), p).value == pytest.approx(0.5, abs=1e-15)

    def test_identity(self):
        assert hardy_norm(PowerSeries([0, 1]), 2.0).value == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
    def test_extremal_has_unit_norm(self, p):
        assert abs(hardy_norm(series_kappa(1, p, 128), p).value - 1.0) < 2e-3

    def test_rejects_small_p(self):
        with pytest.raises(DomainError):
            hardy_norm(PowerSeries([1]), 0.5)

    @given(coeff_lists)
    def test_parseval(self, c):
        f = PowerSeries(c)
        assert abs(hardy_norm(f, 2.0).value ** 2 - np.sum(np.abs(f.coeffs) ** 2)) < 1e-12

    def test_report_json(self):
        rep = hardy_norm(PowerSeries([1, 0.5]), 3.0)
        data = json.loads(rep.to_json())
        assert set(data) == {"value", "p", "quadrature_points", "estimated_error"}
        with pytest.raises(ValueError):
            NormReport(-1.0, 2.0, 1, 0.0)


class TestMeanFunction:
    def test_constant(self):
        assert np.allclose(mean_function_profile(PowerSeries([1]), 3.0, [0.2, 0.5, 0.9]), 1.0)

    def test_identity_profile(self):
        radii = [0.25, 0.5, 1.0]
        prof = mean_function_profile(PowerSeries([0, 1]), 2.0, radii)
        assert np.allclose(prof, [0.0625, 0.25, 1.0], atol=1e-15)
        assert np.allclose(log_convexity_defects(radii, prof), 0.0, atol=1e-13)

    @given(st.lists(st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False), min_size=11,
                    max_size=11), st.sampled_from([1.0, 2.0, 3.0]))
    def test_monotone_and_log_convex(self, c, p):
        f = PowerSeries(c)
        if np.max(np.abs(f.coeffs)) < 1e-3:
            return
        radii = np.linspace(0.1, 1.0, 10)
        prof = mean_function_profile(f, p, radii)
        assert np.all(np.diff(prof) >= -1e-12 * prof.max())
        assert np.min(log_convexity_defects(radii, prof)) >= -1e-12

    def test_radii_validated(self):
        with pytest.raises(DomainError):
            mean_function_profile(PowerSeries([1]), 2.0, [0.5, 0.2])


class TestBergman:
    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_unit_constant(self, p):
        assert bergman_norm(PowerSeries([1]), p).value == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("N", [0, 1, 4, 9])
    def test_monomial(self, N):
        f = PowerSeries.monomial(N)
        assert bergman_norm(f, 2.0).value == pytest.approx((N + 1) ** -0.5, abs=1e-15)
        assert bergman_norm(f, 2.0, method="quadrature").value == pytest.approx((N + 1) ** -0.5, abs=1e-12)

    @given(coeff_lists)
    def test_below_hardy(self, c):
        f = PowerSeries(c)
        assert bergman_norm(f, 2.0).value <= hardy_norm(f, 2.0).value + 1e-12

    @given(coeff_lists)
    def test_quadrature_matches_coefficients(self, c):
        f = PowerSeries(c)
        exact = bergman_norm(f, 2.0).value
        assert abs(bergman_norm(f, 2.0, method="quadrature").value - exact) < 1e-11 * max(1, exact)

    def test_coefficient_method_needs_p2(self):
        with pytest.raises(DomainError):
            bergman_norm(PowerSeries([1]), 3.0, method="coefficients")


class TestBloch:
    def test_constant(self):
        assert bloch_norm(PowerSeries([0.7j])).value == pytest.approx(0.7, abs=1e-15)

    def test_koebe_schwarzian(self):
        phi = schwarzian_of(koebe(67))
        assert abs(bloch_norm(phi).value - 6.0) < 1e-6

    def test_grid_maximum_is_refined(self):
        phi = PowerSeries([0, 0, 1.0])
        # (1 - r^2)^2 r^2 peaks at r^2 = 1/3 with value 4/27
        assert abs(bloch_norm(phi).value - 4 / 27) < 1e-10


class TestEmbedding:
    def test_small_constant(self):
        out = embedding_check(PowerSeries([0.1]), 2.0)
        assert out["in_ball"] and out["bloch"] == pytest.approx(0.1) and out["implication_holds"]

    def test_scaled_extremal(self):
        f = series_kappa(1, 2.0, 64) * 0.5
        assert embedding_check(f, 2.0)["implication_holds"]

    def test_sampled_sweep(self):
        scales = np.random.default_rng(5).uniform(0.05, 0.999, size=200)
        for seed, u in enumerate(scales):
            f = sample_nonvanishing(seed, 2.0, degree=24)
            f = f * (u * 2**-0.5 / hardy_norm(f, 2.0).value)
            out = embedding_check(f, 2.0)
            assert out["in_ball"] and out["implication_holds"]
