"""
Tests for the q-parameters and Laurent series arithmetic.
"""
import cmath
import math

import numpy as np
import pytest

from numkernel import LaurentMatrix, LaurentSeries, QParams, dilate, evaluate, ramify_series, sigma_q
from theta import theta
from validation import SingularGauge, ValidationError, ZeroDilation, ZeroEvaluationPoint


def random_series(rng, lo=-3, hi=3) -> LaurentSeries:
    values = rng.normal(size=hi - lo + 1) + 1j * rng.normal(size=hi - lo + 1)
    return LaurentSeries.from_array(lo, values)


def mass(f: LaurentSeries, c: complex) -> float:
    """sum |f_m| |c|^m, the scale of rounding errors in f(c)"""
    return sum(abs(v) * abs(c) ** m for m, v in f.coeffs.items())


class TestQParams:

    def test_from_q_recovers_q(self):
        assert QParams.from_q(4).q == pytest.approx(4)
        assert QParams.from_q(2 + 1j).q == pytest.approx(2 + 1j)

    def test_default_tau_gives_q_four(self):
        tau = complex(0, -math.log(4) / (2 * math.pi))
        assert QParams(tau).q == pytest.approx(4)

    @pytest.mark.parametrize("tau", [0.22j, 0.3 + 0.1j, 0.5])
    def test_rejects_small_q(self, tau):
        with pytest.raises(ValidationError):
            QParams(tau)

    def test_from_q_rejects_unit_disc(self):
        with pytest.raises(ValidationError):
            QParams.from_q(0.5)

    @pytest.mark.parametrize("r", range(1, 7))
    @pytest.mark.parametrize("s", range(1, 7))
    def test_coherent_roots(self, qp, r, s):
        assert abs(qp.q_root(r * s) ** s - qp.q_root(r)) < 1e-12 * abs(qp.q_root(r))
        assert abs(qp.z0_root(r * s) ** s - qp.z0_root(r)) < 1e-12

    def test_at_root(self, q4):
        ramified = q4.at_root(3)
        assert ramified.q == pytest.approx(4 ** (1 / 3))
        assert ramified.z0 ** 3 == pytest.approx(q4.z0)

    def test_json_round_trip(self, qp):
        assert QParams.from_json(qp.to_json()) == qp


class TestLaurentSeries:

    def test_sigma_q_constant_and_monomial(self, q4):
        assert sigma_q(LaurentSeries.constant(1), q4) == LaurentSeries.constant(1)
        assert sigma_q(LaurentSeries.monomial(1), q4).coeff(1) == pytest.approx(4)

    def test_sigma_q_on_theta_truncation(self, q4):
        n = 12
        m = np.arange(-n, n + 1)
        f = LaurentSeries.from_array(-n, np.exp(-q4.log_q * (m * (m + 1) // 2)))
        shifted = sigma_q(f, q4)
        for z in (1.3, 2 - 1j, -2.5j):
            assert abs(shifted.evaluate(z) - z * f.evaluate(z)) < 1e-10 * abs(theta(q4, abs(z)))

    def test_dilate(self, q4, rng):
        f = random_series(rng)
        assert dilate(f, 1) == f
        assert dilate(f, q4.q).allclose(sigma_q(f, q4), 1e-12)
        assert dilate(LaurentSeries.monomial(2), 3).coeff(2) == pytest.approx(9)

    def test_dilate_by_zero(self, rng):
        with pytest.raises(ZeroDilation):
            dilate(random_series(rng), 0)

    def test_dilate_composition(self, rng):
        f = random_series(rng)
        lam, mu = 0.7 + 0.4j, -1.2 + 0.3j
        assert dilate(dilate(f, lam), mu).allclose(dilate(f, lam * mu), 1e-12)

    def test_ramify_series(self):
        assert ramify_series(LaurentSeries.monomial(1), 2) == LaurentSeries.monomial(2)
        f = LaurentSeries({0: 1, -1: 1})
        assert ramify_series(f, 3) == LaurentSeries({0: 1, -3: 1}, (-3, 0))

    def test_ramify_is_substitution(self, rng):
        f = random_series(rng)
        for _ in range(10):
            c = complex(*rng.normal(size=2))
            assert abs(evaluate(ramify_series(f, 3), c) - evaluate(f, c ** 3)) < 1e-12 * mass(f, c ** 3)

    def test_ramify_is_ring_morphism(self, rng):
        f, g = random_series(rng), random_series(rng)
        assert ramify_series(f + g, 2) == ramify_series(f, 2) + ramify_series(g, 2)
        assert ramify_series(f * g, 2).allclose(ramify_series(f, 2) * ramify_series(g, 2), 1e-13)

    def test_sigma_q_is_multiplicative(self, qp, rng):
        f, g = random_series(rng), random_series(rng)
        left = sigma_q(f * g, qp)
        right = sigma_q(f, qp) * sigma_q(g, qp)
        scale = max(left.max_abs(), 1.0)
        assert left.allclose(right, 1e-12 * scale)

    def test_evaluate(self):
        assert evaluate(LaurentSeries({0: 1, 1: 1}), 2) == pytest.approx(3)
        assert evaluate(LaurentSeries.monomial(-1), 2) == pytest.approx(0.5)

    def test_evaluate_at_zero(self):
        with pytest.raises(ZeroEvaluationPoint):
            evaluate(LaurentSeries.constant(1), 0)

    def test_evaluate_sigma_q(self, qp, rng):
        f = random_series(rng)
        c = cmath.exp(0.4j) * 1.3
        assert abs(evaluate(sigma_q(f, qp), c) - evaluate(f, qp.q * c)) < 1e-10 * mass(f, qp.q * c)

    def test_product_window(self):
        f = LaurentSeries({-1: 1, 0: 1})
        g = LaurentSeries({0: 1, 1: 1})
        product = f * g
        assert product.window == (-1, 1)
        assert product.coeffs == {-1: 1, 0: 2, 1: 1}

    def test_product_window_clipped(self):
        f = LaurentSeries.monomial(50)
        assert (f * f).is_zero()

    def test_exponent_outside_window(self):
        with pytest.raises(ValidationError):
            LaurentSeries({5: 1}, (0, 3))

    def test_json_round_trip(self, rng):
        f = random_series(rng)
        assert LaurentSeries.from_json(f.to_json()) == f

    def test_json_rejects_bad_window(self):
        with pytest.raises(ValidationError):
            LaurentSeries.from_json({"window": [3, 1], "coeffs": {}})


class TestLaurentMatrix:

    def test_unipotent_inverse(self):
        M = LaurentMatrix(0, np.array([[[1, 0], [0, 1]], [[0, 1], [0, 0]]]))
        inverse = M.inverse()
        assert (M @ inverse).allclose(LaurentMatrix.identity(2), 1e-14)
        assert inverse.coefficient(1)[0, 1] == pytest.approx(-1)

    def test_interpolated_inverse(self):
        M = LaurentMatrix(-1, np.array([
            [[0, 0], [0, 2]],
            [[0, 0], [0, 0]],
            [[1, 0], [0, 0]],
        ]))
        inverse = M.inverse()
        assert (M @ inverse).allclose(LaurentMatrix.identity(2), 1e-9)

    def test_singular_inverse(self):
        with pytest.raises(SingularGauge):
            LaurentMatrix.constant(np.ones((2, 2))).inverse()

    def test_ramify_contract(self, rng):
        M = LaurentMatrix(-2, rng.normal(size=(5, 2, 2)))
        assert M.ramify(3).contract(3).allclose(M, 0.0)

    def test_contract_rejects_mixed_exponents(self):
        M = LaurentMatrix(0, np.ones((2, 1, 1)))
        with pytest.raises(ValidationError):
            M.contract(2)

    def test_evaluate_matches_entries(self, rng):
        M = LaurentMatrix(-1, rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2)))
        z = 0.9 - 0.6j
        value = M.evaluate(z)
        assert value[1, 0] == pytest.approx(M.entry(1, 0).evaluate(z))

    def test_sigma_q_of_product(self, q4, rng):
        A = LaurentMatrix(-1, rng.normal(size=(3, 2, 2)))
        B = LaurentMatrix(0, rng.normal(size=(2, 2, 2)))
        assert ((A @ B).sigma_q(q4)).allclose(A.sigma_q(q4) @ B.sigma_q(q4), 1e-10)

    def test_json_round_trip(self, rng):
        M = LaurentMatrix(-2, rng.normal(size=(4, 2, 3)) + 1j * rng.normal(size=(4, 2, 3)))
        restored = LaurentMatrix.from_json(M.to_json())
        assert restored.lo == M.lo
        np.testing.assert_array_equal(restored.coeffs, M.coeffs)
