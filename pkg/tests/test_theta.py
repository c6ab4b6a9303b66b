"""
Tests for theta functions, the coefficients t_n^(delta) and the hexagonal series.
"""
import math

import numpy as np
import pytest

from numkernel import QParams
from theta import (
    HexFormSeries,
    ThetaCoeffTable,
    find_bad_q,
    hex_counts,
    hex_series,
    is_good_value,
    pochhammer,
    scan_hex_sign,
    theta,
    theta_power_coeff,
    theta_power_coeff_direct,
    theta_power_series,
    theta_shifted,
    theta_square_split,
    triple_product,
)
from validation import DomainError, ZeroArgument


def mass(qp: QParams, z: complex) -> float:
    """theta_|q|(|z|): the cancellation-free size of theta_q(z)"""
    return theta(QParams.from_q(abs(qp.q)), abs(z)).real


class TestTheta:

    def test_functional_equation(self, qp, annulus_points):
        for z in annulus_points:
            gap = abs(theta(qp, qp.q * z) - z * theta(qp, z))
            assert gap < 1e-10 * mass(qp, qp.q * z)

    def test_inversion_symmetry(self, qp, annulus_points):
        for z in annulus_points:
            assert abs(theta(qp, 1 / z) - z * theta(qp, z)) < 1e-10 * abs(z) * mass(qp, z)

    def test_triple_product(self, qp, annulus_points):
        for z in annulus_points[:20]:
            assert abs(triple_product(qp, z) - theta(qp, z)) < 1e-10 * mass(qp, z)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_zeros_on_negative_spiral(self, q4, k):
        assert abs(theta(q4, -q4.q_power(-k))) < 1e-9

    def test_triple_product_zero_at_minus_one(self, qp):
        assert abs(triple_product(qp, -1)) < 1e-10

    @pytest.mark.parametrize("z", [0.3, 1.0, 2.5, 7.0])
    def test_triple_product_positive_for_real_q(self, q4, z):
        value = triple_product(q4, z)
        assert value.real > 0
        assert abs(value.imag) < 1e-12 * value.real

    def test_zero_argument(self, q4):
        with pytest.raises(ZeroArgument):
            theta(q4, 0)
        with pytest.raises(ZeroArgument):
            triple_product(q4, 0)

    def test_shifted_theta_quasi_periodicity(self, qp, annulus_points):
        c = 1.2 * np.exp(0.7j)
        for z in annulus_points[:20]:
            left = theta_shifted(qp, qp.q * c, z)
            right = qp.q * c / z * theta_shifted(qp, c, z)
            assert abs(left - right) < 1e-10 * mass(qp, z / (qp.q * c)) * max(1.0, abs(qp.q * c / z))

    def test_pochhammer_domain(self):
        with pytest.raises(DomainError):
            pochhammer(0.5, 1.5)

    def test_pochhammer_finite_product(self):
        # (a; 0) = 1 - a
        assert pochhammer(0.25, 0) == pytest.approx(0.75)


class TestThetaCoefficients:

    @pytest.mark.parametrize("n", range(-6, 7))
    def test_first_power_closed_form(self, qp, n):
        assert theta_power_coeff(qp, 1, n) == pytest.approx(qp.q_power(-n * (n + 1) / 2), rel=1e-13)

    @pytest.mark.parametrize("q", [4, 2 + 1j])
    def test_square_coefficients(self, q):
        qp = QParams.from_q(q)
        q2 = QParams(2 * qp.tau, 1, qp.z0)
        for n in range(-10, 11):
            t = theta_power_coeff(qp, 2, n)
            closed = qp.q_power(-n * (n + 1) / 2) * theta(q2, qp.q_power(n + 1))
            assert abs(t - closed) < 1e-10 * abs(t)

    def test_square_split(self, q4, rng):
        for _ in range(10):
            z = math.exp(rng.random() * math.log(4)) * np.exp(2j * math.pi * rng.random())
            gap = abs(theta(q4, z) ** 2 - theta_square_split(q4, z))
            assert gap < 1e-10 * mass(q4, z) ** 2

    @pytest.mark.parametrize("q", [4, 2 + 1j, -3])
    def test_convolution_matches_direct_sum(self, q):
        qp = QParams.from_q(q)
        table = ThetaCoeffTable(qp, 3, 15)
        reference = ThetaCoeffTable(QParams.from_q(abs(q)), 3, 15)
        for delta in (1, 2, 3):
            for n in range(-15, 16):
                direct = theta_power_coeff_direct(qp, delta, n)
                scale = abs(reference.value(delta, n))
                assert abs(table.value(delta, n) - direct) < 1e-10 * scale

    def test_higher_power_recursion(self, q4):
        table = ThetaCoeffTable(q4, 5, 40)
        for n in range(-8, 9):
            convolved = sum(table.value(4, m) * theta_power_coeff(q4, 1, n - m) for m in range(-40, 41))
            assert abs(table.value(5, n) - convolved) < 1e-10 * abs(table.value(5, n))

    def test_power_series_coefficients(self, q4):
        c = 1.5 - 0.5j
        series = theta_power_series(q4, c, 2)
        for n in (-2, 0, 3):
            assert series.coeff(n) == pytest.approx(theta_power_coeff(q4, 2, n) * c ** (-n), rel=1e-10)

    def test_power_series_evaluates_to_power(self, q4):
        c = 1.1 + 0.3j
        series = theta_power_series(q4, c, 3)
        z = 2.0 - 0.7j
        assert series.evaluate(z) == pytest.approx(theta_shifted(q4, c, z) ** 3, rel=1e-9)


class TestGoodValues:

    def test_four_is_good(self, q4):
        report = is_good_value(q4, 4, 20)
        assert report["verdict"] == "good within tested range"
        assert report["min_rel"] > 1e-12

    def test_first_power_never_vanishes(self, q_complex):
        report = is_good_value(q_complex, 1, 30)
        assert report["verdict"].startswith("good")
        assert report["min_rel"] == pytest.approx(1.0)

    def test_bad_q_is_flagged(self):
        qp = QParams.from_q(find_bad_q())
        report = is_good_value(qp, 3, 2, tol=1e-8)
        assert report["verdict"] == "bad within tested range"
        assert report["argmin"] == [3, 0]


class TestHexSeries:

    def test_value_at_zero(self):
        assert hex_series(0.0) == 1.0

    def test_small_counts(self):
        counts, cumulative = hex_counts(7)
        assert list(counts[:8]) == [1, 6, 0, 6, 6, 0, 0, 12]
        assert cumulative[7] == 31

    def test_counts_match_brute_force(self):
        counts, _ = hex_counts(30)
        for n in range(31):
            brute = sum(1 for a in range(-8, 9) for b in range(-8, 9) if a * a + a * b + b * b == n)
            assert counts[n] == brute

    def test_lattice_density(self):
        _, cumulative = hex_counts(10000)
        assert cumulative[10000] / 10000 == pytest.approx(2 * math.pi / math.sqrt(3), rel=0.05)

    def test_linear_term(self):
        x = 1e-4
        assert hex_series(x) == pytest.approx(1 + 6 * x, abs=1e-11)

    @pytest.mark.parametrize("x", [0.3, 0.6, 0.9])
    def test_parity_identity(self, x):
        gap = abs(hex_series(-x) - (2 * hex_series(x ** 4) - hex_series(x)))
        assert gap < 1e-12 * hex_series(x)

    def test_domain(self):
        with pytest.raises(DomainError):
            hex_series(1.0)

    def test_truncation_order_grows(self):
        assert HexFormSeries.order_for(0.9) > HexFormSeries.order_for(0.5)

    def test_series_gives_t03(self):
        qp = QParams.from_q(3)
        assert abs(theta_power_coeff(qp, 3, 0) - hex_series(1 / 3)) < 1e-10

    def test_sign_change(self):
        assert hex_series(-0.1) > 0
        assert min(value for _, value in scan_hex_sign()) < 0

    def test_find_bad_q(self):
        q_star = find_bad_q()
        assert q_star < -1
        assert abs(theta_power_coeff(QParams.from_q(q_star), 3, 0)) < 1e-9
