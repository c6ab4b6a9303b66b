"""
Tests for algebraic summation and Stokes cocycles.
"""
import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from elliptic import canonicalize, spiral_distance
from numkernel import LaurentMatrix, QParams
from qdmod import BlockSystem, NewtonData, PureBlock
from stokes import (
    SAMPLE_THETA_FLOOR,
    StokesCocycle,
    algebraic_sum_two_slopes,
    check_direction,
    gauge_residual_at,
    multi_slope_sum,
    resonance_set,
    sample_points,
    spectral_projector,
    stokes_cocycle,
    theta_floor_score,
)
from theta import theta, theta_power_coeff
from validation import ForbiddenDirection, Unsupported, ValidationError, WindowOverflow
from verify import allowed_direction, random_two_slope_system

TOL = 1e-8


def relative(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.abs(x - y).max() / max(1.0, np.abs(y).max()))


def scalar_system(a: complex, b: complex, delta: int) -> BlockSystem:
    newton = NewtonData((Fraction(0), Fraction(delta)), (1, 1))
    upper = LaurentMatrix(-1, np.array([0.4, 1.0, -0.3j]).reshape(3, 1, 1))
    return BlockSystem(newton, [PureBlock.integer(0, [[a]]), PureBlock.integer(delta, [[b]])], {(0, 1): upper})


def three_slope_system(upper_02: complex = 0.6) -> BlockSystem:
    newton = NewtonData((Fraction(0), Fraction(1), Fraction(2)), (1, 1, 1))
    diag = [PureBlock.integer(0, [[1.1 + 0.2j]]), PureBlock.integer(1, [[0.8]]),
            PureBlock.integer(2, [[-0.9 + 0.5j]])]
    upper = {
        (0, 1): LaurentMatrix(-1, np.array([0.5, 1.0, 0.2j]).reshape(3, 1, 1)),
        (0, 2): LaurentMatrix(0, np.array([upper_02, -0.3]).reshape(2, 1, 1)),
        (1, 2): LaurentMatrix(0, np.array([0.7j, 0.0, 0.4]).reshape(3, 1, 1)),
    }
    return BlockSystem(newton, diag, upper)


@pytest.fixture(params=[(1, 1), (2, 1), (3, 1), (1, 2), (2, 2)], ids=lambda p: f"delta{p[0]}-size{p[1]}")
def summed(request, qp, rng):
    delta, size = request.param
    A = random_two_slope_system(rng, delta, size=size)
    c = allowed_direction(rng, A, qp)
    return A, c, multi_slope_sum(A, c, qp)


class TestSummation:

    def test_gauge_from_graded(self, summed, qp):
        A, c, F = summed
        points = sample_points(qp, [c], seed=3)
        assert gauge_residual_at(F.evaluate, A.graded(), A, qp, points) < TOL

    def test_direction_is_a_class(self, summed, qp):
        A, c, F = summed
        shifted = multi_slope_sum(A, qp.q * c, qp)
        for z in sample_points(qp, [c], count=8, seed=5):
            assert relative(shifted.evaluate(z), F.evaluate(z)) < TOL

    def test_solvers_agree(self, summed, qp):
        A, c, F = summed
        linear = multi_slope_sum(A, c, qp, linear=True)
        for z in sample_points(qp, [c], count=8, seed=7):
            assert relative(linear.evaluate(z), F.evaluate(z)) < TOL

    def test_unipotent_shape(self, summed, qp):
        A, c, F = summed
        value = F.evaluate(sample_points(qp, [c], count=1, seed=11)[0])
        n = A.sizes[0]
        np.testing.assert_allclose(value[:n, :n], np.eye(n))
        np.testing.assert_allclose(value[n:, n:], np.eye(n))
        np.testing.assert_allclose(value[n:, :n], 0)

    def test_pole_certificate(self, summed):
        A, c, F = summed
        certificate = F.pole_certificate()
        assert [entry["block"] for entry in certificate] == [[0, 1]]
        assert certificate[0]["max_pole_order"] == int(A.level(0, 1))
        assert certificate[0]["spiral"] == [-c.real, -c.imag]

    def test_graded_system_sums_to_identity(self, q4):
        A = scalar_system(1.2, 0.9j, 2).graded()
        F = multi_slope_sum(A, 1.7, q4)
        assert F.numerators == {}
        np.testing.assert_allclose(F.evaluate(0.6 + 0.2j), np.eye(2))

    def test_json(self, q4):
        report = multi_slope_sum(scalar_system(1.2, 0.9j, 1), 1.7, q4).to_json()
        assert set(report) >= {"direction", "c", "numerators", "deltas", "pole_certificate"}
        assert report["deltas"] == {"0,1": 1}

    def test_window_overflow(self, q4):
        with pytest.raises(WindowOverflow):
            multi_slope_sum(scalar_system(1.2, 0.9j, 1), 1.7, q4, window=(-2, 2))

    def test_needs_integral_blocks(self, q4):
        newton = NewtonData((Fraction(0), Fraction(1, 2)), (1, 2))
        A = BlockSystem(newton, [PureBlock.integer(0, [[1]]), PureBlock.from_irreducible(2, 1, 1.0, q4)])
        with pytest.raises(Unsupported):
            multi_slope_sum(A, 1.3, q4)


    @pytest.mark.parametrize("delta", [1, 2, 3, 4])
    def test_residuals_at_every_level(self, q4, delta):
        rng = np.random.default_rng(100 + delta)
        for _ in range(5):
            A = random_two_slope_system(rng, delta)
            c, d = (allowed_direction(rng, A, q4) for _ in range(2))
            F_c, F_d = multi_slope_sum(A, c, q4), multi_slope_sum(A, d, q4)
            points = sample_points(q4, [c, d], seed=delta)
            assert gauge_residual_at(F_c.evaluate, A.graded(), A, q4, points) < 1e-9
            assert StokesCocycle(F_c, F_d).automorphism_residual(A.graded(), points) < 1e-9

    def test_three_slopes(self, qp):
        A = three_slope_system()
        c = allowed_direction(np.random.default_rng(5), A, qp)
        F = multi_slope_sum(A, c, qp)
        assert set(F.numerators) == {(0, 1), (1, 2), (0, 2)}
        assert F.deltas[(0, 2)] == 2
        assert gauge_residual_at(F.evaluate, A.graded(), A, qp, sample_points(qp, [c], seed=6)) < 1e-8

    def test_lower_levels_ignore_higher_blocks(self, q4):
        # A_U and A_V differ only at level 2
        c = 1.3 + 0.7j
        F_u = multi_slope_sum(three_slope_system(0.6), c, q4)
        F_v = multi_slope_sum(three_slope_system(-2.0j), c, q4)
        for pair in [(0, 1), (1, 2)]:
            assert F_u.numerators[pair].allclose(F_v.numerators[pair], 1e-14)
        assert not F_u.numerators[(0, 2)].allclose(F_v.numerators[(0, 2)], 1e-6)


class TestDirections:

    @pytest.mark.parametrize("m", [-1, 0, 2])
    def test_resonant_direction_slope_one(self, q4, m):
        # q^m c = a / b
        A = scalar_system(1.0, 2.0, 1)
        with pytest.raises(ForbiddenDirection):
            check_direction(A.graded(), 0.5 * q4.q_power(-m), q4)
        with pytest.raises(ForbiddenDirection):
            multi_slope_sum(A, 0.5 * q4.q_power(-m), q4)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_resonant_direction_slope_two(self, q_complex, sign):
        a, b = 1.5j, 0.8
        root = sign * cmath.sqrt(a / b)
        with pytest.raises(ForbiddenDirection):
            check_direction(scalar_system(a, b, 2).graded(), root, q_complex)

    def test_resonance_set_lists_forbidden_classes(self, q4):
        A = scalar_system(1.0, 2.0, 2).graded()
        forbidden = resonance_set(A, q4)
        assert len(forbidden.points) == 4
        root = cmath.sqrt(0.5)
        for c in (root, -root, root / 2, -root / 2):
            assert forbidden.contains(canonicalize(c, q4))
            with pytest.raises(ForbiddenDirection):
                check_direction(A, c, q4)
        assert not forbidden.contains(canonicalize(1.3j, q4))
        assert forbidden.to_json()["provenance"][0]["block"] == [0, 1]

    def test_zero_direction(self, q4):
        with pytest.raises(ValidationError):
            check_direction(scalar_system(1.0, 2.0, 1).graded(), 0, q4)

    def test_sample_points_avoid_spirals(self, q_complex):
        directions = [1.3, 0.7 - 0.4j]
        points = sample_points(q_complex, directions, count=30, seed=1)
        assert len(points) == 30
        np.testing.assert_allclose(np.abs(points), abs(q_complex.z0))
        for z in points:
            for c in directions:
                assert spiral_distance(z, -c, q_complex.log_q) >= 0.05

    def test_sample_points_clear_the_theta_floor(self, q4):
        c = 1.7 + 0.9j
        mass_qp = QParams.from_q(abs(q4.q))
        for z in sample_points(q4, [c], count=15, seed=9):
            assert theta_floor_score(q4, mass_qp, z, c) >= SAMPLE_THETA_FLOOR


class TestCocycle:

    @pytest.fixture
    def three_directions(self, qp, rng):
        A = random_two_slope_system(rng, 2, size=2)
        c, d, e = (allowed_direction(rng, A, qp) for _ in range(3))
        return A, [multi_slope_sum(A, x, qp) for x in (c, d, e)], (c, d, e)

    def test_cocycle_relation(self, qp, three_directions):
        A, (F_c, F_d, F_e), directions = three_directions
        cd, de, ce = StokesCocycle(F_c, F_d), StokesCocycle(F_d, F_e), StokesCocycle(F_c, F_e)
        for z in sample_points(qp, directions, count=10, seed=2):
            assert relative(cd.evaluate(z) @ de.evaluate(z), ce.evaluate(z)) < TOL

    def test_automorphism_of_graded(self, qp, three_directions):
        A, (F_c, F_d, _), directions = three_directions
        cocycle = StokesCocycle(F_c, F_d)
        points = sample_points(qp, directions, count=10, seed=4)
        assert cocycle.automorphism_residual(A.graded(), points) < TOL
        assert cocycle.off_diagonal_residual(A.graded(), points) < TOL

    def test_same_direction_is_trivial(self, q4, rng):
        A = random_two_slope_system(rng, 1)
        c = allowed_direction(rng, A, q4)
        cocycle = stokes_cocycle(A, c, c, q4)
        assert cocycle.directions == (complex(c), complex(c))
        np.testing.assert_allclose(cocycle.evaluate(0.5 + 0.6j), np.eye(2), atol=1e-9)

    def test_report(self, q4, rng):
        A = random_two_slope_system(rng, 1)
        c, d = (allowed_direction(rng, A, q4) for _ in range(2))
        cocycle = stokes_cocycle(A, c, d, q4)
        points = sample_points(q4, [c, d], count=5)
        report = cocycle.to_json(A.graded(), points)
        assert report["automorphism_residual"] < TOL
        assert set(cocycle.to_json()) == {"c", "d"}


class TestTwoSlopeSum:

    def test_zero_upper_block_gives_identity(self, q4):
        F = algebraic_sum_two_slopes(scalar_system(1.2, 0.9j, 2).graded(), 1.7, q4)
        assert F.numerators == {}
        np.testing.assert_allclose(F.evaluate(0.4 - 0.7j), np.eye(2))

    def test_constant_upper_block_closed_form(self, q4):
        a, u0, delta, c = 1.2 - 0.3j, 0.7, 2, 1.7 + 0.4j
        newton = NewtonData((Fraction(0), Fraction(delta)), (1, 1))
        A = BlockSystem(newton, [PureBlock.integer(0, [[a]]), PureBlock.integer(delta, [[1.0]])],
                        {(0, 1): LaurentMatrix.constant([[u0]])})
        F = algebraic_sum_two_slopes(A, c, q4)
        z = 0.5 + 0.6j
        series = sum(theta_power_coeff(q4, delta, m) * c ** (-m) * z ** m / (q4.q_power(m) * c ** delta - a)
                     for m in range(-40, 41))
        closed = u0 * series / theta(q4, z / c) ** delta
        assert abs(F.evaluate(z)[0, 1] - closed) < 1e-9 * abs(closed)
        points = sample_points(q4, [c], seed=1)
        assert gauge_residual_at(F.evaluate, A.graded(), A, q4, points) < 1e-9

    def test_direction_invariance_and_agreement(self, q_complex):
        A = random_two_slope_system(np.random.default_rng(21), 2, size=2)
        c = allowed_direction(np.random.default_rng(22), A, q_complex)
        F = algebraic_sum_two_slopes(A, c, q_complex)
        layered = multi_slope_sum(A, c, q_complex)
        assert F.numerators[(0, 1)].allclose(layered.numerators[(0, 1)], 1e-14)
        shifted = algebraic_sum_two_slopes(A, q_complex.q * c, q_complex)
        for z in sample_points(q_complex, [c], count=8, seed=3):
            assert relative(shifted.evaluate(z), F.evaluate(z)) < 1e-9

    def test_needs_two_blocks(self, q4):
        with pytest.raises(Unsupported):
            algebraic_sum_two_slopes(three_slope_system(), 1.3 + 0.7j, q4)


class TestSpectralProjector:

    def test_identity_blocks(self):
        project = spectral_projector([np.eye(2)], [np.eye(3)], 1.0)
        X = np.arange(6, dtype=complex).reshape(2, 3) + 1j
        np.testing.assert_allclose(project(X), X)

    def test_not_an_eigenvalue_ratio(self):
        project = spectral_projector([np.eye(2)], [np.eye(3)], 5.0)
        np.testing.assert_allclose(project(np.ones((2, 3))), 0)

    def test_resolvent_residue(self):
        P, Q = np.diag([2.0, 3.0]), np.diag([1.0, 1.5])
        lam = 2.0
        project = spectral_projector([P[:1, :1], P[1:, 1:]], [Q[:1, :1], Q[1:, 1:]], lam)
        # vec(P X Q^(-1)) in column-major order
        phi = np.kron(np.linalg.inv(Q).T, P)
        nodes = lam + 0.2 * np.exp(2j * math.pi * np.arange(64) / 64)
        residue = sum((z - lam) * np.linalg.inv(z * np.eye(4) - phi) for z in nodes) / len(nodes)
        X = np.array([[1.0 + 0.5j, -2.0], [0.3j, 0.7]])
        expected = (residue @ X.flatten(order="F")).reshape((2, 2), order="F")
        np.testing.assert_allclose(project(X), expected, atol=1e-10)
        np.testing.assert_allclose(project(X), [[X[0, 0], 0], [0, X[1, 1]]])
