"""
Tests for points of E_q, root grids, characters and residues.
"""
import cmath
import math

import pytest

from elliptic import (
    EllipticPoint,
    canonicalize,
    character_gamma,
    default_residue_radius,
    gamma_power,
    residue_on_Eq,
    root_grid,
    shift_ell,
    spiral_distance,
)
from numkernel import QParams
from validation import ValidationError, ZeroPoint


class TestCanonicalize:

    def test_lands_in_fundamental_annulus(self, qp, rng):
        for _ in range(30):
            c = cmath.exp(complex(rng.uniform(-8, 8), rng.uniform(-3, 3)))
            rep = canonicalize(c, qp).rep
            assert 1 <= abs(rep) < abs(qp.q)

    def test_idempotent(self, qp):
        point = canonicalize(0.3 - 2.1j, qp)
        assert canonicalize(point.rep, qp).rep == pytest.approx(point.rep, rel=1e-14)

    def test_class_of_q_multiple(self, qp):
        c = 1.7 + 0.4j
        assert canonicalize(c * qp.q ** 3, qp).same_as(canonicalize(c, qp))
        assert not canonicalize(c * 1.1, qp).same_as(canonicalize(c, qp))

    def test_ramified_base(self, q4):
        qp = QParams(q4.tau, 2, q4.z0)
        point = canonicalize(3.0, qp, "qr")
        assert point.rep == pytest.approx(1.5)

    def test_zero_has_no_class(self, q4):
        with pytest.raises(ZeroPoint):
            canonicalize(0, q4)

    def test_unknown_base(self, q4):
        with pytest.raises(ValidationError):
            canonicalize(1.5, q4, "z")

    def test_group_operations(self, q4):
        a = canonicalize(1.5 + 1j, q4)
        b = canonicalize(-2.2 + 0.1j, q4)
        assert a.times(b).same_as(canonicalize(a.rep * b.rep, q4))
        assert a.times(a.inverse()).same_as(canonicalize(1, q4))
        assert a.power(3).same_as(canonicalize(a.rep ** 3, q4))

    def test_json_round_trip(self, qp):
        point = canonicalize(2.5 - 0.5j, qp)
        assert EllipticPoint.from_json(point.to_json(), qp).same_as(point)

    def test_spiral_distance(self, q4):
        c = 1.2 + 0.3j
        assert spiral_distance(c * q4.q ** 2, c, q4.log_q) < 1e-12
        assert spiral_distance(-c, c, q4.log_q) > 1


class TestCharacters:

    def test_unit_circle(self, q4):
        u = cmath.exp(0.9j)
        assert character_gamma(1, u, q4) == pytest.approx(u)
        assert character_gamma(2, u, q4) == pytest.approx(1)

    def test_half_period(self, q4):
        # 2 = q^(1/2) for q = 4
        assert character_gamma(2, 2, q4) == pytest.approx(-1)
        assert character_gamma(1, 2, q4) == pytest.approx(1)

    @pytest.mark.parametrize("kind", [1, 2])
    def test_multiplicative(self, qp, kind):
        a, b = 1.3 * cmath.exp(0.4j), 0.6 * cmath.exp(-2.0j)
        product = character_gamma(kind, a, qp) * character_gamma(kind, b, qp)
        assert character_gamma(kind, a * b, qp) == pytest.approx(product, rel=1e-12)

    def test_gamma_one_is_q_periodic_up_to_gamma_two(self, qp):
        c = 1.4 + 0.2j
        assert character_gamma(1, qp.q * c, qp) == pytest.approx(character_gamma(1, c, qp), rel=1e-12)
        assert character_gamma(2, qp.q * c, qp) == pytest.approx(character_gamma(2, c, qp), rel=1e-12)

    def test_gamma_power(self, q4):
        c = 2.0 * cmath.exp(0.3j)
        expected = character_gamma(1, c, q4) ** 2 * character_gamma(2, c, q4) ** -1
        assert gamma_power(c, 2, -1, q4) == pytest.approx(expected)

    def test_bad_kind(self, q4):
        with pytest.raises(ValidationError):
            character_gamma(3, 1.5, q4)


class TestRootGrid:

    @pytest.mark.parametrize("delta", [1, 2, 3, 5])
    def test_roots(self, qp, delta):
        beta = canonicalize(1.8 * cmath.exp(2.3j), qp)
        grid = root_grid(delta, beta, qp)
        for l in range(delta):
            for m in range(delta):
                assert abs(grid.point(l, m) ** delta - qp.q_power(-m) * grid.d) < 1e-12 * abs(grid.d)

    @pytest.mark.parametrize("delta", [2, 3, 4])
    def test_distinguished_root_window(self, qp, delta):
        beta = canonicalize(-1.3 + 0.8j, qp)
        phase = cmath.phase(root_grid(delta, beta, qp).c)
        assert -2 * math.pi / delta < phase <= 1e-15

    def test_trivial_class_picks_one(self, q4):
        grid = root_grid(2, canonicalize(1, q4), q4)
        assert grid.c == pytest.approx(1)
        assert grid.point(1) == pytest.approx(-1)

    def test_classes_are_distinct(self, q4):
        grid = root_grid(3, canonicalize(1.5j, q4), q4)
        classes = grid.classes()
        assert len(classes) == 9
        for i, a in enumerate(classes):
            for b in classes[i + 1:]:
                assert not a.same_as(b)

    def test_shift_ell(self, q4):
        assert shift_ell(1, canonicalize(1, q4), 1) == -1
        assert shift_ell(1, canonicalize(1j, q4), 2) == -1
        assert shift_ell(1, canonicalize(-1j, q4), 4) == 0


class TestResidue:

    def test_simple_pole(self):
        c0 = 1.5 + 0.5j
        assert residue_on_Eq(lambda c: 1 / (c - c0), c0) == pytest.approx(1 / c0, rel=1e-12)

    def test_holomorphic(self):
        assert abs(residue_on_Eq(lambda c: c ** 2 + 3, 2.0)) < 1e-12

    def test_matrix_valued(self):
        c0 = -1.0 + 1.0j
        value = residue_on_Eq(lambda c: [[1 / (c - c0), 0], [0, 2 / (c - c0)]], c0)
        assert value[1, 1] == pytest.approx(2 / c0, rel=1e-12)

    def test_zero_point(self):
        with pytest.raises(ZeroPoint):
            residue_on_Eq(lambda c: c, 0)

    def test_radius_follows_nearest_grid_point(self):
        assert default_residue_radius(2.0, [2.5, 1.0, 2.0]) == pytest.approx(0.05)
        assert default_residue_radius(2.0) == pytest.approx(0.1)

    def test_close_neighbour_stays_outside(self):
        c0, c1 = 1.5, 1.55
        phi = lambda c: 1 / (c - c0) + 1 / (c - c1)  # noqa: E731
        assert residue_on_Eq(phi, c0, neighbours=[c1]) == pytest.approx(1 / c0, rel=1e-10)
