"""
Tests for the input validators.
"""
from fractions import Fraction

import pytest

from validation import (
    PIPELINE_STEPS,
    VERIFY_SUITES,
    ConfigValidator,
    QdxError,
    SystemValidator,
    ValidationError,
    Validator,
)


class TestValidator:

    @pytest.mark.parametrize("value,ok", [
        ([1.0, -2.0], True),
        ((0, 0), True),
        ([1.0], False),
        ("1,2", False),
        (["a", 1], False),
        ([float("inf"), 0], False),
    ])
    def test_complex_pair(self, value, ok):
        assert Validator.validate_complex_pair(value, "z")[0] is ok

    @pytest.mark.parametrize("tau,ok", [(-0.22j, True), (0.1 - 1j, True), (0.22j, False), (0.3 + 0j, False)])
    def test_tau(self, tau, ok):
        is_valid, error = Validator.validate_tau(tau)
        assert is_valid is ok
        assert (error == "") is ok

    @pytest.mark.parametrize("value,ok", [(3, True), (0, False), (65, False), (True, False), (2.0, False), (None, False)])
    def test_integer_range(self, value, ok):
        assert Validator.validate_integer_range(value, "r", 1, 64)[0] is ok

    @pytest.mark.parametrize("value,ok", [(1e-9, True), ("0.5", True), (0, False), (-1, False), ("x", False)])
    def test_positive_number(self, value, ok):
        assert Validator.validate_positive_number(value, "tol")[0] is ok

    @pytest.mark.parametrize("window,ok", [([-60, 60], True), ((0, 0), True), ([3, 2], False), ([0.5, 2], False), ([1], False)])
    def test_window(self, window, ok):
        assert Validator.validate_window(window)[0] is ok

    def test_nonzero(self):
        assert Validator.validate_nonzero(1j, "z0")[0]
        assert not Validator.validate_nonzero(0j, "z0")[0]

    def test_suites_and_steps(self):
        for suite in VERIFY_SUITES:
            assert Validator.validate_suite(suite)[0]
        assert not Validator.validate_suite("everything")[0]
        assert Validator.validate_steps(list(PIPELINE_STEPS))[0]
        is_valid, error = Validator.validate_steps(["gr", "sort"])
        assert not is_valid
        assert "Step 1 'sort'" in error


class TestConfigValidator:

    def test_empty_is_valid(self):
        assert ConfigValidator.validate_settings({}) == (True, "")

    @pytest.mark.parametrize("data", [
        [],
        {"tau": [0.0, 0.3]},
        {"tau": "q=4"},
        {"r": 0},
        {"z0": [0, 0]},
        {"window": [5, -5]},
        {"tolerances": {"theta": -1}},
        {"tolerances": [1e-9]},
        {"seed": -1},
    ])
    def test_rejects(self, data):
        is_valid, error = ConfigValidator.validate_settings(data)
        assert not is_valid
        assert error

    def test_accepts_full_settings(self):
        data = {"tau": [0.0, -0.22], "r": 2, "z0": [0.8, 0.4], "window": [-40, 40],
                "tolerances": {"theta": 1e-10}, "seed": 7}
        assert ConfigValidator.validate_settings(data)[0]


class TestSystemValidator:

    def test_newton(self):
        assert SystemValidator.validate_newton((Fraction(0), Fraction(1, 2)), (1, 2))[0]
        assert not SystemValidator.validate_newton((Fraction(1, 2),), (3,))[0]
        assert not SystemValidator.validate_newton((Fraction(1), Fraction(1)), (1, 1))[0]

    @pytest.mark.parametrize("block,ok", [
        ({"kind": "integer", "mu": 1, "matrix": [[[1, 0]]]}, True),
        ({"kind": "integer", "mu": 1, "matrix": [[[1, 0], [0, 0]]]}, False),
        ({"kind": "irreducible", "r": 2, "d": 1, "c": [1.5, 0]}, True),
        ({"kind": "irreducible", "r": 2, "d": 2, "c": [1.5, 0]}, False),
        ({"kind": "irreducible", "r": 2, "d": 1}, False),
        ({"kind": "matrix"}, False),
        ("integer", False),
    ])
    def test_block_description(self, block, ok):
        assert SystemValidator.validate_block_description(block)[0] is ok


def test_errors_share_a_base():
    assert issubclass(ValidationError, QdxError)
    with pytest.raises(QdxError):
        raise ValidationError("bad input")
