"""
Data validation module for qdx.
Holds the error vocabulary and the validators applied to user-supplied data
before any numerical object is built.
"""
import math
from fractions import Fraction
from typing import Any, Dict, List, Sequence, Tuple


class QdxError(Exception):
    """Base class for every error raised by qdx"""
    pass


class ValidationError(QdxError):
    """Custom exception for validation errors"""
    pass


class ZeroDilation(QdxError):
    """Dilation by zero is not an automorphism"""
    pass


class ZeroEvaluationPoint(QdxError):
    """A Laurent series cannot be evaluated at z = 0"""
    pass


class ZeroArgument(QdxError):
    """Theta functions are undefined at z = 0"""
    pass


class DomainError(QdxError):
    """Argument outside the convergence domain"""
    pass


class BracketingFailed(QdxError):
    """No sign change located while searching for a root"""
    pass


class ZeroPoint(QdxError):
    """Zero has no class in C*/q^Z"""
    pass


class PoleOnCircle(QdxError):
    """Contour samples hit a singularity"""
    pass


class SingularGauge(QdxError):
    """Gauge matrix is not invertible over Laurent polynomials"""
    pass


class EmptyOperator(QdxError):
    """Operator has no usable coefficients"""
    pass


class ResonantNormalization(QdxError):
    """Linear system of a normalization layer is singular"""
    pass


class ForbiddenDirection(QdxError):
    """Summation direction lies on the resonance set"""
    pass


class WindowOverflow(QdxError):
    """Series window exceeds the configured width"""
    pass


class Unsupported(QdxError):
    """Input shape outside what the reductions handle"""
    pass


class BasePointOnSpiral(QdxError):
    """Base point z0 sits on a theta zero spiral"""
    pass


class BadQValue(QdxError):
    """q is not a good value on the tested range"""
    pass


class CocycleNotClosed(QdxError):
    """Twisted product of descent data is not the identity"""
    pass


class DescentFailed(QdxError):
    """Descended system is not invariant under the Galois generator"""
    pass


class UnknownSuite(QdxError):
    """Verification suite name not recognized"""
    pass


VERIFY_SUITES = ("theta", "stokes", "alien", "formal", "ramify", "all")
PIPELINE_STEPS = ("newton", "gr", "normalize", "sum", "cocycle", "alien", "act", "ramify")


class Validator:
    """Main validation class with static methods for scalar inputs"""

    @staticmethod
    def validate_complex_pair(value: Any, field_name: str) -> Tuple[bool, str]:
        """
        Validate a complex number given as [re, im]

        Args:
            value: Candidate pair
            field_name: Name of the field for error messages

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            return False, f"{field_name} must be a [re, im] pair"
        try:
            re_part, im_part = float(value[0]), float(value[1])
        except (TypeError, ValueError):
            return False, f"{field_name} must contain two numbers"
        if not (math.isfinite(re_part) and math.isfinite(im_part)):
            return False, f"{field_name} must be finite"
        return True, ""

    @staticmethod
    def validate_tau(tau: complex) -> Tuple[bool, str]:
        """
        Validate the period tau so that |q| = |exp(2i*pi*tau)| > 1

        Args:
            tau: Complex period

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not (math.isfinite(tau.real) and math.isfinite(tau.imag)):
            return False, "tau must be finite"
        if tau.imag >= 0:
            return False, f"tau must have negative imaginary part to give |q| > 1 (got {tau})"
        return True, ""

    @staticmethod
    def validate_nonzero(value: complex, field_name: str) -> Tuple[bool, str]:
        """Validate that a complex value is nonzero and finite"""
        if value == 0:
            return False, f"{field_name} must be nonzero"
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            return False, f"{field_name} must be finite"
        return True, ""

    @staticmethod
    def validate_integer_range(value: int, field_name: str, min_value: int = 1,
                               max_value: int = 1000000) -> Tuple[bool, str]:
        """
        Validate integer within range

        Args:
            value: Integer to validate
            field_name: Name of the field for error messages
            min_value: Minimum allowed value
            max_value: Maximum allowed value

        Returns:
            Tuple of (is_valid, error_message)
        """
        if value is None:
            return False, f"{field_name} is required"
        if isinstance(value, bool) or not isinstance(value, int):
            return False, f"{field_name} must be an integer"
        if value < min_value:
            return False, f"{field_name} must be at least {min_value}"
        if value > max_value:
            return False, f"{field_name} must be no more than {max_value}"
        return True, ""

    @staticmethod
    def validate_positive_number(value: float, field_name: str) -> Tuple[bool, str]:
        """Validate a strictly positive finite real"""
        if value is None:
            return False, f"{field_name} is required"
        try:
            value = float(value)
        except (TypeError, ValueError):
            return False, f"{field_name} must be a number"
        if not math.isfinite(value) or value <= 0:
            return False, f"{field_name} must be positive"
        return True, ""

    @staticmethod
    def validate_window(window: Sequence[int]) -> Tuple[bool, str]:
        """Validate an inclusive exponent window [lo, hi]"""
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            return False, "window must be a [lo, hi] pair"
        lo, hi = window
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (lo, hi)):
            return False, "window bounds must be integers"
        if lo > hi:
            return False, f"window is empty: [{lo}, {hi}]"
        return True, ""

    @staticmethod
    def validate_suite(name: str) -> Tuple[bool, str]:
        """Validate a verification suite name"""
        if name not in VERIFY_SUITES:
            return False, f"Unknown suite '{name}', expected one of {', '.join(VERIFY_SUITES)}"
        return True, ""

    @staticmethod
    def validate_steps(steps: List[str]) -> Tuple[bool, str]:
        """Validate pipeline step names"""
        for index, step in enumerate(steps):
            if step not in PIPELINE_STEPS:
                return False, f"Step {index} '{step}' is not one of {', '.join(PIPELINE_STEPS)}"
        return True, ""


class ConfigValidator:
    """Validation class for run configuration data"""

    @staticmethod
    def validate_settings(data: Dict[str, Any]) -> Tuple[bool, str]:
        """
        Validate the run settings dictionary

        Args:
            data: Dictionary loaded from a settings file

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not isinstance(data, dict):
            return False, "Settings must be a dictionary"

        if "tau" in data:
            is_valid, error = Validator.validate_complex_pair(data["tau"], "tau")
            if not is_valid:
                return False, error
            is_valid, error = Validator.validate_tau(complex(*data["tau"]))
            if not is_valid:
                return False, error

        if "r" in data:
            is_valid, error = Validator.validate_integer_range(data["r"], "r", 1, 64)
            if not is_valid:
                return False, error

        if "z0" in data:
            is_valid, error = Validator.validate_complex_pair(data["z0"], "z0")
            if not is_valid:
                return False, error
            is_valid, error = Validator.validate_nonzero(complex(*data["z0"]), "z0")
            if not is_valid:
                return False, error

        if "window" in data:
            is_valid, error = Validator.validate_window(data["window"])
            if not is_valid:
                return False, error

        tolerances = data.get("tolerances", {})
        if not isinstance(tolerances, dict):
            return False, "tolerances must be a dictionary"
        for name, value in tolerances.items():
            is_valid, error = Validator.validate_positive_number(value, f"tolerance '{name}'")
            if not is_valid:
                return False, error

        if "seed" in data:
            is_valid, error = Validator.validate_integer_range(data["seed"], "seed", 0, 2**32 - 1)
            if not is_valid:
                return False, error

        return True, ""


class SystemValidator:
    """Validation class for block system descriptions"""

    @staticmethod
    def validate_newton(slopes: Sequence[Fraction], mults: Sequence[int]) -> Tuple[bool, str]:
        """
        Validate declared Newton data

        Args:
            slopes: Slopes in increasing order
            mults: Multiplicities, one per slope

        Returns:
            Tuple of (is_valid, error_message)
        """
        if len(slopes) == 0:
            return False, "At least one slope is required"
        if len(slopes) != len(mults):
            return False, "slopes and mults must have the same length"
        for index in range(1, len(slopes)):
            if slopes[index] <= slopes[index - 1]:
                return False, "slopes must be strictly increasing"
        for slope, mult in zip(slopes, mults):
            if isinstance(mult, bool) or not isinstance(mult, int) or mult < 1:
                return False, "multiplicities must be positive integers"
            if (slope * mult).denominator != 1:
                return False, f"slope {slope} with multiplicity {mult} has non-integral degree"
        return True, ""

    @staticmethod
    def validate_block_description(block: Dict[str, Any]) -> Tuple[bool, str]:
        """Validate one diagonal block descriptor"""
        if not isinstance(block, dict):
            return False, "Each diagonal block must be a dictionary"
        kind = block.get("kind")
        if kind == "integer":
            if "mu" not in block or "matrix" not in block:
                return False, "Integer blocks need 'mu' and 'matrix'"
            rows = block["matrix"]
            if not isinstance(rows, list) or not rows:
                return False, "Block matrix must be a non-empty list of rows"
            width = len(rows)
            for row in rows:
                if not isinstance(row, list) or len(row) != width:
                    return False, "Block matrix must be square"
                for entry in row:
                    is_valid, error = Validator.validate_complex_pair(entry, "matrix entry")
                    if not is_valid:
                        return False, error
            return True, ""
        if kind == "irreducible":
            for key in ("r", "d", "c"):
                if key not in block:
                    return False, f"Irreducible blocks need '{key}'"
            is_valid, error = Validator.validate_integer_range(block["r"], "r", 1, 64)
            if not is_valid:
                return False, error
            if math.gcd(int(block["d"]), int(block["r"])) != 1:
                return False, "Irreducible blocks need gcd(d, r) = 1"
            is_valid, error = Validator.validate_complex_pair(block["c"], "c")
            if not is_valid:
                return False, error
            return Validator.validate_integer_range(block.get("m", 1), "m", 1, 16)
        if kind == "laurent":
            if "slope" not in block or not isinstance(block.get("matrix"), dict):
                return False, "Laurent blocks need 'slope' and a 'matrix' object"
            try:
                Fraction(str(block["slope"]))
            except (ValueError, ZeroDivisionError):
                return False, f"Invalid slope '{block['slope']}'"
            return True, ""
        return False, f"Unknown block kind '{kind}'"
