"""
Global q-parameters and truncated Laurent series arithmetic.

Scalar series are sparse maps exponent -> coefficient with an explicit window;
matrices of Laurent polynomials are dense coefficient stacks of shape
(window length, rows, cols) so that products reduce to numpy contractions.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from validation import (
    SingularGauge,
    ValidationError,
    Validator,
    ZeroDilation,
    ZeroEvaluationPoint,
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = (-60, 60)
PRUNE_RELATIVE = 1e-15
DEFAULT_Z0 = complex(0.83, 0.41)

Number = Union[int, float, complex, Fraction]


@dataclass(frozen=True)
class QParams:
    """Fixed period tau, ramification index and base point.

    q = exp(2i*pi*tau) with |q| > 1, and every fractional power of q is taken
    as q^x := exp(2i*pi*tau*x), so roots of q and of z0 are coherent.
    """

    tau: complex
    r: int = 1
    z0: complex = DEFAULT_Z0

    def __post_init__(self):
        object.__setattr__(self, "tau", complex(self.tau))
        object.__setattr__(self, "z0", complex(self.z0))
        is_valid, error = Validator.validate_tau(self.tau)
        if not is_valid:
            raise ValidationError(error)
        is_valid, error = Validator.validate_integer_range(self.r, "r", 1, 64)
        if not is_valid:
            raise ValidationError(error)
        is_valid, error = Validator.validate_nonzero(self.z0, "z0")
        if not is_valid:
            raise ValidationError(error)

    @classmethod
    def from_q(cls, q: complex, r: int = 1, z0: complex = DEFAULT_Z0) -> "QParams":
        """Build parameters from q itself, using the principal logarithm for tau"""
        q = complex(q)
        if abs(q) <= 1:
            raise ValidationError(f"|q| must exceed 1 (got |q| = {abs(q)})")
        return cls(cmath.log(q) / (2j * math.pi), r, z0)

    @property
    def log_q(self) -> complex:
        return 2j * math.pi * self.tau

    @property
    def q(self) -> complex:
        return cmath.exp(self.log_q)

    def q_power(self, x: Number) -> complex:
        """q^x for real (or rational) x"""
        return cmath.exp(self.log_q * float(x))

    def q_root(self, s: Optional[int] = None) -> complex:
        """q_s = q^(1/s); defaults to the session index r"""
        s = self.r if s is None else s
        return cmath.exp(self.log_q / s)

    @property
    def q_r(self) -> complex:
        return self.q_root(self.r)

    @staticmethod
    def zeta(s: int) -> complex:
        return cmath.exp(2j * math.pi / s)

    @property
    def zeta_r(self) -> complex:
        return self.zeta(self.r)

    def z0_root(self, s: Optional[int] = None) -> complex:
        """z_{0,s}, the principal s-th root of z0 (coherent: z_{0,st}^t = z_{0,s})"""
        s = self.r if s is None else s
        return cmath.exp(cmath.log(self.z0) / s)

    def at_root(self, s: Optional[int] = None) -> "QParams":
        """Parameters of the ramified base q_s with base point z_{0,s}"""
        s = self.r if s is None else s
        return QParams(self.tau / s, 1, self.z0_root(s))

    def to_json(self) -> Dict:
        return {
            "tau": [self.tau.real, self.tau.imag],
            "r": self.r,
            "z0": [self.z0.real, self.z0.imag],
        }

    @classmethod
    def from_json(cls, data: Dict) -> "QParams":
        for key in ("tau", "z0"):
            if key in data:
                is_valid, error = Validator.validate_complex_pair(data[key], key)
                if not is_valid:
                    raise ValidationError(error)
        z0 = complex(*data["z0"]) if "z0" in data else DEFAULT_Z0
        return cls(complex(*data["tau"]), int(data.get("r", 1)), z0)


class LaurentSeries:
    """Truncated two-sided series sum f_m z^m over an inclusive window"""

    __slots__ = ("_coeffs", "_window")

    def __init__(self, coeffs: Optional[Dict[int, Number]] = None,
                 window: Optional[Tuple[int, int]] = None):
        cleaned = {}
        for exponent, value in (coeffs or {}).items():
            value = complex(value)
            if value != 0:
                cleaned[int(exponent)] = value
        if window is None:
            window = (min(cleaned), max(cleaned)) if cleaned else (0, 0)
        lo, hi = int(window[0]), int(window[1])
        if lo > hi:
            raise ValidationError(f"Empty window [{lo}, {hi}]")
        for exponent in cleaned:
            if exponent < lo or exponent > hi:
                raise ValidationError(f"Exponent {exponent} outside window [{lo}, {hi}]")
        self._coeffs = cleaned
        self._window = (lo, hi)

    @classmethod
    def monomial(cls, exponent: int, coeff: Number = 1.0) -> "LaurentSeries":
        return cls({exponent: coeff}, (exponent, exponent))

    @classmethod
    def constant(cls, value: Number) -> "LaurentSeries":
        return cls.monomial(0, value)

    @classmethod
    def from_array(cls, lo: int, values: Sequence[complex]) -> "LaurentSeries":
        values = np.asarray(values, dtype=complex)
        coeffs = {lo + k: v for k, v in enumerate(values) if v != 0}
        return cls(coeffs, (lo, lo + len(values) - 1))

    @property
    def coeffs(self) -> Dict[int, complex]:
        return dict(self._coeffs)

    @property
    def window(self) -> Tuple[int, int]:
        return self._window

    def coeff(self, exponent: int) -> complex:
        return self._coeffs.get(exponent, 0j)

    def to_array(self) -> Tuple[int, np.ndarray]:
        lo, hi = self._window
        values = np.zeros(hi - lo + 1, dtype=complex)
        for exponent, value in self._coeffs.items():
            values[exponent - lo] = value
        return lo, values

    def max_abs(self) -> float:
        return max((abs(v) for v in self._coeffs.values()), default=0.0)

    def is_zero(self) -> bool:
        return not self._coeffs

    def prune(self, relative: float = PRUNE_RELATIVE) -> "LaurentSeries":
        """Drop coefficients below relative * max |f_m|; the window is kept"""
        scale = self.max_abs()
        if scale == 0:
            return LaurentSeries({}, self._window)
        kept = {k: v for k, v in self._coeffs.items() if abs(v) >= relative * scale}
        return LaurentSeries(kept, self._window)

    def clip(self, window: Tuple[int, int] = DEFAULT_WINDOW) -> "LaurentSeries":
        lo = max(self._window[0], window[0])
        hi = min(self._window[1], window[1])
        if lo > hi:
            return LaurentSeries({}, (window[0], window[0]))
        kept = {k: v for k, v in self._coeffs.items() if lo <= k <= hi}
        return LaurentSeries(kept, (lo, hi))

    def __add__(self, other: Union["LaurentSeries", Number]) -> "LaurentSeries":
        if not isinstance(other, LaurentSeries):
            other = LaurentSeries.constant(other)
        coeffs = dict(self._coeffs)
        for exponent, value in other._coeffs.items():
            coeffs[exponent] = coeffs.get(exponent, 0j) + value
        window = (min(self._window[0], other._window[0]), max(self._window[1], other._window[1]))
        return LaurentSeries(coeffs, window)

    __radd__ = __add__

    def __neg__(self) -> "LaurentSeries":
        return LaurentSeries({k: -v for k, v in self._coeffs.items()}, self._window)

    def __sub__(self, other: Union["LaurentSeries", Number]) -> "LaurentSeries":
        if not isinstance(other, LaurentSeries):
            other = LaurentSeries.constant(other)
        return self + (-other)

    def __rsub__(self, other: Number) -> "LaurentSeries":
        return LaurentSeries.constant(other) - self

    def mul(self, other: "LaurentSeries",
            window: Tuple[int, int] = DEFAULT_WINDOW) -> "LaurentSeries":
        """Product with window [lo1+lo2, hi1+hi2] clipped to the given bounds"""
        lo1, a = self.to_array()
        lo2, b = other.to_array()
        product = np.convolve(a, b)
        result = LaurentSeries.from_array(lo1 + lo2, product)
        return result.clip(window).prune()

    def __mul__(self, other: Union["LaurentSeries", Number]) -> "LaurentSeries":
        if isinstance(other, LaurentSeries):
            return self.mul(other)
        scalar = complex(other)
        return LaurentSeries({k: v * scalar for k, v in self._coeffs.items()}, self._window)

    def __rmul__(self, other: Number) -> "LaurentSeries":
        return self * other

    def sigma_q(self, qp: QParams) -> "LaurentSeries":
        """(sigma_q f)_m = q^m f_m"""
        return LaurentSeries(
            {m: qp.q_power(m) * v for m, v in self._coeffs.items()}, self._window
        )

    def dilate(self, lam: complex) -> "LaurentSeries":
        """f(lambda z), coefficientwise lambda^m f_m"""
        if lam == 0:
            raise ZeroDilation("Cannot dilate by zero")
        lam = complex(lam)
        return LaurentSeries({m: lam ** m * v for m, v in self._coeffs.items()}, self._window)

    def ramify(self, r: int) -> "LaurentSeries":
        """Substitute z = z_r^r: exponent m becomes r*m"""
        lo, hi = self._window
        return LaurentSeries({r * m: v for m, v in self._coeffs.items()}, (r * lo, r * hi))

    def evaluate(self, c: complex) -> complex:
        if c == 0:
            raise ZeroEvaluationPoint("Laurent series evaluated at zero")
        c = complex(c)
        return sum((v * c ** m for m, v in self._coeffs.items()), 0j)

    def allclose(self, other: "LaurentSeries", tol: float = 1e-10) -> bool:
        exponents = set(self._coeffs) | set(other._coeffs)
        return all(abs(self.coeff(m) - other.coeff(m)) <= tol for m in exponents)

    def to_json(self) -> Dict:
        return {
            "window": list(self._window),
            "coeffs": {str(m): [v.real, v.imag] for m, v in sorted(self._coeffs.items())},
        }

    @classmethod
    def from_json(cls, data: Dict) -> "LaurentSeries":
        is_valid, error = Validator.validate_window(data.get("window"))
        if not is_valid:
            raise ValidationError(error)
        coeffs = {}
        for key, pair in data.get("coeffs", {}).items():
            is_valid, error = Validator.validate_complex_pair(pair, f"coefficient {key}")
            if not is_valid:
                raise ValidationError(error)
            coeffs[int(key)] = complex(*pair)
        return cls(coeffs, tuple(data["window"]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LaurentSeries):
            return NotImplemented
        return self._window == other._window and self._coeffs == other._coeffs

    def __repr__(self) -> str:
        terms = " + ".join(f"({v:.6g})z^{m}" for m, v in sorted(self._coeffs.items()))
        return f"LaurentSeries({terms or '0'}, window={self._window})"


def sigma_q(f: LaurentSeries, qp: QParams) -> LaurentSeries:
    return f.sigma_q(qp)


def dilate(f: LaurentSeries, lam: complex) -> LaurentSeries:
    return f.dilate(lam)


def ramify_series(f: LaurentSeries, r: int) -> LaurentSeries:
    return f.ramify(r)


def evaluate(f: LaurentSeries, c: complex) -> complex:
    return f.evaluate(c)


class LaurentMatrix:
    """Matrix of Laurent polynomials, coefficient of z^(lo+k) stored at coeffs[k]"""

    def __init__(self, lo: int, coeffs: np.ndarray):
        stack = np.array(coeffs, dtype=complex)
        if stack.ndim == 2:
            stack = stack[None, :, :]
        if stack.ndim != 3 or stack.shape[0] == 0:
            raise ValidationError("LaurentMatrix needs a (length, rows, cols) coefficient stack")
        stack.setflags(write=False)
        self.lo = int(lo)
        self.coeffs = stack

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coeffs.shape[1], self.coeffs.shape[2]

    @property
    def hi(self) -> int:
        return self.lo + self.coeffs.shape[0] - 1

    @property
    def window(self) -> Tuple[int, int]:
        return self.lo, self.hi

    @classmethod
    def zeros(cls, rows: int, cols: Optional[int] = None) -> "LaurentMatrix":
        cols = rows if cols is None else cols
        return cls(0, np.zeros((1, rows, cols), dtype=complex))

    @classmethod
    def identity(cls, n: int) -> "LaurentMatrix":
        return cls(0, np.eye(n, dtype=complex))

    @classmethod
    def constant(cls, matrix: np.ndarray) -> "LaurentMatrix":
        return cls(0, np.atleast_2d(np.asarray(matrix, dtype=complex)))

    @classmethod
    def monomial(cls, matrix: np.ndarray, exponent: int) -> "LaurentMatrix":
        return cls(exponent, np.atleast_2d(np.asarray(matrix, dtype=complex)))

    @classmethod
    def from_series(cls, entries: Sequence[Sequence[LaurentSeries]]) -> "LaurentMatrix":
        rows, cols = len(entries), len(entries[0])
        lo = min(entries[i][j].window[0] for i in range(rows) for j in range(cols))
        hi = max(entries[i][j].window[1] for i in range(rows) for j in range(cols))
        stack = np.zeros((hi - lo + 1, rows, cols), dtype=complex)
        for i in range(rows):
            for j in range(cols):
                for exponent, value in entries[i][j].coeffs.items():
                    stack[exponent - lo, i, j] = value
        return cls(lo, stack)

    @classmethod
    def assemble(cls, blocks: Sequence[Sequence[Optional["LaurentMatrix"]]],
                 row_sizes: Sequence[int], col_sizes: Sequence[int]) -> "LaurentMatrix":
        """Build a matrix from a grid of blocks; None stands for a zero block"""
        present = [b for row in blocks for b in row if b is not None]
        lo = min((b.lo for b in present), default=0)
        hi = max((b.hi for b in present), default=0)
        stack = np.zeros((hi - lo + 1, sum(row_sizes), sum(col_sizes)), dtype=complex)
        row_offsets = np.concatenate([[0], np.cumsum(row_sizes)])
        col_offsets = np.concatenate([[0], np.cumsum(col_sizes)])
        for i, row in enumerate(blocks):
            for j, block in enumerate(row):
                if block is None:
                    continue
                if block.shape != (row_sizes[i], col_sizes[j]):
                    raise ValidationError(f"Block ({i}, {j}) has shape {block.shape}")
                start = block.lo - lo
                stack[start:start + block.coeffs.shape[0],
                      row_offsets[i]:row_offsets[i + 1],
                      col_offsets[j]:col_offsets[j + 1]] = block.coeffs
        return cls(lo, stack)

    def coefficient(self, exponent: int) -> np.ndarray:
        if exponent < self.lo or exponent > self.hi:
            return np.zeros(self.shape, dtype=complex)
        return self.coeffs[exponent - self.lo].copy()

    def entry(self, i: int, j: int) -> LaurentSeries:
        return LaurentSeries.from_array(self.lo, self.coeffs[:, i, j])

    def block(self, rows: slice, cols: slice) -> "LaurentMatrix":
        return LaurentMatrix(self.lo, self.coeffs[:, rows, cols])

    def exponents(self, tol: float = 0.0) -> List[int]:
        norms = np.abs(self.coeffs).max(axis=(1, 2))
        return [self.lo + k for k, value in enumerate(norms) if value > tol]

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max())

    def is_constant(self) -> bool:
        return all(e == 0 for e in self.exponents())

    def trim(self, relative: float = PRUNE_RELATIVE) -> "LaurentMatrix":
        """Zero coefficients below relative * max and drop empty end slices"""
        scale = self.max_abs()
        rows, cols = self.shape
        if scale == 0:
            return LaurentMatrix.zeros(rows, cols)
        stack = np.where(np.abs(self.coeffs) >= relative * scale, self.coeffs, 0)
        alive = np.nonzero(np.abs(stack).max(axis=(1, 2)) > 0)[0]
        first, last = alive[0], alive[-1]
        return LaurentMatrix(self.lo + first, stack[first:last + 1])

    def clip(self, window: Tuple[int, int]) -> "LaurentMatrix":
        lo, hi = max(self.lo, window[0]), min(self.hi, window[1])
        if lo > hi:
            return LaurentMatrix.zeros(*self.shape)
        return LaurentMatrix(lo, self.coeffs[lo - self.lo:hi - self.lo + 1])

    def _aligned(self, other: "LaurentMatrix") -> Tuple[int, np.ndarray, np.ndarray]:
        if self.shape != other.shape:
            raise ValidationError(f"Shape mismatch {self.shape} vs {other.shape}")
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        a = np.zeros((hi - lo + 1,) + self.shape, dtype=complex)
        b = np.zeros_like(a)
        a[self.lo - lo:self.hi - lo + 1] = self.coeffs
        b[other.lo - lo:other.hi - lo + 1] = other.coeffs
        return lo, a, b

    def __add__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        lo, a, b = self._aligned(other)
        return LaurentMatrix(lo, a + b)

    def __sub__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        lo, a, b = self._aligned(other)
        return LaurentMatrix(lo, a - b)

    def __neg__(self) -> "LaurentMatrix":
        return LaurentMatrix(self.lo, -self.coeffs)

    def scale(self, scalar: Number) -> "LaurentMatrix":
        return LaurentMatrix(self.lo, self.coeffs * complex(scalar))

    def __matmul__(self, other: Union["LaurentMatrix", np.ndarray]) -> "LaurentMatrix":
        if not isinstance(other, LaurentMatrix):
            other = LaurentMatrix.constant(other)
        if self.shape[1] != other.shape[0]:
            raise ValidationError(f"Cannot multiply {self.shape} by {other.shape}")
        length = self.coeffs.shape[0] + other.coeffs.shape[0] - 1
        stack = np.zeros((length, self.shape[0], other.shape[1]), dtype=complex)
        for k in range(self.coeffs.shape[0]):
            stack[k:k + other.coeffs.shape[0]] += np.einsum(
                "ij,sjl->sil", self.coeffs[k], other.coeffs
            )
        return LaurentMatrix(self.lo + other.lo, stack).trim()

    def __rmatmul__(self, other: np.ndarray) -> "LaurentMatrix":
        return LaurentMatrix.constant(other) @ self

    def times_series(self, series: LaurentSeries) -> "LaurentMatrix":
        """Entrywise product with a scalar Laurent series"""
        lo, values = series.to_array()
        length = self.coeffs.shape[0] + len(values) - 1
        stack = np.zeros((length,) + self.shape, dtype=complex)
        for t, value in enumerate(values):
            if value != 0:
                stack[t:t + self.coeffs.shape[0]] += value * self.coeffs
        return LaurentMatrix(self.lo + lo, stack).trim()

    def kron_right(self, matrix: np.ndarray) -> "LaurentMatrix":
        """self (x) M for a constant M"""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return LaurentMatrix(self.lo, np.stack([np.kron(s, matrix) for s in self.coeffs]))

    def kron_left(self, matrix: np.ndarray) -> "LaurentMatrix":
        """M (x) self for a constant M"""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return LaurentMatrix(self.lo, np.stack([np.kron(matrix, s) for s in self.coeffs]))

    def sigma_q(self, qp: QParams) -> "LaurentMatrix":
        """Coefficient of z^m multiplied by q^m, with q^m = exp(2i*pi*tau*m)"""
        exponents = np.arange(self.lo, self.hi + 1)
        weights = np.exp(qp.log_q * exponents)
        return LaurentMatrix(self.lo, self.coeffs * weights[:, None, None])

    def dilate(self, lam: complex) -> "LaurentMatrix":
        if lam == 0:
            raise ZeroDilation("Cannot dilate by zero")
        exponents = np.arange(self.lo, self.hi + 1)
        weights = np.array([complex(lam) ** int(m) for m in exponents])
        return LaurentMatrix(self.lo, self.coeffs * weights[:, None, None])

    def twist(self, zeta: complex) -> "LaurentMatrix":
        """Exponent-wise multiplication by zeta^m (the Galois generator on z_r)"""
        return self.dilate(zeta)

    def ramify(self, r: int) -> "LaurentMatrix":
        """Substitute z = z_r^r"""
        length = (self.coeffs.shape[0] - 1) * r + 1
        stack = np.zeros((length,) + self.shape, dtype=complex)
        stack[::r] = self.coeffs
        return LaurentMatrix(self.lo * r, stack)

    def divisible_exponents(self, r: int, tol: float = 0.0) -> bool:
        return all(e % r == 0 for e in self.exponents(tol))

    def contract(self, r: int, tol: float = 0.0) -> "LaurentMatrix":
        """Re-index z_r^(r k) as z^k; requires every live exponent divisible by r"""
        if not self.divisible_exponents(r, tol):
            raise ValidationError(f"Exponents not all divisible by {r}")
        exps = [e for e in range(self.lo, self.hi + 1) if e % r == 0]
        if not exps:
            return LaurentMatrix.zeros(*self.shape)
        stack = np.stack([self.coeffs[e - self.lo] for e in exps])
        return LaurentMatrix(exps[0] // r, stack)

    def evaluate(self, z: complex) -> np.ndarray:
        if z == 0:
            raise ZeroEvaluationPoint("Laurent matrix evaluated at zero")
        powers = np.exp(cmath.log(complex(z)) * np.arange(self.lo, self.hi + 1))
        return np.einsum("s,sij->ij", powers, self.coeffs)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=complex)
        exponents = np.arange(self.lo, self.hi + 1)
        powers = np.exp(np.log(points)[:, None] * exponents[None, :])
        return np.einsum("ps,sij->pij", powers, self.coeffs)

    def is_unipotent_upper(self, tol: float = 0.0) -> bool:
        """True when self - I is strictly upper triangular in every coefficient"""
        n, m = self.shape
        if n != m:
            return False
        deviation = self - LaurentMatrix.identity(n)
        lower = np.tril(np.ones((n, n), dtype=bool))
        return bool(np.all(np.abs(deviation.coeffs[:, lower]) <= tol))

    def inverse(self) -> "LaurentMatrix":
        """Inverse over Laurent polynomials.

        Unipotent upper matrices use the finite Neumann series; anything else is
        interpolated on roots of unity and certified by multiplying back.
        """
        n, m = self.shape
        if n != m:
            raise SingularGauge(f"Non-square matrix {self.shape} has no inverse")
        matrix = self.trim()
        if matrix.is_constant():
            constant = matrix.coefficient(0)
            if abs(np.linalg.det(constant)) < 1e-14 * max(1.0, np.abs(constant).max()) ** n:
                raise SingularGauge("Constant gauge matrix is singular")
            return LaurentMatrix.constant(np.linalg.inv(constant))
        if matrix.is_unipotent_upper():
            nilpotent = LaurentMatrix.identity(n) - matrix
            result = LaurentMatrix.identity(n)
            power = LaurentMatrix.identity(n)
            for _ in range(n - 1):
                power = power @ nilpotent
                result = result + power
            return result.trim()
        return matrix._interpolated_inverse()

    def _interpolated_inverse(self) -> "LaurentMatrix":
        n = self.shape[0]
        span = self.hi - self.lo + 1
        size = 1 << max(5, int(math.ceil(math.log2(4 * (n * span + 2)))))
        points = np.exp(2j * np.pi * np.arange(size) / size)
        samples = self.evaluate_many(points)
        try:
            inverse_samples = np.linalg.inv(samples)
        except np.linalg.LinAlgError as e:
            raise SingularGauge(f"Gauge matrix singular on the unit circle: {e}")
        if not np.all(np.isfinite(inverse_samples)):
            raise SingularGauge("Gauge matrix singular on the unit circle")
        spectrum = np.fft.fft(inverse_samples, axis=0) / size
        half = size // 2
        stack = np.concatenate([spectrum[half:], spectrum[:half]])
        candidate = LaurentMatrix(-half, stack).trim(1e-12)
        check = (self @ candidate) - LaurentMatrix.identity(n)
        if check.max_abs() > 1e-9 * max(1.0, candidate.max_abs() * self.max_abs()):
            raise SingularGauge("Determinant is not a unit in C[z, 1/z]")
        logger.info(f"Inverted {n}x{n} Laurent matrix by interpolation on {size} points")
        return candidate

    def allclose(self, other: "LaurentMatrix", tol: float = 1e-10) -> bool:
        return (self - other).max_abs() <= tol

    def to_json(self) -> Dict:
        return {
            "lo": self.lo,
            "re": self.coeffs.real.tolist(),
            "im": self.coeffs.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data: Dict) -> "LaurentMatrix":
        try:
            stack = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
            return cls(int(data["lo"]), stack)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed Laurent matrix: {e}")

    def __repr__(self) -> str:
        return f"LaurentMatrix(shape={self.shape}, window={self.window})"
