"""
Theta functions for qdx.

Provides the Jacobi theta function theta_q(z) = sum q^(-m(m+1)/2) z^m, its triple
product form, the coefficients t_n^(delta) of its powers, the good-value test on q
and the hexagonal lattice series behind t_0^(3).
"""
import cmath
import logging
import math
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from numkernel import DEFAULT_WINDOW, LaurentSeries, QParams
from validation import (
    BracketingFailed,
    DomainError,
    ValidationError,
    Validator,
    WindowOverflow,
    ZeroArgument,
)

logger = logging.getLogger(__name__)

TAIL_LOG = 16 * math.log(10)
POCHHAMMER_MAX_FACTORS = 200
POCHHAMMER_EPS = 1e-17
HEX_TAIL = 1e-14
GOOD_VALUE_TOL = 1e-12


def truncation_order(qp: QParams, z: complex) -> int:
    """Smallest N with |q|^(-N(N+1)/2) * max(|z|, 1/|z|)^N < 1e-16"""
    log_abs_q = math.log(abs(qp.q))
    radius = abs(math.log(abs(z)))
    n = 1
    while n * (n + 1) / 2 * log_abs_q - n * radius < TAIL_LOG:
        n += 1
    return n


def theta(qp: QParams, z: complex) -> complex:
    """theta_q(z) by the truncated defining series"""
    if z == 0:
        raise ZeroArgument("theta_q is undefined at z = 0")
    z = complex(z)
    n = truncation_order(qp, z)
    m = np.arange(-n, n + 1)
    exponents = -qp.log_q * (m * (m + 1) // 2) + m * cmath.log(z)
    return complex(np.exp(exponents).sum())


def theta_shifted(qp: QParams, c: complex, z: complex) -> complex:
    """theta_{q,c}(z) := theta_q(z/c)"""
    if c == 0:
        raise ZeroArgument("theta_{q,c} needs c != 0")
    return theta(qp, complex(z) / complex(c))


def pochhammer(a: complex, p: complex) -> complex:
    """(a; p)_infinity for |p| < 1, stopped after 200 factors or once |a p^k| < 1e-17"""
    if abs(p) >= 1:
        raise DomainError(f"Pochhammer base must satisfy |p| < 1 (got {abs(p)})")
    product = 1 + 0j
    term = complex(a)
    for _ in range(POCHHAMMER_MAX_FACTORS):
        if abs(term) < POCHHAMMER_EPS:
            break
        product *= 1 - term
        term *= p
    return product


def triple_product(qp: QParams, z: complex) -> complex:
    """theta_q(z) = (1/q; 1/q)(-z/q; 1/q)(-1/z; 1/q)"""
    if z == 0:
        raise ZeroArgument("theta_q is undefined at z = 0")
    z = complex(z)
    p = 1 / qp.q
    return pochhammer(p, p) * pochhammer(-p * z, p) * pochhammer(-1 / z, p)


def _spread(qp: QParams) -> int:
    """Half-width around n/delta beyond which theta power terms fall below 1e-18"""
    return int(math.ceil(math.sqrt(83.0 / math.log(abs(qp.q))))) + 2


def _t1(qp: QParams, n: np.ndarray) -> np.ndarray:
    return np.exp(-qp.log_q * (n * (n + 1) // 2))


def theta_power_coeff_direct(qp: QParams, delta: int, n: int) -> complex:
    """t_n^(delta) by the multi-index sum over m_1 + ... + m_delta = n, delta <= 3"""
    if delta not in (1, 2, 3):
        raise ValidationError("Direct multi-index sum is only available for delta <= 3")
    if delta == 1:
        return complex(_t1(qp, np.array([n]))[0])
    centre = n // delta
    k = _spread(qp)
    span = np.arange(centre - k - 1, centre + k + 2)
    if delta == 2:
        energy = span * (span + 1) // 2 + (n - span) * (n - span + 1) // 2
    else:
        m1, m2 = np.meshgrid(span, span, indexing="ij")
        m3 = n - m1 - m2
        energy = (m1 * (m1 + 1) + m2 * (m2 + 1) + m3 * (m3 + 1)) // 2
    return complex(np.exp(-qp.log_q * energy).sum())


class ThetaCoeffTable:
    """Coefficients t_n^(delta)(q) for delta <= delta_max and |n| <= n_bound.

    Rows are built eagerly by repeated convolution with the closed form row
    t_n^(1) = q^(-n(n+1)/2) and are read-only afterwards.
    """

    def __init__(self, qp: QParams, delta_max: int, n_bound: int):
        is_valid, error = Validator.validate_integer_range(delta_max, "delta_max", 1, 64)
        if not is_valid:
            raise ValidationError(error)
        is_valid, error = Validator.validate_integer_range(n_bound, "n_bound", 0, 100000)
        if not is_valid:
            raise ValidationError(error)
        self.qp = qp
        self.delta_max = delta_max
        self.n_bound = n_bound
        self.n_range = (-n_bound, n_bound)
        self._rows: Dict[int, np.ndarray] = {}
        self._build()

    def _build(self):
        half = self.n_bound + _spread(self.qp)
        base = _t1(self.qp, np.arange(-half, half + 1))
        row, row_lo = base, -half
        for delta in range(1, self.delta_max + 1):
            if delta > 1:
                row = np.convolve(row, base)
                row_lo -= half
            start = -self.n_bound - row_lo
            values = row[start:start + 2 * self.n_bound + 1].copy()
            if delta == 1:
                values = _t1(self.qp, np.arange(-self.n_bound, self.n_bound + 1))
            values.setflags(write=False)
            self._rows[delta] = values

    def value(self, delta: int, n: int) -> complex:
        if delta < 1 or delta > self.delta_max or abs(n) > self.n_bound:
            raise ValidationError(f"(delta={delta}, n={n}) outside the table range")
        return complex(self._rows[delta][n + self.n_bound])

    def row(self, delta: int) -> np.ndarray:
        return self._rows[delta]

    @property
    def table(self) -> Dict[Tuple[int, int], complex]:
        return {
            (delta, n): self.value(delta, n)
            for delta in self._rows
            for n in range(-self.n_bound, self.n_bound + 1)
        }


def theta_power_coeff(qp: QParams, delta: int, n: int) -> complex:
    """t_n^(delta)(q): closed form for delta = 1, direct sum up to 3, convolution beyond"""
    is_valid, error = Validator.validate_integer_range(delta, "delta", 1, 64)
    if not is_valid:
        raise ValidationError(error)
    if delta <= 3:
        return theta_power_coeff_direct(qp, delta, n)
    return ThetaCoeffTable(qp, delta, abs(n)).value(delta, n)


def theta_square_split(qp: QParams, z: complex) -> complex:
    """theta_{q^2}(q) theta_{q^2}(z^2) + theta_{q^2}(1) theta_{q^2}(q z^2) / z"""
    if z == 0:
        raise ZeroArgument("theta_q is undefined at z = 0")
    z = complex(z)
    q2 = QParams(2 * qp.tau, 1, qp.z0)
    q = qp.q
    return theta(q2, q) * theta(q2, z * z) + theta(q2, 1) * theta(q2, q * z * z) / z


def series_half_width(qp: QParams, delta: int, radius_log: Optional[float] = None) -> int:
    """Half-width M of the theta^delta expansion used on |z/c| up to exp(radius_log)"""
    log_abs_q = math.log(abs(qp.q))
    if radius_log is None:
        radius_log = 3 * log_abs_q + abs(math.log(abs(qp.z0))) + 1
    root = math.sqrt(radius_log ** 2 + 80 * log_abs_q / delta)
    return int(math.ceil((radius_log + root) * delta / log_abs_q))


def theta_power_series(qp: QParams, c: complex, delta: int,
                       window: Tuple[int, int] = DEFAULT_WINDOW,
                       radius_log: Optional[float] = None) -> LaurentSeries:
    """theta_{q,c}^delta as a Laurent series: coefficient of z^n is t_n^(delta) c^(-n)"""
    if c == 0:
        raise ZeroArgument("theta_{q,c} needs c != 0")
    half = series_half_width(qp, delta, radius_log)
    if half > min(-window[0], window[1]):
        raise WindowOverflow(
            f"theta^{delta} needs exponents up to {half}, beyond window {list(window)}"
        )
    table = ThetaCoeffTable(qp, delta, half)
    n = np.arange(-half, half + 1)
    values = table.row(delta) * np.exp(-n * cmath.log(complex(c)))
    return LaurentSeries.from_array(-half, values).prune()


@lru_cache(maxsize=32)
def hex_counts(n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """r(n) = #{(a, b) : a^2 + ab + b^2 = n} for n <= n_max, with cumulative R(n)"""
    bound = int(math.sqrt(4 * n_max / 3)) + 1
    a, b = np.meshgrid(np.arange(-bound, bound + 1), np.arange(-bound, bound + 1))
    form = (a * a + a * b + b * b).ravel()
    counts = np.bincount(form[form <= n_max], minlength=n_max + 1)
    counts.setflags(write=False)
    cumulative = np.cumsum(counts)
    cumulative.setflags(write=False)
    return counts, cumulative


class HexFormSeries:
    """f(x) = sum over (a, b) of x^(a^2+ab+b^2) on (-1, 1)"""

    def __init__(self, n_max: int):
        self.n_max = n_max
        self.counts, self.cumulative = hex_counts(n_max)

    @staticmethod
    def order_for(x: float) -> int:
        """Truncation order with sum_{n > N} 6n |x|^n below 1e-14"""
        ax = abs(x)
        if ax == 0:
            return 1
        n = 1
        while 6 * (n + 1) * ax ** (n + 1) / (1 - ax) ** 2 >= HEX_TAIL:
            n += 1
        return n

    def __call__(self, x: float) -> float:
        powers = np.power(float(x), np.arange(self.n_max + 1))
        return float(np.dot(self.counts, powers))


def hex_series(x: float) -> float:
    if abs(x) >= 1:
        raise DomainError(f"hex series needs |x| < 1 (got {x})")
    return HexFormSeries(HexFormSeries.order_for(x))(x)


def scan_hex_sign(step: float = 0.01, lower: float = -0.999) -> List[Tuple[float, float]]:
    """Samples (x, f(x)) at x = -step, -2 step, ... down to lower"""
    samples = []
    k = 1
    while -k * step > lower:
        x = -k * step
        samples.append((x, hex_series(x)))
        k += 1
    return samples


def find_bad_q(step: float = 0.01) -> float:
    """Locate a real q* < -1 with t_0^(3)(q*) = 0 from the first sign change of f on (-1, 0)"""
    samples = scan_hex_sign(step)
    bracket = None
    previous = (0.0, hex_series(0.0))
    for sample in samples:
        if previous[1] > 0 and sample[1] <= 0:
            bracket = (sample[0], previous[0])
            break
        previous = sample
    if bracket is None:
        raise BracketingFailed("No sign change of the hexagonal series on (-1, 0)")

    lo, hi = bracket
    for _ in range(200):
        mid = (lo + hi) / 2
        if mid == lo or mid == hi:
            break
        if hex_series(mid) > 0:
            hi = mid
        else:
            lo = mid
    x_star = lo if abs(hex_series(lo)) < abs(hex_series(hi)) else hi
    q_star = 1 / x_star
    logger.info(f"Sign change of f bracketed in {bracket}, x* = {x_star!r}, q* = {q_star!r}")

    qp = QParams.from_q(q_star)
    t03 = theta_power_coeff(qp, 3, 0)
    if abs(t03) >= 1e-9:
        raise BracketingFailed(f"|t_0^(3)(q*)| = {abs(t03)} is not below 1e-9")
    if abs(t03 - hex_series(x_star)) > 1e-10:
        raise BracketingFailed("t_0^(3)(q*) disagrees with f(1/q*)")
    return q_star


def is_good_value(qp: QParams, delta_max: int, n_bound: int,
                  tol: float = GOOD_VALUE_TOL) -> Dict:
    """Finite certificate: min over delta, n of |t_n^(delta)(q)| / t_n^(delta)(|q|).

    The reference t_n^(delta)(|q|) is the cancellation-free mass of the same sum;
    a ratio below tol flags q as bad within the tested range. A pass is not a proof
    that q is good.
    """
    is_valid, error = Validator.validate_positive_number(tol, "tol")
    if not is_valid:
        raise ValidationError(error)
    table = ThetaCoeffTable(qp, delta_max, n_bound)
    reference = ThetaCoeffTable(QParams.from_q(abs(qp.q), qp.r, qp.z0), delta_max, n_bound)
    best, best_abs, argmin = math.inf, math.inf, None
    for delta in range(1, delta_max + 1):
        values = np.abs(table.row(delta))
        masses = np.abs(reference.row(delta))
        for index, n in enumerate(range(-n_bound, n_bound + 1)):
            if masses[index] == 0:
                continue
            ratio = values[index] / masses[index]
            if ratio < best:
                best, best_abs, argmin = ratio, values[index], [delta, n]
    verdict = "bad within tested range" if best < tol else "good within tested range"
    if best < tol:
        logger.warning(f"q = {qp.q} flagged bad: t_{argmin[1]}^({argmin[0]}) ratio {best:.3e}")
    else:
        logger.info(f"q = {qp.q} passed the good-value test (min ratio {best:.3e})")
    return {
        "min_abs": float(best_abs),
        "min_rel": float(best),
        "argmin": argmin,
        "verdict": verdict,
        "delta_max": delta_max,
        "n_bound": n_bound,
        "tol": tol,
    }
