"""
Points of the elliptic curve E_q = C*/q^Z.

A point is stored through its canonical representative in the fundamental
annulus 1 <= |c| < |Q|, where Q is either q or the ramified base q_r.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from numkernel import QParams
from validation import PoleOnCircle, QdxError, ValidationError, Validator, ZeroPoint

logger = logging.getLogger(__name__)

EQUALITY_TOL = 1e-9
RESIDUE_SAMPLES = 256
BASES = ("q", "qr")


def _base_log(qp: QParams, base: str) -> complex:
    if base == "q":
        return qp.log_q
    if base == "qr":
        return qp.log_q / qp.r
    raise ValidationError(f"Unknown base '{base}', expected one of {', '.join(BASES)}")


@dataclass(frozen=True)
class EllipticPoint:
    """Class of rep in C*/Q^Z, Q = exp(log_base)"""

    rep: complex
    log_base: complex
    base: str = "q"

    @property
    def modulus(self) -> complex:
        return cmath.exp(self.log_base)

    def same_as(self, other: "EllipticPoint", tol: float = EQUALITY_TOL) -> bool:
        gap = min(abs(self.rep - other.rep * cmath.exp(j * self.log_base)) for j in (-1, 0, 1))
        return gap < tol

    def times(self, other: Union["EllipticPoint", complex]) -> "EllipticPoint":
        value = other.rep if isinstance(other, EllipticPoint) else complex(other)
        return _canonical(self.rep * value, self.log_base, self.base)

    def power(self, k: int) -> "EllipticPoint":
        return _canonical(self.rep ** k, self.log_base, self.base)

    def inverse(self) -> "EllipticPoint":
        return _canonical(1 / self.rep, self.log_base, self.base)

    def to_json(self) -> Dict:
        return {"rep": [self.rep.real, self.rep.imag], "base": self.base}

    @classmethod
    def from_json(cls, data: Dict, qp: QParams) -> "EllipticPoint":
        is_valid, error = Validator.validate_complex_pair(data.get("rep"), "rep")
        if not is_valid:
            raise ValidationError(error)
        return canonicalize(complex(*data["rep"]), qp, data.get("base", "q"))


def _canonical(c: complex, log_base: complex, base: str) -> EllipticPoint:
    if c == 0:
        raise ZeroPoint("0 has no class in C*/q^Z")
    c = complex(c)
    log_abs = log_base.real
    k = math.floor(math.log(abs(c)) / log_abs)
    rep = c * cmath.exp(-k * log_base)
    # rounding at the annulus edges
    if abs(rep) < 1:
        rep *= cmath.exp(log_base)
    elif abs(rep) >= math.exp(log_abs):
        rep *= cmath.exp(-log_base)
    return EllipticPoint(rep, log_base, base)


def canonicalize(c: complex, qp: QParams, base: str = "q") -> EllipticPoint:
    """Representative c q^(-k) with 1 <= |c q^(-k)| < |q| (or |q_r| for base 'qr')"""
    return _canonical(c, _base_log(qp, base), base)


def spiral_distance(z: complex, c: complex, log_base: complex) -> float:
    """Distance from z to the discrete spiral {c Q^j}"""
    k = round(math.log(abs(z / c)) / log_base.real)
    return min(abs(z - c * cmath.exp(j * log_base)) for j in (k - 1, k, k + 1))


def character_gamma(kind: int, c: complex, qp: QParams) -> complex:
    """gamma_1(u q^y) = u and gamma_2(u q^y) = exp(2i pi y), with |u| = 1 and y real"""
    if c == 0:
        raise ZeroPoint("Characters of E_q are undefined at 0")
    if kind not in (1, 2):
        raise ValidationError(f"Character kind must be 1 or 2 (got {kind})")
    c = complex(c)
    if abs(abs(c) - 1) < 1e-15:
        y = 0.0
    else:
        y = math.log(abs(c)) / math.log(abs(qp.q))
    if kind == 1:
        return c / cmath.exp(qp.log_q * y)
    return cmath.exp(2j * math.pi * y)


def gamma_power(c: complex, k1: int, k2: int, qp: QParams) -> complex:
    """(gamma_1^k1 gamma_2^k2)(c)"""
    return character_gamma(1, c, qp) ** k1 * character_gamma(2, c, qp) ** k2


@dataclass(frozen=True)
class RootGrid:
    """delta-th roots c_{l,m} = zeta_delta^(-l) Q_delta^(-m) c of Q^(-m) d"""

    delta: int
    d: complex
    c: complex
    grid: np.ndarray
    log_base: complex
    base: str

    def point(self, l: int, m: int = 0) -> complex:
        return complex(self.grid[l % self.delta, m % self.delta])

    def alpha(self, l: int, m: int = 0) -> EllipticPoint:
        return _canonical(self.point(l, m), self.log_base, self.base)

    def classes(self) -> List[EllipticPoint]:
        return [self.alpha(l, m) for l in range(self.delta) for m in range(self.delta)]

    def labels(self) -> List[tuple]:
        return [(l, m) for l in range(self.delta) for m in range(self.delta)]


def root_grid(delta: int, beta: EllipticPoint, qp: QParams) -> RootGrid:
    """Grid of delta-th roots attached to beta.

    With e the canonical representative of beta and phi = arg e in [0, 2 pi),
    d = 1/e and c is the root of d with argument in (-2 pi/delta, 0].
    """
    is_valid, error = Validator.validate_integer_range(delta, "delta", 1, 64)
    if not is_valid:
        raise ValidationError(error)
    e = beta.rep
    phi = cmath.phase(e) % (2 * math.pi)
    d = 1 / e
    c = abs(d) ** (1.0 / delta) * cmath.exp(-1j * phi / delta)
    zeta = QParams.zeta(delta)
    q_delta = cmath.exp(beta.log_base / delta)
    grid = np.array(
        [[zeta ** (-l) * q_delta ** (-m) * c for m in range(delta)] for l in range(delta)],
        dtype=complex,
    )
    grid.setflags(write=False)
    return RootGrid(delta, d, c, grid, beta.log_base, beta.base)


def shift_ell(delta: int, beta: EllipticPoint, r: int) -> int:
    """floor(phi / 2 pi - delta / r), phi = arg of the canonical representative in [0, 2 pi)"""
    phi = cmath.phase(beta.rep) % (2 * math.pi)
    return math.floor(phi / (2 * math.pi) - delta / r)


def default_residue_radius(c0: complex, neighbours: Optional[Sequence[complex]] = None) -> float:
    gaps = [abs(complex(n) - c0) for n in (neighbours or ()) if abs(complex(n) - c0) > EQUALITY_TOL]
    if not gaps:
        return 0.05 * abs(c0)
    return 0.1 * min(gaps)


def residue_on_Eq(phi: Callable[[complex], Union[complex, np.ndarray]],
                  alpha: Union[EllipticPoint, complex],
                  radius: Optional[float] = None,
                  samples: int = RESIDUE_SAMPLES,
                  retries: int = 3,
                  neighbours: Optional[Sequence[complex]] = None) -> Union[complex, np.ndarray]:
    """(1/c0) times the ordinary residue of phi at c0, by trapezoidal sampling.

    Without an explicit radius the circle has radius 0.1 times the distance from
    c0 to the nearest of the given neighbouring grid points, or 0.05|c0| when no
    neighbours are known. The radius is halved on blow-up; PoleOnCircle after the
    given retries.
    """
    c0 = alpha.rep if isinstance(alpha, EllipticPoint) else complex(alpha)
    if c0 == 0:
        raise ZeroPoint("Residue point must be nonzero")
    rho = float(radius) if radius is not None else default_residue_radius(c0, neighbours)
    nodes = np.exp(2j * np.pi * np.arange(samples) / samples)

    for attempt in range(retries + 1):
        try:
            values = np.array([np.asarray(phi(c0 + rho * w), dtype=complex) for w in nodes])
        except (QdxError, ZeroDivisionError, np.linalg.LinAlgError) as e:
            logger.warning(f"Residue sample failed at radius {rho:.3e}: {e}")
            values = None
        if values is not None and np.all(np.isfinite(values)):
            weights = (rho * nodes).reshape((samples,) + (1,) * (values.ndim - 1))
            residue = (values * weights).mean(axis=0)
            result = residue / c0
            return complex(result) if np.ndim(result) == 0 else result
        rho /= 2
    raise PoleOnCircle(f"Samples around {c0} kept hitting a singularity")
