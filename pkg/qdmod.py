"""
Block q-difference systems for qdx.

A system X(qz) = A(z)X(z) is held in block-upper-triangular form: pure diagonal
blocks of increasing slope and Laurent-polynomial blocks U_{i,j} above the
diagonal. This module implements the gauge action F[A] = (sigma_q F) A F^(-1),
Newton data, the filtration of the unipotent gauge group by level
mu_j - mu_i and the Birkhoff-Guenther normal form for integral slopes.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from numkernel import LaurentMatrix, LaurentSeries, QParams
from validation import (
    EmptyOperator,
    ResonantNormalization,
    SystemValidator,
    Unsupported,
    ValidationError,
)

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
BLOCK_TOL = 1e-9
GEVREY_MODES = ("geq", "gt", "layer")

BlockIndex = Tuple[int, int]


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1000)
    return Fraction(value)


@dataclass(frozen=True)
class NewtonData:
    """Slopes mu_1 < ... < mu_k with multiplicities r_i, r_i mu_i integral"""

    slopes: Tuple[Fraction, ...]
    mults: Tuple[int, ...]

    def __post_init__(self):
        slopes = tuple(_as_fraction(s) for s in self.slopes)
        mults = tuple(self.mults)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "mults", mults)
        is_valid, error = SystemValidator.validate_newton(slopes, mults)
        if not is_valid:
            raise ValidationError(error)

    @property
    def dimension(self) -> int:
        return sum(self.mults)

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(int(s * r) for s, r in zip(self.slopes, self.mults))

    def as_dict(self) -> Dict[Fraction, int]:
        return dict(zip(self.slopes, self.mults))

    @classmethod
    def from_dict(cls, mults: Dict[Fraction, int]) -> "NewtonData":
        slopes = sorted(s for s, r in mults.items() if r > 0)
        return cls(tuple(slopes), tuple(mults[s] for s in slopes))

    def ramified(self, r: int) -> "NewtonData":
        """Slopes r mu_i with unchanged multiplicities"""
        return NewtonData(tuple(s * r for s in self.slopes), self.mults)

    def to_json(self) -> Dict:
        return {"slopes": [str(s) for s in self.slopes], "mults": list(self.mults)}

    @classmethod
    def from_json(cls, data: Dict) -> "NewtonData":
        try:
            slopes = tuple(Fraction(str(s)) for s in data["slopes"])
            return cls(slopes, tuple(int(m) for m in data["mults"]))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"Malformed Newton data: {e}")


def unipotent_jordan(m: int) -> np.ndarray:
    """U_m: identity plus ones on the superdiagonal"""
    return np.eye(m, dtype=complex) + np.eye(m, k=1, dtype=complex)


def irreducible_matrix(r: int, d: int, c: complex, qp: QParams, m: int = 1) -> LaurentMatrix:
    """E(r, d, c) (x) U_m.

    E(r, d, c) is the companion-shaped matrix with ones on the superdiagonal and
    u = q^(d(r-1)/2) c z^d in the bottom-left corner.
    """
    if math.gcd(d, r) != 1:
        raise ValidationError(f"E(r, d, c) needs gcd(d, r) = 1 (got r={r}, d={d})")
    corner = np.zeros((r, r), dtype=complex)
    corner[r - 1, 0] = qp.q_power(Fraction(d * (r - 1), 2)) * complex(c)
    shift = np.eye(r, k=1, dtype=complex)
    if d == 0:
        base = LaurentMatrix.constant(shift + corner)
    else:
        base = LaurentMatrix.constant(shift) + LaurentMatrix.monomial(corner, d)
    return base.kron_right(unipotent_jordan(m))


@dataclass(frozen=True)
class PureBlock:
    """Isoclinic diagonal block of a system"""

    slope: Fraction
    size: int
    matrix: LaurentMatrix
    constant: Optional[np.ndarray] = None
    irreducible: Optional[Tuple[int, int, complex, int]] = None

    @classmethod
    def integer(cls, mu: int, constant: np.ndarray) -> "PureBlock":
        """z^mu A with constant invertible A"""
        constant = np.atleast_2d(np.asarray(constant, dtype=complex))
        if constant.shape[0] != constant.shape[1]:
            raise ValidationError("Constant block must be square")
        if abs(np.linalg.det(constant)) < 1e-12:
            raise ValidationError(f"Constant block of slope {mu} is not invertible")
        constant = constant.copy()
        constant.setflags(write=False)
        return cls(Fraction(mu), constant.shape[0], LaurentMatrix.monomial(constant, mu), constant)

    @classmethod
    def from_irreducible(cls, r: int, d: int, c: complex, qp: QParams, m: int = 1) -> "PureBlock":
        matrix = irreducible_matrix(r, d, c, qp, m)
        constant = None
        if r == 1:
            constant = np.atleast_2d(matrix.coefficient(d))
            constant.setflags(write=False)
        return cls(Fraction(d, r), r * m, matrix, constant, (r, d, complex(c), m))

    @property
    def is_integral(self) -> bool:
        return self.slope.denominator == 1 and self.constant is not None

    def eigenvalues(self) -> np.ndarray:
        if self.constant is None:
            raise Unsupported("Spectrum of a non-constant block is not available")
        return np.linalg.eigvals(self.constant)

    def to_json(self) -> Dict:
        if self.irreducible is not None:
            r, d, c, m = self.irreducible
            return {"kind": "irreducible", "r": r, "d": d, "c": [c.real, c.imag], "m": m}
        if self.is_integral:
            rows = [[[v.real, v.imag] for v in row] for row in self.constant]
            return {"kind": "integer", "mu": int(self.slope), "matrix": rows}
        return {"kind": "laurent", "slope": str(self.slope), "matrix": self.matrix.to_json()}

    @classmethod
    def from_json(cls, data: Dict, qp: QParams) -> "PureBlock":
        is_valid, error = SystemValidator.validate_block_description(data)
        if not is_valid:
            raise ValidationError(error)
        if data["kind"] == "integer":
            constant = np.array([[complex(*e) for e in row] for row in data["matrix"]])
            return cls.integer(int(data["mu"]), constant)
        if data["kind"] == "irreducible":
            return cls.from_irreducible(
                int(data["r"]), int(data["d"]), complex(*data["c"]), qp, int(data.get("m", 1))
            )
        matrix = LaurentMatrix.from_json(data["matrix"])
        return cls(Fraction(data["slope"]), matrix.shape[0], matrix)


class BlockSystem:
    """Block-upper-triangular system A_U with pure diagonal blocks"""

    def __init__(self, newton: NewtonData, diag: Sequence[PureBlock],
                 upper: Optional[Dict[BlockIndex, LaurentMatrix]] = None):
        diag = tuple(diag)
        if len(diag) != len(newton.slopes):
            raise ValidationError("One diagonal block per slope is required")
        for index, (block, slope, mult) in enumerate(zip(diag, newton.slopes, newton.mults)):
            if block.slope != slope or block.size != mult:
                raise ValidationError(
                    f"Block {index} has slope {block.slope} and size {block.size}, "
                    f"declared {slope} and {mult}"
                )
        upper = dict(upper or {})
        for (i, j), block in upper.items():
            if not 0 <= i < j < len(diag):
                raise ValidationError(f"Upper block ({i}, {j}) is not strictly above the diagonal")
            if block.shape != (diag[i].size, diag[j].size):
                raise ValidationError(f"Upper block ({i}, {j}) has shape {block.shape}")
        self.newton = newton
        self.diag = diag
        self.upper = upper

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(block.size for block in self.diag)

    @property
    def slopes(self) -> Tuple[Fraction, ...]:
        return self.newton.slopes

    @property
    def dimension(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.sizes)]))

    def block_slice(self, i: int) -> slice:
        offsets = self.offsets
        return slice(offsets[i], offsets[i + 1])

    def upper_block(self, i: int, j: int) -> LaurentMatrix:
        if (i, j) in self.upper:
            return self.upper[(i, j)]
        return LaurentMatrix.zeros(self.sizes[i], self.sizes[j])

    def level(self, i: int, j: int) -> Fraction:
        return self.slopes[j] - self.slopes[i]

    def pairs_by_level(self) -> List[BlockIndex]:
        k = len(self.diag)
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        return sorted(pairs, key=lambda p: (self.level(*p), p))

    def matrix(self) -> LaurentMatrix:
        k = len(self.diag)
        grid = [[None] * k for _ in range(k)]
        for i, block in enumerate(self.diag):
            grid[i][i] = block.matrix
        for (i, j), block in self.upper.items():
            grid[i][j] = block
        return LaurentMatrix.assemble(grid, self.sizes, self.sizes)

    def graded(self) -> "BlockSystem":
        return BlockSystem(self.newton, self.diag, {})

    def with_upper(self, upper: Dict[BlockIndex, LaurentMatrix]) -> "BlockSystem":
        return BlockSystem(self.newton, self.diag, upper)

    def subsystem(self, indices: Sequence[int]) -> "BlockSystem":
        """Restriction to the given diagonal blocks and the upper blocks between them"""
        indices = list(indices)
        newton = NewtonData(
            tuple(self.slopes[i] for i in indices), tuple(self.newton.mults[i] for i in indices)
        )
        upper = {}
        for a, i in enumerate(indices):
            for b, j in enumerate(indices):
                if a < b and (i, j) in self.upper:
                    upper[(a, b)] = self.upper[(i, j)]
        return BlockSystem(newton, [self.diag[i] for i in indices], upper)

    @classmethod
    def from_matrix(cls, matrix: LaurentMatrix, like: "BlockSystem") -> "BlockSystem":
        """Split a matrix into blocks following the shape of another system"""
        if matrix.shape != (like.dimension, like.dimension):
            raise ValidationError(f"Matrix shape {matrix.shape} does not fit the block shape")
        scale = max(1.0, matrix.max_abs())
        k = len(like.diag)
        diag, upper = [], {}
        for i in range(k):
            for j in range(i):
                lower = matrix.block(like.block_slice(i), like.block_slice(j))
                if lower.max_abs() > BLOCK_TOL * scale:
                    raise Unsupported(f"Result has a nonzero block ({i}, {j}) below the diagonal")
            block = matrix.block(like.block_slice(i), like.block_slice(i)).trim()
            reference = like.diag[i]
            if (block - reference.matrix).max_abs() <= BLOCK_TOL * scale:
                diag.append(reference)
            elif reference.slope.denominator == 1 and block.exponents() == [int(reference.slope)]:
                diag.append(PureBlock.integer(int(reference.slope), block.coefficient(int(reference.slope))))
            else:
                diag.append(PureBlock(reference.slope, reference.size, block))
            for j in range(i + 1, k):
                candidate = matrix.block(like.block_slice(i), like.block_slice(j)).trim()
                if candidate.max_abs() > 0:
                    upper[(i, j)] = candidate
        return cls(like.newton, diag, upper)

    def to_json(self) -> Dict:
        return {
            "newton": self.newton.to_json(),
            "diag": [block.to_json() for block in self.diag],
            "upper": {f"{i},{j}": block.to_json() for (i, j), block in sorted(self.upper.items())},
        }

    @classmethod
    def from_json(cls, data: Dict, qp: QParams) -> "BlockSystem":
        if not isinstance(data, dict) or "newton" not in data or "diag" not in data:
            raise ValidationError("A system needs 'newton' and 'diag'")
        newton = NewtonData.from_json(data["newton"])
        diag = [PureBlock.from_json(block, qp) for block in data["diag"]]
        upper = {}
        for key, block in data.get("upper", {}).items():
            try:
                i, j = (int(part) for part in key.split(","))
            except ValueError:
                raise ValidationError(f"Upper block key '{key}' must read 'i,j'")
            upper[(i, j)] = LaurentMatrix.from_json(block)
        return cls(newton, diag, upper)

    def __repr__(self) -> str:
        slopes = ", ".join(str(s) for s in self.slopes)
        return f"BlockSystem(slopes=[{slopes}], sizes={list(self.sizes)}, upper={sorted(self.upper)})"


@dataclass(frozen=True)
class GaugeTransform:
    """Gauge matrix F, block-compatible with a system of the given sizes"""

    matrix: LaurentMatrix
    sizes: Tuple[int, ...]
    slopes: Tuple[Fraction, ...]
    member_of_G_A0: bool = False

    def __post_init__(self):
        if self.matrix.shape != (sum(self.sizes),) * 2:
            raise ValidationError(f"Gauge shape {self.matrix.shape} does not fit sizes {self.sizes}")
        if self.member_of_G_A0 and not self._unipotent_blocks():
            raise ValidationError("Gauge flagged in G_A0 must have identity diagonal blocks")

    @classmethod
    def identity(cls, sizes: Sequence[int], slopes: Sequence[Fraction]) -> "GaugeTransform":
        return cls(LaurentMatrix.identity(sum(sizes)), tuple(sizes), tuple(slopes), True)

    @classmethod
    def for_system(cls, matrix: LaurentMatrix, system: BlockSystem,
                   member_of_G_A0: Optional[bool] = None) -> "GaugeTransform":
        candidate = cls(matrix, system.sizes, system.slopes, False)
        if member_of_G_A0 is None:
            member_of_G_A0 = candidate._unipotent_blocks()
        return cls(matrix, system.sizes, system.slopes, member_of_G_A0)

    def _slice(self, i: int) -> slice:
        offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        return slice(int(offsets[i]), int(offsets[i + 1]))

    def block(self, i: int, j: int) -> LaurentMatrix:
        return self.matrix.block(self._slice(i), self._slice(j))

    def level(self, i: int, j: int) -> Fraction:
        return self.slopes[j] - self.slopes[i]

    def _unipotent_blocks(self) -> bool:
        k = len(self.sizes)
        for i in range(k):
            if not self.block(i, i).allclose(LaurentMatrix.identity(self.sizes[i]), 0.0):
                return False
            for j in range(i):
                if self.block(i, j).max_abs() != 0:
                    return False
        return True

    def inverse(self) -> "GaugeTransform":
        return GaugeTransform(self.matrix.inverse(), self.sizes, self.slopes, self.member_of_G_A0)

    def compose(self, other: "GaugeTransform") -> "GaugeTransform":
        """self . other, the gauge with (F G)[A] = F[G[A]]"""
        return GaugeTransform(
            self.matrix @ other.matrix, self.sizes, self.slopes,
            self.member_of_G_A0 and other.member_of_G_A0,
        )

    def to_json(self) -> Dict:
        return {
            "matrix": self.matrix.to_json(),
            "sizes": list(self.sizes),
            "slopes": [str(s) for s in self.slopes],
            "member_of_G_A0": self.member_of_G_A0,
        }

    @classmethod
    def from_json(cls, data: Dict) -> "GaugeTransform":
        try:
            return cls(
                LaurentMatrix.from_json(data["matrix"]),
                tuple(int(s) for s in data["sizes"]),
                tuple(Fraction(str(s)) for s in data["slopes"]),
                bool(data.get("member_of_G_A0", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed gauge transform: {e}")


def _matrix_of(value: Union[GaugeTransform, BlockSystem, LaurentMatrix]) -> LaurentMatrix:
    if isinstance(value, GaugeTransform):
        return value.matrix
    if isinstance(value, BlockSystem):
        return value.matrix()
    return value


def gauge_matrix(F: LaurentMatrix, A: LaurentMatrix, qp: QParams) -> LaurentMatrix:
    """(sigma_q F) A F^(-1)"""
    return (F.sigma_q(qp) @ A @ F.inverse()).trim()


def gauge(F: GaugeTransform, A: BlockSystem, qp: QParams) -> BlockSystem:
    """F[A] = (sigma_q F) A F^(-1), split back into the block shape of A"""
    result = gauge_matrix(_matrix_of(F), A.matrix(), qp)
    return BlockSystem.from_matrix(result, A)


def is_gauge_between(F, A, B, qp: QParams, tol: float = 1e-9) -> Tuple[bool, float]:
    """Whether (sigma_q F) A = B F, with the scaled max coefficient residual"""
    f, a, b = _matrix_of(F), _matrix_of(A), _matrix_of(B)
    left = f.sigma_q(qp) @ a
    right = b @ f
    scale = max(1.0, left.max_abs(), right.max_abs())
    residual = (left - right).max_abs() / scale
    return residual < tol, residual


def newton_polygon_scalar(coeff_valuations: Sequence[Tuple[int, Optional[int]]]) -> NewtonData:
    """Newton data of sum_k a_k sigma_q^k from the points (k, v(a_k)).

    Module slopes are the negated slopes of the lower convex hull, so that
    sigma_q - a z^mu has slope mu.
    """
    points = {}
    for k, v in coeff_valuations:
        if v is None:
            continue
        points[int(k)] = min(int(v), points.get(int(k), int(v)))
    if not points:
        raise EmptyOperator("Operator has no nonzero coefficients")
    order = max(points)
    if 0 not in points or order == 0:
        raise EmptyOperator("Operator needs nonzero a_0 and a_n with n >= 1")

    hull: List[Tuple[int, int]] = []
    for point in sorted(points.items()):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            cross = (x2 - x1) * (point[1] - y1) - (y2 - y1) * (point[0] - x1)
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(point)

    mults: Dict[Fraction, int] = {}
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        slope = -Fraction(y2 - y1, x2 - x1)
        mults[slope] = mults.get(slope, 0) + (x2 - x1)
    newton = NewtonData.from_dict(mults)
    logger.info(f"Newton polygon with slopes {[str(s) for s in newton.slopes]}")
    return newton


def newton_polygon_operator(coeffs: Sequence[LaurentSeries]) -> NewtonData:
    """Newton data from operator coefficients a_0, ..., a_n given as Laurent series"""
    valuations = []
    for k, series in enumerate(coeffs):
        live = [m for m, v in series.coeffs.items() if v != 0]
        valuations.append((k, min(live) if live else None))
    if valuations and (valuations[0][1] is None or valuations[-1][1] is None):
        raise EmptyOperator("Operator needs nonzero a_0 and a_n")
    return newton_polygon_scalar(valuations)


def newton_of_block(A: BlockSystem) -> NewtonData:
    return A.newton


def tensor_newton(first: NewtonData, second: NewtonData) -> NewtonData:
    """r(mu) = sum over mu' + mu'' = mu of r'(mu') r''(mu'')"""
    mults: Dict[Fraction, int] = {}
    for s1, r1 in zip(first.slopes, first.mults):
        for s2, r2 in zip(second.slopes, second.mults):
            mults[s1 + s2] = mults.get(s1 + s2, 0) + r1 * r2
    return NewtonData.from_dict(mults)


def extension_newton(sub: NewtonData, quotient: NewtonData) -> NewtonData:
    """Newton data of an extension: multiplicities add slope by slope"""
    mults = sub.as_dict()
    for slope, mult in quotient.as_dict().items():
        mults[slope] = mults.get(slope, 0) + mult
    return NewtonData.from_dict(mults)


def tensor_graded(first: BlockSystem, second: BlockSystem) -> BlockSystem:
    """Graded tensor product of two integral-slope graded systems, grouped by slope"""
    groups: Dict[Fraction, List[np.ndarray]] = {}
    for block1 in first.diag:
        for block2 in second.diag:
            if not (block1.is_integral and block2.is_integral):
                raise Unsupported("tensor_graded needs constant blocks of integral slope")
            groups.setdefault(block1.slope + block2.slope, []).append(
                np.kron(block1.constant, block2.constant)
            )
    slopes = sorted(groups)
    diag = [PureBlock.integer(int(s), scipy.linalg.block_diag(*groups[s])) for s in slopes]
    newton = NewtonData(tuple(slopes), tuple(block.size for block in diag))
    return BlockSystem(newton, diag)


def gevrey_truncate(F: GaugeTransform, delta, mode: str = "geq") -> GaugeTransform:
    """Keep the off-diagonal blocks of level >= delta, > delta or == delta"""
    if mode not in GEVREY_MODES:
        raise ValidationError(f"Unknown mode '{mode}', expected one of {', '.join(GEVREY_MODES)}")
    delta = _as_fraction(delta)
    k = len(F.sizes)
    grid = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            block = F.block(i, j)
            if i == j:
                grid[i][j] = block
                continue
            if i > j:
                grid[i][j] = block
                continue
            level = F.level(i, j)
            keep = {"geq": level >= delta, "gt": level > delta, "layer": level == delta}[mode]
            if keep:
                grid[i][j] = block
    return GaugeTransform(
        LaurentMatrix.assemble(grid, F.sizes, F.sizes), F.sizes, F.slopes, F.member_of_G_A0
    )


def log_unipotent(F: LaurentMatrix) -> LaurentMatrix:
    """log(I + N) = N - N^2/2 + ..., a finite sum for strictly upper N"""
    n = F.shape[0]
    nilpotent = F - LaurentMatrix.identity(n)
    if not F.is_unipotent_upper():
        raise ValidationError("log_unipotent needs a unipotent upper-triangular matrix")
    result = LaurentMatrix.zeros(n)
    power = LaurentMatrix.identity(n)
    for k in range(1, n):
        power = power @ nilpotent
        if power.max_abs() == 0:
            break
        result = result + power.scale((-1) ** (k + 1) / k)
    return result.trim()


def exp_nilpotent(X: LaurentMatrix) -> LaurentMatrix:
    """exp(X) = I + X + X^2/2 + ..., a finite sum for strictly upper X"""
    n = X.shape[0]
    if not (X + LaurentMatrix.identity(n)).is_unipotent_upper():
        raise ValidationError("exp_nilpotent needs a strictly upper-triangular matrix")
    result = LaurentMatrix.identity(n)
    power = LaurentMatrix.identity(n)
    for k in range(1, n):
        power = power @ X
        if power.max_abs() == 0:
            break
        result = result + power.scale(1 / math.factorial(k))
    return result.trim()


def normal_form_dimension(newton: NewtonData) -> int:
    """sum over i < j of r_i r_j (mu_j - mu_i)"""
    total = Fraction(0)
    for i, (si, ri) in enumerate(zip(newton.slopes, newton.mults)):
        for sj, rj in zip(newton.slopes[i + 1:], newton.mults[i + 1:]):
            total += ri * rj * (sj - si)
    return int(total)


def normal_window(A: BlockSystem, i: int, j: int) -> Tuple[int, int]:
    """Exponents [mu_i, mu_j) allowed in a normalized upper block"""
    return int(A.slopes[i]), int(A.slopes[j]) - 1


def _solve_layer(U: LaurentMatrix, Ai: np.ndarray, Aj: np.ndarray, mu_i: int, mu_j: int,
                 qp: QParams, pair: BlockIndex) -> Tuple[LaurentMatrix, LaurentMatrix]:
    """Find F_{i,j} killing the coefficients of U outside [mu_i, mu_j).

    Solves q^(k - mu_j) F_{k - mu_j} A_j - A_i F_{k - mu_i} = -U_k for every k outside
    the window, with vec taken column-major. Returns (F, V).
    """
    ri, rj = Ai.shape[0], Aj.shape[0]
    live = U.exponents()
    n_lo = min(min(live) - mu_i, 0)
    n_hi = max(max(live) - mu_j, -1)
    unknowns = list(range(n_lo, n_hi + 1))
    block = ri * rj
    V = U
    if not unknowns:
        return LaurentMatrix.zeros(ri, rj), V

    rows = [k for k in range(n_lo + mu_i, n_hi + mu_j + 1) if not mu_i <= k < mu_j]
    size = len(unknowns) * block
    system = np.zeros((size, size), dtype=complex)
    rhs = np.zeros(size, dtype=complex)
    right = np.kron(Aj.T, np.eye(ri))
    left = np.kron(np.eye(rj), Ai)
    for row_index, k in enumerate(rows):
        row = slice(row_index * block, (row_index + 1) * block)
        rhs[row] = -U.coefficient(k).flatten(order="F")
        n = k - mu_j
        if n_lo <= n <= n_hi:
            col = (n - n_lo) * block
            system[row, col:col + block] += qp.q_power(n) * right
        n = k - mu_i
        if n_lo <= n <= n_hi:
            col = (n - n_lo) * block
            system[row, col:col + block] -= left

    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise ResonantNormalization(
            f"Layer system of block {pair} is singular (condition {condition:.3e}) "
            f"at coefficient window [{n_lo}, {n_hi}]"
        )
    try:
        solution = scipy.linalg.solve(system, rhs)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ResonantNormalization(f"Layer system of block {pair} is singular: {e}")

    stack = np.stack([
        solution[p * block:(p + 1) * block].reshape((ri, rj), order="F")
        for p in range(len(unknowns))
    ])
    F = LaurentMatrix(n_lo, stack).trim()
    Bi = LaurentMatrix.monomial(Ai, mu_i)
    Bj = LaurentMatrix.monomial(Aj, mu_j)
    V = (U + F.sigma_q(qp) @ Bj - Bi @ F).clip((mu_i, mu_j - 1))
    return F, V


def bg_normalize(A: BlockSystem, qp: QParams) -> Tuple[BlockSystem, GaugeTransform]:
    """Birkhoff-Guenther normal form for integral slopes.

    Pairs (i, j) are normalized in increasing level mu_j - mu_i; an elementary
    gauge I + E_ij(F) only changes blocks of strictly higher level, so each pair is
    solved once. Returns the normalized system and the certifying gauge in G_A0.
    """
    for block in A.diag:
        if not block.is_integral:
            raise Unsupported("bg_normalize needs constant blocks of integral slope")

    current = A
    total = LaurentMatrix.identity(A.dimension)
    for i, j in A.pairs_by_level():
        U = current.upper_block(i, j)
        if U.max_abs() == 0:
            continue
        mu_i, mu_j = int(A.slopes[i]), int(A.slopes[j])
        F, V = _solve_layer(U, A.diag[i].constant, A.diag[j].constant, mu_i, mu_j, qp, (i, j))
        if F.max_abs() == 0:
            continue
        grid = [[None] * len(A.diag) for _ in A.diag]
        grid[i][j] = F
        step = LaurentMatrix.assemble(grid, A.sizes, A.sizes)
        identity = LaurentMatrix.identity(A.dimension)
        G, G_inv = identity + step, identity - step
        moved = BlockSystem.from_matrix((G.sigma_q(qp) @ current.matrix() @ G_inv).trim(), A)
        upper = dict(moved.upper)
        upper[(i, j)] = V.trim()
        current = A.with_upper({key: value for key, value in upper.items() if value.max_abs() > 0})
        total = (G @ total).trim()
        logger.info(f"Normalized block ({i}, {j}) at level {mu_j - mu_i} with F window {F.window}")

    return current, GaugeTransform.for_system(total, A, True)
