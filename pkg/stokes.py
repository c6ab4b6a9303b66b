"""
Algebraic summation and Stokes cocycles.

For a direction c off the resonance set, the unique gauge F_c in G_A0 with
F_c[A0] = A has blocks F_{i,j} = g_{i,j} / theta_{q,c}^(mu_j - mu_i), where every
numerator g_{i,j} is a Laurent series solving, coefficient by coefficient,

    (q^m c^delta - Phi)(g_m) = V_m,    Phi(X) = A_i X A_j^(-1).

Blocks are solved in increasing level, since V_{i,j} involves the numerators
g_{l,j} of lower level.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from elliptic import EllipticPoint, canonicalize, root_grid, spiral_distance
from numkernel import DEFAULT_WINDOW, LaurentMatrix, QParams
from qdmod import BlockSystem
from theta import theta, theta_power_series
from validation import ForbiddenDirection, Unsupported, ValidationError, WindowOverflow

logger = logging.getLogger(__name__)

DIRECTION_TOL = 1e-6
EIGEN_CONDITION_LIMIT = 1e8
SAMPLE_COUNT = 20
SAMPLE_CLEARANCE = 0.05
SAMPLE_THETA_FLOOR = 0.2


def _require_integral(A: BlockSystem):
    for index, block in enumerate(A.diag):
        if not block.is_integral:
            raise Unsupported(
                f"Block {index} of slope {block.slope} is not constant of integral slope; "
                f"ramify and diagonalize it first"
            )


@dataclass
class ResonanceSet:
    """Forbidden directions, each with the pair and eigenvalue ratio producing it"""

    points: List[EllipticPoint] = field(default_factory=list)
    provenance: List[Dict] = field(default_factory=list)

    def contains(self, point: EllipticPoint, tol: float = 1e-9) -> bool:
        return any(p.same_as(point, tol) for p in self.points)

    def add(self, point: EllipticPoint, source: Dict):
        if not self.contains(point):
            self.points.append(point)
            self.provenance.append(source)

    def to_json(self) -> Dict:
        return {
            "points": [p.to_json() for p in self.points],
            "provenance": self.provenance,
        }


def eigen_ratios(Ai: np.ndarray, Aj: np.ndarray) -> np.ndarray:
    """All ratios lambda_i / lambda_j of eigenvalues"""
    return (np.linalg.eigvals(Ai)[:, None] / np.linalg.eigvals(Aj)[None, :]).ravel()


def resonance_set(A0: BlockSystem, qp: QParams) -> ResonanceSet:
    """Classes c with q^m c^(mu_j - mu_i) = lambda_i / lambda_j for some eigenvalues"""
    _require_integral(A0)
    result = ResonanceSet()
    k = len(A0.diag)
    for i in range(k):
        for j in range(i + 1, k):
            delta = int(A0.level(i, j))
            if delta == 0:
                continue
            for ratio in eigen_ratios(A0.diag[i].constant, A0.diag[j].constant):
                beta = canonicalize(1 / ratio, qp)
                grid = root_grid(delta, beta, qp)
                for (l, m), alpha in zip(grid.labels(), grid.classes()):
                    source = {"block": [i, j], "ratio": [ratio.real, ratio.imag], "label": [l, m]}
                    result.add(alpha, source)
    logger.info(f"Resonance set has {len(result.points)} classes")
    return result


def check_direction(A0: BlockSystem, c: complex, qp: QParams, tol: float = DIRECTION_TOL):
    """Raise ForbiddenDirection when q^m c^delta hits an eigenvalue ratio"""
    _require_integral(A0)
    if c == 0:
        raise ValidationError("Direction must be nonzero")
    log_abs_q = math.log(abs(qp.q))
    k = len(A0.diag)
    for i in range(k):
        for j in range(i + 1, k):
            delta = int(A0.level(i, j))
            if delta == 0:
                continue
            power = complex(c) ** delta
            for ratio in eigen_ratios(A0.diag[i].constant, A0.diag[j].constant):
                centre = round(math.log(abs(ratio / power)) / log_abs_q)
                gap = min(abs(qp.q_power(m) * power - ratio) for m in range(centre - 1, centre + 2))
                if gap < tol * abs(ratio):
                    raise ForbiddenDirection(
                        f"Direction {c} is resonant for block ({i}, {j}) with ratio {ratio}"
                    )


def solve_numerator_linear(V: LaurentMatrix, Ai: np.ndarray, Aj: np.ndarray, c: complex,
                           delta: int, qp: QParams) -> LaurentMatrix:
    """(q^m c^delta - Phi)^(-1) V_m by a Kronecker solve for every coefficient"""
    ri, rj = Ai.shape[0], Aj.shape[0]
    phi = np.kron(np.linalg.inv(Aj).T, Ai)
    power = complex(c) ** delta
    stack = np.zeros_like(V.coeffs)
    for k in range(V.coeffs.shape[0]):
        shift = qp.q_power(V.lo + k) * power
        vec = V.coeffs[k].flatten(order="F")
        try:
            solution = scipy.linalg.solve(shift * np.eye(ri * rj) - phi, vec)
        except np.linalg.LinAlgError as e:
            raise ForbiddenDirection(f"Resonant coefficient z^{V.lo + k}: {e}")
        stack[k] = solution.reshape((ri, rj), order="F")
    return LaurentMatrix(V.lo, stack).trim()


def solve_numerator(V: LaurentMatrix, Ai: np.ndarray, Aj: np.ndarray, c: complex,
                    delta: int, qp: QParams, tol: float = DIRECTION_TOL) -> LaurentMatrix:
    """(q^m c^delta - Phi)^(-1) V_m in the eigenbases of A_i and A_j when they are well conditioned"""
    l1, P1 = scipy.linalg.eig(Ai)
    l2, P2 = scipy.linalg.eig(Aj)
    if np.linalg.cond(P1) > EIGEN_CONDITION_LIMIT or np.linalg.cond(P2) > EIGEN_CONDITION_LIMIT:
        return solve_numerator_linear(V, Ai, Aj, c, delta, qp)
    ratios = l1[:, None] / l2[None, :]
    exponents = np.arange(V.lo, V.hi + 1)
    shifts = np.exp(qp.log_q * exponents) * complex(c) ** delta
    denominators = shifts[:, None, None] - ratios[None, :, :]
    live = np.abs(V.coeffs).max(axis=(1, 2)) > 0
    gaps = np.abs(denominators[live]) / np.abs(ratios)[None, :, :]
    if gaps.size and gaps.min() < tol:
        raise ForbiddenDirection(f"Direction {c} is resonant (relative gap {gaps.min():.3e})")
    P1_inv, P2_inv = np.linalg.inv(P1), np.linalg.inv(P2)
    rotated = np.einsum("ab,mbc,cd->mad", P1_inv, V.coeffs, P2)
    stack = np.einsum("ab,mbc,cd->mad", P1, rotated / denominators, P2_inv)
    return LaurentMatrix(V.lo, stack).trim()


@dataclass
class SummationResult:
    """Meromorphic gauge F_c given by its Laurent numerators g_{i,j}"""

    direction: EllipticPoint
    c: complex
    numerators: Dict[Tuple[int, int], LaurentMatrix]
    deltas: Dict[Tuple[int, int], int]
    qp: QParams
    sizes: Tuple[int, ...]
    slopes: Tuple[Fraction, ...]

    def _slice(self, i: int) -> slice:
        offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        return slice(int(offsets[i]), int(offsets[i + 1]))

    def evaluate(self, z: complex) -> np.ndarray:
        n = sum(self.sizes)
        value = np.eye(n, dtype=complex)
        theta_value = theta(self.qp, complex(z) / self.c)
        for (i, j), g in self.numerators.items():
            value[self._slice(i), self._slice(j)] = g.evaluate(z) / theta_value ** self.deltas[(i, j)]
        return value

    def block_at(self, i: int, j: int, z: complex) -> np.ndarray:
        return self.evaluate(z)[self._slice(i), self._slice(j)]

    def pole_certificate(self) -> List[Dict]:
        """Pole spiral [-c; q] and maximal pole order per block, with numerator edge decay"""
        certificate = []
        for (i, j), g in sorted(self.numerators.items()):
            scale = max(g.max_abs(), 1e-300)
            edge = max(np.abs(g.coeffs[0]).max(), np.abs(g.coeffs[-1]).max()) / scale
            certificate.append({
                "block": [i, j],
                "spiral": [-self.c.real, -self.c.imag],
                "max_pole_order": self.deltas[(i, j)],
                "numerator_window": list(g.window),
                "edge_ratio": float(edge),
            })
        return certificate

    def to_json(self) -> Dict:
        return {
            "direction": self.direction.to_json(),
            "c": [self.c.real, self.c.imag],
            "sizes": list(self.sizes),
            "slopes": [str(s) for s in self.slopes],
            "numerators": {f"{i},{j}": g.to_json() for (i, j), g in sorted(self.numerators.items())},
            "deltas": {f"{i},{j}": d for (i, j), d in sorted(self.deltas.items())},
            "pole_certificate": self.pole_certificate(),
        }


def _theta_powers(qp: QParams, c: complex, powers: Sequence[int], window) -> Dict:
    return {p: theta_power_series(qp, c, p, window) for p in sorted(set(powers)) if p > 0}


def multi_slope_sum(A: BlockSystem, c: complex, qp: QParams,
                    window: Tuple[int, int] = DEFAULT_WINDOW,
                    linear: bool = False) -> SummationResult:
    """F_c for a system with constant blocks of integral slope, layer by layer.

    V_{i,j} = z^(-mu_i) sum_{i<l<=j} U_{i,l} g_{l,j} theta_c^(mu_l - mu_i) A_j^(-1),
    with g_{j,j} = I.
    """
    _require_integral(A)
    check_direction(A.graded(), c, qp)
    c = complex(c)
    k = len(A.diag)
    mus = [int(s) for s in A.slopes]
    thetas = _theta_powers(qp, c, [mus[j] - mus[i] for i in range(k) for j in range(i, k)], window)
    numerators: Dict[Tuple[int, int], LaurentMatrix] = {}
    deltas: Dict[Tuple[int, int], int] = {}

    for i, j in A.pairs_by_level():
        delta = mus[j] - mus[i]
        V = LaurentMatrix.zeros(A.sizes[i], A.sizes[j])
        for l in range(i + 1, j + 1):
            U = A.upper_block(i, l)
            if U.max_abs() == 0:
                continue
            term = U if l == j else U @ numerators.get((l, j), LaurentMatrix.zeros(A.sizes[l], A.sizes[j]))
            if mus[l] > mus[i]:
                term = term.times_series(thetas[mus[l] - mus[i]])
            V = V + term
        if V.trim().max_abs() == 0:
            continue
        V = LaurentMatrix(V.lo - mus[i], V.coeffs) @ np.linalg.inv(A.diag[j].constant)
        if V.lo < window[0] or V.hi > window[1]:
            raise WindowOverflow(f"Block ({i}, {j}) needs window {V.window}, beyond {list(window)}")
        solver = solve_numerator_linear if linear else solve_numerator
        numerators[(i, j)] = solver(V, A.diag[i].constant, A.diag[j].constant, c, delta, qp)
        deltas[(i, j)] = delta
        logger.info(f"Summed block ({i}, {j}) at level {delta}, numerator window {numerators[(i, j)].window}")

    return SummationResult(canonicalize(c, qp), c, numerators, deltas, qp, A.sizes, A.slopes)


def algebraic_sum_two_slopes(A: BlockSystem, c: complex, qp: QParams,
                             window: Tuple[int, int] = DEFAULT_WINDOW) -> SummationResult:
    """F_c for a two-slope system: f_c = theta_c^(-delta) sum_m (q^m c^delta - Phi)^(-1) V_m"""
    if len(A.diag) != 2:
        raise Unsupported(f"Two-slope summation needs exactly two blocks (got {len(A.diag)})")
    return multi_slope_sum(A, c, qp, window)


def theta_floor_score(qp: QParams, mass_qp: QParams, z: complex, c: complex) -> float:
    """|theta_q(z/c)| against its cancellation-free size theta_|q|(|z/c|), in (0, 1]"""
    w = complex(z) / complex(c)
    return abs(theta(qp, w)) / theta(mass_qp, abs(w)).real


def sample_points(qp: QParams, directions: Sequence[complex], count: int = SAMPLE_COUNT,
                  seed: int = 0, clearance: float = SAMPLE_CLEARANCE,
                  theta_floor: float = SAMPLE_THETA_FLOOR) -> np.ndarray:
    """Points on |z| = |z0| at distance >= clearance from the spirals [-c; q].

    Evaluating g / theta_c^delta near a pole spiral loses the factor
    theta_floor_score^delta to cancellation in the numerator series, so points
    scoring at least theta_floor for every direction come first. When too few
    do, the best scoring candidates fill the remaining places.
    """
    rng = np.random.default_rng(seed)
    radius = abs(qp.z0)
    mass_qp = QParams.from_q(abs(qp.q))
    points: List[complex] = []
    fallback: List[Tuple[float, complex]] = []
    for _ in range(100 * count):
        if len(points) == count:
            break
        z = radius * cmath.exp(2j * math.pi * rng.random())
        if any(spiral_distance(z, -complex(c), qp.log_q) < clearance for c in directions):
            continue
        score = min((theta_floor_score(qp, mass_qp, z, c) for c in directions), default=1.0)
        if score >= theta_floor:
            points.append(z)
        else:
            fallback.append((score, z))
    if len(points) < count:
        if len(points) + len(fallback) < count:
            raise ValidationError("Could not place sample points off the pole spirals")
        fallback.sort(key=lambda item: item[0], reverse=True)
        logger.warning(f"Only {len(points)} of {count} sample points clear the theta floor {theta_floor}")
        points.extend(z for _, z in fallback[:count - len(points)])
    return np.array(points)


def gauge_residual_at(F: Callable[[complex], np.ndarray], A: BlockSystem, B: BlockSystem,
                      qp: QParams, points: Sequence[complex]) -> float:
    """max over points of |F(qz) A(z) - B(z) F(z)|, scaled by |B(z) F(z)|"""
    a_matrix, b_matrix = A.matrix(), B.matrix()
    worst = 0.0
    for z in points:
        right = b_matrix.evaluate(z) @ F(z)
        left = F(qp.q * z) @ a_matrix.evaluate(z)
        worst = max(worst, np.abs(left - right).max() / max(1.0, np.abs(right).max()))
    return worst


class StokesCocycle:
    """F_{c,d} = F_c^(-1) F_d, an automorphism of the graded system"""

    def __init__(self, first: SummationResult, second: SummationResult):
        self.first = first
        self.second = second

    @property
    def directions(self) -> Tuple[complex, complex]:
        return self.first.c, self.second.c

    def evaluate(self, z: complex) -> np.ndarray:
        return np.linalg.solve(self.first.evaluate(z), self.second.evaluate(z))

    def automorphism_residual(self, A0: BlockSystem, points: Sequence[complex]) -> float:
        return gauge_residual_at(self.evaluate, A0, A0, self.first.qp, points)

    def off_diagonal_residual(self, A0: BlockSystem, points: Sequence[complex]) -> float:
        """sigma_q F_{i,j} = z^(-delta) A_i F_{i,j} A_j^(-1) on every upper block"""
        qp = self.first.qp
        worst = 0.0
        for z in points:
            here, there = self.evaluate(z), self.evaluate(qp.q * z)
            for i in range(len(A0.diag)):
                for j in range(i + 1, len(A0.diag)):
                    rows, cols = A0.block_slice(i), A0.block_slice(j)
                    delta = int(A0.level(i, j))
                    Ai, Aj = A0.diag[i].constant, A0.diag[j].constant
                    expected = z ** (-delta) * Ai @ here[rows, cols] @ np.linalg.inv(Aj)
                    gap = np.abs(there[rows, cols] - expected).max()
                    worst = max(worst, gap / max(1.0, np.abs(expected).max()))
        return worst

    def pole_order_estimate(self, pole: complex, steps: Sequence[float] = (1e-3, 1e-4)) -> float:
        """Growth exponent of |F_{c,d}| approaching a pole along a ray"""
        norms = [np.abs(self.evaluate(pole * (1 + eps))).max() for eps in steps]
        return math.log(norms[1] / norms[0]) / math.log(steps[0] / steps[1])

    def to_json(self, A0: Optional[BlockSystem] = None, points=None) -> Dict:
        report = {
            "c": [self.first.c.real, self.first.c.imag],
            "d": [self.second.c.real, self.second.c.imag],
        }
        if A0 is not None and points is not None:
            report["automorphism_residual"] = self.automorphism_residual(A0, points)
            report["off_diagonal_residual"] = self.off_diagonal_residual(A0, points)
        return report


def stokes_cocycle(A: BlockSystem, c: complex, d: complex, qp: QParams) -> StokesCocycle:
    return StokesCocycle(multi_slope_sum(A, c, qp), multi_slope_sum(A, d, qp))


def spectral_projector(P_blocks: Sequence[np.ndarray], Q_blocks: Sequence[np.ndarray],
                       lam: complex, tol: float = 1e-9) -> Callable[[np.ndarray], np.ndarray]:
    """Pi_lambda for Phi(X) = P X Q^(-1), with P and Q given by characteristic blocks.

    Keeps the blocks X_{a,b} whose eigenvalue ratio lambda_a / mu_b equals lambda.
    """
    def block_eigenvalue(block: np.ndarray) -> complex:
        return complex(np.mean(np.linalg.eigvals(np.atleast_2d(block))))

    p_values = [block_eigenvalue(b) for b in P_blocks]
    q_values = [block_eigenvalue(b) for b in Q_blocks]
    p_offsets = np.concatenate([[0], np.cumsum([np.atleast_2d(b).shape[0] for b in P_blocks])])
    q_offsets = np.concatenate([[0], np.cumsum([np.atleast_2d(b).shape[0] for b in Q_blocks])])

    def project(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        result = np.zeros_like(X)
        for a, pa in enumerate(p_values):
            for b, qb in enumerate(q_values):
                if abs(pa / qb - lam) <= tol * max(1.0, abs(lam)):
                    rows = slice(int(p_offsets[a]), int(p_offsets[a + 1]))
                    cols = slice(int(q_offsets[b]), int(q_offsets[b + 1]))
                    result[rows, cols] = X[rows, cols]
        return result

    return project
