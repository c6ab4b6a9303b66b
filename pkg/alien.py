"""
q-alien derivations.

For a two-slope block [[A_i, U], [0, A_j]] of level delta, the Stokes
summation F_c(z0) is a meromorphic function of the direction c on E_q with
simple poles on the resonance set. The alien derivative at a class alpha is
(1/c) Res_{c=alpha} F_c(z0). With V_m(c) the z^m coefficient of
z^(-mu_i) U theta_c^delta A_j^(-1) written in the eigenbases of A_i, A_j,

    N'_ab = z0^m V~_m(c)_ab / (delta d_ab theta(z0/c)^delta),   q^m c^delta = d_ab.

Blocks with an ill-conditioned eigenbasis fall back to a contour integral.
Irreducible blocks are first diagonalized over the ramified base q_R.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from elliptic import EllipticPoint, canonicalize, residue_on_Eq, root_grid
from numkernel import DEFAULT_WINDOW, LaurentMatrix, LaurentSeries, QParams
from qdmod import BlockSystem
from ramify import ramified_conjugation
from stokes import EIGEN_CONDITION_LIMIT, multi_slope_sum
from theta import ThetaCoeffTable, series_half_width, theta, theta_power_coeff
from validation import BadQValue, BasePointOnSpiral, ValidationError, Validator

logger = logging.getLogger(__name__)

SPIRAL_TOL = 1e-12
BASIS_CONDITION_LIMIT = 1e12
NUMERATORS = ("prop", "cor")


@dataclass
class AlienBlock:
    """Alien derivative of block (i, j) at the class alpha, with beta = alpha^(-delta)"""

    block: Tuple[int, int]
    delta: int
    alpha: EllipticPoint
    beta: EllipticPoint
    N: np.ndarray
    c: complex
    label: Optional[Tuple[int, int]] = None
    method: str = "closed"

    def to_json(self) -> Dict:
        return {
            "block": list(self.block),
            "delta": self.delta,
            "alpha": self.alpha.to_json(),
            "beta": self.beta.to_json(),
            "label": list(self.label) if self.label is not None else None,
            "method": self.method,
            "N": [[[v.real, v.imag] for v in row] for row in np.atleast_2d(self.N)],
        }

    @classmethod
    def from_json(cls, data: Dict, qp: QParams) -> "AlienBlock":
        try:
            N = np.array([[complex(*entry) for entry in row] for row in data["N"]])
            alpha = EllipticPoint.from_json(data["alpha"], qp)
            label = tuple(data["label"]) if data.get("label") is not None else None
            return cls(tuple(data["block"]), int(data["delta"]), alpha,
                       EllipticPoint.from_json(data["beta"], qp), N, alpha.rep, label,
                       data.get("method", "closed"))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed alien block: {e}")


def _check_delta(delta: int):
    is_valid, error = Validator.validate_integer_range(delta, "delta", 1, 64)
    if not is_valid:
        raise ValidationError(error)


def _theta_at(qp: QParams, c: complex) -> complex:
    value = theta(qp, qp.z0 / c)
    if abs(value) < SPIRAL_TOL:
        raise BasePointOnSpiral(f"z0 = {qp.z0} lies on the spiral [-{c}; q]")
    return value


def _resonant_index(qp: QParams, c: complex, delta: int, ratio: complex) -> int:
    """m with q^m c^delta = ratio"""
    return round(math.log(abs(ratio / complex(c) ** delta)) / math.log(abs(qp.q)))


def alien_two_by_two(a: complex, delta: int, u: LaurentSeries, qp: QParams,
                     b: complex = 1, k: int = 0, numerator: str = "prop") -> List[AlienBlock]:
    """All delta^2 alien derivatives of [[a z^k, u], [0, b z^(k+delta)]].

    Delta_{l,m} = f_m(c_{l,m}) / (delta d), d = a/b and
    f_m(c) = z0^m v_m(c) / (b theta(z0/c)^delta), v_m(c) the z^m coefficient
    of z^(-k) u theta_c^delta. The 'cor' numerator carries an extra q^(-m).
    """
    _check_delta(delta)
    if numerator not in NUMERATORS:
        raise ValidationError(f"numerator must be one of {', '.join(NUMERATORS)}")
    for value, name in ((a, "a"), (b, "b")):
        is_valid, error = Validator.validate_nonzero(complex(value), name)
        if not is_valid:
            raise ValidationError(error)
    d = complex(a) / complex(b)
    beta = canonicalize(1 / d, qp)
    grid = root_grid(delta, beta, qp)
    z0 = qp.z0
    blocks = []
    for l, m in grid.labels():
        c = grid.point(l, m)
        m_eff = _resonant_index(qp, c, delta, d)
        v = sum(
            up * theta_power_coeff(qp, delta, m_eff - p + k) * c ** (-(m_eff - p + k))
            for p, up in u.coeffs.items()
        )
        f = z0 ** m_eff * v / (complex(b) * _theta_at(qp, c) ** delta)
        value = f / (delta * d)
        if numerator == "cor":
            value *= qp.q_power(-m_eff)
        blocks.append(
            AlienBlock((0, 1), delta, canonicalize(c, qp), beta, np.array([[value]]), c, (l, m))
        )
    return blocks


def scalar_evaluation_map(a: complex, delta: int, u: LaurentSeries, qp: QParams,
                          b: complex = 1, k: int = 0) -> Callable[[complex], complex]:
    """c -> F_c(z0)_{0,1} = sum_m f_m(c) / (q^m c^delta - d) for the two by two system"""
    _check_delta(delta)
    half = series_half_width(qp, delta)
    row = ThetaCoeffTable(qp, delta, half).row(delta)
    n = np.arange(-half, half + 1)
    d = complex(a) / complex(b)
    z0 = qp.z0
    terms = list(u.coeffs.items())

    def evaluate_at(c: complex) -> complex:
        c = complex(c)
        total = 0j
        for p, up in terms:
            m = n + p - k
            denominators = np.exp(qp.log_q * m) * c ** delta - d
            total += up * np.sum(row * np.exp(-n * cmath.log(c)) * z0 ** m / denominators)
        return total / (complex(b) * _theta_at(qp, c) ** delta)

    return evaluate_at


def evaluation_map(A: BlockSystem, qp: QParams, i: int = 0, j: int = 1,
                   window: Tuple[int, int] = DEFAULT_WINDOW) -> Callable[[complex], np.ndarray]:
    """c -> block (i, j) of F_c(z0) for a system with constant integral-slope blocks"""
    def evaluate_at(c: complex) -> np.ndarray:
        return multi_slope_sum(A, c, qp, window, linear=True).block_at(i, j, qp.z0)

    return evaluate_at


def _coefficient_V(U: LaurentMatrix, Aj_inv: np.ndarray, c: complex, delta: int, mu_i: int,
                   m: int, qp: QParams) -> np.ndarray:
    """z^m coefficient of z^(-mu_i) U theta_c^delta A_j^(-1)"""
    total = np.zeros(U.shape, dtype=complex)
    for p in U.exponents():
        n = m + mu_i - p
        total += U.coefficient(p) * theta_power_coeff(qp, delta, n) * c ** (-n)
    return total @ Aj_inv


def _singularity_spacing(c0: complex, ratios: Sequence[complex], delta: int, qp: QParams) -> float:
    candidates = []
    for ratio in ratios:
        centre = _resonant_index(qp, c0, delta, ratio)
        for m in range(centre - 1, centre + 2):
            root = (qp.q_power(-m) * ratio) ** (1.0 / delta)
            candidates.extend(root * QParams.zeta(delta) ** s for s in range(delta))
    centre = round(math.log(abs(c0 / qp.z0)) / math.log(abs(qp.q)))
    candidates.extend(-qp.z0 * qp.q_power(j) for j in range(centre - 1, centre + 2))
    gaps = [abs(x - c0) for x in candidates if abs(x - c0) > 1e-9 * abs(c0)]
    return min(gaps) if gaps else abs(c0)


class _Collector:
    """Alien blocks of one pair, merged by class"""

    def __init__(self, block: Tuple[int, int], delta: int):
        self.block = block
        self.delta = delta
        self.entries: List[AlienBlock] = []

    def add(self, alpha: EllipticPoint, beta: EllipticPoint, value: np.ndarray, c: complex,
            label, method: str):
        for entry in self.entries:
            if entry.alpha.same_as(alpha):
                entry.N = entry.N + value
                return
        self.entries.append(AlienBlock(self.block, self.delta, alpha, beta, value, c, label, method))


def _pair_closed_form(A: BlockSystem, i: int, j: int, qp: QParams, base: str) -> List[AlienBlock]:
    delta = int(A.level(i, j))
    mu_i = int(A.slopes[i])
    U = A.upper_block(i, j).trim()
    Ai, Aj = A.diag[i].constant, A.diag[j].constant
    Aj_inv = np.linalg.inv(Aj)
    l1, P1 = scipy.linalg.eig(Ai)
    l2, P2 = scipy.linalg.eig(Aj)
    P1_inv, P2_inv = np.linalg.inv(P1), np.linalg.inv(P2)
    collector = _Collector((i, j), delta)
    for a_index, lam in enumerate(l1):
        for b_index, lam2 in enumerate(l2):
            ratio = lam / lam2
            beta = canonicalize(1 / ratio, qp, base)
            grid = root_grid(delta, beta, qp)
            for l, m in grid.labels():
                c = grid.point(l, m)
                m_eff = _resonant_index(qp, c, delta, ratio)
                rotated = P1_inv @ _coefficient_V(U, Aj_inv, c, delta, mu_i, m_eff, qp) @ P2
                entry = qp.z0 ** m_eff * rotated[a_index, b_index] / (
                    delta * ratio * _theta_at(qp, c) ** delta
                )
                unit = np.zeros((len(l1), len(l2)), dtype=complex)
                unit[a_index, b_index] = entry
                collector.add(canonicalize(c, qp, base), beta, P1 @ unit @ P2_inv, c, (l, m), "closed")
    return collector.entries


def _pair_contour(A: BlockSystem, i: int, j: int, qp: QParams, base: str) -> List[AlienBlock]:
    delta = int(A.level(i, j))
    sub = A.subsystem([i, j])
    phi = evaluation_map(sub, qp)
    ratios = (np.linalg.eigvals(A.diag[i].constant)[:, None]
              / np.linalg.eigvals(A.diag[j].constant)[None, :]).ravel()
    collector = _Collector((i, j), delta)
    seen: List[EllipticPoint] = []
    for ratio in ratios:
        beta = canonicalize(1 / ratio, qp, base)
        if any(beta.same_as(other) for other in seen):
            continue
        seen.append(beta)
        grid = root_grid(delta, beta, qp)
        for l, m in grid.labels():
            c = grid.point(l, m)
            radius = min(0.1 * _singularity_spacing(c, ratios, delta, qp), 0.05 * abs(c))
            value = np.atleast_2d(residue_on_Eq(phi, c, radius=radius))
            collector.add(canonicalize(c, qp, base), beta, value, c, (l, m), "contour")
    return collector.entries


def _alien_integral(A: BlockSystem, qp: QParams, base: str = "q") -> List[AlienBlock]:
    blocks = []
    for i, j in A.pairs_by_level():
        if A.level(i, j) == 0 or A.upper_block(i, j).max_abs() == 0:
            continue
        _, P1 = scipy.linalg.eig(A.diag[i].constant)
        _, P2 = scipy.linalg.eig(A.diag[j].constant)
        if max(np.linalg.cond(P1), np.linalg.cond(P2)) > EIGEN_CONDITION_LIMIT:
            logger.info(f"Block ({i}, {j}) has a defective eigenbasis, using contour residues")
            blocks.extend(_pair_contour(A, i, j, qp, base))
        else:
            blocks.extend(_pair_closed_form(A, i, j, qp, base))
    return blocks


def _alien_ramified(A: BlockSystem, qp: QParams) -> List[AlienBlock]:
    diagonalized = ramified_conjugation(A, qp)
    blocks = _alien_integral(diagonalized.system, diagonalized.qp_R, base="q")
    transported = []
    for block in blocks:
        i, j = block.block
        N = np.linalg.solve(diagonalized.fibre(i), block.N @ diagonalized.fibre(j))
        alpha = canonicalize(block.alpha.rep, qp, "qr")
        beta = canonicalize(block.beta.rep, qp, "qr")
        transported.append(AlienBlock(block.block, block.delta, alpha, beta, N, block.c,
                                      block.label, block.method))
    return transported


def alien_all(A: BlockSystem, qp: QParams) -> List[AlienBlock]:
    """Every alien block of A: closed form per pair, contour when defective, ramified when irreducible"""
    if qp.r == 1 and all(block.is_integral for block in A.diag):
        blocks = _alien_integral(A, qp)
    else:
        blocks = _alien_ramified(A, qp)
    logger.info(f"Computed {len(blocks)} alien blocks")
    return blocks


def alien_general(A: BlockSystem, alpha: EllipticPoint, qp: QParams) -> List[AlienBlock]:
    """Alien blocks of A at the class alpha"""
    return [block for block in alien_all(A, qp) if block.alpha.same_as(alpha)]


def _find(blocks: Sequence[AlienBlock], alpha: EllipticPoint) -> Optional[AlienBlock]:
    for block in blocks:
        if block.alpha.same_as(alpha):
            return block
    return None


def alien_dilated(a: complex, delta: int, u: LaurentSeries, qp: QParams, lam: complex,
                   b: complex = 1, k: int = 0) -> float:
    """Max relative gap in Delta_{alpha/lam}(A(lam z)) = (theta(z0/c)/theta(z0/c'))^delta lam^m Delta_alpha(A)"""
    lam = complex(lam)
    before = alien_two_by_two(a, delta, u, qp, b, k)
    after = alien_two_by_two(complex(a) * lam ** k, delta, u.dilate(lam), qp,
                             complex(b) * lam ** (k + delta), k)
    d = complex(a) / complex(b)
    worst = 0.0
    for block in before:
        shifted = block.c / lam
        partner = _find(after, canonicalize(shifted, qp))
        if partner is None:
            raise ValidationError(f"No dilated class for {block.c}")
        m = _resonant_index(qp, block.c, delta, d)
        predicted = (_theta_at(qp, block.c) / _theta_at(qp, shifted)) ** delta * lam ** m * block.N
        scale = max(np.abs(predicted).max(), np.abs(partner.N).max(), 1e-300)
        worst = max(worst, float(np.abs(partner.N - predicted).max() / scale))
    return worst


def residue_oracle_gap(a: complex, delta: int, u: LaurentSeries, qp: QParams,
                       b: complex = 1, k: int = 0, numerator: str = "prop") -> float:
    """Max relative gap between the closed form and circle-sampled residues of c -> F_c(z0)"""
    phi = scalar_evaluation_map(a, delta, u, qp, b, k)
    ratio = complex(a) / complex(b)
    worst = 0.0
    for block in alien_two_by_two(a, delta, u, qp, b, k, numerator):
        radius = min(0.1 * _singularity_spacing(block.c, [ratio], delta, qp), 0.05 * abs(block.c))
        sampled = complex(residue_on_Eq(phi, block.c, radius=radius))
        closed = complex(block.N[0, 0])
        scale = max(abs(closed), abs(sampled), 1e-300)
        worst = max(worst, abs(sampled - closed) / scale)
    return worst


def class_constraint_gap(block: AlienBlock) -> float:
    """Distance of alpha^delta beta from the unit class of E_q"""
    x = complex(block.c) ** block.delta * block.beta.rep
    log_base = block.beta.log_base
    m = round(math.log(abs(x)) / log_base.real)
    return float(abs(x * cmath.exp(-m * log_base) - 1))


def _check_canonical_a(a: complex, qp: QParams):
    if not 1 / abs(qp.q) < abs(a) <= 1 + 1e-12:
        raise ValidationError(f"|a| = {abs(a)} outside (1/|q|, 1]; 1/a must be a canonical representative")


def psi_value(l: int, m: int, j: int, delta: int, a: complex, qp: QParams) -> complex:
    """theta(z0/c_{l,m})^delta Delta_{l,m} evaluated on u_j = z^j"""
    blocks = alien_two_by_two(a, delta, LaurentSeries.monomial(j), qp)
    block = next(b for b in blocks if b.label == (l % delta, m % delta))
    return complex(_theta_at(qp, block.c) ** delta * block.N[0, 0])


def psi_closed_form(l: int, m: int, j: int, delta: int, a: complex, qp: QParams) -> complex:
    """z0^m t_(m-j)^(delta) c_{l,m}^(j-m) / (delta a)"""
    _check_canonical_a(a, qp)
    c = root_grid(delta, canonicalize(1 / complex(a), qp), qp).point(l, m)
    return complex(qp.z0 ** m * theta_power_coeff(qp, delta, m - j) * c ** (j - m) / (delta * a))


def psi_family(delta: int, a: complex, qp: QParams) -> Dict[Tuple[int, int], np.ndarray]:
    """Psi_{l,m}(u_j) for every label (l, m) and j = 0 .. delta - 1"""
    _check_canonical_a(a, qp)
    family = {label: np.zeros(delta, dtype=complex) for label in
              [(l, m) for l in range(delta) for m in range(delta)]}
    for j in range(delta):
        for block in alien_two_by_two(a, delta, LaurentSeries.monomial(j), qp):
            family[block.label][j] = _theta_at(qp, block.c) ** delta * block.N[0, 0]
    return family


def shift_in_l_check(delta: int, a: complex, qp: QParams) -> float:
    """Max gap in Psi_{l+1,m}(u_j) = zeta_delta^(m-j) Psi_{l,m}(u_j)"""
    family = psi_family(delta, a, qp)
    zeta = QParams.zeta(delta)
    scale = max(np.abs(v).max() for v in family.values())
    worst = 0.0
    for (l, m), values in family.items():
        following = family[((l + 1) % delta, m)]
        for j in range(delta):
            worst = max(worst, abs(following[j] - zeta ** (m - j) * values[j]) / scale)
    return float(worst)


def shift_in_m_check(delta: int, a: complex, qp: QParams) -> float:
    """Max relative gap in the (m, j) -> (m + 1, j + 1) recurrence, wrapping with a/z0^delta and 1/a"""
    family = psi_family(delta, a, qp)
    q_delta = qp.q_root(delta)
    z0 = qp.z0
    worst = 0.0
    for (l, m), values in family.items():
        following = family[(l, (m + 1) % delta)]
        for j in range(delta):
            factor = z0 * q_delta ** (m - j)
            if m == delta - 1:
                factor *= a / z0 ** delta
            if j == delta - 1:
                factor /= a
            predicted = factor * values[j]
            actual = following[(j + 1) % delta]
            scale = max(abs(predicted), abs(actual), 1e-300)
            worst = max(worst, abs(actual - predicted) / scale)
    return float(worst)


@dataclass
class CanonicalBasisEntry:
    """Delta_l^(delta, beta) := Delta_{alpha_{l,0}} with its values on u_j = z^j"""

    delta: int
    beta: EllipticPoint
    l: int
    alpha: EllipticPoint
    a: complex
    values: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)

    def to_json(self) -> Dict:
        return {
            "delta": self.delta,
            "beta": self.beta.to_json(),
            "l": self.l,
            "alpha": self.alpha.to_json(),
            "values": [[v.real, v.imag] for v in self.values],
        }


def independence_matrix(delta: int, a: complex, qp: QParams) -> Tuple[np.ndarray, float, float]:
    """M[l, j] = Psi_{l,0}(u_j), its condition number and its gap to Vandermonde(zeta^(-lj)) diag(Psi_{0,0})"""
    family = psi_family(delta, a, qp)
    M = np.array([family[(l, 0)] for l in range(delta)])
    zeta = QParams.zeta(delta)
    vandermonde = np.array([[zeta ** (-l * j) for j in range(delta)] for l in range(delta)])
    factored = vandermonde @ np.diag(M[0])
    gap = float(np.abs(M - factored).max() / max(np.abs(M).max(), 1e-300))
    return M, float(np.linalg.cond(M)), gap


def canonical_basis(delta: int, beta: EllipticPoint, qp: QParams,
                    a: Optional[complex] = None) -> List[CanonicalBasisEntry]:
    """Delta_0, ..., Delta_(delta-1) at beta; BadQValue when they are not independent"""
    _check_delta(delta)
    a = 1 / beta.rep if a is None else complex(a)
    M, condition, gap = independence_matrix(delta, a, qp)
    diagonal = np.abs(M[0])
    if diagonal.min() < 1e-12 * max(diagonal.max(), 1e-300) or condition > BASIS_CONDITION_LIMIT:
        raise BadQValue(
            f"Alien derivations at delta={delta} are dependent (condition {condition:.3e})"
        )
    logger.info(f"Canonical basis at delta={delta}: condition {condition:.3e}, factorization gap {gap:.3e}")
    grid = root_grid(delta, canonicalize(1 / a, qp), qp)
    entries = []
    for l in range(delta):
        c = grid.point(l, 0)
        theta_power = _theta_at(qp, c) ** delta
        entries.append(CanonicalBasisEntry(
            delta, beta, l, grid.alpha(l, 0), a, M[l] / theta_power, M[l].copy()
        ))
    return entries


def pairing(entries: Sequence[CanonicalBasisEntry],
            u: Union[LaurentSeries, Sequence[LaurentSeries], None], qp: QParams) -> np.ndarray:
    """P[l, j] = <Delta_l, u_j> := Delta_{alpha_{l,0}} of [[a, u_j], [0, z^delta]].

    u may be one series or a list; None pairs against the basis u_j = z^j of
    K_{0,delta}, which gives the square matrix of the canonical basis.
    """
    if not entries:
        raise ValidationError("pairing needs at least one canonical basis entry")
    if u is None:
        u = [LaurentSeries.monomial(j) for j in range(entries[0].delta)]
    elif isinstance(u, LaurentSeries):
        u = [u]
    values = np.zeros((len(entries), len(u)), dtype=complex)
    for column, series in enumerate(u):
        cache: Dict[Tuple[int, complex], List[AlienBlock]] = {}
        for row, entry in enumerate(entries):
            key = (entry.delta, entry.a)
            if key not in cache:
                cache[key] = alien_two_by_two(entry.a, entry.delta, series, qp)
            block = next(b for b in cache[key] if b.label == (entry.l, 0))
            values[row, column] = block.N[0, 0]
    return values
