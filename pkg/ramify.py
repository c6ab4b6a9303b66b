"""
Ramification and Galois descent.

Systems over K = C({z}) are pulled back along z = z_r^r to K_r, where the
Galois generator tau acts by z_r -> zeta_r z_r. Irreducible blocks become
diagonalizable there, and Hilbert 90 brings tau-equivariant data back down.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from formal import D_matrix, IrreducibleObject, T_matrix, Z_matrix, conjugators
from numkernel import LaurentMatrix, QParams
from qdmod import BlockSystem, NewtonData, PureBlock, is_gauge_between, unipotent_jordan
from validation import CocycleNotClosed, DescentFailed, Unsupported, ValidationError, Validator

logger = logging.getLogger(__name__)

COCYCLE_TOL = 1e-8
DESCENT_TOL = 1e-9


def _check_index(r: int):
    is_valid, error = Validator.validate_integer_range(r, "r", 1, 64)
    if not is_valid:
        raise ValidationError(error)


def _block_diagonal(blocks: Sequence[LaurentMatrix]) -> LaurentMatrix:
    sizes = [b.shape[0] for b in blocks]
    grid = [[blocks[i] if i == j else None for j in range(len(blocks))] for i in range(len(blocks))]
    return LaurentMatrix.assemble(grid, sizes, sizes)


@dataclass
class RamifiedSystem:
    """A'(z_r) over the base q_r, optionally linked to its unramified origin A(z) = A'(z^(1/r))"""

    r: int
    A_prime: LaurentMatrix
    qp: QParams
    origin: Optional[BlockSystem] = None
    newton: Optional[NewtonData] = None

    @property
    def qp_r(self) -> QParams:
        return self.qp.at_root(self.r)

    def fibre_gap(self) -> float:
        """|A'(z_{0,r}) - A(z0)|, zero up to rounding when the origin is known"""
        if self.origin is None:
            return 0.0
        return float(np.abs(
            self.A_prime.evaluate(self.qp.z0_root(self.r)) - self.origin.matrix().evaluate(self.qp.z0)
        ).max())

    def to_json(self) -> dict:
        data = {"r": self.r, "A_prime": self.A_prime.to_json()}
        if self.newton is not None:
            data["newton"] = self.newton.to_json()
        return data


def ram(A: Union[LaurentMatrix, BlockSystem], r: int, qp: QParams) -> RamifiedSystem:
    """Ram_r(A)(z_r) = A(z_r^r); declared slopes are multiplied by r"""
    _check_index(r)
    if isinstance(A, BlockSystem):
        return RamifiedSystem(r, A.matrix().ramify(r), qp, A, A.newton.ramified(r))
    return RamifiedSystem(r, A.ramify(r), qp)


def tau_twist(M: LaurentMatrix, r: int, power: int = 1) -> LaurentMatrix:
    """tau^power(M)(z_r) = M(zeta_r^power z_r)"""
    return M.twist(QParams.zeta(r) ** power)


def mu_r_average(G: LaurentMatrix, r: int) -> LaurentMatrix:
    """(1/r) sum_k G(zeta_r^k z_r): keeps the exponents divisible by r, still in z_r"""
    _check_index(r)
    total = G
    for k in range(1, r):
        total = total + tau_twist(G, r, k)
    total = total.scale(1 / r)
    exponents = np.arange(total.lo, total.hi + 1)
    stack = np.where((exponents % r == 0)[:, None, None], total.coeffs, 0)
    if not np.any(stack):
        return LaurentMatrix.zeros(*G.shape)
    return LaurentMatrix(total.lo, stack).trim(0.0)


def mu_r_project(G: LaurentMatrix, r: int) -> LaurentMatrix:
    """mu_r average re-indexed in z = z_r^r"""
    return mu_r_average(G, r).contract(r)


@dataclass
class ConjugatedSystem:
    """B = F[Ram_R(A)] over q_R with constant diagonal blocks, and tau(B) = T[B]"""

    system: BlockSystem
    F: List[LaurentMatrix]
    F_inv: List[LaurentMatrix]
    T: np.ndarray
    qp: QParams
    index: int
    residual: float = 0.0
    objects: List[Optional[IrreducibleObject]] = field(default_factory=list)

    @property
    def qp_R(self) -> QParams:
        return self.qp.at_root(self.index)

    def fibre(self, i: int) -> np.ndarray:
        return self.F[i].evaluate(self.qp_R.z0)

    def gauge_matrix(self) -> LaurentMatrix:
        return _block_diagonal(self.F)

    def as_ramified(self) -> RamifiedSystem:
        return RamifiedSystem(self.index, self.system.matrix(), self.qp, None, self.system.newton)

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "system": self.system.to_json(),
            "T": [[[v.real, v.imag] for v in row] for row in self.T],
            "residual": self.residual,
        }


def conjugator_twist(obj: IrreducibleObject, qp: QParams) -> Tuple[np.ndarray, float]:
    """T_r^d with tau(F) = T_r^d F for the conjugator F of E(r, d, c), and the residual"""
    pair = conjugators(obj, qp, check=False)
    T = np.linalg.matrix_power(T_matrix(obj.r), obj.d)
    twisted = tau_twist(pair.F, obj.r)
    residual = (twisted - LaurentMatrix.constant(T) @ pair.F).max_abs() / max(pair.F.max_abs(), 1.0)
    return T, float(residual)


def ramified_conjugation(A: BlockSystem, qp: QParams) -> ConjugatedSystem:
    """Ramify at the session index R and conjugate every irreducible block to a z_R^(d s) D_r (x) U_m"""
    R = qp.r
    qp_R = qp.at_root(R)
    diag, Fs, F_invs, T_blocks, objects = [], [], [], [], []
    for index, block in enumerate(A.diag):
        if block.is_integral:
            n = block.size
            Fs.append(LaurentMatrix.identity(n))
            F_invs.append(LaurentMatrix.identity(n))
            T_blocks.append(np.eye(n, dtype=complex))
            diag.append(PureBlock.integer(int(block.slope) * R, block.constant))
            objects.append(None)
            continue
        if block.irreducible is None:
            raise Unsupported(f"Block {index} is neither integral nor of the form E(r, d, c) (x) U_m")
        obj = IrreducibleObject.from_block(block)
        if R % obj.r != 0:
            raise ValidationError(f"Session ramification {R} is not a multiple of r = {obj.r}")
        s = R // obj.r
        pair = conjugators(obj, qp)
        eye = np.eye(obj.m)
        Fs.append(pair.F.ramify(s).kron_right(eye))
        F_invs.append(pair.F_inv.ramify(s).kron_right(eye))
        T_blocks.append(np.kron(np.linalg.matrix_power(T_matrix(obj.r), obj.d), eye))
        diag.append(PureBlock.integer(obj.d * s, obj.a * np.kron(D_matrix(obj.r), unipotent_jordan(obj.m))))
        objects.append(obj)

    newton = NewtonData(tuple(Fraction(b.slope) for b in diag), tuple(b.size for b in diag))
    upper = {
        (i, j): (Fs[i].sigma_q(qp_R) @ U.ramify(R) @ F_invs[j]).trim()
        for (i, j), U in A.upper.items()
    }
    system = BlockSystem(newton, diag, upper)

    residual = 0.0
    for index, block in enumerate(A.diag):
        left = Fs[index].sigma_q(qp_R) @ block.matrix.ramify(R)
        right = diag[index].matrix @ Fs[index]
        residual = max(residual, (left - right).max_abs() / max(1.0, left.max_abs()))
    if residual > DESCENT_TOL:
        logger.warning(f"Ramified conjugation residual {residual:.3e}")
    else:
        logger.info(f"Diagonalized {len(objects) - objects.count(None)} irreducible blocks over q^(1/{R})")

    T = np.zeros((system.dimension, system.dimension), dtype=complex)
    offset = 0
    for block in T_blocks:
        size = block.shape[0]
        T[offset:offset + size, offset:offset + size] = block
        offset += size
    return ConjugatedSystem(system, Fs, F_invs, T, qp, R, residual, objects)


def twist_conjugation_check(A: BlockSystem, qp: QParams) -> float:
    """Max residual of tau(F) = T F and tau(B) = T B T^(-1) for the ramified conjugation"""
    conjugated = ramified_conjugation(A, qp)
    F = conjugated.gauge_matrix()
    T = LaurentMatrix.constant(conjugated.T)
    T_inv = LaurentMatrix.constant(np.linalg.inv(conjugated.T))
    gauge_gap = (tau_twist(F, conjugated.index) - T @ F).max_abs() / max(F.max_abs(), 1.0)
    B = conjugated.system.matrix()
    system_gap = (tau_twist(B, conjugated.index) - T @ B @ T_inv).max_abs() / max(B.max_abs(), 1.0)
    return float(max(gauge_gap, system_gap))


def hilbert90_descend(B: RamifiedSystem, G: LaurentMatrix,
                      X: Optional[LaurentMatrix] = None) -> Tuple[LaurentMatrix, LaurentMatrix]:
    """Descend B with G[B] = tau(B) to C over z.

    With F_0 = I and F_(k+1) = tau(F_k) G, the average H = (1/r) sum_k tau^k(X) F_k
    satisfies tau(H) = H G^(-1), so C := H[B] is tau-invariant. X defaults to I;
    H must come out invertible.
    """
    r, qp_r = B.r, B.qp_r
    n = B.A_prime.shape[0]
    _, gauge_gap = is_gauge_between(G, B.A_prime, tau_twist(B.A_prime, r), qp_r)
    if gauge_gap > DESCENT_TOL:
        logger.warning(f"Descent datum is not a gauge B -> tau(B) (residual {gauge_gap:.3e})")

    products = [LaurentMatrix.identity(n)]
    for _ in range(r):
        products.append((tau_twist(products[-1], r) @ G).trim())
    cocycle_gap = (products[r] - LaurentMatrix.identity(n)).max_abs()
    if cocycle_gap > COCYCLE_TOL:
        raise CocycleNotClosed(f"Twisted product of the descent datum misses I by {cocycle_gap:.3e}")

    X = LaurentMatrix.identity(n) if X is None else X
    H = LaurentMatrix.zeros(n)
    for k in range(r):
        H = H + tau_twist(X, r, k) @ products[k]
    H = H.scale(1 / r).trim()

    C = (H.sigma_q(qp_r) @ B.A_prime @ H.inverse()).trim(1e-13)
    invariance_gap = (tau_twist(C, r) - C).max_abs() / max(C.max_abs(), 1.0)
    if invariance_gap > DESCENT_TOL:
        raise DescentFailed(f"Descended system is not tau-invariant (gap {invariance_gap:.3e})")
    logger.info(f"Descended a rank {n} system from K_{r} (cocycle gap {cocycle_gap:.1e})")
    return mu_r_project(C, r), H


def default_descent_seed(conjugated: ConjugatedSystem) -> LaurentMatrix:
    """diag(z_R^(s j)) on every irreducible block and I elsewhere, which makes H invertible"""
    blocks = []
    for obj, F in zip(conjugated.objects, conjugated.F):
        if obj is None:
            blocks.append(LaurentMatrix.identity(F.shape[0]))
            continue
        s = conjugated.index // obj.r
        stack = np.zeros(((obj.r - 1) * s + 1, obj.r, obj.r), dtype=complex)
        for j in range(obj.r):
            stack[j * s, j, j] = 1
        blocks.append(LaurentMatrix(0, stack).kron_right(np.eye(obj.m)))
    return _block_diagonal(blocks)


@dataclass
class DescentReport:
    C: LaurentMatrix
    H: LaurentMatrix
    gauge: LaurentMatrix
    residual: float

    def to_json(self) -> dict:
        return {
            "C": self.C.to_json(),
            "H": self.H.to_json(),
            "gauge": self.gauge.to_json(),
            "residual": self.residual,
        }


def descend_system(A: BlockSystem, qp: QParams) -> DescentReport:
    """Round trip A -> B = F[Ram A] -> C = H[B] over K, with the gauge (H F) re-indexed in z.

    The residual is that of gauge[A] = C.
    """
    conjugated = ramified_conjugation(A, qp)
    R = conjugated.index
    G = LaurentMatrix.constant(conjugated.T)
    C, H = hilbert90_descend(conjugated.as_ramified(), G, default_descent_seed(conjugated))
    lifted = (H @ conjugated.gauge_matrix()).trim(1e-13)
    gauge = mu_r_project(lifted, R)
    _, residual = is_gauge_between(gauge, A.matrix(), C, qp)
    logger.info(f"Descent round trip residual {residual:.3e}")
    return DescentReport(C, H, gauge, float(residual))


def embed_in_restriction(A_prime: RamifiedSystem) -> Tuple[LaurentMatrix, LaurentMatrix]:
    """Restriction of scalars of A' over K_r to a system D over K of rank r n.

    The block diagonal sum of the twists tau^k(A') is gauged by
    F (Z_r^(-1) (x) I_n), F = diag(1, z_r, ..., z_r^(r-1)) (x) I_n, which leaves only
    exponents divisible by r. For r = 2 and A' = B + z_r C this is
    [[B, C], [q_r z C, q_r B]]. Returns D and the gauge F (Z_r^(-1) (x) I_n).
    """
    r, qp_r = A_prime.r, A_prime.qp_r
    A = A_prime.A_prime
    n = A.shape[0]
    total = _block_diagonal([tau_twist(A, r, k) for k in range(r)])
    P = LaurentMatrix.constant(np.kron(np.linalg.inv(Z_matrix(r)), np.eye(n)))
    P_inv = LaurentMatrix.constant(np.kron(Z_matrix(r), np.eye(n)))
    powers = np.zeros((r, r * n, r * n), dtype=complex)
    powers_inv = np.zeros((r, r * n, r * n), dtype=complex)
    for k in range(r):
        powers[k, k * n:(k + 1) * n, k * n:(k + 1) * n] = np.eye(n)
        powers_inv[r - 1 - k, k * n:(k + 1) * n, k * n:(k + 1) * n] = np.eye(n)
    F = LaurentMatrix(0, powers)
    F_inv = LaurentMatrix(-(r - 1), powers_inv)
    restricted = (F.sigma_q(qp_r) @ P @ total @ P_inv @ F_inv).trim(1e-13)
    return mu_r_project(restricted, r), F @ P
