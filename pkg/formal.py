"""
Formal Galois group calculus.

Irreducible pure objects E(r, d, c), the D/T/Z matrix formulaire, the
conjugators G and F that bring E(r, d, c) to a z_r^d T_r and a z_r^d D_r,
evaluation of group elements (lambda, t, k1, k2) on objects, the twisted
multiplication, the wild group law and its action on Psi symbols.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from elliptic import EllipticPoint, character_gamma, gamma_power, root_grid, shift_ell
from numkernel import LaurentMatrix, QParams
from qdmod import (
    BlockSystem,
    PureBlock,
    exp_nilpotent,
    irreducible_matrix,
    is_gauge_between,
    log_unipotent,
    unipotent_jordan,
)
from theta import theta
from validation import Unsupported, ValidationError, Validator

logger = logging.getLogger(__name__)

FORMULAIRE_TOL = 1e-12
CONJUGATOR_TOL = 1e-10


def D_matrix(r: int) -> np.ndarray:
    """diag(zeta_r^j)"""
    return np.diag(np.exp(2j * np.pi * np.arange(r) / r))


def T_matrix(r: int) -> np.ndarray:
    """Cyclic shift: ones at (j, j+1) and (r-1, 0)"""
    return np.roll(np.eye(r, dtype=complex), 1, axis=1)


def Z_matrix(r: int) -> np.ndarray:
    """Fourier matrix with Z T Z^(-1) = D"""
    return scipy.linalg.dft(r).astype(complex)


def formulaire_check(r: int, k_range: int = 3) -> Dict:
    """Max deviation of each matrix identity between D_r, T_r and Z_r"""
    is_valid, error = Validator.validate_integer_range(r, "r", 1, 64)
    if not is_valid:
        raise ValidationError(error)
    D, T, Z = D_matrix(r), T_matrix(r), Z_matrix(r)
    zeta = QParams.zeta(r)
    Z_inv = np.linalg.inv(Z)
    mp = np.linalg.matrix_power
    deviations = {
        "Z_inverse": np.abs(Z_inv - Z.conj() / r).max(),
        "Z_symmetric": np.abs(Z.T - Z).max(),
        "Z_conjugates_T_to_D": np.abs(Z @ T @ Z_inv - D).max(),
        "T_from_D": max(np.abs(Z_inv @ D @ Z - T).max(), np.abs(Z @ np.linalg.inv(D) @ Z_inv - T).max()),
    }
    commutation = 0.0
    power_shift = 0.0
    for k in range(-k_range, k_range + 1):
        Tk = mp(T, k)
        for l in range(-k_range, k_range + 1):
            Dl = mp(D, l)
            commutation = max(commutation, np.abs(Tk @ Dl - zeta ** (k * l) * Dl @ Tk).max())
        power_shift = max(power_shift, np.abs(Tk @ Z - Z @ mp(D, -k)).max())
    deviations["TD_commutation"] = commutation
    deviations["T_power_Z"] = power_shift
    deviations = {name: float(value) for name, value in deviations.items()}
    deviations["max_deviation"] = max(deviations.values())
    deviations["passed"] = deviations["max_deviation"] < FORMULAIRE_TOL
    return deviations


@dataclass(frozen=True)
class IrreducibleObject:
    """E(r, d, c) (x) U_m, of slope d/r"""

    r: int
    d: int
    c: complex
    m: int = 1

    def __post_init__(self):
        object.__setattr__(self, "c", complex(self.c))
        if self.r < 1 or math.gcd(self.d, self.r) != 1:
            raise ValidationError(f"E(r, d, c) needs r >= 1 and gcd(d, r) = 1 (got {self.r}, {self.d})")
        if self.c == 0:
            raise ValidationError("E(r, d, c) needs c != 0")
        if self.m < 1:
            raise ValidationError("Unipotent size m must be positive")

    @classmethod
    def create(cls, r: int, d: int, c: complex, qp: QParams, m: int = 1) -> "IrreducibleObject":
        """Build with c checked against the fundamental annulus 1 <= |c| < |q|"""
        if not 1 - 1e-12 <= abs(c) < abs(qp.q):
            raise ValidationError(f"|c| = {abs(c)} outside the fundamental annulus [1, {abs(qp.q)})")
        return cls(r, d, c, m)

    @property
    def slope(self) -> Fraction:
        return Fraction(self.d, self.r)

    @property
    def a(self) -> complex:
        """Principal r-th root of c"""
        return cmath.exp(cmath.log(self.c) / self.r)

    @property
    def size(self) -> int:
        return self.r * self.m

    def matrix(self, qp: QParams) -> LaurentMatrix:
        return irreducible_matrix(self.r, self.d, self.c, qp, self.m)

    def pure_block(self, qp: QParams) -> PureBlock:
        return PureBlock.from_irreducible(self.r, self.d, self.c, qp, self.m)

    @classmethod
    def from_block(cls, block: PureBlock) -> "IrreducibleObject":
        if block.irreducible is not None:
            return cls(*block.irreducible)
        if block.is_integral and block.size == 1:
            return cls(1, int(block.slope), complex(block.constant[0, 0]), 1)
        raise Unsupported("Diagonal block is not of the form E(r, d, c) (x) U_m")

    def to_json(self) -> Dict:
        return {"r": self.r, "d": self.d, "c": [self.c.real, self.c.imag], "m": self.m}


@dataclass(frozen=True)
class ConjugatorPair:
    """G and F in the ramified variable z_r with explicit inverses"""

    G: LaurentMatrix
    F: LaurentMatrix
    G_inv: LaurentMatrix
    F_inv: LaurentMatrix
    qp_r: QParams
    residuals: Tuple[float, float] = (0.0, 0.0)


def conjugators(obj: IrreducibleObject, qp: QParams, check: bool = True) -> ConjugatorPair:
    """G[E] = a z_r^d T_r and F = Z_r G with F[E] = a z_r^d D_r, over the base q_r.

    G = diag(g_j), g_j = 1 / (q_r^(d j(j-1)/2) a^j z_r^(j d)).
    """
    r, d, a = obj.r, obj.d, obj.a
    qp_r = qp.at_root(r)
    exponents = [-j * d for j in range(r)]
    lo, hi = min(exponents), max(exponents)
    stack = np.zeros((hi - lo + 1, r, r), dtype=complex)
    stack_inv = np.zeros((hi - lo + 1, r, r), dtype=complex)
    for j in range(r):
        weight = qp_r.q_power(Fraction(d * j * (j - 1), 2)) * a ** j
        stack[-j * d - lo, j, j] = 1 / weight
    for j in range(r):
        weight = qp_r.q_power(Fraction(d * j * (j - 1), 2)) * a ** j
        stack_inv[j * d + hi, j, j] = weight
    G = LaurentMatrix(lo, stack)
    G_inv = LaurentMatrix(-hi, stack_inv)
    Z = Z_matrix(r)
    F = LaurentMatrix.constant(Z) @ G
    F_inv = G_inv @ LaurentMatrix.constant(np.linalg.inv(Z))

    residuals = (0.0, 0.0)
    if check:
        ramified = irreducible_matrix(r, d, obj.c, qp).ramify(r)
        target_T = LaurentMatrix.monomial(a * T_matrix(r), d)
        target_D = LaurentMatrix.monomial(a * D_matrix(r), d)
        _, residual_G = is_gauge_between(G, ramified, target_T, qp_r)
        _, residual_F = is_gauge_between(F, ramified, target_D, qp_r)
        residuals = (residual_G, residual_F)
        if max(residuals) > CONJUGATOR_TOL:
            logger.warning(f"Conjugator residuals {residuals} for E({r}, {d}, {obj.c})")
    return ConjugatorPair(G, F, G_inv, F_inv, qp_r, residuals)


def unipotent_power(m: int, lam: complex) -> np.ndarray:
    """U_m^lambda = exp(lambda log U_m), a polynomial in lambda"""
    if m == 1:
        return np.ones((1, 1), dtype=complex)
    log_u = log_unipotent(LaurentMatrix.constant(unipotent_jordan(m)))
    return exp_nilpotent(log_u.scale(lam)).coefficient(0)


@dataclass(frozen=True)
class FormalElement:
    """phi <-> (lambda, t = h(1/r), k1, k2), gamma = gamma_1^k1 gamma_2^k2"""

    lam: complex = 0j
    t: complex = 1 + 0j
    k1: int = 0
    k2: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        object.__setattr__(self, "t", complex(self.t))
        if self.t == 0:
            raise ValidationError("t = h(1/r) must be nonzero")

    @classmethod
    def identity(cls) -> "FormalElement":
        return cls()

    def to_json(self) -> Dict:
        return {
            "lambda": [self.lam.real, self.lam.imag],
            "t": [self.t.real, self.t.imag],
            "k1": self.k1,
            "k2": self.k2,
        }

    @classmethod
    def from_json(cls, data: Dict) -> "FormalElement":
        def as_complex(value, name):
            if isinstance(value, (int, float)):
                return complex(value)
            is_valid, error = Validator.validate_complex_pair(value, name)
            if not is_valid:
                raise ValidationError(error)
            return complex(*value)

        return cls(
            as_complex(data.get("lambda", 0), "lambda"),
            as_complex(data.get("t", 1), "t"),
            int(data.get("k1", 0)),
            int(data.get("k2", 0)),
        )


def _session_index(obj: IrreducibleObject, qp: QParams) -> int:
    if qp.r % obj.r != 0:
        raise ValidationError(f"Session ramification {qp.r} is not a multiple of r = {obj.r}")
    return qp.r


def evaluate_element(phi: FormalElement, obj: IrreducibleObject, qp: QParams) -> np.ndarray:
    """phi(E (x) U_m) = [h(d/r) gamma(a) G0^(-1) T^k1 D^(k2 d) G0] (x) U_m^lambda.

    h(d/r) = t^(d R / r) for the session index R, and G0 = G(z_{0,r}).
    """
    R = _session_index(obj, qp)
    r, d = obj.r, obj.d
    scalar = phi.t ** (d * R // r) * gamma_power(obj.a, phi.k1, phi.k2, qp)
    if r == 1:
        core = np.array([[scalar]])
    else:
        pair = conjugators(obj, qp, check=False)
        z0r = qp.z0_root(r)
        G0, G0_inv = pair.G.evaluate(z0r), pair.G_inv.evaluate(z0r)
        mp = np.linalg.matrix_power
        core = scalar * G0_inv @ mp(T_matrix(r), phi.k1) @ mp(D_matrix(r), phi.k2 * d) @ G0
    return np.kron(core, unipotent_power(obj.m, phi.lam))


def evaluate_on_system(phi: FormalElement, A: BlockSystem, qp: QParams) -> List[np.ndarray]:
    """phi on every diagonal block of a system built from E(r_i, d_i, c_i) (x) U_{m_i}"""
    return [evaluate_element(phi, IrreducibleObject.from_block(block), qp) for block in A.diag]


def multiply(phi: FormalElement, phi2: FormalElement, r: int) -> FormalElement:
    """(lambda + lambda', t t' zeta_r^(-k2 k1'), k1 + k1', k2 + k2')"""
    twist = QParams.zeta(r) ** (-phi.k2 * phi2.k1)
    return FormalElement(
        phi.lam + phi2.lam, phi.t * phi2.t * twist, phi.k1 + phi2.k1, phi.k2 + phi2.k2
    )


def eta(gamma: Tuple[int, int], gamma2: Tuple[int, int], qp: QParams, r: int) -> complex:
    """eta(gamma, gamma') = gamma'(gamma(q^(-1/r)))"""
    value = gamma_power(qp.q_power(Fraction(-1, r)), gamma[0], gamma[1], qp)
    return gamma_power(value, gamma2[0], gamma2[1], qp)


def epsilon(gamma: Tuple[int, int], gamma2: Tuple[int, int], qp: QParams, r: int,
            n: int = 1) -> complex:
    """epsilon(gamma, gamma') evaluated at n/r, the n-th power of eta"""
    return eta(gamma, gamma2, qp, r) ** n


@dataclass(frozen=True)
class WildGroupElement:
    """(x mod 1, k1, k2)"""

    x: Fraction = Fraction(0)
    k1: int = 0
    k2: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", Fraction(self.x) % 1)

    def inverse(self, r: int) -> "WildGroupElement":
        return WildGroupElement(-self.x - Fraction(self.k1 * self.k2, r), -self.k1, -self.k2)

    def to_json(self) -> Dict:
        return {"x": str(self.x), "k1": self.k1, "k2": self.k2}

    @classmethod
    def from_json(cls, data: Dict) -> "WildGroupElement":
        try:
            return cls(Fraction(str(data.get("x", 0))), int(data.get("k1", 0)), int(data.get("k2", 0)))
        except (TypeError, ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"Malformed wild group element: {e}")


def wild_multiply(g: WildGroupElement, g2: WildGroupElement, r: int) -> WildGroupElement:
    """(x + y - k2 l1 / r, k1 + l1, k2 + l2)"""
    return WildGroupElement(g.x + g2.x - Fraction(g.k2 * g2.k1, r), g.k1 + g2.k1, g.k2 + g2.k2)


@dataclass(frozen=True)
class PsiSymbol:
    """Psi^(0) (kind 'tau') or coefficient * Psi_l^(delta, beta) (kind 'graded')"""

    kind: str = "tau"
    delta: int = 0
    beta: Optional[EllipticPoint] = None
    l: int = 0
    coefficient: complex = 1 + 0j

    def __post_init__(self):
        if self.kind not in ("tau", "graded"):
            raise ValidationError(f"Unknown symbol kind '{self.kind}'")
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        if self.kind == "graded":
            if self.delta < 1 or self.beta is None:
                raise ValidationError("Graded symbols need delta >= 1 and beta")
            object.__setattr__(self, "l", self.l % self.delta)

    def scaled(self, factor: complex) -> "PsiSymbol":
        return PsiSymbol(self.kind, self.delta, self.beta, self.l, self.coefficient * factor)

    def same_index(self, other: "PsiSymbol") -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "tau":
            return True
        return self.delta == other.delta and self.l == other.l and self.beta.same_as(other.beta)

    def to_json(self) -> Dict:
        data = {"kind": self.kind, "coefficient": [self.coefficient.real, self.coefficient.imag]}
        if self.kind == "graded":
            data.update({"delta": self.delta, "beta": self.beta.to_json(), "l": self.l})
        return data

    @classmethod
    def from_json(cls, data: Dict, qp: QParams) -> "PsiSymbol":
        coefficient = complex(*data.get("coefficient", [1.0, 0.0]))
        if data.get("kind", "graded") == "tau":
            return cls("tau", coefficient=coefficient)
        beta = data.get("beta")
        if isinstance(beta, list):
            beta = {"rep": beta, "base": "qr"}
        return cls("graded", int(data["delta"]), EllipticPoint.from_json(beta, qp),
                   int(data.get("l", 0)), coefficient)


def _gamma2_step(sym: PsiSymbol, r: int, qp: QParams) -> PsiSymbol:
    grid = root_grid(sym.delta, sym.beta, qp)
    factor = character_gamma(2, 1 / grid.point(sym.l), qp) ** sym.delta
    shift = shift_ell(sym.delta, sym.beta, r)
    beta = sym.beta.times(QParams.zeta(r) ** (-sym.delta))
    return PsiSymbol("graded", sym.delta, beta, sym.l + shift, sym.coefficient * factor)


def _gamma2_inverse_step(sym: PsiSymbol, r: int, qp: QParams) -> PsiSymbol:
    beta = sym.beta.times(QParams.zeta(r) ** sym.delta)
    shift = shift_ell(sym.delta, beta, r)
    l = (sym.l - shift) % sym.delta
    grid = root_grid(sym.delta, beta, qp)
    factor = character_gamma(2, 1 / grid.point(l), qp) ** sym.delta
    return PsiSymbol("graded", sym.delta, beta, l, sym.coefficient / factor)


GeneratorTag = Union[str, Tuple[str, complex], WildGroupElement]


def act_on_psi(g: GeneratorTag, sym: PsiSymbol, r: int, qp: QParams) -> PsiSymbol:
    """Right action of the wild group on Psi symbols.

    ('h', t) multiplies by t^delta, 'gamma1' by gamma_1(beta), 'gamma2' by
    gamma_2(c_l^(-1))^delta while shifting l by ell(delta, beta) and beta to
    zeta_r^(-delta) beta. A WildGroupElement (x, k1, k2) acts as x, then
    gamma1^k1, then gamma2^k2. Psi^(0) is fixed.
    """
    if sym.kind == "tau":
        return sym
    if isinstance(g, tuple) and g[0] == "h":
        return sym.scaled(complex(g[1]) ** sym.delta)
    if g == "gamma1":
        return sym.scaled(character_gamma(1, sym.beta.rep, qp))
    if g == "gamma2":
        return _gamma2_step(sym, r, qp)
    if isinstance(g, WildGroupElement):
        result = sym.scaled(cmath.exp(2j * math.pi * sym.delta * float(g.x)))
        gamma1 = character_gamma(1, result.beta.rep, qp)
        result = result.scaled(gamma1 ** g.k1)
        for _ in range(abs(g.k2)):
            result = _gamma2_step(result, r, qp) if g.k2 > 0 else _gamma2_inverse_step(result, r, qp)
        return result
    raise ValidationError(f"Unknown group element {g!r}")


def twist_by_rank_one(obj: IrreducibleObject, d1: int, c1: complex,
                      qp: QParams) -> Tuple[IrreducibleObject, LaurentMatrix]:
    """E(1, d1, c1) (x) E(r, d, c) ~ E(r, d + r d1, c1^r c) via P = diag(c1^j q^(d1 j(j-1)/2) z^(j d1))"""
    r = obj.r
    twisted = IrreducibleObject(r, obj.d + r * d1, complex(c1) ** r * obj.c, obj.m)
    exponents = [j * d1 for j in range(r)]
    lo, hi = min(exponents), max(exponents)
    stack = np.zeros((hi - lo + 1, r, r), dtype=complex)
    for j in range(r):
        stack[j * d1 - lo, j, j] = complex(c1) ** j * qp.q_power(Fraction(d1 * j * (j - 1), 2))
    P = LaurentMatrix(lo, stack)
    if obj.m > 1:
        P = P.kron_right(np.eye(obj.m))
    return twisted, P


def tensor_compatibility(phi: FormalElement, obj: IrreducibleObject, d1: int, c1: complex,
                         qp: QParams) -> float:
    """|phi(E1) (x) phi(E) - P0^(-1) phi(E') P0| for E' the rank-one twist of E"""
    rank_one = IrreducibleObject(1, d1, c1)
    twisted, P = twist_by_rank_one(obj, d1, c1, qp)
    left = np.kron(evaluate_element(phi, rank_one, qp), evaluate_element(phi, obj, qp))
    P0 = P.evaluate(qp.z0)
    right = np.linalg.solve(P0, evaluate_element(phi, twisted, qp) @ P0)
    return float(np.abs(left - right).max())


def gamma2_bar(c: complex, qp: QParams) -> complex:
    """gamma_2(c^(-1)) theta_{q_r}(z_{0,r} / (zeta_r c)) / theta_{q_r}(z_{0,r} / c)"""
    qp_r = qp.at_root(qp.r)
    z0r = qp.z0_root(qp.r)
    zeta = qp.zeta_r
    return character_gamma(2, 1 / c, qp) * theta(qp_r, z0r / (zeta * c)) / theta(qp_r, z0r / c)


def act_unramified_check(kind: str, blocks: Sequence, A: BlockSystem, qp: QParams,
                         t: complex = 1.0) -> float:
    """Max relative gap between phi(A)^(-1) N phi(A) and the predicted action on the alien blocks of A.

    blocks are the alien blocks of A at every class, as alien.alien_all returns them.
    kind "h" predicts t^delta N, "gamma1" predicts gamma_1(beta) N and "gamma2"
    predicts gamma2_bar(alpha)^delta N at the class zeta_r alpha.
    """
    if kind == "h":
        phi = FormalElement(0, t, 0, 0)
    elif kind == "gamma1":
        phi = FormalElement(0, 1, 1, 0)
    elif kind == "gamma2":
        phi = FormalElement(0, 1, 0, 1)
    else:
        raise ValidationError(f"Unknown generator '{kind}'")

    values = evaluate_on_system(phi, A, qp)
    worst = 0.0
    for block in blocks:
        i, j = block.block
        moved = np.linalg.solve(values[i], block.N @ values[j])
        if kind == "h":
            predicted = t ** block.delta * block.N
        elif kind == "gamma1":
            predicted = character_gamma(1, block.beta.rep, qp) * block.N
        else:
            target_alpha = block.alpha.times(qp.zeta_r)
            partner = [
                other for other in blocks
                if other.block == block.block and other.alpha.same_as(target_alpha)
            ]
            target = partner[0].N if partner else np.zeros_like(block.N)
            predicted = gamma2_bar(block.c, qp) ** block.delta * target
        scale = max(np.abs(predicted).max(), np.abs(moved).max(), 1e-300)
        worst = max(worst, float(np.abs(moved - predicted).max() / scale))
    logger.info(f"Galois action check for {kind}: max relative gap {worst:.3e} over {len(blocks)} blocks")
    return worst
