"""
Verification harness behind `qdx verify`.

Each suite measures the identities its module promises and records one
CheckResult per identity: the worst deviation seen, the threshold it is held to
and a PASS / FAIL / SKIP status. Checks that only make sense for a good value of
q are skipped, not failed, when q is flagged bad.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np

from alien import (
    BASIS_CONDITION_LIMIT,
    alien_all,
    alien_dilated,
    alien_two_by_two,
    class_constraint_gap,
    independence_matrix,
    residue_oracle_gap,
    shift_in_l_check,
    shift_in_m_check,
)
from elliptic import canonicalize
from formal import (
    FormalElement,
    IrreducibleObject,
    PsiSymbol,
    WildGroupElement,
    act_on_psi,
    act_unramified_check,
    conjugators,
    eta,
    evaluate_element,
    formulaire_check,
    multiply,
    tensor_compatibility,
    wild_multiply,
)
from numkernel import LaurentMatrix, LaurentSeries, QParams
from qdmod import BlockSystem, NewtonData, PureBlock
from ramify import (
    RamifiedSystem,
    descend_system,
    embed_in_restriction,
    hilbert90_descend,
    mu_r_project,
    ram,
    twist_conjugation_check,
)
from stokes import (
    StokesCocycle,
    check_direction,
    gauge_residual_at,
    multi_slope_sum,
    sample_points,
)
from theta import (
    find_bad_q,
    hex_series,
    is_good_value,
    theta,
    theta_power_coeff,
    theta_square_split,
    triple_product,
)
from utils import RunConfig
from validation import VERIFY_SUITES, ForbiddenDirection, QdxError, UnknownSuite, Validator

logger = logging.getLogger(__name__)

PASS = "PASS"
FAIL = "FAIL"
SKIP = "SKIP"

SUITE_ORDER = tuple(name for name in VERIFY_SUITES if name != "all")
THETA_POINTS = 50
STOKES_SYSTEMS = 20
ORACLE_INSTANCES = 20
SYMBOL_DRAWS = 200
GOOD_VALUE_DELTA = 3
GOOD_VALUE_BOUND = 10
DIRECTION_GAP = 1e-2


@dataclass
class CheckResult:
    suite: str
    name: str
    deviation: Optional[float]
    threshold: float
    status: str
    detail: str = ""

    def to_json(self) -> Dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "deviation": self.deviation,
            "threshold": self.threshold,
            "status": self.status,
            "detail": self.detail,
        }

    @classmethod
    def from_json(cls, data: Dict) -> "CheckResult":
        return cls(data["suite"], data["name"], data.get("deviation"), float(data["threshold"]),
                   data["status"], data.get("detail", ""))


@dataclass
class VerificationReport:
    suite: str
    config: Dict
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.status != FAIL for check in self.checks)

    def counts(self) -> Dict[str, int]:
        counts = {PASS: 0, FAIL: 0, SKIP: 0}
        for check in self.checks:
            counts[check.status] += 1
        return counts

    def summary(self) -> str:
        counts = self.counts()
        failed = ", ".join(f"{c.suite}.{c.name}" for c in self.checks if c.status == FAIL)
        text = f"verify {self.suite}: {counts[PASS]} passed, {counts[FAIL]} failed, {counts[SKIP]} skipped"
        return f"{text} ({failed})" if failed else text

    def to_json(self) -> Dict:
        ordered = sorted(self.checks, key=lambda c: (SUITE_ORDER.index(c.suite), c.name))
        return {
            "suite": self.suite,
            "config": self.config,
            "passed": self.passed,
            "counts": self.counts(),
            "checks": [check.to_json() for check in ordered],
        }

    @classmethod
    def from_json(cls, data: Dict) -> "VerificationReport":
        return cls(data["suite"], data.get("config", {}),
                   [CheckResult.from_json(item) for item in data.get("checks", [])])


def random_unit(rng: np.random.Generator) -> complex:
    return cmath.exp(2j * math.pi * rng.random())


def random_annulus_point(rng: np.random.Generator, qp: QParams) -> complex:
    """Point of the fundamental annulus 1 <= |z| < |q|"""
    return math.exp(rng.random() * math.log(abs(qp.q))) * random_unit(rng)


def random_constant_block(rng: np.random.Generator, size: int) -> np.ndarray:
    """Diagonalizable matrix with well separated eigenvalues of modulus near 1"""
    angles = (np.arange(size) + 0.5 * rng.random(size)) * 2 * math.pi / size
    eigenvalues = np.exp(rng.uniform(-0.4, 0.4, size) + 1j * angles)
    basis = np.eye(size) + 0.3 * (rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size)))
    return basis @ np.diag(eigenvalues) @ np.linalg.inv(basis)


def random_laurent(rng: np.random.Generator, rows: int, cols: int, spread: int = 2) -> LaurentMatrix:
    shape = (2 * spread + 1, rows, cols)
    return LaurentMatrix(-spread, rng.normal(size=shape) + 1j * rng.normal(size=shape))


def random_two_slope_system(rng: np.random.Generator, delta: int, size: int = 1,
                            spread: int = 2) -> BlockSystem:
    """[[A_1, U], [0, z^delta A_2]] with constant A_i and a Laurent polynomial U"""
    newton = NewtonData((Fraction(0), Fraction(delta)), (size, size))
    diag = [PureBlock.integer(0, random_constant_block(rng, size)),
            PureBlock.integer(delta, random_constant_block(rng, size))]
    return BlockSystem(newton, diag, {(0, 1): random_laurent(rng, size, size, spread)})


def ramified_two_block_system(rng: np.random.Generator, qp: QParams, r: int,
                              spread: int = 1) -> BlockSystem:
    """E(1, 0, c1) above E(r, 1, c2), joined by a Laurent polynomial row"""
    first = PureBlock.from_irreducible(1, 0, random_annulus_point(rng, qp), qp)
    second = PureBlock.from_irreducible(r, 1, random_annulus_point(rng, qp), qp)
    newton = NewtonData((Fraction(0), Fraction(1, r)), (1, r))
    return BlockSystem(newton, [first, second], {(0, 1): random_laurent(rng, 1, r, spread)})


def allowed_direction(rng: np.random.Generator, A: BlockSystem, qp: QParams,
                      attempts: int = 50, gap: float = DIRECTION_GAP) -> complex:
    """Random direction whose relative distance to every resonance is at least gap"""
    for _ in range(attempts):
        c = random_annulus_point(rng, qp)
        try:
            check_direction(A.graded(), c, qp, tol=gap)
            return c
        except ForbiddenDirection:
            continue
    raise ForbiddenDirection("No allowed direction found among random draws")


class VerificationHarness:
    """Runs the verification suites for one run configuration"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.qp = config.qparams()
        self._good_report: Optional[Dict] = None

    def run(self, suite: str) -> VerificationReport:
        is_valid, error = Validator.validate_suite(suite)
        if not is_valid:
            raise UnknownSuite(error)
        report = VerificationReport(suite, self.config.to_json())
        for name in (SUITE_ORDER if suite == "all" else (suite,)):
            logger.info(f"Running verification suite '{name}'")
            getattr(self, f"_suite_{name}")(report)
        logger.info(report.summary())
        return report

    def _rng(self, suite: str) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, SUITE_ORDER.index(suite)])

    def _check(self, report: VerificationReport, suite: str, name: str, key: str,
               measure: Callable[[], float], detail: str = ""):
        threshold = self.config.tolerance(key)
        try:
            deviation = float(measure())
        except (QdxError, np.linalg.LinAlgError) as e:
            logger.error(f"Check {suite}.{name} raised {type(e).__name__}: {e}")
            report.checks.append(CheckResult(suite, name, None, threshold, FAIL, f"{type(e).__name__}: {e}"))
            return
        status = PASS if deviation <= threshold else FAIL
        if status == FAIL:
            logger.warning(f"Check {suite}.{name}: deviation {deviation:.3e} above {threshold:.1e}")
        report.checks.append(CheckResult(suite, name, deviation, threshold, status, detail))

    def _skip(self, report: VerificationReport, suite: str, name: str, key: str, reason: str):
        report.checks.append(CheckResult(suite, name, None, self.config.tolerance(key), SKIP, reason))

    @property
    def good_value(self) -> Dict:
        if self._good_report is None:
            self._good_report = is_good_value(self.qp, GOOD_VALUE_DELTA, GOOD_VALUE_BOUND)
        return self._good_report

    @property
    def q_is_good(self) -> bool:
        return self.good_value["verdict"].startswith("good")

    # theta

    def _suite_theta(self, report: VerificationReport):
        qp, rng = self.qp, self._rng("theta")
        mass_qp = QParams.from_q(abs(qp.q))
        points = [random_annulus_point(rng, qp) for _ in range(THETA_POINTS)]

        def mass(z: complex) -> float:
            return abs(theta(mass_qp, abs(z)))

        def shift():
            return max(abs(theta(qp, qp.q * z) - z * theta(qp, z)) / mass(qp.q * z) for z in points)

        def inversion():
            return max(abs(theta(qp, 1 / z) - z * theta(qp, z)) / (abs(z) * mass(z)) for z in points)

        def product():
            return max(abs(triple_product(qp, z) - theta(qp, z)) / mass(z) for z in points)

        def square_split():
            return max(abs(theta(qp, z) ** 2 - theta_square_split(qp, z)) / mass(z) ** 2 for z in points[:10])

        def hex_identity():
            samples = np.linspace(0.05, 0.6, 12)
            return max(abs(hex_series(-x) - (2 * hex_series(x ** 4) - hex_series(x))) / max(1.0, hex_series(x))
                       for x in samples)

        bad_q = {}

        def bad_q_zero():
            q_star = find_bad_q()
            bad_q["q"] = q_star
            return abs(theta_power_coeff(QParams.from_q(q_star), 3, 0))

        self._check(report, "theta", "functional_equation", "theta", shift)
        self._check(report, "theta", "inversion_symmetry", "theta", inversion)
        self._check(report, "theta", "triple_product", "theta", product)
        self._check(report, "theta", "square_split", "theta", square_split)
        self._check(report, "theta", "hex_parity_identity", "hex", hex_identity)
        self._check(report, "theta", "bad_q_zero", "bad_q", bad_q_zero)
        if "q" in bad_q:
            report.checks[-1].detail = f"q* = {bad_q['q']!r}"

        good = self.good_value
        if self.q_is_good:
            report.checks.append(CheckResult(
                "theta", "good_value", good["min_rel"], self.config.tolerance("theta"), PASS,
                f"min relative |t_n^(delta)| {good['min_rel']:.3e} at {good['argmin']}"
            ))

            def square_coefficients():
                q2 = QParams(2 * qp.tau, 1, qp.z0)
                worst = 0.0
                for n in range(-10, 11):
                    t = theta_power_coeff(qp, 2, n)
                    closed = qp.q_power(Fraction(-n * (n + 1), 2)) * theta(q2, qp.q_power(n + 1))
                    worst = max(worst, abs(t - closed) / abs(t))
                return worst

            self._check(report, "theta", "square_coefficients", "theta", square_coefficients)
        else:
            reason = f"q flagged bad: t_{good['argmin'][1]}^({good['argmin'][0]}) nearly vanishes"
            self._skip(report, "theta", "good_value", "theta", reason)
            self._skip(report, "theta", "square_coefficients", "theta", reason)

    # stokes

    def _suite_stokes(self, report: VerificationReport):
        qp, rng = self.qp, self._rng("stokes")
        worst = {"summation_gauge": 0.0, "direction_invariance": 0.0, "cocycle_relation": 0.0,
                 "cocycle_automorphism": 0.0, "cocycle_off_diagonal": 0.0, "solver_agreement": 0.0}
        failures: List[str] = []
        for index in range(STOKES_SYSTEMS):
            delta = 1 + index % 4
            A = random_two_slope_system(rng, delta, size=1 + index % 2)
            A0 = A.graded()
            try:
                c, d, e = (allowed_direction(rng, A, qp) for _ in range(3))
                F_c = multi_slope_sum(A, c, qp)
                F_qc = multi_slope_sum(A, qp.q * c, qp)
                F_d = multi_slope_sum(A, d, qp)
                F_e = multi_slope_sum(A, e, qp)
                F_linear = multi_slope_sum(A, c, qp, linear=True)
            except QdxError as error:
                failures.append(f"system {index}: {type(error).__name__}: {error}")
                continue
            points = sample_points(qp, [c, d, e], seed=self.config.seed + index)
            cd, de, ce = StokesCocycle(F_c, F_d), StokesCocycle(F_d, F_e), StokesCocycle(F_c, F_e)

            def relative(x: np.ndarray, y: np.ndarray) -> float:
                return float(np.abs(x - y).max() / max(1.0, np.abs(y).max()))

            worst["summation_gauge"] = max(worst["summation_gauge"],
                                           gauge_residual_at(F_c.evaluate, A0, A, qp, points))
            for z in points:
                here = F_c.evaluate(z)
                worst["direction_invariance"] = max(worst["direction_invariance"],
                                                    relative(F_qc.evaluate(z), here))
                worst["solver_agreement"] = max(worst["solver_agreement"], relative(F_linear.evaluate(z), here))
                worst["cocycle_relation"] = max(worst["cocycle_relation"],
                                                relative(cd.evaluate(z) @ de.evaluate(z), ce.evaluate(z)))
            worst["cocycle_automorphism"] = max(worst["cocycle_automorphism"], cd.automorphism_residual(A0, points))
            worst["cocycle_off_diagonal"] = max(worst["cocycle_off_diagonal"], cd.off_diagonal_residual(A0, points))

        detail = "; ".join(failures)
        for name, value in worst.items():
            if failures:
                report.checks.append(CheckResult("stokes", name, None, self.config.tolerance("stokes"), FAIL, detail))
            else:
                self._check(report, "stokes", name, "stokes", lambda value=value: value,
                            f"{STOKES_SYSTEMS} random two-slope systems")

    # alien

    def _suite_alien(self, report: VerificationReport):
        qp, rng = self.qp, self._rng("alien")
        instances = []
        for index in range(ORACLE_INSTANCES):
            a = math.exp(rng.uniform(-0.7, 0.7)) * random_unit(rng)
            delta = 1 + index % 3
            u = LaurentSeries({p: complex(*rng.normal(size=2)) for p in range(-1, 2)})
            instances.append((a, delta, u))

        self._check(report, "alien", "residue_oracle", "oracle",
                    lambda: max(residue_oracle_gap(a, delta, u, qp) for a, delta, u in instances),
                    f"{ORACLE_INSTANCES} random two by two systems")
        self._check(report, "alien", "class_constraint", "constraint",
                    lambda: max(class_constraint_gap(block) for a, delta, u in instances
                                for block in alien_two_by_two(a, delta, u, qp)))

        def dilation():
            worst = 0.0
            for a, delta, u in instances[:6]:
                for lam in (QParams.zeta(delta), qp.q_root(delta), 0.8 * random_unit(rng)):
                    worst = max(worst, alien_dilated(a, delta, u, qp, lam))
            return worst

        self._check(report, "alien", "dilation_covariance", "alien", dilation)

        a = 0.7 * cmath.exp(0.3j)
        self._check(report, "alien", "psi_shift_l", "alien",
                    lambda: max(shift_in_l_check(delta, a, qp) for delta in range(1, 5)))
        self._check(report, "alien", "psi_shift_m", "alien",
                    lambda: max(shift_in_m_check(delta, a, qp) for delta in range(1, 5)))

        if self.q_is_good:
            def basis():
                worst = 0.0
                for delta in range(1, 6):
                    _, condition, gap = independence_matrix(delta, a, qp)
                    if condition > BASIS_CONDITION_LIMIT:
                        return math.inf
                    worst = max(worst, gap)
                return worst

            self._check(report, "alien", "canonical_basis", "alien", basis, "delta <= 5")
        else:
            self._skip(report, "alien", "canonical_basis", "alien", "q flagged bad; no canonical basis")

    # formal

    def _suite_formal(self, report: VerificationReport):
        qp, rng = self.qp, self._rng("formal")
        self._check(report, "formal", "formulaire", "formal",
                    lambda: max(formulaire_check(r)["max_deviation"] for r in range(1, 7)), "r <= 6")

        objects = []
        for r in range(1, 5):
            for d in (1, -1, r + 1):
                if math.gcd(d, r) == 1:
                    objects.append(IrreducibleObject(r, d, random_annulus_point(rng, qp), 1 + len(objects) % 2))

        def session(obj: IrreducibleObject) -> QParams:
            return QParams(qp.tau, obj.r, qp.z0)

        def random_element() -> FormalElement:
            return FormalElement(complex(*rng.normal(size=2)), math.exp(rng.uniform(-0.5, 0.5)) * random_unit(rng),
                                 int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))

        self._check(report, "formal", "conjugators", "group",
                    lambda: max(max(conjugators(obj, session(obj)).residuals) for obj in objects))

        def multiplicativity():
            worst = 0.0
            for obj in objects:
                for _ in range(3):
                    phi, phi2 = random_element(), random_element()
                    left = evaluate_element(phi, obj, session(obj)) @ evaluate_element(phi2, obj, session(obj))
                    right = evaluate_element(multiply(phi, phi2, obj.r), obj, session(obj))
                    worst = max(worst, np.abs(left - right).max() / max(1.0, np.abs(right).max()))
            return worst

        self._check(report, "formal", "multiplicativity", "group", multiplicativity)

        def tensor():
            worst = 0.0
            for obj in objects:
                value = tensor_compatibility(random_element(), obj, 1, random_annulus_point(rng, qp), session(obj))
                worst = max(worst, value)
            return worst

        self._check(report, "formal", "tensor_compatibility", "group", tensor)

        def eta_bilinear():
            worst = 0.0
            for r in range(1, 5):
                for _ in range(10):
                    g1, g2, g3 = (tuple(int(v) for v in rng.integers(-2, 3, 2)) for _ in range(3))
                    summed = (g1[0] + g2[0], g1[1] + g2[1])
                    left = eta(summed, g3, qp, r)
                    right = eta(g1, g3, qp, r) * eta(g2, g3, qp, r)
                    worst = max(worst, abs(left - right) / abs(right))
            return worst

        self._check(report, "formal", "eta_bilinearity", "formal", eta_bilinear)

        def random_wild() -> WildGroupElement:
            return WildGroupElement(Fraction(int(rng.integers(0, 12)), 12), int(rng.integers(-2, 3)),
                                    int(rng.integers(-2, 3)))

        def associativity():
            for r in range(1, 5):
                for _ in range(50):
                    g, h, k = random_wild(), random_wild(), random_wild()
                    if wild_multiply(wild_multiply(g, h, r), k, r) != wild_multiply(g, wild_multiply(h, k, r), r):
                        return 1.0
            return 0.0

        def witness():
            g, h = WildGroupElement(0, 0, 1), WildGroupElement(0, 1, 0)
            return 0.0 if wild_multiply(g, h, 2) != wild_multiply(h, g, 2) else 1.0

        self._check(report, "formal", "wild_associativity", "formal", associativity)
        self._check(report, "formal", "wild_noncommutative", "formal", witness)

        def symbol_action():
            worst = 0.0
            for _ in range(SYMBOL_DRAWS):
                r = int(rng.integers(1, 4))
                session_qp = QParams(qp.tau, r, qp.z0)
                delta = int(rng.integers(1, 4))
                beta = canonicalize(random_annulus_point(rng, qp), session_qp, "qr")
                sym = PsiSymbol("graded", delta, beta, int(rng.integers(0, delta)))
                g, h = random_wild(), random_wild()
                stepwise = act_on_psi(h, act_on_psi(g, sym, r, session_qp), r, session_qp)
                composite = act_on_psi(wild_multiply(g, h, r), sym, r, session_qp)
                if not stepwise.same_index(composite):
                    return math.inf
                gap = abs(stepwise.coefficient - composite.coefficient) / abs(composite.coefficient)
                worst = max(worst, gap)
            return worst

        self._check(report, "formal", "symbol_action", "group", symbol_action, f"{SYMBOL_DRAWS} draws")

        def galois_action():
            worst = 0.0
            for index in range(2):
                A = random_two_slope_system(rng, 1 + index, size=1)
                blocks = alien_all(A, qp)
                for kind in ("h", "gamma1", "gamma2"):
                    worst = max(worst, act_unramified_check(kind, blocks, A, qp, t=1.3 * random_unit(rng)))
            for r in (2, 3):
                session_qp = QParams(qp.tau, r, qp.z0)
                A = ramified_two_block_system(rng, qp, r)
                blocks = alien_all(A, session_qp)
                for kind in ("h", "gamma1", "gamma2"):
                    gap = act_unramified_check(kind, blocks, A, session_qp, t=1.3 * random_unit(rng))
                    worst = max(worst, gap)
            return worst

        self._check(report, "formal", "galois_action", "action", galois_action)

    # ramify

    def _suite_ramify(self, report: VerificationReport):
        qp, rng = self.qp, self._rng("ramify")
        systems = []
        for r in (2, 3):
            session_qp = QParams(qp.tau, r, qp.z0)
            systems.append((ramified_two_block_system(rng, qp, r), session_qp))

        self._check(report, "ramify", "twist_conjugation", "conjugation",
                    lambda: max(twist_conjugation_check(A, session_qp) for A, session_qp in systems))
        self._check(report, "ramify", "descent_round_trip", "ramify",
                    lambda: max(descend_system(A, session_qp).residual for A, session_qp in systems))

        def faithful():
            worst = 0.0
            for r in (2, 3, 4):
                A = random_two_slope_system(rng, 1, size=2).matrix()
                worst = max(worst, (mu_r_project(ram(A, r, qp).A_prime, r) - A).max_abs())
            return worst

        self._check(report, "ramify", "ramification_faithful", "conjugation", faithful)

        def trivial_descent():
            A = random_two_slope_system(rng, 2, size=1)
            ramified = ram(A, 2, qp)
            C, _ = hilbert90_descend(ramified, LaurentMatrix.identity(A.dimension))
            return (C - A.matrix()).max_abs() / A.matrix().max_abs()

        self._check(report, "ramify", "invariant_descent", "ramify", trivial_descent)

        def restriction():
            worst = 0.0
            q_r = qp.q_root(2)
            for n in (1, 2):
                B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
                C = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
                A_prime = LaurentMatrix(0, np.stack([B, C]))
                D, _ = embed_in_restriction(RamifiedSystem(2, A_prime, qp))
                expected = LaurentMatrix(0, np.stack([
                    np.block([[B, C], [np.zeros((n, n)), q_r * B]]),
                    np.block([[np.zeros((n, n)), np.zeros((n, n))], [q_r * C, np.zeros((n, n))]]),
                ]))
                worst = max(worst, (D - expected).max_abs())
            return worst

        self._check(report, "ramify", "restriction_closed_form", "conjugation", restriction)
