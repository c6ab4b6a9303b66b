"""
Main entry point for the qdx command-line tool.
"""
import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from typing import Any, Dict, List, Optional

import numpy as np

from alien import alien_all, alien_general
from elliptic import canonicalize
from formal import FormalElement, PsiSymbol, WildGroupElement, act_on_psi, evaluate_on_system, formulaire_check
from numkernel import QParams
from qdmod import BlockSystem, bg_normalize, newton_of_block, newton_polygon_operator
from ramify import descend_system, embed_in_restriction, ram, ramified_conjugation
from stokes import gauge_residual_at, multi_slope_sum, sample_points, stokes_cocycle
from theta import find_bad_q, hex_series, is_good_value, scan_hex_sign, theta_power_coeff
from utils import (
    APP_NAME,
    APP_VERSION,
    DEFAULT_LOG_FILE,
    DataManager,
    RunConfig,
    load_operator,
    load_run_config,
    load_system,
    setup_logging,
)
from validation import PIPELINE_STEPS, VERIFY_SUITES, QdxError, ValidationError, Validator
from verify import VerificationHarness

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2

DEFAULT_DIRECTION = "1.3,0.7"
DEFAULT_SECOND_DIRECTION = "1.7,-0.4"


def parse_complex(text: str, field_name: str = "value") -> complex:
    """'re,im' or a Python-style literal where i may stand for j ('0.22i', '-0.2206j', '2+1i')"""
    text = text.strip()
    try:
        if "," in text:
            re_part, im_part = text.split(",")
            return complex(float(re_part), float(im_part))
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ValidationError(f"Cannot read {field_name} from '{text}': use 're,im' or a literal like 0.5-0.2i")


def parse_json_argument(text: str, field_name: str) -> Dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{field_name} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ValidationError(f"{field_name} must be a JSON object")
    return data


def json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, np.ndarray):
        return [[[v.real, v.imag] for v in row] for row in np.atleast_2d(value)]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def encode_matrix(matrix: np.ndarray) -> List:
    return [[[complex(v).real, complex(v).imag] for v in row] for row in np.atleast_2d(matrix)]


class QdxApplication:
    """Main application class"""

    def __init__(self, argv: Optional[List[str]] = None):
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.parser = self.build_parser()
        self.config: Optional[RunConfig] = None

    # Parser

    @staticmethod
    def build_parser() -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", help="Settings JSON (defaults to $QDX_CONFIG, then data/settings.json)")
        common.add_argument("--tau", help="Period tau with q = exp(2i pi tau); Im tau < 0, e.g. --tau=-0.2206i")
        common.add_argument("--q", help="q itself; tau is taken from the principal logarithm")
        common.add_argument("--r", type=int, help="Ramification index of the session")
        common.add_argument("--z0", help="Base point as 're,im'")
        common.add_argument("--seed", type=int, help="Seed for randomized checks")
        common.add_argument("--log-file", default=DEFAULT_LOG_FILE)
        common.add_argument("--output", help="Also write the JSON result to this file")

        parser = argparse.ArgumentParser(prog=APP_NAME, description="Symbolic-numeric q-difference toolkit")
        parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
        commands = parser.add_subparsers(dest="command", required=True)

        good_q = commands.add_parser("good-q", parents=[common], help="Finite good-value certificate for q")
        good_q.add_argument("--delta-max", type=int, default=4)
        good_q.add_argument("--n-bound", type=int, default=20)

        bad_q = commands.add_parser("bad-q", parents=[common], help="Locate a real q* < -1 with t_0^(3)(q*) = 0")
        bad_q.add_argument("--step", type=float, default=0.01)
        bad_q.add_argument("--csv", help="Write the (x, f(x)) sign scan to this CSV file")

        newton = commands.add_parser("newton", parents=[common], help="Newton data of a system or operator")
        source = newton.add_mutually_exclusive_group(required=True)
        source.add_argument("--system")
        source.add_argument("--operator")

        for name, text in (("gr", "Graded system"), ("normalize", "Birkhoff-Guenther normal form")):
            sub = commands.add_parser(name, parents=[common], help=text)
            sub.add_argument("--system", required=True)

        summation = commands.add_parser("sum", parents=[common], help="Algebraic summation F_c")
        summation.add_argument("--system", required=True)
        summation.add_argument("--direction", default=DEFAULT_DIRECTION)
        summation.add_argument("--linear", action="store_true", help="Use the dense linear solver")

        cocycle = commands.add_parser("cocycle", parents=[common], help="Stokes cocycle F_c^(-1) F_d")
        cocycle.add_argument("--system", required=True)
        cocycle.add_argument("--c", default=DEFAULT_DIRECTION)
        cocycle.add_argument("--d", default=DEFAULT_SECOND_DIRECTION)

        alien = commands.add_parser("alien", parents=[common], help="q-alien derivatives")
        alien.add_argument("--system", required=True)
        which = alien.add_mutually_exclusive_group()
        which.add_argument("--all", action="store_true", default=True)
        which.add_argument("--alpha")

        act = commands.add_parser("act", parents=[common], help="Act on a Psi symbol")
        act.add_argument("--element", required=True, help='{"lambda":..,"t":[..],"k1":..,"k2":..}')
        act.add_argument("--symbol", required=True, help='{"delta":..,"beta":[..],"l":..}')

        commands.add_parser("formulaire", parents=[common], help="Matrix identities for D, T, Z (index from --r)")

        ramify = commands.add_parser("ramify", parents=[common], help="Ramification, descent, restriction")
        ramify.add_argument("--system", required=True)
        mode = ramify.add_mutually_exclusive_group()
        mode.add_argument("--descend", action="store_true")
        mode.add_argument("--embed", action="store_true")

        verify = commands.add_parser("verify", parents=[common], help="Run verification suites")
        verify.add_argument("suite", help=f"One of {', '.join(VERIFY_SUITES)}")

        pipeline = commands.add_parser("pipeline", parents=[common], help="Thread a system through steps")
        pipeline.add_argument("--system", required=True)
        pipeline.add_argument("--steps", default="", help=f"Comma list from {', '.join(PIPELINE_STEPS)}")
        pipeline.add_argument("--direction", default=DEFAULT_DIRECTION)
        pipeline.add_argument("--d", default=DEFAULT_SECOND_DIRECTION)
        pipeline.add_argument("--element", default="{}")
        return parser

    # Configuration

    def resolve_config(self, args: argparse.Namespace) -> RunConfig:
        config, error = load_run_config(args.config)
        if error and args.config:
            raise ValidationError(error)
        if error:
            logger.warning(f"Falling back to default settings: {error}")
        if args.tau and args.q:
            raise ValidationError("Give either --tau or --q, not both")
        if args.tau:
            config.tau = parse_complex(args.tau, "tau")
        if args.q:
            q = parse_complex(args.q, "q")
            if abs(q) <= 1:
                raise ValidationError(f"|q| must exceed 1 (got |q| = {abs(q):.6g})")
            config.tau = QParams.from_q(q).tau
        is_valid, error = Validator.validate_tau(config.tau)
        if not is_valid:
            raise ValidationError(f"{error}; q = exp(2i pi tau) needs Im tau < 0, "
                                  f"so use --tau={complex(config.tau.real, -config.tau.imag)}")
        if args.r is not None:
            is_valid, error = Validator.validate_integer_range(args.r, "r", 1, 64)
            if not is_valid:
                raise ValidationError(error)
            config.r = args.r
        if args.z0:
            config.z0 = parse_complex(args.z0, "z0")
            is_valid, error = Validator.validate_nonzero(config.z0, "z0")
            if not is_valid:
                raise ValidationError(error)
        if args.seed is not None:
            config.seed = args.seed
        return config

    # Commands

    def cmd_good_q(self, args, qp: QParams):
        for value, name in ((args.delta_max, "delta-max"), (args.n_bound, "n-bound")):
            is_valid, error = Validator.validate_integer_range(value, name, 1, 200)
            if not is_valid:
                raise ValidationError(error)
        report = is_good_value(qp, args.delta_max, args.n_bound)
        report["q"] = [qp.q.real, qp.q.imag]
        status = EXIT_OK if report["verdict"].startswith("good") else EXIT_CHECK_FAILED
        return report, status

    def cmd_bad_q(self, args, qp: QParams):
        is_valid, error = Validator.validate_positive_number(args.step, "step")
        if not is_valid or args.step >= 0.5:
            raise ValidationError(error or "step must be below 0.5")
        q_star = find_bad_q(args.step)
        t03 = theta_power_coeff(QParams.from_q(q_star), 3, 0)
        report = {
            "q_star": q_star,
            "x_star": 1 / q_star,
            "t03_abs": abs(t03),
            "f_at_x_star": hex_series(1 / q_star),
        }
        if args.csv:
            scan = scan_hex_sign(args.step)
            with open(args.csv, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["x", "f"])
                writer.writerows(scan)
            logger.info(f"Wrote {len(scan)} scan rows to {args.csv}")
            report["csv"] = args.csv
        return report, EXIT_OK

    def cmd_newton(self, args, qp: QParams):
        if args.operator:
            return newton_polygon_operator(load_operator(args.operator)).to_json(), EXIT_OK
        return newton_of_block(load_system(args.system, qp)).to_json(), EXIT_OK

    def cmd_gr(self, args, qp: QParams):
        return load_system(args.system, qp).graded().to_json(), EXIT_OK

    def cmd_normalize(self, args, qp: QParams):
        normal, F = bg_normalize(load_system(args.system, qp), qp)
        return {"system": normal.to_json(), "gauge": F.to_json()}, EXIT_OK

    def summation_report(self, A: BlockSystem, c: complex, qp: QParams, linear: bool = False) -> Dict:
        F = multi_slope_sum(A, c, qp, linear=linear)
        points = sample_points(qp, [c], seed=self.config.seed)
        report = F.to_json()
        report["gauge_residual"] = gauge_residual_at(F.evaluate, A.graded(), A, qp, points)
        return report

    def cocycle_report(self, A: BlockSystem, c: complex, d: complex, qp: QParams) -> Dict:
        cocycle = stokes_cocycle(A, c, d, qp)
        return cocycle.to_json(A.graded(), sample_points(qp, [c, d], seed=self.config.seed))

    def cmd_sum(self, args, qp: QParams):
        A = load_system(args.system, qp)
        return self.summation_report(A, parse_complex(args.direction, "direction"), qp, args.linear), EXIT_OK

    def cmd_cocycle(self, args, qp: QParams):
        A = load_system(args.system, qp)
        c, d = parse_complex(args.c, "c"), parse_complex(args.d, "d")
        return self.cocycle_report(A, c, d, qp), EXIT_OK

    def cmd_alien(self, args, qp: QParams):
        A = load_system(args.system, qp)
        if args.alpha:
            alpha = canonicalize(parse_complex(args.alpha, "alpha"), qp, "qr" if qp.r > 1 else "q")
            blocks = alien_general(A, alpha, qp)
        else:
            blocks = alien_all(A, qp)
        return [block.to_json() for block in blocks], EXIT_OK

    def cmd_act(self, args, qp: QParams):
        phi = FormalElement.from_json(parse_json_argument(args.element, "element"))
        sym = PsiSymbol.from_json(parse_json_argument(args.symbol, "symbol"), qp)
        # the unipotent coordinate lambda acts trivially on symbols
        result = act_on_psi(("h", phi.t), sym, qp.r, qp)
        result = act_on_psi(WildGroupElement(0, phi.k1, phi.k2), result, qp.r, qp)
        return {
            "element": phi.to_json(),
            "symbol": result.to_json(),
            "coefficient": [result.coefficient.real, result.coefficient.imag],
        }, EXIT_OK

    def cmd_formulaire(self, args, qp: QParams):
        report = formulaire_check(qp.r)
        return report, EXIT_OK if report["passed"] else EXIT_CHECK_FAILED

    def cmd_ramify(self, args, qp: QParams):
        A = load_system(args.system, qp)
        if args.descend:
            return descend_system(A, qp).to_json(), EXIT_OK
        ramified = ram(A, qp.r, qp)
        if args.embed:
            D, gauge = embed_in_restriction(ramified)
            return {"r": qp.r, "D": D.to_json(), "gauge": gauge.to_json()}, EXIT_OK
        return ramified.to_json(), EXIT_OK

    def cmd_verify(self, args, qp: QParams):
        report = VerificationHarness(self.config).run(args.suite)
        return report.to_json(), EXIT_OK if report.passed else EXIT_CHECK_FAILED

    def cmd_pipeline(self, args, qp: QParams):
        steps = [step.strip() for step in args.steps.split(",") if step.strip()]
        is_valid, error = Validator.validate_steps(steps)
        if not is_valid:
            raise ValidationError(error)
        data, error = DataManager.load_data(args.system)
        if error:
            raise ValidationError(error)
        if isinstance(data, dict) and "operator" in data:
            if steps != ["newton"]:
                raise ValidationError("Operator files only support the single step 'newton'")
            newton = newton_polygon_operator(load_operator(args.system))
            return {"steps": [{"step": "newton", "result": newton.to_json()}]}, EXIT_OK

        A = BlockSystem.from_json(data, qp)
        outputs = [{"step": "input", "result": A.to_json()}]
        for index, step in enumerate(steps):
            try:
                A, qp, result = self.run_step(step, A, qp, args)
            except QdxError as e:
                raise type(e)(f"Pipeline step {index} ({step}) failed: {e}") from e
            logger.info(f"Pipeline step {index} ({step}) done")
            outputs.append({"step": step, "result": result})
        return {"steps": outputs}, EXIT_OK

    def run_step(self, step: str, A: BlockSystem, qp: QParams, args):
        """One pipeline step: (system passed on, parameters passed on, emitted artifact)"""
        if step == "newton":
            return A, qp, newton_of_block(A).to_json()
        if step == "gr":
            graded = A.graded()
            return graded, qp, graded.to_json()
        if step == "normalize":
            normal, F = bg_normalize(A, qp)
            return normal, qp, {"system": normal.to_json(), "gauge": F.to_json()}
        if step == "sum":
            return A, qp, self.summation_report(A, parse_complex(args.direction, "direction"), qp)
        if step == "cocycle":
            c, d = parse_complex(args.direction, "direction"), parse_complex(args.d, "d")
            return A, qp, self.cocycle_report(A, c, d, qp)
        if step == "alien":
            return A, qp, [block.to_json() for block in alien_all(A, qp)]
        if step == "act":
            phi = FormalElement.from_json(parse_json_argument(args.element, "element"))
            return A, qp, [encode_matrix(value) for value in evaluate_on_system(phi, A, qp)]
        conjugated = ramified_conjugation(A, qp)
        return conjugated.system, conjugated.qp_R, conjugated.to_json()

    # Entry

    def run(self) -> int:
        args = self.parser.parse_args(self.argv)
        setup_logging(args.log_file)
        DataManager.init_data_files()
        try:
            self.config = self.resolve_config(args)
            qp = self.config.qparams()
            handler = getattr(self, f"cmd_{args.command.replace('-', '_')}")
            result, status = handler(args, qp)
        except QdxError as e:
            logger.error(f"{type(e).__name__}: {e}")
            return EXIT_INPUT_ERROR

        print(json.dumps(result, indent=4, sort_keys=True, default=json_default))
        if args.output:
            success, error = DataManager.save_data(json.loads(json.dumps(result, default=json_default)),
                                                   args.output)
            if not success:
                logger.error(error)
                return EXIT_INPUT_ERROR
        logger.info(f"{args.command} finished with exit status {status}")
        return status


if __name__ == "__main__":
    sys.exit(QdxApplication().run())
