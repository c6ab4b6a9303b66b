"""
Tests for the verification harness.
"""
import pytest

from numkernel import QParams
from theta import find_bad_q
from utils import RunConfig
from validation import UnknownSuite
from verify import FAIL, PASS, SKIP, VerificationHarness, VerificationReport


@pytest.fixture(scope="module")
def harness():
    return VerificationHarness(RunConfig())


class TestSuites:

    @pytest.mark.parametrize("suite", ["theta", "stokes", "alien", "formal", "ramify"])
    def test_suite_passes_on_defaults(self, harness, suite):
        report = harness.run(suite)
        failed = [f"{c.name}: {c.deviation} ({c.detail})" for c in report.checks if c.status == FAIL]
        assert report.passed, failed
        assert report.checks
        assert {c.suite for c in report.checks} == {suite}

    def test_theta_checks_are_measured(self, harness):
        report = harness.run("theta")
        by_name = {c.name: c for c in report.checks}
        for name in ("functional_equation", "inversion_symmetry", "triple_product"):
            assert by_name[name].status == PASS
            assert by_name[name].deviation <= by_name[name].threshold

    def test_stokes_residuals_below_tolerance(self, harness):
        report = harness.run("stokes")
        for check in report.checks:
            assert check.deviation is not None
            assert check.deviation < 1e-9, check.name

    def test_unknown_suite(self, harness):
        with pytest.raises(UnknownSuite):
            harness.run("everything")


class TestReport:

    def test_json_round_trip(self, harness):
        report = harness.run("formal")
        restored = VerificationReport.from_json(report.to_json())
        assert restored.to_json() == report.to_json()
        assert report.to_json()["counts"][FAIL] == 0

    def test_bad_q_skips_good_value_checks(self):
        q_star = find_bad_q()
        report = VerificationHarness(RunConfig(tau=QParams.from_q(q_star).tau)).run("theta")
        by_name = {c.name: c for c in report.checks}
        assert by_name["good_value"].status == SKIP
        assert by_name["square_coefficients"].status == SKIP
