"""
Tests for the command-line application.
"""
import json
import os
from fractions import Fraction

import numpy as np
import pytest

from main import (
    EXIT_INPUT_ERROR,
    EXIT_OK,
    QdxApplication,
    json_default,
    parse_complex,
    parse_json_argument,
)
from numkernel import LaurentMatrix, LaurentSeries
from qdmod import BlockSystem, NewtonData, PureBlock
from validation import ValidationError


def run(capsys, *argv):
    status = QdxApplication(list(argv)).run()
    out = capsys.readouterr().out
    return status, json.loads(out) if out.strip() else None


@pytest.fixture
def system_file(workspace):
    newton = NewtonData((Fraction(0), Fraction(2)), (1, 1))
    upper = LaurentMatrix(-1, np.array([0.4, 1.0, -0.3j, 0.2]).reshape(4, 1, 1))
    A = BlockSystem(newton, [PureBlock.integer(0, [[1.2]]), PureBlock.integer(2, [[0.9j]])], {(0, 1): upper})
    path = workspace / "system.json"
    path.write_text(json.dumps(A.to_json()))
    return str(path)


@pytest.fixture
def operator_file(workspace):
    coeffs = [LaurentSeries.monomial(1), LaurentSeries.monomial(5), LaurentSeries.constant(1)]
    path = workspace / "operator.json"
    path.write_text(json.dumps({"operator": [c.to_json() for c in coeffs]}))
    return str(path)


@pytest.fixture(autouse=True)
def _clean_logging(reset_logging):
    yield


class TestParsing:

    @pytest.mark.parametrize("text,expected", [
        ("1.3,0.7", 1.3 + 0.7j),
        ("-0.2206i", -0.2206j),
        ("2+1i", 2 + 1j),
        (" 4 ", 4),
        ("0.5-0.2j", 0.5 - 0.2j),
    ])
    def test_parse_complex(self, text, expected):
        assert parse_complex(text) == expected

    @pytest.mark.parametrize("text", ["abc", "1,2,3", ""])
    def test_parse_complex_rejects(self, text):
        with pytest.raises(ValidationError):
            parse_complex(text, "tau")

    def test_parse_json_argument(self):
        assert parse_json_argument('{"t": [2, 0]}', "element") == {"t": [2, 0]}
        with pytest.raises(ValidationError):
            parse_json_argument("[1]", "element")
        with pytest.raises(ValidationError):
            parse_json_argument("{", "element")

    def test_json_default(self):
        text = json.dumps({"a": 1 - 1j, "b": Fraction(1, 3), "c": np.float64(0.5), "d": np.eye(1)},
                          default=json_default)
        assert json.loads(text) == {"a": [1.0, -1.0], "b": "1/3", "c": 0.5, "d": [[[1.0, 0.0]]]}
        with pytest.raises(TypeError):
            json_default(object())


class TestCommands:

    def test_formulaire(self, workspace, capsys):
        status, result = run(capsys, "formulaire", "--r", "3")
        assert status == EXIT_OK
        assert result["passed"] is True
        assert os.path.exists(workspace / "data" / "settings.json")

    def test_good_q(self, workspace, capsys):
        status, result = run(capsys, "good-q", "--delta-max", "2", "--n-bound", "5")
        assert status == EXIT_OK
        assert result["verdict"].startswith("good")
        assert result["q"] == pytest.approx([4.0, 0.0])

    def test_newton_of_operator(self, operator_file, capsys):
        status, result = run(capsys, "newton", "--operator", operator_file)
        assert status == EXIT_OK
        assert result == {"slopes": ["1/2"], "mults": [2]}

    def test_newton_of_system(self, system_file, capsys):
        status, result = run(capsys, "newton", "--system", system_file)
        assert result == {"slopes": ["0", "2"], "mults": [1, 1]}

    def test_gr(self, system_file, capsys):
        status, result = run(capsys, "gr", "--system", system_file)
        assert status == EXIT_OK
        assert result["upper"] == {}

    def test_normalize(self, system_file, capsys):
        status, result = run(capsys, "normalize", "--system", system_file)
        assert status == EXIT_OK
        assert result["gauge"]["member_of_G_A0"] is True
        assert result["system"]["upper"]["0,1"]["lo"] >= 0

    def test_sum(self, system_file, capsys):
        status, result = run(capsys, "sum", "--system", system_file, "--direction", "1.3,0.7")
        assert status == EXIT_OK
        assert result["gauge_residual"] < 1e-8
        assert result["deltas"] == {"0,1": 2}

    def test_cocycle(self, system_file, capsys):
        status, result = run(capsys, "cocycle", "--system", system_file)
        assert status == EXIT_OK
        assert result["automorphism_residual"] < 1e-8

    def test_alien(self, system_file, capsys):
        status, result = run(capsys, "alien", "--system", system_file)
        assert status == EXIT_OK
        assert len(result) == 4

    def test_act(self, workspace, capsys):
        status, result = run(capsys, "act", "--element", '{"t": [2, 0]}',
                             "--symbol", '{"delta": 2, "beta": [1.5, 0.2], "l": 1}')
        assert status == EXIT_OK
        assert result["coefficient"] == pytest.approx([4.0, 0.0])

    def test_ramify(self, system_file, capsys):
        status, result = run(capsys, "ramify", "--system", system_file, "--r", "2")
        assert status == EXIT_OK
        assert result["r"] == 2
        assert result["newton"]["slopes"] == ["0", "4"]

    def test_output_file(self, workspace, capsys):
        status, result = run(capsys, "formulaire", "--output", "formulaire.json")
        assert status == EXIT_OK
        with open(workspace / "data" / "formulaire.json") as f:
            assert json.load(f) == result


class TestPipeline:

    def test_empty_steps_echo_the_input(self, system_file, capsys):
        status, result = run(capsys, "pipeline", "--system", system_file)
        assert status == EXIT_OK
        assert [entry["step"] for entry in result["steps"]] == ["input"]
        with open(system_file) as f:
            assert result["steps"][0]["result"] == json.load(f)

    def test_threads_steps(self, system_file, capsys):
        status, result = run(capsys, "pipeline", "--system", system_file, "--steps", "newton,normalize,gr,sum")
        assert status == EXIT_OK
        assert [entry["step"] for entry in result["steps"]] == ["input", "newton", "normalize", "gr", "sum"]
        # the graded system has no upper blocks, so the summation is trivial
        assert result["steps"][-1]["result"]["numerators"] == {}

    def test_operator_file(self, operator_file, capsys):
        status, result = run(capsys, "pipeline", "--system", operator_file, "--steps", "newton")
        assert status == EXIT_OK
        assert result["steps"][0]["result"]["slopes"] == ["1/2"]
        status, _ = run(capsys, "pipeline", "--system", operator_file, "--steps", "gr")
        assert status == EXIT_INPUT_ERROR

    def test_unknown_step(self, system_file, capsys):
        status, result = run(capsys, "pipeline", "--system", system_file, "--steps", "gr,shuffle")
        assert status == EXIT_INPUT_ERROR
        assert result is None


class TestInputErrors:

    @pytest.mark.parametrize("argv", [
        ("formulaire", "--tau", "0.22i"),
        ("formulaire", "--tau=-0.2i", "--q", "4"),
        ("formulaire", "--q", "0.5"),
        ("formulaire", "--z0", "0,0"),
        ("formulaire", "--r", "0"),
        ("formulaire", "--config", "nowhere.json"),
        ("verify", "everything"),
        ("gr", "--system", "missing.json"),
        ("good-q", "--delta-max", "0"),
    ])
    def test_exit_code(self, workspace, capsys, argv):
        status, result = run(capsys, *argv)
        assert status == EXIT_INPUT_ERROR
        assert result is None

    def test_negative_tau_with_equals(self, workspace, capsys):
        status, _ = run(capsys, "formulaire", "--tau=-0.2206i")
        assert status == EXIT_OK

    def test_missing_command(self, workspace):
        with pytest.raises(SystemExit):
            QdxApplication([]).run()
