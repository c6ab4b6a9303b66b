"""
Shared fixtures for the qdx test suite.
"""
import logging
import math

import numpy as np
import pytest

from numkernel import QParams


@pytest.fixture
def q4() -> QParams:
    return QParams.from_q(4)


@pytest.fixture
def q_complex() -> QParams:
    return QParams.from_q(2 + 1j)


@pytest.fixture
def q_negative() -> QParams:
    return QParams.from_q(-3)


@pytest.fixture(params=[4, 2 + 1j, -3], ids=["q=4", "q=2+i", "q=-3"])
def qp(request) -> QParams:
    return QParams.from_q(request.param)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def annulus_points(qp, rng):
    """Points of 1 <= |z| < |q|"""
    radii = np.exp(rng.random(50) * math.log(abs(qp.q)))
    angles = 2 * math.pi * rng.random(50)
    return [complex(v) for v in radii * np.exp(1j * angles)]


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Empty working directory with no QDX_CONFIG override"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("QDX_CONFIG", raising=False)
    return tmp_path


@pytest.fixture
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)
