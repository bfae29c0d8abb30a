from pathlib import Path

import numpy as np
import pytest

from preduce.dirac import DiracContext
from preduce.poisson import PoissonStructure
from preduce.submanifold import ConstraintSet, sample_surface

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def canon2():
    return PoissonStructure.canonical(1)


@pytest.fixture(scope="session")
def canon4():
    return PoissonStructure.canonical(2)


@pytest.fixture(scope="session")
def so3():
    return PoissonStructure.so3()


@pytest.fixture(scope="session")
def so3_r2(so3, canon2):
    return PoissonStructure.product(so3, canon2)


@pytest.fixture(scope="session")
def flat_dirac(canon4):
    C = ConstraintSet(canon4, ["q2", "p2"], seeds=[[0.5, 0.0, 0.3, 0.0]], name="second_class")
    return DiracContext(C, sample_surface(C, 20, seed=1))


@pytest.fixture(scope="session")
def curved_dirac(so3_r2):
    # mixes the so(3)* and (q, p) factors; C = 1 - x2 stays away from 0 near the seed
    C = ConstraintSet(so3_r2, ["q - x3", "p - x1"], seeds=[[0.5, 0.2, 0.3, 0.3, 0.5]], name="mixed")
    return DiracContext(C, sample_surface(C, 20, seed=2))


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS, format_results
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in format_results():
            terminalreporter.write_line(line)
