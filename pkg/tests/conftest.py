import pytest

from siegelab.blaschke_family import HermanBlaschke, solve_lambda
from siegelab.cf_engine import RotationNumber

CLASSICAL_ZEROS = (1 / 3,)


@pytest.fixture(scope="session")
def golden():
    return RotationNumber.golden(30)


@pytest.fixture(scope="session")
def classical(golden):
    """The classical cubic member with golden-mean rotation on the circle."""
    lam = solve_lambda(CLASSICAL_ZEROS, 2, RotationNumber.golden(20), 1e-8)
    return HermanBlaschke(2, lam, CLASSICAL_ZEROS)


@pytest.fixture(scope="session")
def comb(classical, golden):
    from siegelab.bubbles_puzzles import OrbitCombinatorics
    return OrbitCombinatorics(classical, golden)


@pytest.fixture(scope="session")
def tower(classical, golden):
    from siegelab.bubbles_puzzles import PuzzleTower
    return PuzzleTower(classical, golden, size=384)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(test_acceptance.RESULTS):
        ok, seconds, detail = test_acceptance.RESULTS[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s) {detail}")
