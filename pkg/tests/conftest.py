import numpy as np
import pytest

from curvedtube import profiles as P
from curvedtube import section as S
from curvedtube import tube as T


@pytest.fixture(scope="session")
def bent_strip():
    """Planar strip, bump curvature height 0.5 width 4, half-width 0.5."""
    prof = P.make_profile(2, [P.bump(0.5, 4.0)], name="bent-strip")
    return T.tube_from_profile(prof, S.make_interval(0.5), (-40.0, 40.0))


@pytest.fixture(scope="session")
def straight_strip():
    return T.tube_from_profile(P.straight(2), S.make_interval(0.5), (-40.0, 40.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record and print the one-line PASS/FAIL verdict of an acceptance criterion."""
    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
