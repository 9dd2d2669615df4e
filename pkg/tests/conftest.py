import numpy as np
import pytest

from iqtomo import ComponentParams, DensityMatrix, MixtureParams

# acceptance tests record one line per criterion here; the terminal-summary
# hook prints them even when pytest captures stdout
_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    def record(num: int, passed: bool, text: str) -> None:
        line = f"[criterion {num:02d}] {'PASS' if passed else 'FAIL'} - {text}"
        _acceptance_lines.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)


@pytest.fixture
def rho22() -> DensityMatrix:
    """The mixed reference state used throughout the illustration fixtures."""
    return DensityMatrix(np.array([[0.056, 0.229j], [-0.229j, 0.944]]))


@pytest.fixture
def sep5_mixture() -> MixtureParams:
    """Balanced unit-covariance clouds at (+-2.5, 2.0) -- separation 5."""
    return MixtureParams(
        zero=ComponentParams(0.5, np.array([2.5, 2.0]), np.eye(2)),
        one=ComponentParams(0.5, np.array([-2.5, 2.0]), np.eye(2)),
    )
