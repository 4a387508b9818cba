import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncpath.loss import DesignData, Elliptical, EllipticalCov, LeastSquares, Logistic

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_ls(rng, n=12, d=5):
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    return LeastSquares(DesignData(X, y))


def random_logistic(rng, n=15, d=4):
    X = rng.standard_normal((n, d))
    y = (rng.random(n) < 0.5).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return Logistic(DesignData(X, y))


def random_elliptical(rng, d=4, indefinite=False):
    A = rng.standard_normal((d + 1, d + 3))
    K = A @ A.T / (d + 3)
    if indefinite:
        # push one eigen-direction of the X block negative
        K[1:, 1:] -= 1.5 * np.eye(d) * np.linalg.eigvalsh(K[1:, 1:])[0] + 0.3 * np.eye(d)
        np.fill_diagonal(K, np.abs(np.diag(K)))
    return Elliptical(EllipticalCov((K + K.T) / 2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
