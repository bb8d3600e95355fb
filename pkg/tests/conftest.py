import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def kkt_project(p, lo, hi, R):
    """Independent projection onto box ∩ ball: z(mu) = clip(p / (1 + mu), lo, hi),
    with mu >= 0 found by bisection so that |z(mu)| = R when the ball binds."""
    p = np.asarray(p, dtype=float)

    def z(mu):
        return np.clip(p / (1.0 + mu), lo, hi)

    if np.linalg.norm(z(0.0)) <= R:
        return z(0.0)
    a, b = 0.0, 1.0
    while np.linalg.norm(z(b)) > R:
        b *= 2.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if np.linalg.norm(z(mid)) > R:
            a = mid
        else:
            b = mid
    return z(b)


# one line per acceptance criterion, printed as it is evaluated and again at the end of the run
_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(num: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {num:>2} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE[num] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[num])
