import math

import mpmath
import numpy as np
import pytest


def sine_product_oracle(terms: int = 10**6) -> tuple:
    """Partial product of (1 - 1/(2 n^2)) over n <= terms in long double,
    alongside the closed form sin(pi/sqrt 2)/(pi/sqrt 2) at 40 digits."""
    n = np.arange(1, terms + 1, dtype=np.longdouble)
    factors = 1 - 1 / (2 * n * n)
    partial = np.prod(factors)
    with mpmath.workdps(40):
        x = mpmath.pi / mpmath.sqrt(2)
        closed = mpmath.sin(x) / x
    return float(partial), float(closed)


@pytest.fixture(scope="session")
def sine_oracle():
    partial, closed = sine_product_oracle()
    # truncation after N factors leaves a relative gap of about 1/(2N)
    assert math.isclose(partial, closed, rel_tol=1e-6)
    return closed


# acceptance results: criterion number -> list of (check, passed, detail)
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(criterion: int, check: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        failed = [f"{name} ({detail})" for name, ok, detail in checks if not ok]
        summary = "; ".join(failed) if failed else "; ".join(f"{n}: {d}" for n, _, d in checks if d)
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {summary}")
