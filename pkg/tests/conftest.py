from functools import lru_cache

import pytest

from degstab.bop import build_operator
from degstab.spectral import eigenvalues, make_problem

GRID = (0.0, 0.3, 0.5, 0.9, 1.0, 1.2, 1.49)


@lru_cache(maxsize=None)
def cached_system(alpha, n):
    return eigenvalues(make_problem(alpha), n)


@lru_cache(maxsize=None)
def cached_operator(alpha, n):
    return build_operator(cached_system(alpha, n))


@pytest.fixture(scope="session")
def system():
    return cached_system


@pytest.fixture(scope="session")
def operator():
    return cached_operator


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
