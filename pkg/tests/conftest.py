from fractions import Fraction

import pytest

from pulsesync import params_from_solution, solve_parameters


@pytest.fixture(scope="session")
def params4():
    """n=4, f=1 at theta=101/100, u=1/1000, d=1 with the solver's minimal S and T."""
    return params_from_solution(solve_parameters(1, Fraction(1, 1000), Fraction(101, 100)), 4, 1)


@pytest.fixture(scope="session")
def attack_params():
    sol = solve_parameters(1, 0, Fraction(101, 100), u_tilde=Fraction(3, 10))
    return params_from_solution(sol, 3, 1)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
