import dataclasses
from fractions import Fraction as F

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsesync.analysis import (
    check_lemma_suite,
    check_pulse_sync,
    feasibility_polynomial,
    joint_polynomial,
    params_from_solution,
    solve_parameters,
)
from pulsesync.core import compute_delta, validate_params
from pulsesync.des import ExecutionTrace
from pulsesync.scenarios import run_cps


def sympy_oracle(d, u, theta, slack=0):
    """Solve the skew fixed point and the minimal round length as a linear system."""
    S, T, D = sympy.symbols("S T D")
    th, d, u, slack = (sympy.Rational(str(x)) for x in (theta, d, u, slack))
    eqs = [
        sympy.Eq(D, 2 * u + (th**2 - 1) * d + 2 * (th**3 - th**2) * S),
        sympy.Eq((2 - th) * S, 2 * (2 * th - 1) * D + 2 * (th - 1) * T),
        sympy.Eq(T, (th**2 + th + 1) * S + (th + 1) * d - 2 * u + slack),
    ]
    sol = sympy.solve(eqs, [S, T, D], dict=True)[0]
    return tuple(F(str(sol[x])) for x in (S, T, D))


GRID = [(F(1), F(u), F(t)) for u in ("0", "1/1000", "1/20", "1/5") for t in ("1001/1000", "101/100", "26/25", "21/20")]


@pytest.mark.parametrize("d,u,theta", GRID)
def test_solver_matches_symbolic_oracle(d, u, theta):
    sol = solve_parameters(d, u, theta)
    assert sol.feasible
    assert (sol.S, sol.T, sol.delta) == sympy_oracle(d, u, theta)


def test_solver_with_slack_matches_oracle():
    sol = solve_parameters(1, F(1, 1000), F(101, 100), t_slack=F(1, 2))
    assert (sol.S, sol.T, sol.delta) == sympy_oracle(1, F(1, 1000), F(101, 100), F(1, 2))
    base = solve_parameters(1, F(1, 1000), F(101, 100))
    assert sol.S > base.S and sol.T > base.T


def test_reference_point():
    sol = solve_parameters(1, F(1, 1000), F(101, 100))
    assert sol.S == F(532775, 5548612)
    assert abs(float(sol.T) - 2.29895) < 1e-5


def test_polynomial_values():
    assert feasibility_polynomial(F(111, 100)) == F(19207, 10**6)
    assert feasibility_polynomial(F(112, 100)) < 0
    assert joint_polynomial(F(1)) == 1
    x = sympy.symbols("x")
    expected = sympy.expand((2 - x) - 4 * (2 * x - 1) * (x**3 - x**2) - 2 * (x**3 - 1))
    for t in (F(1), F(11, 10), F(3, 2)):
        assert joint_polynomial(t) == F(str(expected.subs(x, sympy.Rational(str(t)))))


def test_infeasible_reports_binding_constraint():
    sol = solve_parameters(1, F(1, 1000), F(9, 8))
    assert not sol.feasible
    assert sol.S is None and sol.T is None
    assert any(b.startswith("polynomial") for b in sol.binding)
    with pytest.raises(ValueError):
        params_from_solution(sol, 4)
    # the polynomial check alone still passes at 11/10, the joint one does not
    sol = solve_parameters(1, F(1, 1000), F(11, 10))
    assert sol.polynomial > 0 and not sol.feasible
    assert [b.split(":")[0] for b in sol.binding] == ["joint"]


@pytest.mark.parametrize("args", [(0, 0, F(11, 10)), (1, 2, F(11, 10)), (1, 0, 1), (1, -1, F(11, 10))])
def test_solver_rejects_bad_input(args):
    with pytest.raises(ValueError):
        solve_parameters(*args)


@settings(max_examples=200)
@given(st.fractions(min_value=F(1, 10**4), max_value=F(1, 2), max_denominator=10**4),
       st.fractions(min_value=0, max_value=F(1, 10), max_denominator=10**3),
       st.fractions(min_value=0, max_value=2, max_denominator=100))
def test_feasible_solutions_are_consistent(eps, u, slack):
    theta = 1 + eps / 10
    sol = solve_parameters(1, u, theta, t_slack=slack)
    if not sol.feasible:
        return
    assert sol.delta > 0 and sol.S > sol.delta
    assert sol.T > (theta**2 + theta + 1) * sol.S
    assert sol.delta == compute_delta(u, 1, theta, sol.S)
    validate_params(params_from_solution(sol, 4))


@pytest.mark.parametrize("theta", [F(1001, 1000), F(101, 100), F(21, 20)])
@pytest.mark.parametrize("u", [F(0), F(1, 1000), F(1, 20)])
def test_skew_scales_with_uncertainty_and_drift(theta, u):
    sol = solve_parameters(1, u, theta)
    ratio = sol.S / (u + (theta - 1))
    assert ratio <= 4 * theta * (theta + 1) / joint_polynomial(theta)
    assert ratio < 25


def test_solver_is_exactly_reproducible():
    a = solve_parameters("1", "1/1000", "101/100")
    b = solve_parameters(1, F(1, 1000), F(101, 100))
    assert a == b and a.to_json_text() == b.to_json_text()


def test_fault_free_max_drift_run_passes_everything(params4):
    trace = run_cps(params4.with_(f=0), 20, "silent", "extreme", "max")
    report = check_pulse_sync(trace, params4.S, params4.p_min, params4.p_max, 20)
    report = report.merge(check_lemma_suite(trace, params4))
    assert report.passed, report.table()
    assert report.check("estimate_interval").margin >= 0


def test_halved_skew_bound_fails_with_witness(params4):
    half = params4.with_(S=params4.S / 2)
    trace = run_cps(params4, 5, "silent", "extreme", "max")
    report = check_pulse_sync(trace, half.S, half.p_min, half.p_max, 5)
    skew = report.check("skew")
    assert not skew.passed
    assert skew.witness["pulse"] == 1 and skew.witness["skew"] > half.S
    assert report.check("liveness").passed


def test_missing_pulse_fails_liveness(params4):
    trace = run_cps(params4, 3, "silent", "extreme", "max")
    report = check_pulse_sync(trace, params4.S, params4.p_min, params4.p_max, 4)
    assert not report.check("liveness").passed
    assert report.check("liveness").witness["pulse"] == 4


def _tamper(trace, round_, owner, dealer, value):
    events = []
    for ev in trace.events:
        p = ev.payload
        if (ev.kind == "note" and p["kind"] == "correction" and p["round"] == round_
                and ev.src == owner):
            est = dict(p["estimates"])
            est[dealer] = value
            ev = dataclasses.replace(ev, payload={**p, "estimates": est})
        events.append(ev)
    return dataclasses.replace(trace, events=events)


def test_estimate_outside_delta_interval_is_caught(params4):
    trace = run_cps(params4, 4, "silent", "extreme", "max")
    assert check_lemma_suite(trace, params4).passed
    pulses = trace.pulses()
    bad = pulses[1][2] - pulses[0][2] + params4.delta
    report = check_lemma_suite(_tamper(trace, 2, 0, 1, bad), params4)
    check = report.check("estimate_interval")
    assert not check.passed
    assert check.witness["round"] == 2 and check.witness["estimate"] == bad
    assert report.failures()
    assert "witness" in report.table()
