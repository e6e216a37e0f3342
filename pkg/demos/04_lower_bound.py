"""
Forcing skew 2ũ/3 with three executions
=======================================

Three nodes, one faulty, faulty links faster than honest ones by ũ.  Three
executions run side by side.  In each, one node is faulty and replays what
it would have sent in another execution, so every honest node sees exactly
the same thing in both executions where it is honest.  The pulse-time
differences then have to add up to 2ũ, so one execution has skew ≥ 2ũ/3.
"""

from fractions import Fraction

from pulsesync import params_from_solution, solve_parameters
from pulsesync.adversaries import build_execution_triple, cps_behavior, pulse_round_bound, verify_lower_bound
from pulsesync.scenarios import cps_horizon

sol = solve_parameters(1, 0, Fraction(101, 100), u_tilde=Fraction(3, 10))
params = params_from_solution(sol, n=3, f=1)
r_star = pulse_round_bound(params.u_tilde, params.p_min, params.theta)

triple = build_execution_triple(cps_behavior, params, cps_horizon(params, r_star))
report = verify_lower_bound(triple, r_star)

print("pulse index examined:", r_star)
for k, diff in report.differences.items():
    print(f"execution {k}: p_{(k + 1) % 3} - p_{(k + 2) % 3} = {diff}")
print("sum:", report.difference_sum, "= 2ũ" if report.sum_identity_ok else "!= 2ũ")
print("max skew:", report.max_skew, ">= 2ũ/3:", report.bound_ok)
print("replayed faulty messages:", len(triple.replays))
