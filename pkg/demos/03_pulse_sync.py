"""
Pulse synchronization under attack
==================================

Four nodes, one Byzantine, worst-case drift (two clocks at rate 1, two at
rate theta) and random delays.  The trace is checked exactly against the
skew and period bounds and against every per-round inequality the
correctness argument needs.
"""

from fractions import Fraction

from pulsesync import params_from_solution, solve_parameters
from pulsesync.analysis import check_lemma_suite, check_pulse_sync
from pulsesync.scenarios import run_cps

params = params_from_solution(solve_parameters(1, Fraction(1, 1000), Fraction(101, 100)), n=4, f=1)

for adversary in ("silent", "equivocator", "echo_rusher"):
    trace = run_cps(params, pulses=50, adversary=adversary, clocks="extreme", delays="random", seed=3)
    report = check_pulse_sync(trace, params.S, params.p_min, params.p_max, 50)
    report = report.merge(check_lemma_suite(trace, params))
    print(f"--- {adversary}: {'all checks pass' if report.passed else 'FAILED'}")
    print(f"max skew / S = {float(report.max_skew / params.S):.3f}")

# the full table for the last run, margins included
print(report.table())
