"""
Choosing S and T
================

The skew bound S and the nominal round length T come out of an exact
linear solve.  Everything stays rational, so the numbers below are the
real thing, not floating point approximations.
"""

from fractions import Fraction

from pulsesync import solve_parameters

# a fairly ordinary setting: 1% drift, delay band of width 1/1000
sol = solve_parameters(d=1, u=Fraction(1, 1000), theta=Fraction(101, 100))
print("S =", sol.S, "~", float(sol.S))
print("T =", sol.T, "~", float(sol.T))
print("delta =", sol.delta, "~", float(sol.delta))
print("period band:", float(sol.p_min), "to", float(sol.p_max))

# S grows roughly linearly in u + (theta - 1) d
for theta in ("1001/1000", "101/100", "21/20"):
    s = solve_parameters(1, 0, Fraction(theta))
    print(f"theta={theta:>9}: S/(theta-1) = {float(s.S / (Fraction(theta) - 1)):.3f}")

# too much drift and there is no (S, T) at all
bad = solve_parameters(1, Fraction(1, 1000), Fraction(11, 10))
print("theta=11/10 feasible?", bad.feasible, bad.binding)
