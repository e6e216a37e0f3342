"""
Approximate agreement with crusader broadcast
=============================================

Seven nodes, three of them Byzantine.  Each step halves the spread of the
honest values and never leaves their original range.
"""

from fractions import Fraction

from pulsesync import run_apa
from pulsesync.adversaries import ApaEquivocator
from pulsesync.core import spread

inputs = {0: Fraction(0), 1: Fraction(3, 4), 2: Fraction(1, 3), 3: Fraction(1)}
adversary = ApaEquivocator(corrupted={4, 5, 6}, seed=42)
run = run_apa(inputs, n=7, ell=1, eps=Fraction(1, 100), adversary=adversary, f=3)

for k, it in enumerate(run.iterations, 1):
    print(f"step {k}: spread {float(spread(it.inputs.values())):.5f} -> "
          f"{float(spread(it.outputs.values())):.5f}, ⊥ counts {it.bots}")

print("rounds used:", run.rounds)
print("final values:", {v: str(x) for v, x in run.outputs.items()})
