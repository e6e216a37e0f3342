"""Ready-made clock schedules, delay policies and a one-call CPS run."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Optional

from .adversaries.strategies import make_strategy
from .core import ClockSchedule, SystemParams, validate_params
from .cps import CpsNode
from .des import (
    DelayPolicy,
    ExecutionTrace,
    MaxDelay,
    MinDelay,
    RandomDelay,
    run_simulation,
)

__all__ = ["CLOCK_KINDS", "DELAY_KINDS", "make_clocks", "make_delays", "run_cps", "cps_horizon"]

CLOCK_KINDS = ("identity", "extreme", "switching", "random")
DELAY_KINDS = ("max", "min", "random", "asymmetric")


def make_clocks(kind: str, params: SystemParams, seed: int = 0,
                horizon: Optional[Fraction] = None) -> dict[int, ClockSchedule]:
    """Clock schedules for all n nodes; every rate lies in [1, theta] and H(0) in [0, S].

    ``extreme`` alternates rate-1 and rate-theta nodes with offsets 0 and S,
    ``switching`` flips each node between the two extreme rates every half
    round, ``random`` draws piecewise rates and offsets from ``seed``.
    """
    n, th, S = params.n, params.theta, params.S
    if kind == "identity":
        return {v: ClockSchedule.identity() for v in range(n)}
    if kind == "extreme":
        return {v: ClockSchedule.constant(th if v % 2 else 1, 0 if v % 2 else S) for v in range(n)}
    horizon = Fraction(horizon if horizon is not None else 1000 * params.T)
    if kind == "switching":
        step = params.T / 2
        count = int(horizon / step) + 1
        out = {}
        for v in range(n):
            segs = tuple((step * k, th if (k + v) % 2 else Fraction(1)) for k in range(count))
            out[v] = ClockSchedule(segs, S * v / max(1, n - 1))
        return out
    if kind == "random":
        rng = random.Random(seed)
        out = {}
        for v in range(n):
            t, segs = Fraction(0), []
            while t < horizon:
                segs.append((t, 1 + (th - 1) * Fraction(rng.randrange(9), 8)))
                t += params.T * Fraction(rng.randrange(1, 9), 4)
            out[v] = ClockSchedule(tuple(segs), S * Fraction(rng.randrange(17), 16))
        return out
    raise ValueError(f"unknown clock kind {kind!r}; choose from {CLOCK_KINDS}")


def make_delays(kind: str, seed: int = 0) -> DelayPolicy:
    """``asymmetric`` is slow from lower to higher ids and fast the other way."""
    if kind == "max":
        return MaxDelay()
    if kind == "min":
        return MinDelay()
    if kind == "random":
        return RandomDelay(seed)
    if kind == "asymmetric":
        return _Asymmetric()
    raise ValueError(f"unknown delay kind {kind!r}; choose from {DELAY_KINDS}")


class _Asymmetric(DelayPolicy):
    def delay(self, world, sender, receiver, t, message, faulty_link):
        lo, hi = self.band(world.params, faulty_link)
        return hi if sender < receiver else lo


def cps_horizon(params: SystemParams, pulses: int) -> Fraction:
    """Real time by which every honest node has emitted ``pulses`` pulses and finished that round."""
    return params.S + (pulses + 1) * params.p_max


def run_cps(params: SystemParams, pulses: int, adversary: str = "silent", clocks: str = "extreme",
            delays: str = "random", seed: int = 0, knobs: Optional[dict] = None,
            validate: bool = True) -> ExecutionTrace:
    if validate:
        validate_params(params)
    adv = make_strategy(adversary, params, **(knobs or {}))
    horizon = cps_horizon(params, pulses)
    schedule = make_clocks(clocks, params, seed, horizon)
    behaviors = {v: CpsNode(params, max_pulses=pulses) for v in range(params.n)
                 if v not in adv.corrupted}
    honest_clocks = {v: c for v, c in schedule.items() if v not in adv.corrupted}
    return run_simulation(params, honest_clocks, behaviors, make_delays(delays, seed), adv, horizon)
