from fractions import Fraction as F

import json
import pytest

from pulsesync import CpsNode, run_simulation
from pulsesync.core import ClockSchedule
from pulsesync.des import (
    Adversary,
    EventStorm,
    FixedDelay,
    MaxDelay,
    MinDelay,
    NodeBehavior,
    RandomDelay,
    SimulationError,
    local_view,
)
from pulsesync.signatures import ForgeryError, sign


class SendOnce(NodeBehavior):
    def __init__(self, to, message="hello"):
        self.to, self.message = to, message

    def on_start(self, ctx):
        ctx.send(self.to, self.message)


class Ping(NodeBehavior):
    def on_start(self, ctx):
        ctx.send(1 - ctx.node_id, "ping")

    def on_message(self, ctx, sender, message):
        ctx.send(sender, "ping")


def identity_clocks(n):
    return {v: ClockSchedule.identity() for v in range(n)}


def test_silent_system_has_no_messages(params4):
    trace = run_simulation(params4, identity_clocks(4), {v: NodeBehavior() for v in range(4)},
                           horizon=10)
    assert trace.message_events() == []


def test_max_delay_delivery(params4):
    behaviors = {0: SendOnce(1), 1: NodeBehavior(), 2: NodeBehavior(), 3: NodeBehavior()}
    trace = run_simulation(params4, identity_clocks(4), behaviors, MaxDelay(), horizon=10)
    recv = [ev for ev in trace.events if ev.kind == "recv"]
    assert len(recv) == 1 and recv[0].t == params4.d and recv[0].dst == 1


def test_delay_outside_band_is_fatal(params4):
    behaviors = {0: SendOnce(1), 1: NodeBehavior(), 2: NodeBehavior(), 3: NodeBehavior()}
    with pytest.raises(SimulationError):
        run_simulation(params4, identity_clocks(4), behaviors, FixedDelay(params4.d / 2), horizon=10)


def test_event_storm_guard(params4):
    p = params4.with_(n=2, f=0)
    with pytest.raises(EventStorm):
        run_simulation(p, identity_clocks(2), {0: Ping(), 1: Ping()}, horizon=10**6, max_events=50)


def test_past_timer_is_fatal(params4):
    class Late(NodeBehavior):
        def on_start(self, ctx):
            ctx.set_timer(ctx.now - 1, "x")
    with pytest.raises(SimulationError):
        run_simulation(params4, {v: ClockSchedule.identity(2) for v in range(4)},
                       {v: Late() for v in range(4)}, horizon=10)


def test_forgery_is_blocked(params4):
    class Forger(Adversary):
        def on_start(self, view):
            view.send(3, 0, ("relay", sign(1, b"never sent")))
    with pytest.raises(ForgeryError):
        run_simulation(params4, identity_clocks(3), {v: NodeBehavior() for v in range(3)},
                       adversary=Forger({3}), horizon=10)


def test_relay_after_observation_passes(params4):
    class Relay(Adversary):
        def on_faulty_receive(self, view, node, sender, message):
            view.send(node, 2, ("relay", message))
    behaviors = {0: SendOnce(3, sign(0, b"tok")), 1: NodeBehavior(), 2: NodeBehavior()}
    trace = run_simulation(params4, identity_clocks(3), behaviors, MinDelay(),
                           adversary=Relay({3}), horizon=10)
    recv = [ev for ev in trace.events if ev.kind == "recv" and ev.dst == 2]
    assert len(recv) == 1 and recv[0].t == 2 * (params4.d - params4.u)


def test_too_many_corrupted(params4):
    with pytest.raises(SimulationError):
        run_simulation(params4, identity_clocks(2), {0: NodeBehavior(), 1: NodeBehavior()},
                       adversary=Adversary({2, 3}), horizon=1)


def test_fast_clock_rejected(params4):
    clocks = identity_clocks(4)
    clocks[0] = ClockSchedule.constant(2)
    with pytest.raises(ValueError):
        run_simulation(params4, clocks, {v: NodeBehavior() for v in range(4)}, horizon=1)


def test_zero_drift_fixed_delay_is_periodic(params4):
    # all estimates equal (theta-1)S, so every period is T + (theta-1)S
    p = params4.with_(f=0)
    trace = run_simulation(p, identity_clocks(4), {v: CpsNode(p, max_pulses=8) for v in range(4)},
                           MinDelay(), horizon=12 * p.T)
    pulses = trace.pulses()
    for v in range(4):
        times = [pulses[v][i] for i in range(1, 9)]
        assert times[0] == p.S
        assert {b - a for a, b in zip(times, times[1:])} == {p.T + (p.theta - 1) * p.S}
    assert len({pulses[v][8] for v in range(4)}) == 1


def test_trace_is_reproducible_and_jsonl(params4, tmp_path):
    def run():
        clocks = {v: ClockSchedule.constant(1 + (params4.theta - 1) * v / 3, params4.S * v / 3)
                  for v in range(4)}
        return run_simulation(params4, clocks, {v: CpsNode(params4, max_pulses=3) for v in range(4)},
                              RandomDelay(7), horizon=5 * params4.T)
    a, b = run(), run()
    assert a.to_jsonl() == b.to_jsonl()
    first = json.loads(a.to_jsonl().splitlines()[0])
    assert set(first) == {"t", "kind", "from", "to", "local_time", "payload", "pulse_index"}
    assert "/" in first["t"]
    for v in range(4):
        assert local_view(a, v) == local_view(b, v)


def test_local_view_detects_timing_change(params4):
    behaviors = lambda: {0: SendOnce(1), 1: NodeBehavior(), 2: NodeBehavior(), 3: NodeBehavior()}
    slow = run_simulation(params4, identity_clocks(4), behaviors(), MaxDelay(), horizon=5)
    fast = run_simulation(params4, identity_clocks(4), behaviors(), MinDelay(), horizon=5)
    assert local_view(slow, 1) != local_view(fast, 1)
    assert local_view(slow, 0) == local_view(fast, 0)


def test_local_view_uses_local_time(params4):
    clocks = identity_clocks(4)
    clocks[1] = ClockSchedule.constant(params4.theta, F(1, 10))
    behaviors = {0: SendOnce(1), 1: NodeBehavior(), 2: NodeBehavior(), 3: NodeBehavior()}
    trace = run_simulation(params4, clocks, behaviors, MaxDelay(), horizon=5)
    view = local_view(trace, 1)
    assert view == (("recv", F(1, 10) + params4.theta * params4.d, 0, "hello"),)
