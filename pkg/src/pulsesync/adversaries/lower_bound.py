"""Three-execution shifting construction for n = 3 (deterministic behaviors).

World ``i`` corrupts node ``i``.  Honest links have delay exactly d, links
touching the faulty node exactly d - ũ.  In world ``i`` node i+1 runs on the
identity clock and node i+2 on a clock that runs fast until it leads real
time by 2ũ/3.  Each node is honest in two worlds and must not be able to tell
them apart.  The three worlds run on one event queue.  Whenever an honest node
s sends to an honest node j in world k, the faulty copy of s in world s
replays the same message to j so it arrives at the same *local* time at j.
Every replay passes the unforgeability gate, and the availability margin
from the construction's induction is asserted on top of it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from ..core import ClockSchedule, SystemParams, fmt_rational
from ..cps import CpsNode
from ..des import (
    Adversary,
    AdversaryView,
    Engine,
    ExecutionTrace,
    MaxDelay,
    NodeBehavior,
    NodeContext,
    World,
    local_view,
    serialize,
)
from ..signatures import embedded_tokens

__all__ = [
    "ConstructionError",
    "ExecutionTriple",
    "IndistinguishabilityError",
    "LowerBoundReport",
    "build_execution_triple",
    "cps_behavior",
    "free_running",
    "never_sends",
    "pulse_round_bound",
    "verify_lower_bound",
]

BehaviorFactory = Callable[[SystemParams, int], NodeBehavior]


class ConstructionError(RuntimeError):
    """The triple violates one of its structural requirements."""


class IndistinguishabilityError(ConstructionError):
    """A node's local views differ between its two worlds."""


def cps_behavior(params: SystemParams, node: int) -> NodeBehavior:
    # the fault budget is exceeded on purpose (ũ > u), so ⊥ overflow must not abort
    return CpsNode(params, strict=False)


class _FreeRunning(NodeBehavior):
    def __init__(self, first, period):
        self.first, self.period, self.index = first, period, 0

    def on_start(self, ctx: NodeContext) -> None:
        ctx.set_timer(self.first, "pulse")

    def on_timer(self, ctx: NodeContext, tag) -> None:
        self.index += 1
        ctx.pulse(self.index)
        ctx.set_timer(ctx.now + self.period, "pulse")


def free_running(period=None, first=None) -> BehaviorFactory:
    """Pulses every ``period`` local time units, starting at local ``first``; ignores the network."""
    def factory(params: SystemParams, node: int) -> NodeBehavior:
        return _FreeRunning(params.S if first is None else Fraction(first),
                            params.T if period is None else Fraction(period))
    return factory


def never_sends(params: SystemParams, node: int) -> NodeBehavior:
    return NodeBehavior()


def pulse_round_bound(u_tilde: Fraction, p_min: Fraction, theta: Fraction) -> int:
    """r* = ceil(ũ / (P_min (theta - 1))) + 1: first pulse index past the fast clock's breakpoint."""
    return math.ceil(Fraction(u_tilde) / (Fraction(p_min) * (Fraction(theta) - 1))) + 1


@dataclass
class _Replay:
    world: int
    sender: int
    recipient: int
    message: Any
    send_time: Fraction
    deliver_at: Fraction
    local_arrival: Fraction


class _ReplayAdversary(Adversary):
    def __init__(self, index: int, coordinator: "_Coordinator"):
        super().__init__({index})
        self.index = index
        self.coordinator = coordinator

    def link_delay(self, world, sender, receiver, t, message):
        return world.params.d - world.params.u_tilde

    def on_honest_send(self, view, sender, recipient, message, deliver_at):
        # self-messages have no faulty counterpart to replay them
        if recipient != self.index and recipient != sender:
            self.coordinator.replay(self.index, sender, recipient, message, deliver_at)


class _Coordinator:
    def __init__(self, params: SystemParams):
        self.params = params
        self.engine: Optional[Engine] = None
        self.worlds: list[World] = []
        self.replays: list[_Replay] = []

    def replay(self, source_world: int, sender: int, recipient: int, message: Any,
               deliver_at: Fraction) -> None:
        # the sender is faulty in its own world; make j see the same local arrival there
        src, dst = self.worlds[source_world], self.worlds[sender]
        local = src.clocks[recipient].local_time(deliver_at)
        arrive = dst.clocks[recipient].inverse(local)
        wire = self.params.d - self.params.u_tilde
        send_time = arrive - wire
        if send_time < self.engine.now:
            raise ConstructionError(
                f"replay of {sender}->{recipient} would have to be sent in the past")
        self.replays.append(_Replay(sender, sender, recipient, message, send_time, arrive, local))
        AdversaryView(self.engine, dst).send_at(send_time, sender, recipient, message, wire)


@dataclass
class ExecutionTriple:
    params: SystemParams
    traces: list[ExecutionTrace]
    clocks: list[dict[int, ClockSchedule]]
    horizon: Fraction
    replays: list[_Replay] = field(default_factory=list)
    audit: dict[str, Any] = field(default_factory=dict)

    def pulse_time(self, world: int, node: int, index: int) -> Fraction:
        try:
            return self.traces[world].pulses()[node][index]
        except KeyError:
            raise ConstructionError(
                f"node {node} never emitted pulse {index} in world {world}; horizon too short") from None


def _first_difference(a: tuple, b: tuple) -> Any:
    for k, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return k, x, y
    return min(len(a), len(b)), a[len(b):][:1], b[len(a):][:1]


def _audit_properties(triple: ExecutionTriple) -> dict[str, Any]:
    p = triple.params
    fast = ClockSchedule.lower_bound_clock(p.theta, p.u_tilde)
    delays = 0
    for i, trace in enumerate(triple.traces):
        if trace.clocks[(i + 1) % 3] != ClockSchedule.identity():
            raise ConstructionError(f"world {i}: node {(i + 1) % 3} must run on the identity clock")
        if trace.clocks[(i + 2) % 3] != fast:
            raise ConstructionError(f"world {i}: node {(i + 2) % 3} must run on the shifted clock")
        for ev in trace.events:
            if ev.kind != "recv":
                continue
            faulty_link = i in (ev.src, ev.dst)
            want = p.d - p.u_tilde if faulty_link else p.d
            if ev.t - ev.send_time != want:
                raise ConstructionError(
                    f"world {i}: delay {ev.t - ev.send_time} on {ev.src}->{ev.dst}, expected {want}")
            delays += 1
    return {"properties_ok": True, "delays_checked": delays}


def _audit_availability(triple: ExecutionTriple, worlds: list[World]) -> dict[str, Any]:
    """Every honest token in a replay was seen by the faulty node by h̄ - d + ũ/3 (h̄ = local arrival)."""
    p = triple.params
    checked = 0
    worst: Optional[Fraction] = None
    for rp in triple.replays:
        if rp.deliver_at > triple.horizon:
            continue
        world = worlds[rp.world]
        deadline = rp.local_arrival - p.d + p.u_tilde / 3
        for tok in embedded_tokens(rp.message):
            if tok.signer == rp.world:
                continue
            seen = world.ledger.observed_at(tok)
            if seen is None or seen > deadline:
                raise ConstructionError(
                    f"world {rp.world}: {tok} needed by {deadline} but observed at {seen}")
            checked += 1
            slack = deadline - seen
            worst = slack if worst is None else min(worst, slack)
    return {"availability_ok": True, "availability_checked": checked,
            "availability_min_slack": worst}


def build_execution_triple(behavior: BehaviorFactory, params: SystemParams,
                           horizon, max_events: int = 5_000_000) -> ExecutionTriple:
    """Co-simulate the three worlds up to real time ``horizon`` and audit them.

    Raises :class:`IndistinguishabilityError` if some node's local views in
    its two worlds differ up to local time ``horizon``, and
    :class:`ConstructionError` (or ``ForgeryError``) on any other broken
    requirement.
    """
    if params.n != 3:
        raise ValueError("the construction needs exactly 3 nodes")
    if not params.d > 2 * params.u_tilde / 3:
        raise ValueError("the construction needs d > 2ũ/3")
    horizon = Fraction(horizon)
    params = params.with_(f=1)
    fast = ClockSchedule.lower_bound_clock(params.theta, params.u_tilde)
    coord = _Coordinator(params)
    worlds, clocks = [], []
    for i in range(3):
        cl = {(i + 1) % 3: ClockSchedule.identity(), (i + 2) % 3: fast}
        beh = {v: behavior(params, v) for v in cl}
        worlds.append(World(params, cl, beh, MaxDelay(), _ReplayAdversary(i, coord), index=i))
        clocks.append(cl)
    engine = Engine(worlds, max_events=max_events)
    coord.engine, coord.worlds = engine, worlds
    engine.run(horizon)

    triple = ExecutionTriple(params, [w.trace for w in worlds], clocks, horizon, coord.replays)
    triple.audit.update(_audit_properties(triple))
    triple.audit.update(_audit_availability(triple, worlds))
    triple.audit["faulty_sends"] = sum(w.sends_checked for w in worlds)
    for i in range(3):
        a = local_view(triple.traces[(i + 1) % 3], i, horizon)
        b = local_view(triple.traces[(i + 2) % 3], i, horizon)
        if a != b:
            k, x, y = _first_difference(a, b)
            raise IndistinguishabilityError(
                f"node {i}: views differ at entry {k}: {serialize(x)} vs {serialize(y)}")
    triple.audit["indistinguishability_ok"] = True
    return triple


@dataclass
class LowerBoundReport:
    params: SystemParams
    r_star: int
    pulse_times: dict[int, dict[int, Fraction]]  # world -> node -> time of pulse r*
    differences: dict[int, Fraction]  # world k: p_{k+1} - p_{k+2}
    skews: dict[int, Fraction]
    difference_sum: Fraction
    sum_identity_ok: bool
    shift_identity_ok: bool
    indistinguishability_ok: bool
    max_skew: Fraction
    bound: Fraction
    bound_ok: bool
    audit: dict[str, Any]

    def to_json(self) -> dict:
        f = fmt_rational
        return {
            "params": self.params.to_json(),
            "r_star": self.r_star,
            "pulse_times": {str(k): {str(v): f(t) for v, t in sorted(m.items())}
                            for k, m in sorted(self.pulse_times.items())},
            "differences": {str(k): f(x) for k, x in sorted(self.differences.items())},
            "skews": {str(k): f(x) for k, x in sorted(self.skews.items())},
            "difference_sum": f(self.difference_sum),
            "sum_identity_ok": self.sum_identity_ok,
            "shift_identity_ok": self.shift_identity_ok,
            "indistinguishability_ok": self.indistinguishability_ok,
            "max_skew": f(self.max_skew),
            "bound": f(self.bound),
            "bound_ok": self.bound_ok,
            "audit": serialize(self.audit),
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def verify_lower_bound(triple: ExecutionTriple, r_star: int) -> LowerBoundReport:
    """Pulse-time differences at index ``r_star`` and the identities they must satisfy."""
    p = triple.params
    times = {k: {v: triple.pulse_time(k, v, r_star) for v in ((k + 1) % 3, (k + 2) % 3)}
             for k in range(3)}
    diffs = {k: times[k][(k + 1) % 3] - times[k][(k + 2) % 3] for k in range(3)}
    total = sum(diffs.values(), Fraction(0))
    # node i runs the shifted clock in world i+1 and the identity clock in world i+2
    shift_ok = all(times[(i + 1) % 3][i] == times[(i + 2) % 3][i] - 2 * p.u_tilde / 3
                   for i in range(3))
    skews = {k: abs(x) for k, x in diffs.items()}
    max_skew = max(skews.values())
    bound = 2 * p.u_tilde / 3
    return LowerBoundReport(
        params=p, r_star=r_star, pulse_times=times, differences=diffs, skews=skews,
        difference_sum=total, sum_identity_ok=total == 2 * p.u_tilde,
        shift_identity_ok=shift_ok,
        indistinguishability_ok=bool(triple.audit.get("indistinguishability_ok")),
        max_skew=max_skew, bound=bound, bound_ok=max_skew >= bound, audit=dict(triple.audit))
