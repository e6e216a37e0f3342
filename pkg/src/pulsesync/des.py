"""Deterministic discrete-event simulation over exact continuous time.

An :class:`Engine` advances one or more *worlds* (executions) on a single
event queue ordered by real time.  A plain simulation has one world; the
lower-bound construction co-simulates three.  Honest behaviors only ever see
their own hardware clock and message contents; the adversary sees
everything, but every message a faulty node sends is checked against the
observation ledger before it leaves.
"""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .core import ClockSchedule, SystemParams, as_rational, fmt_rational
from .signatures import (
    ForgeryError,
    ObservationLedger,
    SignatureToken,
    adversary_may_send,
    missing_tokens,
    sign,
)

__all__ = [
    "Adversary",
    "AdversaryView",
    "DelayPolicy",
    "Engine",
    "EventStorm",
    "ExecutionTrace",
    "FixedDelay",
    "FunctionDelay",
    "MaxDelay",
    "MinDelay",
    "NodeBehavior",
    "NodeContext",
    "RandomDelay",
    "SimulationError",
    "TraceEvent",
    "World",
    "local_view",
    "run_simulation",
    "serialize",
]

# event ranks within one (time, world, node) slot
_DELIVERY, _TIMER, _ADVERSARY = 0, 1, 2


class SimulationError(RuntimeError):
    """Model violation detected while simulating (bad delay, past wakeup, ...)."""


class EventStorm(SimulationError):
    """More events than the configured maximum."""


def serialize(obj: Any) -> Any:
    """JSON-ready canonical form of a message, note or value (rationals as ``num/den``)."""
    if isinstance(obj, Fraction):
        return fmt_rational(obj)
    if isinstance(obj, SignatureToken):
        return str(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, (list, tuple)):
        return [serialize(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted((serialize(x) for x in obj), key=repr)
    if isinstance(obj, Mapping):
        return {str(k): serialize(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"type": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = serialize(getattr(obj, f.name))
        return out
    return repr(obj)


def _content_key(obj: Any) -> str:
    return json.dumps(serialize(obj), sort_keys=True, ensure_ascii=False)


@dataclass(frozen=True)
class TraceEvent:
    t: Fraction
    kind: str  # "send" | "recv" | "pulse" | "note"
    src: Optional[int]
    dst: Optional[int]
    local_time: Optional[Fraction]
    payload: Any = None
    pulse_index: Optional[int] = None
    send_time: Optional[Fraction] = None

    def to_json(self) -> dict:
        return {
            "t": fmt_rational(self.t),
            "kind": self.kind,
            "from": self.src,
            "to": self.dst,
            "local_time": None if self.local_time is None else fmt_rational(self.local_time),
            "payload": serialize(self.payload),
            "pulse_index": self.pulse_index,
        }


@dataclass
class ExecutionTrace:
    n: int
    corrupted: frozenset[int]
    clocks: dict[int, ClockSchedule]
    events: list[TraceEvent] = field(default_factory=list)
    params: Optional[SystemParams] = None
    horizon: Optional[Fraction] = None

    @property
    def honest(self) -> list[int]:
        return [v for v in range(self.n) if v not in self.corrupted]

    def pulses(self) -> dict[int, dict[int, Fraction]]:
        """``pulses()[v][i]`` is the real time of honest node v's pulse i."""
        out: dict[int, dict[int, Fraction]] = {v: {} for v in self.honest}
        for ev in self.events:
            if ev.kind == "pulse" and ev.src in out:
                out[ev.src].setdefault(ev.pulse_index, ev.t)
        return out

    def pulse_counts(self) -> dict[int, dict[int, int]]:
        out: dict[int, dict[int, int]] = {v: {} for v in self.honest}
        for ev in self.events:
            if ev.kind == "pulse" and ev.src in out:
                out[ev.src][ev.pulse_index] = out[ev.src].get(ev.pulse_index, 0) + 1
        return out

    def notes(self, kind: Optional[str] = None) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind == "note"
                and (kind is None or ev.payload.get("kind") == kind)]

    def message_events(self) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind in ("send", "recv")]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(ev.to_json(), sort_keys=True, ensure_ascii=False) + "\n"
                       for ev in self.events)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())


def local_view(trace: ExecutionTrace, node: int,
               until_local: Optional[Fraction] = None) -> tuple:
    """Everything ``node`` can observe: sends, receipts and pulses, stamped in local time.

    Two traces are indistinguishable to ``node`` iff their views compare equal.
    """
    out = []
    for ev in trace.events:
        if ev.local_time is None:
            continue
        if until_local is not None and ev.local_time > until_local:
            continue
        if ev.kind == "recv" and ev.dst == node:
            out.append(("recv", ev.local_time, ev.src, ev.payload))
        elif ev.kind == "send" and ev.src == node:
            out.append(("send", ev.local_time, ev.dst, ev.payload))
        elif ev.kind == "pulse" and ev.src == node:
            out.append(("pulse", ev.local_time, ev.pulse_index))
    return tuple(out)


class DelayPolicy:
    """Maps (sender, receiver, send time, message) to a delay; see subclasses."""

    def delay(self, world: "World", sender: int, receiver: int, t: Fraction,
              message: Any, faulty_link: bool) -> Fraction:
        raise NotImplementedError

    @staticmethod
    def band(params: SystemParams, faulty_link: bool) -> tuple[Fraction, Fraction]:
        width = params.u_tilde if faulty_link else params.u
        return params.d - width, params.d


class MaxDelay(DelayPolicy):
    def delay(self, world, sender, receiver, t, message, faulty_link):
        return world.params.d


class MinDelay(DelayPolicy):
    def delay(self, world, sender, receiver, t, message, faulty_link):
        return self.band(world.params, faulty_link)[0]


class FixedDelay(DelayPolicy):
    def __init__(self, value):
        self.value = as_rational(value)

    def delay(self, world, sender, receiver, t, message, faulty_link):
        return self.value


class FunctionDelay(DelayPolicy):
    def __init__(self, fn: Callable[..., Fraction]):
        self.fn = fn

    def delay(self, world, sender, receiver, t, message, faulty_link):
        return self.fn(sender, receiver, t, message, faulty_link)


class RandomDelay(DelayPolicy):
    """Uniform delays on a ``grid``-point lattice of the admissible band.

    Draws come from ``random.Random(seed)`` in send order, which the engine
    keeps deterministic, so runs replay bit for bit.
    """

    def __init__(self, seed: int, grid: int = 64):
        self.seed = seed
        self.grid = grid
        self._rng = random.Random(seed)

    def delay(self, world, sender, receiver, t, message, faulty_link):
        lo, hi = self.band(world.params, faulty_link)
        return lo + (hi - lo) * Fraction(self._rng.randrange(self.grid + 1), self.grid)


class NodeBehavior:
    """Base class for node programs; override the hooks you need."""

    def on_start(self, ctx: "NodeContext") -> None:
        pass

    def on_message(self, ctx: "NodeContext", sender: int, message: Any) -> None:
        pass

    def on_timer(self, ctx: "NodeContext", tag: Any) -> None:
        pass


class NodeContext:
    """A behavior's only handle on the world: local clock, sending, timers."""

    def __init__(self, engine: "Engine", world: "World", node: int):
        self._engine = engine
        self._world = world
        self.node_id = node
        self.n = world.n

    @property
    def now(self) -> Fraction:
        return self._world.clocks[self.node_id].local_time(self._engine.now)

    def sign(self, payload: bytes) -> SignatureToken:
        return sign(self.node_id, payload)

    def send(self, recipient: int, message: Any) -> None:
        self._engine._send(self._world, self.node_id, recipient, message)

    def broadcast(self, message: Any, include_self: bool = True) -> None:
        for w in range(self.n):
            if include_self or w != self.node_id:
                self.send(w, message)

    def set_timer(self, local_time: Fraction, tag: Any) -> None:
        now = self.now
        if local_time < now:
            raise SimulationError(
                f"node {self.node_id} asked for wakeup at local time {local_time} < now {now}")
        t = self._world.clocks[self.node_id].inverse(local_time)
        self._engine._push(t, self._world, self.node_id, _TIMER, "", tag, ("timer", tag))

    def pulse(self, index: int) -> None:
        self._world._record(TraceEvent(self._engine.now, "pulse", self.node_id, None,
                                       self.now, pulse_index=index))

    def log(self, kind: str, **data: Any) -> None:
        self._world._record(TraceEvent(self._engine.now, "note", self.node_id, None,
                                       self.now, payload={"kind": kind, **data}))


class Adversary:
    """Controls the corrupted nodes.  Default: a silent adversary.

    ``puppets`` may run an ordinary behavior on a corrupted node (with its own
    clock); all of its sends still go through the forgery gate.
    """

    def __init__(self, corrupted: Iterable[int] = ()):
        self.corrupted = frozenset(corrupted)

    def puppets(self, world: "World") -> dict[int, tuple[NodeBehavior, ClockSchedule]]:
        return {}

    def link_delay(self, world: "World", sender: int, receiver: int, t: Fraction,
                   message: Any) -> Optional[Fraction]:
        """Delay for a link with a faulty endpoint, or None to defer to the policy."""
        return None

    def on_start(self, view: "AdversaryView") -> None:
        pass

    def on_honest_send(self, view: "AdversaryView", sender: int, recipient: int,
                       message: Any, deliver_at: Fraction) -> None:
        pass

    def on_faulty_receive(self, view: "AdversaryView", node: int, sender: int,
                          message: Any) -> None:
        pass

    def on_timer(self, view: "AdversaryView", tag: Any) -> None:
        pass


class AdversaryView:
    def __init__(self, engine: "Engine", world: "World"):
        self.engine = engine
        self.world = world

    @property
    def now(self) -> Fraction:
        return self.engine.now

    @property
    def params(self) -> SystemParams:
        return self.world.params

    @property
    def ledger(self) -> ObservationLedger:
        return self.world.ledger

    def send(self, sender: int, recipient: int, message: Any,
             delay: Optional[Fraction] = None) -> None:
        if sender not in self.world.corrupted:
            raise ForgeryError(f"adversary cannot send as honest node {sender}")
        self.engine._send(self.world, sender, recipient, message, delay)

    def send_at(self, t: Fraction, sender: int, recipient: int, message: Any,
                delay: Optional[Fraction] = None) -> None:
        """Schedule a faulty send at real time ``t`` (gated when it happens)."""
        if t < self.engine.now:
            raise SimulationError("cannot schedule a send in the past")
        self.engine._push(t, self.world, sender, _ADVERSARY, recipient, message,
                          ("send", sender, recipient, message, delay))

    def set_timer(self, t: Fraction, tag: Any) -> None:
        if t < self.engine.now:
            raise SimulationError("cannot schedule a timer in the past")
        self.engine._push(t, self.world, -1, _ADVERSARY, "", tag, ("adv_timer", tag))


class World:
    """One execution: nodes, clocks, corruption, delays, ledger and trace."""

    def __init__(
        self,
        params: SystemParams,
        clocks: Mapping[int, ClockSchedule],
        behaviors: Mapping[int, NodeBehavior],
        delay_policy: Optional[DelayPolicy] = None,
        adversary: Optional[Adversary] = None,
        index: int = 0,
    ):
        self.params = params
        self.n = params.n
        self.index = index
        self.adversary = adversary or Adversary()
        self.corrupted = frozenset(self.adversary.corrupted)
        if len(self.corrupted) > params.f:
            raise SimulationError(f"{len(self.corrupted)} corrupted nodes exceed f={params.f}")
        self.delay_policy = delay_policy or MaxDelay()
        self.behaviors: dict[int, NodeBehavior] = {}
        self.clocks: dict[int, ClockSchedule] = {}
        for v in range(self.n):
            if v in self.corrupted:
                continue
            if v not in behaviors or v not in clocks:
                raise SimulationError(f"honest node {v} needs a behavior and a clock")
            clocks[v].check_rates(params.theta)
            self.behaviors[v] = behaviors[v]
            self.clocks[v] = clocks[v]
        for v, (beh, clock) in self.adversary.puppets(self).items():
            if v not in self.corrupted:
                raise SimulationError(f"puppet {v} is not corrupted")
            self.behaviors[v] = beh
            self.clocks[v] = clock
        self.ledger = ObservationLedger()
        self.trace = ExecutionTrace(self.n, self.corrupted,
                                    {v: c for v, c in self.clocks.items() if v not in self.corrupted},
                                    params=params)
        self.sends_checked = 0

    def local_time(self, node: int, t: Fraction) -> Optional[Fraction]:
        if node in self.corrupted:
            return None
        return self.clocks[node].local_time(t)

    def _record(self, ev: TraceEvent) -> None:
        if ev.src in self.corrupted and ev.kind in ("pulse", "note"):
            return  # puppets' internal bookkeeping is not part of the execution
        self.trace.events.append(ev)


class Engine:
    def __init__(self, worlds: Sequence[World], max_events: int = 2_000_000):
        self.worlds = list(worlds)
        for i, w in enumerate(self.worlds):
            w.index = i
        self.max_events = max_events
        self.now = Fraction(0)
        self._queue: list = []
        self._seq = itertools.count()
        self.processed = 0

    def _push(self, t: Fraction, world: World, target: int, rank: int,
              sender: Any, content: Any, item: tuple) -> None:
        key = (t, world.index, target, rank, str(sender), _content_key(content), next(self._seq))
        heapq.heappush(self._queue, (key, item))

    def _send(self, world: World, sender: int, recipient: int, message: Any,
              delay: Optional[Fraction] = None) -> None:
        t = self.now
        faulty_link = sender in world.corrupted or recipient in world.corrupted
        if sender in world.corrupted:
            world.sends_checked += 1
            if not adversary_may_send(world.ledger, message, t, world.corrupted):
                missing = ", ".join(map(str, missing_tokens(world.ledger, message, t, world.corrupted)))
                raise ForgeryError(
                    f"world {world.index}: node {sender} sends at t={t} unobserved {missing}")
        if delay is None and faulty_link:
            delay = world.adversary.link_delay(world, sender, recipient, t, message)
        if delay is None:
            delay = world.delay_policy.delay(world, sender, recipient, t, message, faulty_link)
        delay = as_rational(delay)
        lo, hi = DelayPolicy.band(world.params, faulty_link)
        if not lo <= delay <= hi:
            raise SimulationError(f"delay {delay} outside [{lo}, {hi}] on link {sender}->{recipient}")
        world._record(TraceEvent(t, "send", sender, recipient, world.local_time(sender, t),
                                 message, send_time=t))
        deliver_at = t + delay
        self._push(deliver_at, world, recipient, _DELIVERY, sender, message,
                   ("deliver", sender, recipient, message, t))
        if sender not in world.corrupted:
            world.adversary.on_honest_send(AdversaryView(self, world), sender, recipient,
                                           message, deliver_at)

    def _dispatch(self, world: World, target: int, item: tuple) -> None:
        kind = item[0]
        if kind == "timer":
            world.behaviors[target].on_timer(NodeContext(self, world, target), item[1])
        elif kind == "deliver":
            _, sender, recipient, message, sent = item
            world._record(TraceEvent(self.now, "recv", sender, recipient,
                                     world.local_time(recipient, self.now), message, send_time=sent))
            if recipient in world.corrupted:
                world.ledger.observe_message(message, self.now)
                world.adversary.on_faulty_receive(AdversaryView(self, world), recipient, sender, message)
            beh = world.behaviors.get(recipient)
            if beh is not None:
                beh.on_message(NodeContext(self, world, recipient), sender, message)
        elif kind == "send":
            _, sender, recipient, message, delay = item
            self._send(world, sender, recipient, message, delay)
        elif kind == "adv_timer":
            world.adversary.on_timer(AdversaryView(self, world), item[1])

    def run(self, horizon) -> None:
        horizon = as_rational(horizon)
        for world in self.worlds:
            world.trace.horizon = horizon
            world.adversary.on_start(AdversaryView(self, world))
            for v in sorted(world.behaviors):
                world.behaviors[v].on_start(NodeContext(self, world, v))
        while self._queue:
            key, item = self._queue[0]
            if key[0] > horizon:
                break
            heapq.heappop(self._queue)
            self.processed += 1
            if self.processed > self.max_events:
                raise EventStorm(f"more than {self.max_events} events before t={key[0]}")
            self.now = key[0]
            self._dispatch(self.worlds[key[1]], key[2], item)


def run_simulation(
    params: SystemParams,
    clocks: Mapping[int, ClockSchedule],
    behaviors: Mapping[int, NodeBehavior],
    delay_policy: Optional[DelayPolicy] = None,
    adversary: Optional[Adversary] = None,
    horizon=100,
    max_events: int = 2_000_000,
) -> ExecutionTrace:
    world = World(params, clocks, behaviors, delay_policy, adversary)
    Engine([world], max_events=max_events).run(horizon)
    return world.trace
