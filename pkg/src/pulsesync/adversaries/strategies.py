"""Byzantine strategies for the event-driven pulse protocol."""

from __future__ import annotations

from fractions import Fraction
from typing import Any, Iterable, Optional

from ..core import ClockSchedule, SystemParams, as_rational
from ..cps import CpsNode, TcbMessage
from ..des import Adversary, AdversaryView, NodeBehavior, NodeContext, SimulationError, World
from ..sync import ModelViolation

__all__ = [
    "DES_STRATEGIES",
    "EchoRusher",
    "Puppet",
    "StaggeredCps",
    "default_corrupted",
    "make_strategy",
    "strategy_consistent_liar",
    "strategy_echo_rusher",
    "strategy_equivocator",
    "strategy_silent",
]


def default_corrupted(params: SystemParams) -> frozenset[int]:
    """The last ``f`` node ids."""
    return frozenset(range(params.n - params.f, params.n))


class Puppet(NodeBehavior):
    """Runs an ordinary behavior on a corrupted node; if it trips over a model check it falls silent."""

    def __init__(self, inner: NodeBehavior):
        self.inner = inner
        self.crashed = False

    def _guard(self, fn, *args) -> None:
        if self.crashed:
            return
        try:
            fn(*args)
        except (SimulationError, ModelViolation):
            self.crashed = True

    def on_start(self, ctx):
        self._guard(self.inner.on_start, ctx)

    def on_message(self, ctx, sender, message):
        self._guard(self.inner.on_message, ctx, sender, message)

    def on_timer(self, ctx, tag):
        self._guard(self.inner.on_timer, ctx, tag)


class _PuppetAdversary(Adversary):
    def __init__(self, corrupted, make_behavior, clocks: dict[int, ClockSchedule]):
        super().__init__(corrupted)
        self.make_behavior = make_behavior
        self.clocks = clocks

    def puppets(self, world: World):
        return {c: (Puppet(self.make_behavior(c)), self.clocks[c]) for c in sorted(self.corrupted)}


class StaggeredCps(CpsNode):
    """CPS node whose dealer token reaches different recipients at different times."""

    def __init__(self, params: SystemParams, stagger: dict[int, Fraction]):
        super().__init__(params, strict=False)
        self.stagger = stagger

    def _send_dealer_token(self, ctx: NodeContext, msg: TcbMessage) -> None:
        for w in range(ctx.n):
            if w == ctx.node_id:
                continue
            extra = self.stagger.get(w, Fraction(0))
            if extra == 0:
                ctx.send(w, msg)
            else:
                ctx.set_timer(ctx.now + extra, ("stagger", self.round, w, msg))

    def on_timer(self, ctx: NodeContext, tag) -> None:
        if tag[0] == "stagger":
            if tag[1] == self.round:
                ctx.send(tag[2], tag[3])
            return
        super().on_timer(ctx, tag)


class EchoRusher(Adversary):
    """Relays every honest dealer token to the other honest nodes as fast as the faulty links allow."""

    def link_delay(self, world, sender, receiver, t, message):
        return world.params.d - world.params.u_tilde

    def on_faulty_receive(self, view: AdversaryView, node: int, sender: int, message: Any) -> None:
        if not isinstance(message, TcbMessage) or sender != message.dealer:
            return
        if message.dealer in self.corrupted or node != min(self.corrupted):
            return
        for w in range(view.world.n):
            if w in self.corrupted or w == message.dealer:
                continue
            view.send(node, w, message)


def strategy_silent(params: SystemParams, corrupted: Optional[Iterable[int]] = None) -> Adversary:
    return Adversary(default_corrupted(params) if corrupted is None else corrupted)


def strategy_consistent_liar(params: SystemParams, corrupted: Optional[Iterable[int]] = None,
                             offset=None, rate=1) -> Adversary:
    """Faulty nodes run the honest protocol on their own clock (offset in [0, S], rate in [1, theta])."""
    corrupted = default_corrupted(params) if corrupted is None else frozenset(corrupted)
    offset = params.S / 2 if offset is None else as_rational(offset)
    rate = as_rational(rate)
    if not 0 <= offset <= params.S or not 1 <= rate <= params.theta:
        raise ValueError("liar clock must stay inside the model's clock bounds")
    clocks = {c: ClockSchedule.constant(rate, offset) for c in corrupted}
    return _PuppetAdversary(corrupted, lambda c: CpsNode(params, strict=False), clocks)


def strategy_equivocator(params: SystemParams, corrupted: Optional[Iterable[int]] = None,
                         spread=None) -> Adversary:
    """Faulty dealers stagger their token over honest recipients by up to ``spread`` local time.

    The default spread equals the quiet window d - 2u, which lets an early
    recipient's echo land inside a late recipient's quiet window.
    """
    corrupted = default_corrupted(params) if corrupted is None else frozenset(corrupted)
    spread = params.quiet_window if spread is None else as_rational(spread)
    honest = [v for v in range(params.n) if v not in corrupted]
    steps = max(1, len(honest) - 1)
    stagger = {w: spread * k / steps for k, w in enumerate(honest)}
    clocks = {c: ClockSchedule.identity(params.S / 2) for c in corrupted}
    return _PuppetAdversary(corrupted, lambda c: StaggeredCps(params, stagger), clocks)


def strategy_echo_rusher(params: SystemParams, corrupted: Optional[Iterable[int]] = None) -> Adversary:
    return EchoRusher(default_corrupted(params) if corrupted is None else corrupted)


DES_STRATEGIES = {
    "silent": strategy_silent,
    "consistent_liar": strategy_consistent_liar,
    "equivocator": strategy_equivocator,
    "echo_rusher": strategy_echo_rusher,
}


def make_strategy(name: str, params: SystemParams, **knobs) -> Adversary:
    try:
        factory = DES_STRATEGIES[name]
    except KeyError:
        raise ValueError(f"unknown adversary {name!r}; choose from {sorted(DES_STRATEGIES)}") from None
    return factory(params, **knobs)
