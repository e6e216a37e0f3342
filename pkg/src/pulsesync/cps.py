"""Timed crusader broadcast and crusader pulse synchronization.

Each node pulses, broadcasts a signed round token shortly after, and runs one
timed-crusader-broadcast instance per dealer.  The reception times it
accepts become offset estimates; trimming and taking the midpoint of the
survivors gives the correction that places the next pulse.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from .core import SystemParams
from .des import NodeBehavior, NodeContext
from .signatures import SignatureToken, encode_payload, verify
from .sync import ModelViolation

__all__ = [
    "CpsNode",
    "TcbInstance",
    "TcbMessage",
    "cps_compute_correction",
    "estimate_offset",
    "tcb_dealer_send_time",
    "tcb_payload",
]


def tcb_payload(round_: int) -> bytes:
    return encode_payload("tcb", round_, "pulse")


@dataclass(frozen=True)
class TcbMessage:
    round: int
    dealer: int
    token: SignatureToken


def tcb_dealer_send_time(pulse_local: Fraction, params: SystemParams) -> Fraction:
    return pulse_local + params.theta * params.S


class TcbInstance:
    """Receiver side of one TCB instance (round ``round``, dealer ``dealer``) at ``owner``.

    Local times only.  ``on_token`` returns True exactly when the dealer's
    token is accepted, i.e. when the owner must forward it to everyone.
    The acceptance window is open below and closed above: an honest dealer's
    token can arrive exactly at the upper end (extreme skew, drift and delay).
    """

    def __init__(self, round_: int, dealer: int, owner: int, pulse_local: Fraction,
                 params: SystemParams):
        self.round = round_
        self.dealer = dealer
        self.owner = owner
        self.pulse_local = pulse_local
        self.window_end = pulse_local + params.acceptance_window
        self.quiet = params.quiet_window
        self.h: Optional[Fraction] = None
        self.first_relay: Optional[Fraction] = None
        self.done = False
        self.output: Optional[Fraction] = None  # None doubles as ⊥ once done

    @property
    def finalize_at(self) -> Fraction:
        return (self.h if self.h is not None else self.window_end) + self.quiet

    def on_token(self, sender: int, token: SignatureToken, local: Fraction) -> bool:
        if self.done or not verify(self.dealer, token, tcb_payload(self.round)):
            return False
        if local <= self.pulse_local:
            return False
        if sender == self.dealer:
            if self.h is None and local <= self.window_end:
                self.h = local
                return True
            return False
        if self.first_relay is None or local < self.first_relay:
            self.first_relay = local
        return False

    def finalize(self) -> Optional[Fraction]:
        h = self.h
        conflict = (h is not None and self.first_relay is not None
                    and self.first_relay < h + self.quiet)
        self.output = None if h is None or conflict else h
        self.done = True
        return self.output


def estimate_offset(h: Fraction, pulse_local: Fraction, params: SystemParams) -> Fraction:
    """Offset estimate from an accepted reception time: h - H(p) - d + u - S."""
    return h - pulse_local - params.d + params.u - params.S


def cps_compute_correction(
    estimates: Mapping[int, Optional[Fraction]], f: int, strict: bool = True
) -> tuple[Fraction, int, tuple[Fraction, Fraction]]:
    """Trimmed-midpoint correction from per-dealer estimates (None is ⊥).

    Returns ``(correction, bots, (lo, hi))``.  With ``strict`` more than ``f``
    ⊥ estimates is a model violation; otherwise nothing is discarded.
    """
    present = sorted((est, w) for w, est in estimates.items() if est is not None)
    bots = len(estimates) - len(present)
    keep_from = f - bots
    if keep_from < 0:
        if strict:
            raise ModelViolation(f"{bots} ⊥ estimates exceed f={f}")
        keep_from = 0
    if not present:
        return Fraction(0), bots, (Fraction(0), Fraction(0))
    lo_idx, hi_idx = keep_from, len(present) - 1 - keep_from
    if lo_idx > hi_idx:
        raise ModelViolation("discard step leaves no estimate")
    lo, hi = present[lo_idx][0], present[hi_idx][0]
    return (lo + hi) / 2, bots, (lo, hi)


class CpsNode(NodeBehavior):
    """Crusader pulse synchronization at one node.

    ``max_pulses`` stops the loop after that pulse (its broadcast instances
    still complete).  ``strict=False`` keeps running where the model's
    guarantees have already failed: more than ``f`` instances ending in ⊥ is
    tolerated and a next pulse computed to lie in the past happens at once.
    The lower-bound attack and corrupted puppets use it.
    """

    def __init__(self, params: SystemParams, max_pulses: Optional[int] = None,
                 strict: bool = True):
        self.params = params
        self.max_pulses = max_pulses
        self.strict = strict
        self.round = 0
        self.pulse_local: Optional[Fraction] = None
        self.instances: dict[int, TcbInstance] = {}
        self.corrections: dict[int, Fraction] = {}

    def on_start(self, ctx: NodeContext) -> None:
        ctx.set_timer(self.params.S, ("pulse", 1))

    def on_timer(self, ctx: NodeContext, tag) -> None:
        kind = tag[0]
        if kind == "pulse":
            self._pulse(ctx, tag[1])
        elif kind == "deal" and tag[1] == self.round:
            self._deal(ctx)
        elif kind == "loopback" and tag[1] == self.round:
            self._receive(ctx, ctx.node_id, tag[2])
        elif kind == "final" and tag[1] == self.round:
            for w in ([tag[2]] if len(tag) > 2 else range(ctx.n)):
                inst = self.instances[w]
                if not inst.done and inst.finalize_at <= ctx.now:
                    self._finalize(ctx, inst)

    def _pulse(self, ctx: NodeContext, r: int) -> None:
        self.round = r
        self.pulse_local = ctx.now
        ctx.pulse(r)
        self.instances = {w: TcbInstance(r, w, ctx.node_id, self.pulse_local, self.params)
                          for w in range(ctx.n)}
        ctx.set_timer(tcb_dealer_send_time(self.pulse_local, self.params), ("deal", r))
        ctx.set_timer(self.instances[0].window_end + self.params.quiet_window, ("final", r))

    def _deal(self, ctx: NodeContext) -> None:
        msg = TcbMessage(self.round, ctx.node_id, ctx.sign(tcb_payload(self.round)))
        self._send_dealer_token(ctx, msg)
        # own instance: local loopback instead of a network self-message
        ctx.set_timer(ctx.now + self.params.d - self.params.u, ("loopback", self.round, msg))

    def _send_dealer_token(self, ctx: NodeContext, msg: TcbMessage) -> None:
        ctx.broadcast(msg, include_self=False)

    def on_message(self, ctx: NodeContext, sender: int, message) -> None:
        if isinstance(message, TcbMessage):
            self._receive(ctx, sender, message)

    def _receive(self, ctx: NodeContext, sender: int, msg: TcbMessage) -> None:
        if msg.round != self.round or msg.dealer not in self.instances:
            return
        inst = self.instances[msg.dealer]
        if inst.on_token(sender, msg.token, ctx.now):
            ctx.log("tcb_accept", round=self.round, dealer=msg.dealer, h=inst.h)
            if msg.dealer != ctx.node_id:
                ctx.broadcast(msg, include_self=False)
            ctx.set_timer(inst.finalize_at, ("final", self.round, msg.dealer))

    def _finalize(self, ctx: NodeContext, inst: TcbInstance) -> None:
        out = inst.finalize()
        ctx.log("tcb_output", round=inst.round, dealer=inst.dealer, h=out,
                relay=inst.first_relay)
        if all(i.done for i in self.instances.values()):
            self._correct(ctx)

    def _correct(self, ctx: NodeContext) -> None:
        r, p_local = self.round, self.pulse_local
        estimates = {
            w: None if inst.output is None else estimate_offset(inst.output, p_local, self.params)
            for w, inst in sorted(self.instances.items())
        }
        delta, bots, interval = cps_compute_correction(estimates, self.params.f, self.strict)
        self.corrections[r] = delta
        ctx.log("correction", round=r, estimates=estimates, bots=bots, delta=delta,
                interval=interval, pulse_local=p_local)
        if self.max_pulses is None or r < self.max_pulses:
            wake = p_local + delta + self.params.T
            if not self.strict and wake < ctx.now:
                wake = ctx.now  # outside the model: pulse late rather than abort
            ctx.set_timer(wake, ("pulse", r + 1))
