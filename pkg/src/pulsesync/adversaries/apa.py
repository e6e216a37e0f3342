"""Adversaries for the lock-step crusader broadcast / approximate agreement engine."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Iterable

from ..sync import CbMessage, SyncSend, SyncView

__all__ = ["ApaConsistentLiar", "ApaEquivocator", "ApaSilent", "APA_ADVERSARIES"]


class ApaSilent:
    def __init__(self, corrupted: Iterable[int] = (), seed: int = 0):
        self.corrupted = frozenset(corrupted)

    def act(self, view: SyncView) -> Iterable[SyncSend]:
        return ()


def _honest_range(view: SyncView) -> tuple[Fraction, Fraction]:
    vals = [Fraction(s.message.value) for s in view.honest_sends]
    return (min(vals), max(vals)) if vals else (Fraction(0), Fraction(0))


def _direct(view: SyncView, node: int) -> dict[int, CbMessage]:
    """Dealer messages a faulty node received directly in round 1."""
    out: dict[int, CbMessage] = {}
    for sender, msg in view.inbox.get(node, []):
        if sender == msg.instance:
            out.setdefault(msg.instance, msg)
    return out


class ApaConsistentLiar:
    """Each faulty node deals one value far outside the honest range, to everyone, and echoes honestly."""

    def __init__(self, corrupted: Iterable[int] = (), seed: int = 0):
        self.corrupted = frozenset(corrupted)
        self.rng = random.Random(seed)
        self._dealt: dict[int, CbMessage] = {}

    def act(self, view: SyncView) -> Iterable[SyncSend]:
        out = []
        if view.round == 1:
            lo, hi = _honest_range(view)
            width = hi - lo + 1
            self._dealt = {}
            for c in sorted(view.corrupted):
                value = (hi + width * self.rng.randint(1, 4) if self.rng.random() < 0.5
                         else lo - width * self.rng.randint(1, 4))
                msg = CbMessage(c, value, view.sign_as(c, value))
                self._dealt[c] = msg
                out.extend(SyncSend(c, w, msg) for w in range(view.n))
        else:
            for c in sorted(view.corrupted):
                seen = _direct(view, c)
                seen.update(self._dealt)
                for inst in sorted(seen):
                    out.extend(SyncSend(c, w, seen[inst]) for w in range(view.n))
        return out


class ApaEquivocator:
    """Faulty dealers send conflicting values or nothing per recipient; echoes are selective."""

    def __init__(self, corrupted: Iterable[int] = (), seed: int = 0):
        self.corrupted = frozenset(corrupted)
        self.rng = random.Random(seed)
        self._dealt: dict[int, list[CbMessage]] = {}

    def _value(self, lo: Fraction, hi: Fraction) -> Fraction:
        width = hi - lo
        pick = self.rng.randrange(4)
        if pick == 0:
            return lo
        if pick == 1:
            return hi
        span = (width + 1) * 3
        return lo - width - 1 + span * Fraction(self.rng.randrange(65), 64)

    def act(self, view: SyncView) -> Iterable[SyncSend]:
        out = []
        if view.round == 1:
            lo, hi = _honest_range(view)
            self._dealt = {}
            for c in sorted(view.corrupted):
                options = []
                for value in (self._value(lo, hi), self._value(lo, hi)):
                    options.append(CbMessage(c, value, view.sign_as(c, value)))
                self._dealt[c] = options
                for w in range(view.n):
                    choice = self.rng.randrange(3)
                    if choice < 2:
                        out.append(SyncSend(c, w, options[choice]))
        else:
            for c in sorted(view.corrupted):
                known: dict[int, list[CbMessage]] = {k: list(v) for k, v in self._dealt.items()}
                for inst, msg in _direct(view, c).items():
                    known.setdefault(inst, []).append(msg)
                for inst in sorted(known):
                    for w in range(view.n):
                        if self.rng.random() < 0.5:
                            out.append(SyncSend(c, w, self.rng.choice(known[inst])))
        return out


APA_ADVERSARIES = {
    "silent": ApaSilent,
    "consistent_liar": ApaConsistentLiar,
    "equivocator": ApaEquivocator,
}
