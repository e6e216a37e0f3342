"""Lock-step synchronous execution of crusader broadcast and approximate agreement.

All ``n`` crusader-broadcast instances of one agreement iteration run side by
side in two synchronous rounds: dealers send ``(value, signature)``, then
everybody echoes what it got from each dealer.  The adversary is rushing: in
each round it sees every honest message before it picks the faulty ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Protocol

from .core import ceil_log2_ratio, fmt_rational, max_faults, spread
from .signatures import (
    ForgeryError,
    ObservationLedger,
    SignatureToken,
    adversary_may_send,
    encode_payload,
    sign,
    verify,
)

__all__ = [
    "BOT",
    "ApaIteration",
    "ApaRun",
    "CbMessage",
    "ModelViolation",
    "SyncAdversary",
    "SyncSend",
    "SyncView",
    "retained_interval",
    "run_apa",
    "run_apa_iteration",
    "run_cb",
]


class _Bot:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "⊥"

    def __reduce__(self):
        return (_Bot, ())


BOT = _Bot()


class ModelViolation(RuntimeError):
    """The run left the model: too many faults, a forgery, or a broken guarantee."""


@dataclass(frozen=True)
class CbMessage:
    instance: int  # dealer id of the broadcast instance
    value: Any
    token: Optional[SignatureToken]

    def to_json(self) -> dict:
        value = fmt_rational(self.value) if isinstance(self.value, Fraction) else self.value
        return {"instance": self.instance, "value": value,
                "sig": None if self.token is None else str(self.token)}


@dataclass(frozen=True)
class SyncSend:
    sender: int
    recipient: int
    message: CbMessage


@dataclass
class SyncView:
    """What the adversary sees when choosing faulty messages for one round."""

    n: int
    f: int
    corrupted: frozenset[int]
    iteration: int
    round: int  # 1: dealer round, 2: echo round
    tag: str
    honest_sends: list[SyncSend]
    inbox: dict[int, list[tuple[int, CbMessage]]]  # per faulty node, everything received so far
    ledger: ObservationLedger

    def payload(self, value: Any) -> bytes:
        return encode_payload(self.tag, self.iteration, value)

    def sign_as(self, node: int, value: Any) -> SignatureToken:
        if node not in self.corrupted:
            raise ForgeryError(f"adversary cannot sign for honest node {node}")
        return sign(node, self.payload(value))

    def observed(self) -> list[tuple[int, CbMessage]]:
        """Every (sender, message) that reached any faulty node so far."""
        return [item for node in sorted(self.inbox) for item in self.inbox[node]]


class SyncAdversary(Protocol):
    corrupted: frozenset[int]

    def act(self, view: SyncView) -> Iterable[SyncSend]: ...


class _Silent:
    def __init__(self, corrupted: Iterable[int] = ()):
        self.corrupted = frozenset(corrupted)

    def act(self, view: SyncView) -> Iterable[SyncSend]:
        return ()


def _check_budget(n: int, f: int, corrupted: frozenset[int]) -> None:
    if len(corrupted) > f:
        raise ModelViolation(f"{len(corrupted)} corrupted nodes exceed the budget f={f}")
    if any(not 0 <= c < n for c in corrupted):
        raise ValueError("corrupted ids must lie in [0, n)")


def _run_cb_instances(
    n: int,
    f: int,
    dealer_values: Mapping[int, Any],
    adversary: SyncAdversary,
    iteration: int,
    tag: str,
    ledger: ObservationLedger,
    log: Optional[list[dict]] = None,
) -> dict[int, dict[int, Any]]:
    """Run one CB instance per dealer in parallel; return ``out[node][dealer]``."""
    corrupted = frozenset(adversary.corrupted)
    honest = [v for v in range(n) if v not in corrupted]
    inbox: dict[int, list[tuple[int, CbMessage]]] = {c: [] for c in corrupted}
    first_round = 2 * iteration

    def deliver(round_: int, sends: list[SyncSend]) -> dict[int, dict[int, list[tuple[int, CbMessage]]]]:
        got: dict[int, dict[int, list[tuple[int, CbMessage]]]] = {v: {} for v in range(n)}
        for s in sends:
            got[s.recipient].setdefault(s.message.instance, []).append((s.sender, s.message))
        if log is not None:
            for v in range(n):
                log.append({
                    "round": first_round + round_,
                    "node": v,
                    "sent": [dict(to=s.recipient, **s.message.to_json()) for s in sends if s.sender == v],
                    "received": [dict(frm=snd, **m.to_json())
                                 for inst in sorted(got[v]) for snd, m in got[v][inst]],
                })
        return got

    def faulty_sends(round_: int, honest_sends: list[SyncSend]) -> list[SyncSend]:
        # rushing: honest messages reach faulty nodes before the adversary moves
        for s in honest_sends:
            if s.recipient in corrupted:
                inbox[s.recipient].append((s.sender, s.message))
                ledger.observe_message(s.message, first_round + round_)
        view = SyncView(n, f, corrupted, iteration, round_, tag, list(honest_sends), inbox, ledger)
        out = []
        seen = set()
        for s in adversary.act(view):
            if s.sender not in corrupted:
                raise ForgeryError(f"adversary tried to send as honest node {s.sender}")
            key = (s.sender, s.recipient, s.message.instance)
            if key in seen:
                raise ModelViolation(f"duplicate message {key} in round {round_}")
            seen.add(key)
            if not adversary_may_send(ledger, s.message, first_round + round_, corrupted):
                raise ForgeryError(f"unobserved honest signature in {s}")
            out.append(s)
        return out

    # round 1: dealers send (value, signature)
    honest_r1 = []
    for v in honest:
        if v in dealer_values:
            value = dealer_values[v]
            msg = CbMessage(v, value, sign(v, encode_payload(tag, iteration, value)))
            honest_r1.extend(SyncSend(v, w, msg) for w in range(n))
    sends_r1 = honest_r1 + faulty_sends(1, honest_r1)
    got_r1 = deliver(1, sends_r1)
    from_dealer: dict[int, dict[int, CbMessage]] = {v: {} for v in range(n)}
    for v in range(n):
        for inst, msgs in got_r1[v].items():
            direct = [m for snd, m in msgs if snd == inst]
            if direct:
                from_dealer[v][inst] = direct[0]

    # round 2: echo whatever came from each dealer
    honest_r2 = [
        SyncSend(v, w, from_dealer[v][inst])
        for v in honest for inst in sorted(from_dealer[v]) for w in range(n)
    ]
    sends_r2 = honest_r2 + faulty_sends(2, honest_r2)
    got_r2 = deliver(2, sends_r2)

    outputs: dict[int, dict[int, Any]] = {}
    for v in honest:
        outputs[v] = {}
        for dealer in dealer_values.keys() | {w for w in range(n) if w in corrupted}:
            outputs[v][dealer] = _cb_decide(v, dealer, from_dealer[v].get(dealer),
                                            got_r2[v].get(dealer, []), tag, iteration)
    return outputs


def _cb_decide(v: int, dealer: int, direct: Optional[CbMessage],
               echoes: list[tuple[int, CbMessage]], tag: str, iteration: int) -> Any:
    if direct is None or not verify(dealer, direct.token,
                                    encode_payload(tag, iteration, direct.value)):
        return BOT
    valid_values = set()
    for _sender, m in echoes:
        if verify(dealer, m.token, encode_payload(tag, iteration, m.value)):
            valid_values.add(m.value)
    if len(valid_values | {direct.value}) > 1:
        return BOT
    return direct.value


def run_cb(
    n: int,
    dealer: int,
    value: Any,
    adversary: Optional[SyncAdversary] = None,
    f: Optional[int] = None,
    tag: str = "cb",
) -> dict[int, Any]:
    """One crusader broadcast. Returns the output (value or ``BOT``) of every honest node.

    If the dealer is corrupted, ``value`` is ignored and the adversary chooses
    what (if anything) the dealer sends.
    """
    adversary = adversary or _Silent()
    f = max_faults(n) if f is None else f
    corrupted = frozenset(adversary.corrupted)
    _check_budget(n, f, corrupted)
    values = {} if dealer in corrupted else {dealer: value}
    out = _run_cb_instances(n, f, values, adversary, 0, tag, ObservationLedger())
    return {v: out[v][dealer] for v in out}


def retained_interval(values: Iterable[tuple[Fraction, int]], bots: int, f: int
                      ) -> tuple[Fraction, Fraction]:
    """Interval spanned after discarding the ``f - bots`` lowest and highest values.

    ``values`` are ``(value, sender)`` pairs; ties are broken by sender id.
    """
    drop = f - bots
    if drop < 0:
        raise ModelViolation(f"{bots} ⊥ outputs exceed the fault budget f={f}")
    ordered = sorted(values)
    kept = ordered[drop:len(ordered) - drop]
    if not kept:
        raise ModelViolation("no value survives the discard step")
    return kept[0][0], kept[-1][0]


@dataclass
class ApaIteration:
    inputs: dict[int, Fraction]
    outputs: dict[int, Fraction]
    received: dict[int, dict[int, Any]]  # honest node -> dealer -> value or BOT
    bots: dict[int, int]
    intervals: dict[int, tuple[Fraction, Fraction]]


@dataclass
class ApaRun:
    outputs: dict[int, Fraction]
    iterations: list[ApaIteration] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return 2 * len(self.iterations)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def _contraction_check(inputs: Mapping[int, Fraction], outputs: Mapping[int, Fraction]) -> None:
    lo, hi = min(inputs.values()), max(inputs.values())
    if any(not lo <= o <= hi for o in outputs.values()):
        raise ModelViolation("an output left the honest input range")
    if 2 * spread(outputs.values()) > spread(inputs.values()):
        raise ModelViolation("output spread exceeds half the input spread")


def run_apa_iteration(
    inputs: Mapping[int, Fraction],
    n: int,
    adversary: Optional[SyncAdversary] = None,
    f: Optional[int] = None,
    iteration: int = 0,
    ledger: Optional[ObservationLedger] = None,
    log: Optional[list[dict]] = None,
    check: bool = True,
) -> ApaIteration:
    """One two-round approximate agreement step on honest ``inputs``."""
    adversary = adversary or _Silent()
    f = max_faults(n) if f is None else f
    corrupted = frozenset(adversary.corrupted)
    _check_budget(n, f, corrupted)
    honest = sorted(set(range(n)) - corrupted)
    if sorted(inputs) != honest:
        raise ValueError("inputs must be given for exactly the honest nodes")
    ledger = ObservationLedger() if ledger is None else ledger
    received = _run_cb_instances(n, f, dict(inputs), adversary, iteration, "apa", ledger, log)

    outputs, bots, intervals = {}, {}, {}
    for v in honest:
        vals = [(Fraction(x), w) for w, x in received[v].items() if x is not BOT]
        bots[v] = n - len(vals)
        lo, hi = retained_interval(vals, bots[v], f)
        intervals[v] = (lo, hi)
        outputs[v] = (lo + hi) / 2
    if log is not None:
        log.append({"round": 2 * iteration + 2, "node": None,
                    "output": {str(v): fmt_rational(o) for v, o in outputs.items()}})
    if check:
        _contraction_check(inputs, outputs)
    return ApaIteration(dict(inputs), outputs, received, bots, intervals)


def run_apa(
    inputs: Mapping[int, Fraction],
    n: int,
    ell: Fraction,
    eps: Fraction,
    adversary: Optional[SyncAdversary] = None,
    f: Optional[int] = None,
    check: bool = True,
) -> ApaRun:
    """Iterate agreement steps ceil(log2(ell/eps)) times.

    Honest input spread must not exceed ``ell``; the honest outputs then lie
    within ``eps`` of each other and inside the honest input range.
    """
    ell, eps = Fraction(ell), Fraction(eps)
    if spread(inputs.values()) > ell:
        raise ValueError("honest input spread exceeds ell")
    ledger = ObservationLedger()
    run = ApaRun(outputs=dict(inputs))
    current = dict(inputs)
    for it in range(ceil_log2_ratio(ell, eps)):
        step = run_apa_iteration(current, n, adversary, f, it, ledger, run.log, check)
        run.iterations.append(step)
        current = step.outputs
    run.outputs = current
    return run
