"""Symbolic signatures and the adversary's observation ledger.

Signatures are Dolev-Yao style symbols: a token is just ``(signer, payload)``
and nobody can produce a token for an honest signer without having seen it.
The :class:`ObservationLedger` records when faulty nodes first received each
honest token, and :func:`adversary_may_send` is the gate every faulty send
has to pass.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Collection, Iterator

__all__ = [
    "ForgeryError",
    "ObservationLedger",
    "SignatureToken",
    "adversary_may_send",
    "embedded_tokens",
    "encode_payload",
    "sign",
    "verify",
]


class ForgeryError(RuntimeError):
    """A faulty node tried to send an honest signature it had not observed."""


def encode_payload(tag: str, round_: int, value: Any) -> bytes:
    """Canonical payload: length-prefixed UTF-8 of ``"tag|round|value"``."""
    if isinstance(value, Fraction):
        value = f"{value.numerator}/{value.denominator}"
    text = f"{tag}|{round_}|{value}".encode("utf-8")
    return str(len(text)).encode("ascii") + b":" + text


def decode_payload(payload: bytes) -> tuple[str, int, str]:
    length, _, text = payload.partition(b":")
    if int(length) != len(text):
        raise ValueError("payload length prefix mismatch")
    tag, round_, value = text.decode("utf-8").split("|", 2)
    return tag, int(round_), value


@dataclass(frozen=True, order=True)
class SignatureToken:
    signer: int
    payload: bytes
    unique_id: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        digest = hashlib.sha256(b"%d\x00" % self.signer + self.payload).digest()
        object.__setattr__(self, "unique_id", int.from_bytes(digest[:8], "big"))

    def __str__(self) -> str:
        return f"sig({self.signer},{self.payload.decode('utf-8')})"


def sign(signer: int, payload: bytes) -> SignatureToken:
    return SignatureToken(signer, bytes(payload))


def verify(claimed_signer: int, token: Any, payload: bytes) -> bool:
    return (
        isinstance(token, SignatureToken)
        and token.signer == claimed_signer
        and token.payload == payload
    )


def embedded_tokens(obj: Any) -> Iterator[SignatureToken]:
    """Yield every signature token nested anywhere in a message."""
    if isinstance(obj, SignatureToken):
        yield obj
    elif isinstance(obj, (tuple, list, frozenset, set)):
        for item in obj:
            yield from embedded_tokens(item)
    elif isinstance(obj, dict):
        for item in obj.values():
            yield from embedded_tokens(item)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            yield from embedded_tokens(getattr(obj, f.name))


class ObservationLedger:
    """Earliest time at which some faulty node received each token."""

    def __init__(self) -> None:
        self.entries: dict[SignatureToken, Any] = {}

    def observe(self, token: SignatureToken, t) -> None:
        prev = self.entries.get(token)
        if prev is None or t < prev:
            self.entries[token] = t

    def observe_message(self, message: Any, t) -> None:
        for token in embedded_tokens(message):
            self.observe(token, t)

    def observed_at(self, token: SignatureToken):
        return self.entries.get(token)

    def __contains__(self, token: SignatureToken) -> bool:
        return token in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def adversary_may_send(
    ledger: ObservationLedger,
    msg: Any,
    send_time,
    corrupted: Collection[int],
) -> bool:
    """True iff every honest token in ``msg`` was observed by ``send_time`` (inclusive)."""
    for token in embedded_tokens(msg):
        if token.signer in corrupted:
            continue
        seen = ledger.observed_at(token)
        if seen is None or seen > send_time:
            return False
    return True


def missing_tokens(ledger: ObservationLedger, msg: Any, send_time,
                   corrupted: Collection[int]) -> list[SignatureToken]:
    return [
        tok for tok in embedded_tokens(msg)
        if tok.signer not in corrupted
        and (ledger.observed_at(tok) is None or ledger.observed_at(tok) > send_time)
    ]
