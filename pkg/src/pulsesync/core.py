"""Exact time arithmetic, hardware clock schedules and system parameters.

Every time, rate and protocol constant is a :class:`fractions.Fraction`.
Nothing in the package ever touches a float on the simulation path, so two
runs with the same inputs produce bit-identical traces and local views.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence, Union

RationalLike = Union[Fraction, int, str]

__all__ = [
    "ClockSchedule",
    "DomainError",
    "InvalidParameters",
    "SystemParams",
    "as_rational",
    "clock_inverse",
    "clock_local_time",
    "compute_delta",
    "fmt_rational",
    "max_faults",
    "param_violations",
    "validate_params",
]


class DomainError(ValueError):
    """Raised when a clock is evaluated or inverted outside its domain."""


class InvalidParameters(ValueError):
    """Raised by :func:`validate_params`; ``violations`` lists every failed constraint."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def as_rational(x: RationalLike) -> Fraction:
    """Convert ``x`` to an exact :class:`Fraction`.

    Strings may be ``"num/den"``, integers or finite decimals (``"1.01"``).
    Floats are rejected: they have already lost exactness.
    """
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"expected an exact rational, got {type(x).__name__}: {x!r}")


def fmt_rational(x: Fraction) -> str:
    """Render ``x`` as ``"num/den"`` (the canonical serialization)."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def max_faults(n: int) -> int:
    """Optimal resilience with signatures: ceil(n/2) - 1."""
    return (n + 1) // 2 - 1


@dataclass(frozen=True)
class ClockSchedule:
    """Piecewise-linear hardware clock.

    ``segments`` is a sequence of ``(start, rate)`` pairs with strictly
    increasing starts, the first at 0; the last segment extends to infinity.
    ``offset`` is the local time at real time 0.
    """

    segments: tuple[tuple[Fraction, Fraction], ...]
    offset: Fraction = Fraction(0)
    # cumulative local time at each segment start
    _marks: tuple[Fraction, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        segs = tuple((as_rational(s), as_rational(r)) for s, r in self.segments)
        if not segs:
            raise ValueError("a clock schedule needs at least one segment")
        if segs[0][0] != 0:
            raise ValueError("first segment must start at time 0")
        for (s0, _), (s1, _) in zip(segs, segs[1:]):
            if s1 <= s0:
                raise ValueError("segment starts must be strictly increasing")
        for _, r in segs:
            if r < 1:
                raise ValueError(f"clock rate {r} below 1")
        offset = as_rational(self.offset)
        if offset < 0:
            raise ValueError("local time must be non-negative")
        marks = [offset]
        for (s0, r0), (s1, _) in zip(segs, segs[1:]):
            marks.append(marks[-1] + r0 * (s1 - s0))
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "_marks", tuple(marks))

    @classmethod
    def identity(cls, offset: RationalLike = 0) -> "ClockSchedule":
        return cls(((Fraction(0), Fraction(1)),), as_rational(offset))

    @classmethod
    def constant(cls, rate: RationalLike, offset: RationalLike = 0) -> "ClockSchedule":
        return cls(((Fraction(0), as_rational(rate)),), as_rational(offset))

    @classmethod
    def lower_bound_clock(cls, theta: RationalLike, u_tilde: RationalLike) -> "ClockSchedule":
        """Rate ``theta`` until it leads real time by ``2*u_tilde/3``, rate 1 after."""
        theta, u_tilde = as_rational(theta), as_rational(u_tilde)
        lead = 2 * u_tilde / 3
        if lead == 0:
            return cls.identity()
        breakpoint_ = lead / (theta - 1)
        return cls(((Fraction(0), theta), (breakpoint_, Fraction(1))))

    @property
    def max_rate(self) -> Fraction:
        return max(r for _, r in self.segments)

    def check_rates(self, theta: Fraction) -> None:
        if self.max_rate > theta:
            raise ValueError(f"clock rate {self.max_rate} exceeds theta={theta}")

    def local_time(self, t: RationalLike) -> Fraction:
        t = as_rational(t)
        if t < 0:
            raise DomainError(f"real time {t} is negative")
        k = bisect_right([s for s, _ in self.segments], t) - 1
        start, rate = self.segments[k]
        return self._marks[k] + rate * (t - start)

    def inverse(self, h: RationalLike) -> Fraction:
        h = as_rational(h)
        if h < self.offset:
            raise DomainError(f"local time {h} precedes H(0)={self.offset}")
        k = bisect_right(self._marks, h) - 1
        start, rate = self.segments[k]
        return start + (h - self._marks[k]) / rate

    def to_json(self) -> dict:
        return {
            "segments": [[fmt_rational(s), fmt_rational(r)] for s, r in self.segments],
            "offset": fmt_rational(self.offset),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ClockSchedule":
        return cls(tuple((as_rational(s), as_rational(r)) for s, r in data["segments"]),
                   as_rational(data.get("offset", "0")))


def clock_local_time(schedule: ClockSchedule, t: RationalLike) -> Fraction:
    return schedule.local_time(t)


def clock_inverse(schedule: ClockSchedule, h: RationalLike) -> Fraction:
    return schedule.inverse(h)


def compute_delta(u: Fraction, d: Fraction, theta: Fraction, S: Fraction) -> Fraction:
    """Measurement error bound: 2u + (theta^2-1)d + 2(theta^3-theta^2)S."""
    return 2 * u + (theta**2 - 1) * d + 2 * (theta**3 - theta**2) * S


@dataclass(frozen=True)
class SystemParams:
    n: int
    f: int
    d: Fraction
    u: Fraction
    u_tilde: Fraction
    theta: Fraction
    S: Fraction
    T: Fraction
    delta: Fraction | None = None

    def __post_init__(self) -> None:
        for name in ("d", "u", "u_tilde", "theta", "S", "T"):
            object.__setattr__(self, name, as_rational(getattr(self, name)))
        if self.delta is None:
            object.__setattr__(self, "delta", compute_delta(self.u, self.d, self.theta, self.S))
        else:
            object.__setattr__(self, "delta", as_rational(self.delta))

    @property
    def acceptance_window(self) -> Fraction:
        """Local-time length of the window in which a dealer's token is accepted."""
        return self.theta * (self.d + (self.theta + 1) * self.S)

    @property
    def quiet_window(self) -> Fraction:
        return self.d - 2 * self.u

    @property
    def p_min(self) -> Fraction:
        return (self.T - (self.theta + 1) * self.S) / self.theta

    @property
    def p_max(self) -> Fraction:
        return self.T + 3 * self.S

    def with_(self, **changes) -> "SystemParams":
        if "delta" not in changes and any(k in changes for k in ("u", "d", "theta", "S")):
            changes["delta"] = None
        return replace(self, **changes)

    def to_json(self) -> dict:
        out: dict = {"n": self.n, "f": self.f}
        for name in ("d", "u", "u_tilde", "theta", "S", "T", "delta"):
            out[name] = fmt_rational(getattr(self, name))
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SystemParams":
        return cls(
            n=int(data["n"]), f=int(data["f"]),
            **{k: as_rational(data[k]) for k in ("d", "u", "u_tilde", "theta", "S", "T")},
            delta=as_rational(data["delta"]) if "delta" in data else None,
        )


def param_violations(p: SystemParams) -> list[str]:
    """Every violated parameter constraint, as a human-readable label."""
    out = []
    if p.n < 3:
        out.append("n ≥ 3")
    if not 0 <= p.f <= max_faults(p.n):
        out.append("0 ≤ f ≤ ⌈n/2⌉−1")
    if p.d <= 0:
        out.append("d > 0")
    if p.u < 0:
        out.append("u ≥ 0")
    if p.u > p.d:
        out.append("u ≤ d")
    if p.u > p.u_tilde:
        out.append("u ≤ u_tilde")
    if p.u_tilde > p.d:
        out.append("u_tilde ≤ d")
    if p.theta <= 1:
        out.append("theta > 1")
    if p.S < 0:
        out.append("S ≥ 0")
    if p.delta != compute_delta(p.u, p.d, p.theta, p.S):
        out.append("delta = 2u + (theta²−1)d + 2(theta³−theta²)S")
    th = p.theta
    if p.T < (th**2 + th + 1) * p.S + (th + 1) * p.d - 2 * p.u:
        out.append("round length: T ≥ (theta²+theta+1)S + (theta+1)d − 2u")
    if th < 2 and p.S * (2 - th) < 2 * (2 * th - 1) * p.delta + 2 * (th - 1) * p.T:
        out.append("skew fixed point: S ≥ (2(2theta−1)delta + 2(theta−1)T)/(2−theta)")
    elif th >= 2:
        out.append("skew fixed point: theta < 2")
    return out


def validate_params(raw: SystemParams) -> SystemParams:
    """Return ``raw`` unchanged if every constraint holds, else raise :class:`InvalidParameters`."""
    violations = param_violations(raw)
    if violations:
        raise InvalidParameters(violations)
    return raw


def ceil_log2_ratio(ell: Fraction, eps: Fraction) -> int:
    """Smallest k ≥ 0 with ell / 2**k ≤ eps, computed exactly."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    k = 0
    while ell > eps * 2**k:
        k += 1
    return k


def spread(values: Iterable[Fraction]) -> Fraction:
    vals = list(values)
    return max(vals) - min(vals) if vals else Fraction(0)
