"""Parameter solver and exact conformance checkers for pulse traces.

``solve_parameters`` finds the smallest skew bound S (and the matching
round length T) for which the correctness induction of the pulse protocol
goes through.  The checkers re-evaluate every inequality that induction
relies on against a concrete trace, round by round, and return witnesses
for anything that fails.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

from .core import SystemParams, as_rational, compute_delta, fmt_rational, max_faults, spread
from .des import ExecutionTrace, serialize

__all__ = [
    "CheckResult",
    "ConformanceReport",
    "ParameterSolution",
    "check_lemma_suite",
    "check_pulse_sync",
    "feasibility_polynomial",
    "joint_polynomial",
    "params_from_solution",
    "solve_parameters",
]


def feasibility_polynomial(theta: Fraction) -> Fraction:
    """4 - theta + theta^2 - 3 theta^3: positive exactly where the closed-form bound applies."""
    return 4 - theta + theta**2 - 3 * theta**3


def joint_polynomial(theta: Fraction) -> Fraction:
    """Coefficient of S once the skew fixed point and minimal round length are combined.

    (2 - theta) - 4(2theta - 1)(theta^3 - theta^2) - 2(theta^3 - 1)
    = 4 - theta - 4theta^2 + 10theta^3 - 8theta^4.
    """
    return 4 - theta - 4 * theta**2 + 10 * theta**3 - 8 * theta**4


@dataclass(frozen=True)
class ParameterSolution:
    d: Fraction
    u: Fraction
    u_tilde: Fraction
    theta: Fraction
    feasible: bool
    binding: tuple[str, ...]
    polynomial: Fraction
    joint: Fraction
    delta: Optional[Fraction] = None
    S: Optional[Fraction] = None
    T: Optional[Fraction] = None
    p_min: Optional[Fraction] = None
    p_max: Optional[Fraction] = None
    t_slack: Fraction = Fraction(0)
    # alternative closed forms (denominators 4-2theta-theta^2 and 2-theta+theta^2-theta^3), kept for comparison only
    closed_form_T: Optional[Fraction] = None
    closed_form_S_quadratic: Optional[Fraction] = None
    closed_form_S_cubic: Optional[Fraction] = None

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        for k, v in self.__dict__.items():
            if isinstance(v, Fraction):
                out[k] = fmt_rational(v)
            elif isinstance(v, tuple):
                out[k] = list(v)
            else:
                out[k] = v
        return out

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def solve_parameters(d, u, theta, u_tilde=None, t_slack=0) -> ParameterSolution:
    """Smallest S and T satisfying the skew-contraction and round-length constraints.

    Both constraints are linear in (S, T) once the measurement error
    delta(S) is expanded, so they are solved with equality in exact
    rationals.  ``t_slack`` lengthens T beyond its minimum (S grows to match).
    """
    d, u, theta = as_rational(d), as_rational(u), as_rational(theta)
    u_tilde = u if u_tilde is None else as_rational(u_tilde)
    t_slack = as_rational(t_slack)
    bad = []
    if d <= 0:
        bad.append("d > 0")
    if not 0 <= u <= d:
        bad.append("0 ≤ u ≤ d")
    if theta <= 1:
        bad.append("theta > 1")
    if t_slack < 0:
        bad.append("t_slack ≥ 0")
    if bad:
        raise ValueError("invalid solver input: " + ", ".join(bad))

    poly = feasibility_polynomial(theta)
    joint = joint_polynomial(theta)
    binding: list[str] = []
    if poly <= 0:
        binding.append("polynomial: 4 − theta + theta² − 3theta³ > 0")
    if joint <= 0:
        binding.append("joint: 4 − theta − 4theta² + 10theta³ − 8theta⁴ > 0")

    closed_form_T = closed_S_quad = closed_S_cubic = None
    if poly > 0:
        closed_form_T = ((theta**2 + theta + 1) * 2 * (2 * theta - 1)
                         * (2 * u + (theta**2 - 1) * d) / poly + (theta + 1) * d - 2 * u)
        den1 = 4 - 2 * theta - theta**2
        den2 = 2 - theta + theta**2 - theta**3
        if den1 > 0:
            closed_S_quad = (2 * (2 * theta - 1) * (u + (theta - 1) * d)
                             + 2 * (theta - 1) * closed_form_T) / den1
        if den2 > 0:
            closed_S_cubic = (2 * (2 * theta - 1) * (2 * u + (theta**2 - 1) * d)
                              + 2 * (theta - 1) * closed_form_T) / den2

    common = dict(d=d, u=u, u_tilde=u_tilde, theta=theta, polynomial=poly, joint=joint,
                  t_slack=t_slack, closed_form_T=closed_form_T,
                  closed_form_S_quadratic=closed_S_quad, closed_form_S_cubic=closed_S_cubic)
    if binding:
        return ParameterSolution(feasible=False, binding=tuple(binding), **common)

    # T = (theta²+theta+1)S + (theta+1)d − 2u + slack, substituted into
    # (2−theta)S = 2(2theta−1)delta(S) + 2(theta−1)T
    const = 4 * theta * (u + (theta**2 - 1) * d) + 2 * (theta - 1) * t_slack
    S = const / joint
    T = (theta**2 + theta + 1) * S + (theta + 1) * d - 2 * u + t_slack
    delta = compute_delta(u, d, theta, S)
    p_min = (T - (theta + 1) * S) / theta
    return ParameterSolution(feasible=True, binding=("round_length", "skew_fixed_point"),
                             delta=delta, S=S, T=T, p_min=p_min, p_max=T + 3 * S, **common)


def params_from_solution(sol: ParameterSolution, n: int, f: Optional[int] = None) -> SystemParams:
    if not sol.feasible:
        raise ValueError("solution is infeasible: " + "; ".join(sol.binding))
    return SystemParams(n=n, f=max_faults(n) if f is None else f, d=sol.d, u=sol.u,
                        u_tilde=sol.u_tilde, theta=sol.theta, S=sol.S, T=sol.T)


@dataclass
class CheckResult:
    name: str
    passed: bool = True
    evaluated: int = 0
    witness: Optional[dict] = None
    # smallest slack seen across evaluations (bound minus measured value)
    margin: Optional[Fraction] = None

    def record(self, ok: bool, slack: Optional[Fraction], witness: dict) -> None:
        self.evaluated += 1
        if slack is not None and (self.margin is None or slack < self.margin):
            self.margin = slack
        if not ok and self.passed:
            self.passed = False
            self.witness = witness

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "evaluated": self.evaluated,
                "witness": serialize(self.witness),
                "margin": None if self.margin is None else fmt_rational(self.margin)}


@dataclass
class ConformanceReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)
    max_skew: Optional[Fraction] = None
    min_period: Optional[Fraction] = None
    max_period: Optional[Fraction] = None

    def check(self, name: str) -> CheckResult:
        if name not in self.checks:
            self.checks[name] = CheckResult(name)
        return self.checks[name]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks.values() if not c.passed]

    def merge(self, other: "ConformanceReport") -> "ConformanceReport":
        out = ConformanceReport(dict(self.checks), self.max_skew, self.min_period, self.max_period)
        out.checks.update(other.checks)
        for name in ("max_skew", "min_period", "max_period"):
            if getattr(out, name) is None:
                setattr(out, name, getattr(other, name))
        return out

    def to_json(self) -> dict:
        f = lambda x: None if x is None else fmt_rational(x)  # noqa: E731
        return {"passed": self.passed, "max_skew": f(self.max_skew),
                "min_period": f(self.min_period), "max_period": f(self.max_period),
                "checks": [c.to_json() for c in self.checks.values()]}

    def table(self) -> str:
        rows = [f"{'check':<28} {'result':<6} {'evals':>7}  margin"]
        for c in self.checks.values():
            margin = "" if c.margin is None else f"{float(c.margin):.6g}"
            rows.append(f"{c.name:<28} {'PASS' if c.passed else 'FAIL':<6} {c.evaluated:>7}  {margin}")
            if c.witness:
                rows.append(f"    witness: {json.dumps(serialize(c.witness), sort_keys=True)}")
        for label, val in (("max skew", self.max_skew), ("min period", self.min_period),
                           ("max period", self.max_period)):
            if val is not None:
                rows.append(f"{label}: {fmt_rational(val)} (~{float(val):.6g})")
        return "\n".join(rows)


def check_pulse_sync(trace: ExecutionTrace, S, P_min, P_max, R: int) -> ConformanceReport:
    """Liveness, skew and period conditions for pulses 1..R, exactly."""
    S, P_min, P_max = as_rational(S), as_rational(P_min), as_rational(P_max)
    report = ConformanceReport()
    live, skew = report.check("liveness"), report.check("skew")
    pmin, pmax = report.check("min_period"), report.check("max_period")
    counts = trace.pulse_counts()
    pulses = trace.pulses()
    honest = trace.honest
    for v in honest:
        for i in range(1, R + 1):
            c = counts[v].get(i, 0)
            live.record(c == 1, None, {"node": v, "pulse": i, "count": c})
    for i in range(1, R + 1):
        times = {v: pulses[v][i] for v in honest if i in pulses[v]}
        if len(times) < len(honest):
            continue
        sk = spread(times.values())
        report.max_skew = sk if report.max_skew is None else max(report.max_skew, sk)
        lo = min(times, key=times.get)
        hi = max(times, key=times.get)
        skew.record(sk <= S, S - sk, {"pulse": i, "early": lo, "late": hi,
                                      "times": times, "skew": sk})
    for i in range(1, R):
        if not all(i in pulses[v] and i + 1 in pulses[v] for v in honest):
            continue
        short = min(pulses[v][i + 1] for v in honest) - max(pulses[v][i] for v in honest)
        long_ = max(pulses[v][i + 1] for v in honest) - min(pulses[v][i] for v in honest)
        report.min_period = short if report.min_period is None else min(report.min_period, short)
        report.max_period = long_ if report.max_period is None else max(report.max_period, long_)
        pmin.record(short >= P_min, short - P_min, {"pulse": i, "period": short})
        pmax.record(long_ <= P_max, P_max - long_, {"pulse": i, "period": long_})
    return report


@dataclass
class _Round:
    pulse: dict[int, Fraction]  # real time
    pulse_local: dict[int, Fraction]
    accept_real: dict[tuple[int, int], Fraction]  # (owner, dealer) -> real reception time
    output: dict[tuple[int, int], Optional[Fraction]]
    estimates: dict[int, dict[int, Optional[Fraction]]]
    correction: dict[int, Fraction]
    done_local: dict[int, Fraction]  # local time of the correction (last termination)


def _rounds(trace: ExecutionTrace) -> dict[int, _Round]:
    rounds: dict[int, _Round] = {}

    def get(r: int) -> _Round:
        if r not in rounds:
            rounds[r] = _Round({}, {}, {}, {}, {}, {}, {})
        return rounds[r]

    honest = set(trace.honest)
    for ev in trace.events:
        if ev.src not in honest:
            continue
        if ev.kind == "pulse":
            rd = get(ev.pulse_index)
            rd.pulse.setdefault(ev.src, ev.t)
            rd.pulse_local.setdefault(ev.src, ev.local_time)
        elif ev.kind == "note":
            p = ev.payload
            kind = p.get("kind")
            if kind == "tcb_accept":
                get(p["round"]).accept_real[(ev.src, p["dealer"])] = ev.t
            elif kind == "tcb_output":
                get(p["round"]).output[(ev.src, p["dealer"])] = p["h"]
            elif kind == "correction":
                rd = get(p["round"])
                rd.estimates[ev.src] = dict(p["estimates"])
                rd.correction[ev.src] = p["delta"]
                rd.done_local[ev.src] = ev.local_time
    return rounds


def check_lemma_suite(trace: ExecutionTrace, params: SystemParams) -> ConformanceReport:
    """Evaluate every per-round inequality of the correctness argument on ``trace``."""
    report = ConformanceReport()
    names = ("honest_dealer_accepted", "reception_gap", "estimate_interval",
             "estimate_consistency", "correction_range",
             "contraction", "skew_bound", "wakeup_ahead")
    for name in names:
        report.check(name)
    th, d, u, S, T, delta = params.theta, params.d, params.u, params.S, params.T, params.delta
    gap_bound = (1 - 1 / th) * d + 2 * u / th
    honest = trace.honest
    rounds = _rounds(trace)
    for r in sorted(rounds):
        rd = rounds[r]
        if any(v not in rd.pulse for v in honest):
            continue
        p = rd.pulse
        norm = spread(p.values())
        report.check("skew_bound").record(norm <= S, S - norm, {"round": r, "skew": norm,
                                                                 "pulses": p})
        complete = all(v in rd.correction for v in honest)
        if not complete:
            continue
        if norm <= S:
            for v in honest:
                for w in honest:
                    out = rd.output.get((v, w))
                    report.check("honest_dealer_accepted").record(
                        out is not None, None, {"round": r, "owner": v, "dealer": w})
        for x in range(trace.n):
            receivers = [v for v in honest if v != x and rd.output.get((v, x)) is not None]
            for i, a in enumerate(receivers):
                for b in receivers[i + 1:]:
                    gap = abs(rd.accept_real[(a, x)] - rd.accept_real[(b, x)])
                    report.check("reception_gap").record(
                        gap <= gap_bound, gap_bound - gap,
                        {"round": r, "dealer": x, "nodes": [a, b], "gap": gap, "bound": gap_bound})
        for v in honest:
            for w in honest:
                est = rd.estimates[v].get(w)
                base = p[w] - p[v]
                if est is None:
                    report.check("estimate_interval").record(
                        False, None, {"round": r, "owner": v, "dealer": w, "estimate": None})
                    continue
                ok = base <= est < base + delta
                report.check("estimate_interval").record(
                    ok, min(est - base, base + delta - est),
                    {"round": r, "owner": v, "dealer": w, "estimate": est,
                     "interval": [base, base + delta]})
        for x in range(trace.n):
            for i, v in enumerate(honest):
                for w in honest[i + 1:]:
                    ev, ew = rd.estimates[v].get(x), rd.estimates[w].get(x)
                    if ev is None or ew is None:
                        continue
                    dev = abs(ev - ew - (p[w] - p[v]))
                    report.check("estimate_consistency").record(
                        dev < delta, delta - dev,
                        {"round": r, "dealer": x, "nodes": [v, w], "deviation": dev})
        for v in honest:
            dv = rd.correction[v]
            ok = -norm <= dv <= norm + delta
            report.check("correction_range").record(
                ok, min(dv + norm, norm + delta - dv),
                {"round": r, "node": v, "correction": dv, "skew": norm})
        shifted = spread(rd.correction[v] + p[v] for v in honest)
        report.check("contraction").record(
            shifted <= norm / 2 + delta, norm / 2 + delta - shifted,
            {"round": r, "shifted_spread": shifted, "skew": norm})
        for v in honest:
            wake = rd.pulse_local[v] + rd.correction[v] + T
            done = rd.done_local[v]
            report.check("wakeup_ahead").record(
                wake >= done, wake - done,
                {"round": r, "node": v, "wakeup_local": wake, "last_termination_local": done})
    return report
