"""Command line: ``pulsesync {params,simulate,apa,attack}``.

Every option can also come from a TOML config (``--config``).  Rationals are
written as ``"num/den"`` strings so nothing loses precision on the way in or
out.  Exit codes: 0 all checks pass, 1 a conformance check failed (or the
parameters are infeasible), 2 the configuration itself is invalid.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Sequence

import tomli

from .adversaries import (
    APA_ADVERSARIES,
    DES_STRATEGIES,
    build_execution_triple,
    cps_behavior,
    free_running,
    make_strategy,
    never_sends,
    pulse_round_bound,
    verify_lower_bound,
)
from .analysis import check_lemma_suite, check_pulse_sync, solve_parameters
from .core import InvalidParameters, SystemParams, as_rational, fmt_rational, max_faults, param_violations
from .scenarios import CLOCK_KINDS, DELAY_KINDS, cps_horizon, run_cps
from .sync import ModelViolation, run_apa

MODES = ("params", "simulate", "apa", "attack")
RNG_NAME = "python random.Random (MT19937)"
BEHAVIORS = {"cps": cps_behavior, "free_running": free_running(), "never_sends": never_sends}


class ConfigError(ValueError):
    pass


_RATIONAL_FIELDS = ("d", "u", "u_tilde", "theta", "S", "T", "t_slack", "ell", "eps", "horizon")


@dataclass
class ExperimentConfig:
    mode: str = "params"
    n: int = 4
    f: Optional[int] = None
    d: Fraction = Fraction(1)
    u: Fraction = Fraction(1, 1000)
    u_tilde: Optional[Fraction] = None
    theta: Fraction = Fraction(101, 100)
    S: Optional[Fraction] = None
    T: Optional[Fraction] = None
    t_slack: Fraction = Fraction(0)
    adversary: str = "silent"
    knobs: dict[str, str] = field(default_factory=dict)
    clocks: str = "extreme"
    delays: str = "random"
    seed: int = 0
    pulses: int = 100
    horizon: Optional[Fraction] = None
    ell: Fraction = Fraction(1)
    eps: Fraction = Fraction(1, 1024)
    runs: int = 1
    behavior: str = "cps"
    trace: Optional[str] = None
    report: Optional[str] = None

    def __post_init__(self) -> None:
        for name in _RATIONAL_FIELDS:
            val = getattr(self, name)
            if val is not None:
                try:
                    setattr(self, name, as_rational(val))
                except (TypeError, ValueError, ZeroDivisionError) as exc:
                    raise ConfigError(f"{name}: {exc}") from None
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")

    def to_toml(self) -> str:
        lines, knobs = [], []
        for fl in fields(self):
            val = getattr(self, fl.name)
            if val is None:
                continue
            if fl.name == "knobs":
                knobs = [f"{k} = {json.dumps(str(v))}" for k, v in sorted(val.items())]
            elif isinstance(val, Fraction):
                lines.append(f'{fl.name} = "{fmt_rational(val)}"')
            elif isinstance(val, int):
                lines.append(f"{fl.name} = {val}")
            else:
                lines.append(f"{fl.name} = {json.dumps(val)}")
        if knobs:
            lines += ["", "[knobs]"] + knobs
        return "\n".join(lines) + "\n"

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"bad config file: {exc}") from None
        known = {fl.name for fl in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        data["knobs"] = {k: str(v) for k, v in data.get("knobs", {}).items()}
        return cls(**data)

    def system_params(self) -> SystemParams:
        """Explicit S and T if both are given, otherwise the solver's minimum."""
        u_tilde = self.u if self.u_tilde is None else self.u_tilde
        f = max_faults(self.n) if self.f is None else self.f
        if self.S is not None and self.T is not None:
            params = SystemParams(self.n, f, self.d, self.u, u_tilde, self.theta, self.S, self.T)
        else:
            sol = _solve(self)
            if not sol.feasible:
                raise ConfigError("infeasible parameters: " + "; ".join(sol.binding))
            params = SystemParams(self.n, f, self.d, self.u, u_tilde, self.theta, sol.S, sol.T)
        return params


def _solve(cfg: ExperimentConfig):
    try:
        return solve_parameters(cfg.d, cfg.u, cfg.theta, cfg.u_tilde, cfg.t_slack)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def cmd_params(cfg: ExperimentConfig, out) -> int:
    sol = _solve(cfg)
    for key, val in sol.to_json().items():
        if isinstance(val, str) and "/" in val:
            val = f"{val}  (~{float(Fraction(val)):.6g})"
        print(f"{key:>24}: {val}", file=out)
    _write(cfg.report, sol.to_json_text())
    return 0 if sol.feasible else 1


def cmd_simulate(cfg: ExperimentConfig, out) -> int:
    params = cfg.system_params()
    violations = param_violations(params)
    if violations:
        raise ConfigError("invalid parameters: " + "; ".join(violations))
    if cfg.adversary not in DES_STRATEGIES:
        raise ConfigError(f"unknown adversary {cfg.adversary!r}; choose from {sorted(DES_STRATEGIES)}")
    if cfg.clocks not in CLOCK_KINDS or cfg.delays not in DELAY_KINDS:
        raise ConfigError(f"clocks must be one of {CLOCK_KINDS}, delays one of {DELAY_KINDS}")
    knobs = dict(cfg.knobs)
    if "corrupted" in knobs:
        knobs["corrupted"] = [int(x) for x in str(knobs["corrupted"]).split(",") if x.strip()]
    try:
        make_strategy(cfg.adversary, params, **knobs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"adversary {cfg.adversary!r}: {exc}") from None
    try:
        trace = run_cps(params, cfg.pulses, cfg.adversary, cfg.clocks, cfg.delays, cfg.seed, knobs)
    except ModelViolation as exc:
        print(f"model violation during simulation: {exc}", file=out)
        return 1
    report = check_pulse_sync(trace, params.S, params.p_min, params.p_max, cfg.pulses)
    report = report.merge(check_lemma_suite(trace, params))
    if cfg.trace:
        trace.write_jsonl(cfg.trace)
    body = {"params": params.to_json(), "adversary": cfg.adversary, "knobs": cfg.knobs,
            "clocks": cfg.clocks, "delays": cfg.delays, "pulses": cfg.pulses,
            "seed": cfg.seed, "rng": RNG_NAME, "events": len(trace.events),
            "report": report.to_json()}
    _write(cfg.report, _dump(body))
    print(report.table(), file=out)
    return 0 if report.passed else 1


def cmd_apa(cfg: ExperimentConfig, out) -> int:
    if cfg.adversary not in APA_ADVERSARIES:
        raise ConfigError(f"unknown adversary {cfg.adversary!r}; choose from {sorted(APA_ADVERSARIES)}")
    f = max_faults(cfg.n) if cfg.f is None else cfg.f
    if cfg.n < 1 or not 0 <= f <= max_faults(cfg.n):
        raise ConfigError(f"need 0 ≤ f ≤ ⌈n/2⌉−1 (n={cfg.n}, f={f})")
    if cfg.eps <= 0 or cfg.ell < 0:
        raise ConfigError("need eps > 0 and ell ≥ 0")
    rng = random.Random(cfg.seed)
    corrupted = list(range(cfg.n - f, cfg.n))
    runs, ok = [], True
    log_lines = []
    for k in range(cfg.runs):
        inputs = {v: cfg.ell * Fraction(rng.randrange(1025), 1024) for v in range(cfg.n - f)}
        adv = APA_ADVERSARIES[cfg.adversary](corrupted, seed=rng.randrange(2**32))
        try:
            run = run_apa(inputs, cfg.n, cfg.ell, cfg.eps, adv, f)
            outs = list(run.outputs.values())
            agree = max(outs) - min(outs) <= cfg.eps
            valid = min(inputs.values()) <= min(outs) and max(outs) <= max(inputs.values())
            passed, error = agree and valid, None
        except ModelViolation as exc:
            run, passed, error = None, False, str(exc)
        ok &= passed
        runs.append({"run": k, "inputs": {str(v): fmt_rational(x) for v, x in inputs.items()},
                     "outputs": None if run is None else
                     {str(v): fmt_rational(x) for v, x in run.outputs.items()},
                     "iterations": None if run is None else len(run.iterations),
                     "rounds": None if run is None else run.rounds,
                     "passed": passed, "error": error})
        if run is not None:
            log_lines += [json.dumps({"run": k, **entry}, sort_keys=True, ensure_ascii=False)
                          for entry in run.log]
    if cfg.trace:
        _write(cfg.trace, "".join(line + "\n" for line in log_lines))
    body = {"n": cfg.n, "f": f, "adversary": cfg.adversary, "ell": fmt_rational(cfg.ell),
            "eps": fmt_rational(cfg.eps), "seed": cfg.seed, "rng": RNG_NAME,
            "passed": ok, "runs": runs}
    _write(cfg.report, _dump(body))
    failed = sum(not r["passed"] for r in runs)
    print(f"apa: {len(runs)} runs, {failed} failed, "
          f"{runs[0]['iterations'] if runs else 0} iterations each", file=out)
    return 0 if ok else 1


def cmd_attack(cfg: ExperimentConfig, out) -> int:
    if cfg.behavior not in BEHAVIORS:
        raise ConfigError(f"unknown behavior {cfg.behavior!r}; choose from {sorted(BEHAVIORS)}")
    if cfg.u_tilde is None:
        raise ConfigError("attack needs u_tilde")
    cfg.n, cfg.f = 3, 1
    params = cfg.system_params()
    violations = param_violations(params)
    if not params.d > 2 * params.u_tilde / 3:
        violations.append("d > 2ũ/3")
    if violations:
        raise ConfigError("invalid parameters: " + "; ".join(violations))
    r_star = pulse_round_bound(params.u_tilde, params.p_min, params.theta)
    horizon = cfg.horizon if cfg.horizon is not None else cps_horizon(params, r_star)
    try:
        triple = build_execution_triple(BEHAVIORS[cfg.behavior], params, horizon)
        report = verify_lower_bound(triple, r_star)
    except (ValueError, RuntimeError) as exc:
        print(f"attack failed: {exc}", file=out)
        return 1
    if cfg.trace:
        stem = Path(cfg.trace)
        for i, tr in enumerate(triple.traces):
            tr.write_jsonl(stem.with_name(f"{stem.stem}.world{i}{stem.suffix or '.jsonl'}"))
    _write(cfg.report, report.to_json_text())
    print(f"r* = {r_star}; per-execution skews: "
          + ", ".join(f"{fmt_rational(s)}" for s in report.skews.values()), file=out)
    print(f"sum = {fmt_rational(report.difference_sum)} (2ũ = {fmt_rational(2 * params.u_tilde)}); "
          f"max skew {fmt_rational(report.max_skew)} ≥ {fmt_rational(report.bound)}: {report.bound_ok}",
          file=out)
    good = (report.sum_identity_ok and report.indistinguishability_ok and report.bound_ok
            and report.shift_identity_ok)
    return 0 if good else 1


COMMANDS = {"params": cmd_params, "simulate": cmd_simulate, "apa": cmd_apa, "attack": cmd_attack}


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="pulsesync", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="TOML file; explicit flags override it")
        p.add_argument("--write-config", help="write the effective config here and continue")
        for name in ("d", "u", "theta"):
            p.add_argument(f"--{name}")
        p.add_argument("--u-tilde", dest="u_tilde")
        p.add_argument("--t-slack", dest="t_slack")
        p.add_argument("--report", help="JSON report path")
        if mode in ("simulate", "apa"):
            p.add_argument("--n", type=int)
            p.add_argument("--f", type=int)
            p.add_argument("--adversary")
            p.add_argument("--seed", type=int)
            p.add_argument("--trace", help="JSONL trace/log path")
        if mode in ("simulate", "attack"):
            p.add_argument("--S")
            p.add_argument("--T")
        if mode == "simulate":
            p.add_argument("--pulses", type=int)
            p.add_argument("--clocks", choices=CLOCK_KINDS)
            p.add_argument("--delays", choices=DELAY_KINDS)
            p.add_argument("--knob", action="append", default=[], metavar="KEY=VALUE")
        if mode == "apa":
            p.add_argument("--ell")
            p.add_argument("--eps")
            p.add_argument("--runs", type=int)
        if mode == "attack":
            p.add_argument("--behavior", choices=sorted(BEHAVIORS))
            p.add_argument("--horizon")
            p.add_argument("--trace", help="stem for the three world traces")
    return top


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(str(exc)) from None
        cfg = ExperimentConfig.from_toml(text)
        cfg.mode = args.mode
    else:
        cfg = ExperimentConfig(mode=args.mode)
    overrides = {k: v for k, v in vars(args).items()
                 if v is not None and k not in ("config", "write_config", "mode", "knob")}
    for key, val in overrides.items():
        setattr(cfg, key, val)
    for item in getattr(args, "knob", []) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"knob {item!r} is not KEY=VALUE")
        cfg.knobs[key.strip()] = val.strip()
    cfg.__post_init__()
    return cfg


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.write_config:
            _write(args.write_config, cfg.to_toml())
        return COMMANDS[cfg.mode](cfg, out)
    except (ConfigError, InvalidParameters) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
