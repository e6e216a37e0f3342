from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsesync.core import (
    ClockSchedule,
    DomainError,
    InvalidParameters,
    SystemParams,
    as_rational,
    ceil_log2_ratio,
    clock_inverse,
    clock_local_time,
    compute_delta,
    fmt_rational,
    max_faults,
    param_violations,
    validate_params,
)

THETA = F(11, 10)


def test_identity_clock():
    assert clock_local_time(ClockSchedule.identity(), 5) == 5
    assert clock_inverse(ClockSchedule.identity(), 7) == 7


def test_constant_rate_clock():
    clock = ClockSchedule.constant(F(11, 10))
    assert clock_local_time(clock, 4) == F(22, 5)
    assert clock_inverse(clock, F(22, 5)) == 4


def test_lower_bound_clock_values():
    clock = ClockSchedule.lower_bound_clock(F(3, 2), F(9, 10))
    assert clock.segments[1][0] == F(6, 5)
    assert clock_local_time(clock, F(6, 5)) == F(9, 5)
    assert clock_local_time(clock, 2) == F(13, 5)
    assert clock_inverse(clock, F(13, 5)) == 2


def test_lower_bound_clock_settles_at_offset():
    clock = ClockSchedule.lower_bound_clock(F(101, 100), F(3, 10))
    for t in (20, 25, 100):
        assert clock.local_time(t) == t + F(1, 5)


def test_lower_bound_clock_degenerate():
    assert ClockSchedule.lower_bound_clock(F(101, 100), 0) == ClockSchedule.identity()


def test_domain_errors():
    clock = ClockSchedule.identity(offset=2)
    with pytest.raises(DomainError):
        clock.local_time(-1)
    with pytest.raises(DomainError):
        clock.inverse(1)


@pytest.mark.parametrize("segments, offset", [
    (((1, 1),), 0),           # first segment must start at 0
    (((0, 1), (0, 2)), 0),    # starts must increase
    (((0, F(1, 2)),), 0),     # rate below 1
    (((0, 1),), -1),          # negative local time
])
def test_invalid_schedules(segments, offset):
    with pytest.raises(ValueError):
        ClockSchedule(segments, offset)


def test_floats_are_rejected():
    with pytest.raises(TypeError):
        as_rational(0.1)
    assert as_rational("1.01") == F(101, 100)
    assert as_rational("3/7") == F(3, 7)
    assert fmt_rational(F(6, 4)) == "3/2"


def test_schedule_json_roundtrip():
    clock = ClockSchedule(((0, F(21, 20)), (F(7, 3), 1)), F(1, 9))
    assert ClockSchedule.from_json(clock.to_json()) == clock


def test_max_faults():
    assert [max_faults(n) for n in (3, 4, 5, 6, 7)] == [1, 1, 2, 2, 3]


def test_ceil_log2_ratio():
    assert ceil_log2_ratio(F(1), F(1, 8)) == 3
    assert ceil_log2_ratio(F(1), F(1, 1024)) == 10
    assert ceil_log2_ratio(F(1), F(2)) == 0
    assert ceil_log2_ratio(F(1), F(1, 7)) == 3


def schedules(max_segments=4):
    rates = st.fractions(min_value=1, max_value=THETA, max_denominator=50)
    gaps = st.fractions(min_value=F(1, 10), max_value=10, max_denominator=20)
    return st.builds(
        lambda rs, gs, off: ClockSchedule(
            tuple(zip([F(0)] + [sum(gs[:k + 1], F(0)) for k in range(len(rs) - 1)], rs)), off),
        st.lists(rates, min_size=1, max_size=max_segments),
        st.lists(gaps, min_size=max_segments, max_size=max_segments),
        st.fractions(min_value=0, max_value=5, max_denominator=20),
    )


times = st.fractions(min_value=0, max_value=40, max_denominator=97)


@settings(max_examples=200)
@given(schedules(), times, times)
def test_rate_bounds_property(clock, a, b):
    t, t2 = min(a, b), max(a, b)
    gain = clock.local_time(t2) - clock.local_time(t)
    assert t2 - t <= gain <= THETA * (t2 - t)


@settings(max_examples=200)
@given(schedules(), times)
def test_inverse_roundtrip_property(clock, t):
    assert clock.inverse(clock.local_time(t)) == t


def _brute_local_time(clock, t):
    # integrate segment by segment, independent of the cached marks
    total, segs = clock.offset, list(clock.segments) + [(None, None)]
    for (start, rate), (nxt, _) in zip(segs, segs[1:]):
        end = t if nxt is None else min(t, nxt)
        if end > start:
            total += rate * (end - start)
    return total


@settings(max_examples=200)
@given(schedules(), times)
def test_local_time_matches_integration(clock, t):
    assert clock.local_time(t) == _brute_local_time(clock, t)


@settings(max_examples=100)
@given(st.fractions(min_value=0, max_value=1, max_denominator=100),
       st.fractions(min_value=F(1001, 1000), max_value=2, max_denominator=1000),
       st.fractions(min_value=0, max_value=1, max_denominator=100))
def test_delta_positive(u, theta, S):
    assert compute_delta(u, 1, theta, S) > 0


def _params(**kw):
    base = dict(n=4, f=1, d=F(1), u=F(1, 1000), u_tilde=F(1, 1000), theta=F(101, 100),
                S=F(532775, 5548612), T=F(25511948847, 11097224000))
    base.update(kw)
    return SystemParams(**base)


def test_solver_params_accepted(params4):
    assert validate_params(params4) is params4
    assert param_violations(_params()) == []


def test_u_above_d_rejected():
    with pytest.raises(InvalidParameters) as err:
        validate_params(_params(u=F(2), u_tilde=F(2)))
    assert "u ≤ d" in err.value.violations


def test_zero_round_length_rejected():
    with pytest.raises(InvalidParameters) as err:
        validate_params(_params(T=F(0)))
    assert any(v.startswith("round length") for v in err.value.violations)


def test_small_skew_bound_rejected():
    violations = param_violations(_params(S=F(1, 100)))
    assert any(v.startswith("skew fixed point") for v in violations)


def test_fault_budget_and_size():
    assert "0 ≤ f ≤ ⌈n/2⌉−1" in param_violations(_params(n=4, f=2))
    assert "n ≥ 3" in param_violations(_params(n=2, f=0))


def test_delta_must_match_formula():
    assert any(v.startswith("delta") for v in param_violations(_params(delta=F(1))))


def test_params_json_roundtrip(params4):
    assert SystemParams.from_json(params4.to_json()) == params4


def test_window_lengths(params4):
    p = params4
    assert p.acceptance_window == p.theta * (p.d + (p.theta + 1) * p.S)
    assert p.quiet_window == p.d - 2 * p.u
    assert p.p_min == (p.T - (p.theta + 1) * p.S) / p.theta
    assert p.p_max == p.T + 3 * p.S
