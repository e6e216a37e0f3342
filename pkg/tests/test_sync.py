import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsesync.adversaries import APA_ADVERSARIES
from pulsesync.signatures import ForgeryError, sign, encode_payload
from pulsesync.sync import (
    BOT,
    CbMessage,
    ModelViolation,
    SyncSend,
    retained_interval,
    run_apa,
    run_apa_iteration,
    run_cb,
)


class Scripted:
    """Adversary driven by a plain function of the view."""

    def __init__(self, corrupted, fn):
        self.corrupted = frozenset(corrupted)
        self.fn = fn

    def act(self, view):
        return self.fn(view)


def signed(view, node, value):
    return CbMessage(node, value, view.sign_as(node, value))


def test_honest_dealer_all_output_input():
    for name, cls in APA_ADVERSARIES.items():
        out = run_cb(4, 0, 1, cls([3], seed=5))
        assert out == {0: 1, 1: 1, 2: 1}, name


def test_split_faulty_dealer_gives_bot_everywhere():
    def fn(view):
        zero, one = signed(view, 3, 0), signed(view, 3, 1)
        if view.round == 1:
            return [SyncSend(3, 0, zero), SyncSend(3, 1, zero), SyncSend(3, 2, one)]
        return [SyncSend(3, 0, one), SyncSend(3, 1, one), SyncSend(3, 2, zero)]
    out = run_cb(4, 3, None, Scripted([3], fn))
    assert out == {0: BOT, 1: BOT, 2: BOT}


def test_consistent_faulty_dealer():
    def fn(view):
        msg = signed(view, 3, 1)
        return [SyncSend(3, w, msg) for w in range(4)]
    assert run_cb(4, 3, None, Scripted([3], fn)) == {0: 1, 1: 1, 2: 1}


def test_forged_echo_is_rejected():
    def fn(view):
        if view.round == 1:
            return []
        fake = CbMessage(0, 7, sign(0, encode_payload("cb", 0, 7)))
        return [SyncSend(3, 1, fake)]
    with pytest.raises(ForgeryError):
        run_cb(4, 0, 1, Scripted([3], fn))


def test_adversary_cannot_sign_for_honest():
    def fn(view):
        return [SyncSend(3, 1, signed(view, 0, 5))]
    with pytest.raises(ForgeryError):
        run_cb(4, 0, 1, Scripted([3], fn))


def test_relay_of_observed_token_is_allowed():
    # the faulty node forwards the honest dealer's message it saw in round 1
    def fn(view):
        if view.round == 2:
            seen = [m for s, m in view.inbox[3] if s == 0]
            return [SyncSend(3, w, seen[0]) for w in range(4)]
        return []
    assert run_cb(4, 0, 1, Scripted([3], fn)) == {0: 1, 1: 1, 2: 1}


def test_n3_consistent_half():
    def fn(view):
        if view.round == 1:
            msg = signed(view, 2, F(1, 2))
            return [SyncSend(2, w, msg) for w in range(3)]
        return []
    step = run_apa_iteration({0: F(0), 1: F(1)}, 3, Scripted([2], fn))
    assert step.outputs == {0: F(1, 2), 1: F(1, 2)}


def test_n3_forced_bot():
    step = run_apa_iteration({0: F(0), 1: F(1)}, 3, APA_ADVERSARIES["silent"]([2]))
    assert step.bots == {0: 1, 1: 1}
    assert step.intervals == {0: (F(0), F(1)), 1: (F(0), F(1))}
    assert step.outputs == {0: F(1, 2), 1: F(1, 2)}


@pytest.mark.parametrize("name", sorted(APA_ADVERSARIES))
def test_equal_inputs_are_fixed(name):
    c = F(3, 7)
    step = run_apa_iteration({0: c, 1: c, 2: c}, 5, APA_ADVERSARIES[name]([3, 4], seed=1))
    assert set(step.outputs.values()) == {c}


def test_iteration_counts():
    inputs = {0: F(0), 1: F(1), 2: F(1, 2)}
    run = run_apa(inputs, 5, 1, F(1, 8), APA_ADVERSARIES["equivocator"]([3, 4], seed=2))
    assert len(run.iterations) == 3 and run.rounds == 6
    run = run_apa(inputs, 5, 1, 2)
    assert run.iterations == [] and run.outputs == inputs


def test_spread_bound_on_ell():
    with pytest.raises(ValueError):
        run_apa({0: F(0), 1: F(2)}, 3, 1, F(1, 2))


def test_n5_equivocation_property():
    rng = random.Random(11)
    for k in range(40):
        inputs = {v: F(rng.randrange(101), 100) for v in range(3)}
        run = run_apa(inputs, 5, 1, F(1, 64), APA_ADVERSARIES["equivocator"]([3, 4], seed=k))
        outs = list(run.outputs.values())
        assert max(outs) - min(outs) <= F(1, 64)
        assert min(inputs.values()) <= min(outs) <= max(outs) <= max(inputs.values())


def test_too_many_bots_is_fatal():
    with pytest.raises(ModelViolation):
        retained_interval([(F(0), 0)], bots=3, f=2)


def test_log_records_rounds(tmp_path):
    run = run_apa({0: F(0), 1: F(1)}, 3, 1, F(1, 2), APA_ADVERSARIES["consistent_liar"]([2]))
    rounds = {rec["round"] for rec in run.log if rec["node"] is not None}
    assert rounds == {1, 2}
    path = tmp_path / "apa.jsonl"
    run.write_jsonl(path)
    assert path.read_text().count("\n") == len(run.log)


values = st.fractions(min_value=-5, max_value=5, max_denominator=16)


@settings(max_examples=300)
@given(st.integers(min_value=1, max_value=3), st.data())
def test_filling_a_bot_shrinks_interval(f, data):
    bots = data.draw(st.integers(min_value=1, max_value=f))
    n = 2 * f + 1
    vals = data.draw(st.lists(values, min_size=n - bots, max_size=n - bots))
    x = data.draw(values)
    base = [(v, i) for i, v in enumerate(vals)]
    lo, hi = retained_interval(base, bots, f)
    lo2, hi2 = retained_interval(base + [(x, n - 1)], bots - 1, f)
    assert lo <= lo2 <= hi2 <= hi


@settings(max_examples=150, deadline=None)
@given(st.sampled_from([3, 5, 7]), st.sampled_from(sorted(APA_ADVERSARIES)),
       st.integers(min_value=0, max_value=10**6))
def test_retained_intervals_share_a_point(n, name, seed):
    f = (n + 1) // 2 - 1
    rng = random.Random(seed)
    inputs = {v: F(rng.randrange(-50, 51), 10) for v in range(n - f)}
    step = run_apa_iteration(inputs, n, APA_ADVERSARIES[name](range(n - f, n), seed=seed))
    lo = max(i[0] for i in step.intervals.values())
    hi = min(i[1] for i in step.intervals.values())
    assert lo <= hi
