import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlo_lab.dcf import DrawStream, draw_backoff, next_backoff_expiry, pifs_idle
from mlo_lab.phy import PhyParams
from mlo_lab.traces import OccupancyTrace
from oracles import naive_backoff_expiry


def test_draw_cw_one_is_zero():
    rng = np.random.default_rng(0)
    assert {draw_backoff(1, rng) for _ in range(100)} == {0}


def test_draw_mean():
    stream = DrawStream(16, seed=4)
    draws = np.array([stream.next() for _ in range(1_000_000)])
    assert draws.min() == 0 and draws.max() == 15
    assert abs(draws.mean() - 7.5) < 0.05


def test_draw_deterministic():
    a = [draw_backoff(16, np.random.default_rng(3)) for _ in range(5)]
    b = [draw_backoff(16, np.random.default_rng(3)) for _ in range(5)]
    assert a == b
    s1, s2 = DrawStream(16, 8), DrawStream(16, 8)
    assert [s1.next() for _ in range(3000)] == [s2.at(i) for i in range(1, 3001)]


def test_draw_rejects_zero_cw():
    with pytest.raises(ValueError):
        draw_backoff(0, np.random.default_rng())


def test_expiry_idle_trace():
    assert next_backoff_expiry(OccupancyTrace.idle(1000), 0, 4) == 70


def test_expiry_defers_then_difs():
    trace = OccupancyTrace.from_intervals(1000, [(0, 50)])
    assert next_backoff_expiry(trace, 0, 0) == 80


def test_expiry_freezes_and_resumes():
    trace = OccupancyTrace.from_intervals(1000, [(60, 100)])
    assert next_backoff_expiry(trace, 0, 5) == 150


def test_expiry_never_when_trace_ends():
    assert next_backoff_expiry(OccupancyTrace.all_busy(1000), 0, 0) is None
    assert next_backoff_expiry(OccupancyTrace.idle(100), 0, 8) is None
    assert next_backoff_expiry(OccupancyTrace.idle(100), 0, 7) == 100
    with pytest.raises(ValueError):
        next_backoff_expiry(OccupancyTrace.idle(100), 101, 0)


def test_short_idle_gap_does_not_complete_difs():
    # 20 us idle gap between bursts is shorter than DIFS
    trace = OccupancyTrace.from_intervals(500, [(0, 100), (120, 200)])
    assert next_backoff_expiry(trace, 0, 0) == 230


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 15))
def test_idle_trace_closed_form(t_now, counter):
    trace = OccupancyTrace.idle(200_000)
    assert next_backoff_expiry(trace, t_now, counter) == t_now + 30 + 10 * counter


@settings(max_examples=300, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=120), st.integers(0, 8), st.data())
def test_expiry_properties(flags, counter, data):
    trace = OccupancyTrace(flags)
    t_now = data.draw(st.integers(0, trace.duration_us))
    e = next_backoff_expiry(trace, t_now, counter)
    assert e == naive_backoff_expiry(flags, t_now, counter)
    if e is not None:
        # never strictly inside a busy sample
        assert e % 10 == 0 or not flags[e // 10]
    e_more = next_backoff_expiry(trace, t_now, counter + 1)
    if e is None:
        assert e_more is None
    elif e_more is not None:
        assert e_more >= e
    t_later = data.draw(st.integers(t_now, trace.duration_us))
    e_late = next_backoff_expiry(trace, t_later, counter)
    if e is None:
        assert e_late is None
    elif e_late is not None:
        assert e_late >= e


def test_pifs_examples():
    phy = PhyParams()
    assert pifs_idle(OccupancyTrace.idle(1000), 26, phy)
    assert pifs_idle(OccupancyTrace.idle(1000), 900, phy)
    assert not pifs_idle(OccupancyTrace.from_intervals(1000, [(10, 20)]), 30, phy)
    assert pifs_idle(OccupancyTrace.from_intervals(1000, [(0, 10)]), 40, phy)
    with pytest.raises(ValueError):
        pifs_idle(OccupancyTrace.idle(1000), 25, phy)
