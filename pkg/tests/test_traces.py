import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlo_lab.traces import (OccupancyTrace, RssiTrace, SynthTraceParams, TraceFormatError, bin_label, bin_traces,
                            encode_occupancy, is_idle, load_occupancy_traces, parse_rssi_trace, synthesize_onoff,
                            to_occupancy)
from oracles import naive_is_idle


def csv_rows(*rows):
    return io.StringIO("".join(",".join(str(v) for v in r) + "\n" for r in rows))


def test_parse_full_record():
    traces = parse_rssi_trace(csv_rows([-90] * 100_000), "36")
    assert len(traces) == 1
    assert len(traces[0]) == 100_000
    assert np.all(traces[0].samples == -90)
    assert traces[0].channel_label == "36"


def test_parse_wrong_sample_count():
    with pytest.raises(TraceFormatError, match="wrong sample count") as err:
        parse_rssi_trace(csv_rows([-90] * 99_999))
    assert err.value.line_no == 1


def test_parse_three_rows_keep_order():
    text = "# channel 36\n-90,-80,-70\n-60,-61,-62.5\n\n-1,-2,-3\n"
    traces = parse_rssi_trace(io.StringIO(text), samples_per_record=3)
    assert [t.samples.tolist() for t in traces] == [[-90, -80, -70], [-60, -61, -62.5], [-1, -2, -3]]


def test_parse_non_numeric_names_line():
    with pytest.raises(TraceFormatError, match="line 3: non-numeric value 'x'"):
        parse_rssi_trace(io.StringIO("#hdr\n1,2\n1,x\n"), samples_per_record=2)


def test_rssi_trace_rejects_empty():
    with pytest.raises(ValueError):
        RssiTrace(np.array([]))


@pytest.mark.parametrize("level,expected", [(-90, 0.0), (-60, 1.0)])
def test_to_occupancy_uniform(level, expected):
    occ = to_occupancy(RssiTrace(np.full(50, float(level))), -82)
    assert occ.occupancy == expected
    assert len(occ) == 50


def test_to_occupancy_counts():
    samples = np.array([-70] * 3 + [-95] * 7, dtype=float)
    assert to_occupancy(RssiTrace(samples), -82).occupancy == pytest.approx(0.3)


def test_threshold_is_inclusive():
    occ = to_occupancy(RssiTrace(np.array([-82.0, -82.1])), -82)
    assert occ.busy.tolist() == [True, False]


@pytest.mark.parametrize("occ,label", [
    (0.10, 10), (0.149, 10), (0.150, 20), (0.05, 10), (0.03, None),
    (0.949, 90), (0.95, None), (0.45, 50), (0.35, 40), (0.25, 30),
])
def test_bin_label(occ, label):
    assert bin_label(occ) == label


def test_bin_traces_partitions():
    traces = [OccupancyTrace([1] * k + [0] * (100 - k)) for k in range(100)]
    bins, unbinned = bin_traces(traces)
    binned = [t for b in bins.values() for t in b.members]
    assert len(binned) + len(unbinned) == len(traces)
    assert len({id(t) for t in binned}) == len(binned)
    for label, b in bins.items():
        for t in b.members:
            assert label - 5 <= t.occupancy * 100 < label + 5
    assert sorted(round(t.occupancy * 100) for t in unbinned) == [0, 1, 2, 3, 4, 95, 96, 97, 98, 99]


def test_synth_fixed_alternation():
    trace = synthesize_onoff(SynthTraceParams(0.5, 1000, 1_000_000, "fixed"), seed=3)
    assert trace.occupancy == 0.5
    runs = np.diff(np.flatnonzero(np.diff(trace.busy.astype(int)))).tolist()
    assert set(runs) == {100}


def test_synth_exponential_hits_target():
    trace = synthesize_onoff(SynthTraceParams(0.4, 500, 10_000_000), seed=1)
    assert abs(trace.occupancy - 0.4) <= 0.02


def test_synth_law_of_large_numbers_over_seeds():
    params = SynthTraceParams(0.4, 1000, 10_000_000)
    errors = [abs(synthesize_onoff(params, seed=s).occupancy - 0.4) for s in range(20)]
    assert max(errors) <= 0.02


def test_synth_deterministic():
    params = SynthTraceParams(0.3, 700, 200_000)
    assert synthesize_onoff(params, seed=9) == synthesize_onoff(params, seed=9)
    assert synthesize_onoff(params, seed=9) != synthesize_onoff(params, seed=10)


def test_synth_matched_occupancy_is_tight():
    for seed in range(10):
        trace = synthesize_onoff(SynthTraceParams(0.7, 2000, 1_000_000, match_occupancy=True), seed=seed)
        assert abs(trace.occupancy - 0.7) < 0.001


@pytest.mark.parametrize("kwargs", [
    dict(target_occupancy=0.0, mean_busy_us=100),
    dict(target_occupancy=1.0, mean_busy_us=100),
    dict(target_occupancy=0.5, mean_busy_us=5),
    dict(target_occupancy=0.5, mean_busy_us=100, duration_us=0),
])
def test_synth_params_validation(kwargs):
    with pytest.raises(ValueError):
        SynthTraceParams(**kwargs)


def test_is_idle_examples():
    trace = OccupancyTrace.from_intervals(200, [(50, 60)])
    assert is_idle(trace, 40, 50)
    assert not is_idle(trace, 45, 55)
    assert is_idle(trace, 55, 55)
    with pytest.raises(ValueError):
        is_idle(trace, 10, 201)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=40), st.data())
def test_is_idle_matches_brute_force_and_is_monotone(flags, data):
    trace = OccupancyTrace(flags)
    dur = trace.duration_us
    a = data.draw(st.integers(0, dur))
    b = data.draw(st.integers(a, dur))
    got = is_idle(trace, a, b)
    assert got == naive_is_idle(flags, a, b)
    if not got:
        a2 = data.draw(st.integers(0, a))
        b2 = data.draw(st.integers(b, dur))
        assert not is_idle(trace, a2, b2)


def test_encode_round_trip(tmp_path):
    trace = synthesize_onoff(SynthTraceParams(0.4, 100, 5000), seed=2)
    path = tmp_path / "t.csv"
    path.write_text("# synthetic\n" + encode_occupancy(trace, -82) + "\n")
    (loaded,) = load_occupancy_traces(path, -82, samples_per_record=None)
    assert loaded == trace
    assert loaded.label.endswith("t.csv#0")
