import pytest

from mlo_lab.engine import backoff_streams
from mlo_lab.traces import OccupancyTrace, SynthTraceParams, synthesize_onoff


@pytest.fixture(scope="session")
def idle_second():
    return OccupancyTrace.idle(1_000_000)


def seed_with_draws(primary=None, secondary=None, limit=100_000):
    """Smallest backoff seed whose first draws match the requested counters."""
    for seed in range(limit):
        p, s = backoff_streams(seed)
        if (primary is None or p.at(1) == primary) and (secondary is None or s.at(1) == secondary):
            return seed
    raise LookupError("no seed found")


def first_draws(seed):
    p, s = backoff_streams(seed)
    return p.at(1), s.at(1)


def bursty(occupancy, seed, duration_us=200_000, mean_busy_us=1000):
    return synthesize_onoff(SynthTraceParams(occupancy, mean_busy_us, duration_us, match_occupancy=True), seed)


# acceptance verdicts, echoed at the end of the session
VERDICTS: list[str] = []


def report(criterion, ok, detail):
    word = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"{word} [{criterion}] {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
