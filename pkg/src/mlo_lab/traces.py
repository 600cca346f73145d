"""RSSI trace ingestion, busy/idle occupancy timelines and synthetic on/off traces."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

SAMPLE_US = 10
SAMPLES_PER_RECORD = 100_000
DEFAULT_THRESHOLD_DBM = -82.0
BIN_LABELS = tuple(range(10, 100, 10))


class TraceFormatError(ValueError):
    """Raised when a trace file does not follow the CSV record format."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, eq=False)
class RssiTrace:
    samples: np.ndarray
    channel_label: str = ""
    sample_period_us: int = SAMPLE_US

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("RSSI trace must contain at least one sample")
        if self.sample_period_us != SAMPLE_US:
            raise ValueError(f"sample period must be {SAMPLE_US} us")

    def __len__(self):
        return len(self.samples)


class OccupancyTrace:
    """Binary busy/idle timeline sampled every 10 us.

    The busy flags are stored read-only so a trace can be shared by any
    number of runs. Interval queries work in integer microseconds.
    """

    def __init__(self, busy, label: str = ""):
        flags = np.array(busy, dtype=bool).ravel()
        if flags.size == 0:
            raise ValueError("occupancy trace must contain at least one sample")
        flags.setflags(write=False)
        self.busy = flags
        self.label = label

    @classmethod
    def idle(cls, duration_us: int, label: str = "idle") -> "OccupancyTrace":
        return cls(np.zeros(_n_samples(duration_us), dtype=bool), label)

    @classmethod
    def all_busy(cls, duration_us: int, label: str = "busy") -> "OccupancyTrace":
        return cls(np.ones(_n_samples(duration_us), dtype=bool), label)

    @classmethod
    def from_intervals(cls, duration_us: int, busy_us: Iterable[tuple[int, int]], label: str = "") -> "OccupancyTrace":
        """Build a trace from busy [start, end) intervals given on the 10 us grid."""
        flags = np.zeros(_n_samples(duration_us), dtype=bool)
        for start, end in busy_us:
            if start % SAMPLE_US or end % SAMPLE_US:
                raise ValueError("busy intervals must be aligned to the 10 us grid")
            flags[start // SAMPLE_US:end // SAMPLE_US] = True
        return cls(flags, label)

    def __len__(self):
        return self.busy.size

    def __eq__(self, other):
        if not isinstance(other, OccupancyTrace):
            return NotImplemented
        return np.array_equal(self.busy, other.busy)

    def __hash__(self):
        return hash(self.busy.tobytes())

    def __repr__(self):
        return f"OccupancyTrace(label={self.label!r}, samples={len(self)}, occupancy={self.occupancy:.3f})"

    @property
    def duration_us(self) -> int:
        return SAMPLE_US * self.busy.size

    @cached_property
    def occupancy(self) -> float:
        return float(self.busy.mean())

    @cached_property
    def _busy_prefix(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.busy, dtype=np.int64)))

    @cached_property
    def idle_intervals(self) -> tuple[list[int], list[int]]:
        """Maximal idle runs as parallel lists of start and end times (us)."""
        padded = np.concatenate(([True], self.busy, [True])).astype(np.int8)
        edges = np.diff(padded)
        starts = np.flatnonzero(edges == -1) * SAMPLE_US
        ends = np.flatnonzero(edges == 1) * SAMPLE_US
        return starts.tolist(), ends.tolist()

    def busy_at(self, t_us: int) -> bool:
        """Channel state at instant ``t_us``; the trace end counts as busy."""
        if t_us >= self.duration_us:
            return True
        return bool(self.busy[t_us // SAMPLE_US])

    def busy_until(self, t_us: int) -> int:
        """End of the busy run covering ``t_us`` (``t_us`` itself when idle)."""
        starts, ends = self.idle_intervals
        i = bisect_right(ends, t_us)
        if i == len(starts):
            return self.duration_us
        return max(t_us, starts[i])


def _n_samples(duration_us: int) -> int:
    if duration_us <= 0 or duration_us % SAMPLE_US:
        raise ValueError(f"duration must be a positive multiple of {SAMPLE_US} us, got {duration_us}")
    return duration_us // SAMPLE_US


def parse_rssi_trace(stream: TextIO, channel_label: str = "",
                     samples_per_record: int | None = SAMPLES_PER_RECORD) -> list[RssiTrace]:
    """Read one RssiTrace per CSV record.

    Lines starting with ``#`` and blank lines are skipped. Pass
    ``samples_per_record=None`` to accept records of any (consistent) length.
    """
    traces = []
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split(",")
        if samples_per_record is not None and len(fields) != samples_per_record:
            raise TraceFormatError(
                line_no, f"wrong sample count: expected {samples_per_record}, got {len(fields)}")
        try:
            values = np.array(fields, dtype=float)
        except ValueError:
            bad = next(f for f in fields if not _is_number(f))
            raise TraceFormatError(line_no, f"non-numeric value {bad!r}") from None
        if not np.all(np.isfinite(values)):
            raise TraceFormatError(line_no, "non-finite RSSI value")
        traces.append(RssiTrace(values, channel_label))
    return traces


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def to_occupancy(trace: RssiTrace, threshold_dbm: float = DEFAULT_THRESHOLD_DBM, label: str = "") -> OccupancyTrace:
    if not math.isfinite(threshold_dbm):
        raise ValueError("threshold must be finite")
    return OccupancyTrace(np.asarray(trace.samples) >= threshold_dbm, label or trace.channel_label)


def bin_label(occupancy: float) -> int | None:
    """Decile label for an occupancy fraction, or None outside [5%, 95%)."""
    # epsilon absorbs float noise in products such as 0.15 * 100
    pct = occupancy * 100.0
    label = int(math.floor((pct + 5.0) / 10.0 + 1e-12)) * 10
    if label not in BIN_LABELS:
        return None
    return label


@dataclass
class OccupancyBin:
    label_pct: int
    members: list[OccupancyTrace]


def bin_traces(traces: Iterable[OccupancyTrace]) -> tuple[dict[int, OccupancyBin], list[OccupancyTrace]]:
    """Partition traces into decile bins; returns ``(bins, unbinned)``."""
    bins: dict[int, OccupancyBin] = {}
    unbinned = []
    for trace in traces:
        label = bin_label(trace.occupancy)
        if label is None:
            unbinned.append(trace)
        else:
            bins.setdefault(label, OccupancyBin(label, [])).members.append(trace)
    return dict(sorted(bins.items())), unbinned


@dataclass(frozen=True)
class SynthTraceParams:
    target_occupancy: float
    mean_busy_us: float
    duration_us: int = 1_000_000
    burst_distribution: str = "exponential"
    match_occupancy: bool = False

    def __post_init__(self):
        if not 0.0 < self.target_occupancy < 1.0:
            raise ValueError("target occupancy must lie strictly between 0 and 1")
        if self.mean_busy_us < SAMPLE_US:
            raise ValueError(f"mean busy burst must be at least {SAMPLE_US} us")
        if self.duration_us <= 0:
            raise ValueError("zero-duration trace requested")
        if self.burst_distribution not in ("exponential", "fixed"):
            raise ValueError(f"unknown burst distribution {self.burst_distribution!r}")

    @property
    def mean_idle_us(self) -> float:
        p = self.target_occupancy
        return self.mean_busy_us * (1.0 - p) / p


def synthesize_onoff(params: SynthTraceParams, seed=None, label: str = "") -> OccupancyTrace:
    """Alternating idle/busy renewal trace quantized to the 10 us grid.

    With ``match_occupancy`` the busy and idle bursts are rescaled (each
    family by its own factor) so the trace hits the target fraction up to
    quantization, which keeps every generated trace inside its decile bin.
    """
    n = _n_samples(params.duration_us)
    rng = np.random.default_rng(seed)
    p = params.target_occupancy
    mean_cycle = params.mean_busy_us + params.mean_idle_us
    n_cycles = int(params.duration_us / mean_cycle * 1.5) + 16

    if params.burst_distribution == "fixed":
        busy = np.full(n_cycles, params.mean_busy_us)
        idle = np.full(n_cycles, params.mean_idle_us)
    else:
        busy = rng.exponential(params.mean_busy_us, n_cycles)
        idle = rng.exponential(params.mean_idle_us, n_cycles)
    start_busy = bool(rng.random() < p)

    while True:
        durations = np.column_stack((busy, idle) if start_busy else (idle, busy)).ravel()
        if durations.sum() >= params.duration_us or params.match_occupancy:
            break
        # rare: the draw fell short of the duration
        extra_b = rng.exponential(params.mean_busy_us, n_cycles)
        extra_i = rng.exponential(params.mean_idle_us, n_cycles)
        busy, idle = np.concatenate((busy, extra_b)), np.concatenate((idle, extra_i))

    if params.match_occupancy:
        # keep just enough whole cycles to cover the duration, then rescale
        ends = np.cumsum(durations)
        k = int(np.searchsorted(ends, params.duration_us)) + 1
        k += k % 2
        durations = durations[:k].copy()
        first_busy = 0 if start_busy else 1
        b_sum = durations[first_busy::2].sum()
        i_sum = durations[1 - first_busy::2].sum()
        durations[first_busy::2] *= p * params.duration_us / b_sum
        durations[1 - first_busy::2] *= (1 - p) * params.duration_us / i_sum

    bounds = np.rint(np.cumsum(durations) / SAMPLE_US).astype(np.int64)
    bounds = np.minimum(bounds, n)
    flags = np.zeros(n, dtype=bool)
    prev = 0
    busy_now = start_busy
    for b in bounds:
        if busy_now and b > prev:
            flags[prev:b] = True
        prev = b
        busy_now = not busy_now
        if prev >= n:
            break
    return OccupancyTrace(flags, label)


def is_idle(trace: OccupancyTrace, t_start_us: int, t_end_us: int) -> bool:
    """True iff no busy sample overlaps ``[t_start_us, t_end_us)``."""
    if not 0 <= t_start_us <= t_end_us <= trace.duration_us:
        raise ValueError(f"interval [{t_start_us}, {t_end_us}) outside trace of {trace.duration_us} us")
    if t_start_us == t_end_us:
        return True
    first = t_start_us // SAMPLE_US
    last = -(-t_end_us // SAMPLE_US)
    prefix = trace._busy_prefix
    return bool(prefix[last] == prefix[first])


def encode_occupancy(trace: OccupancyTrace, threshold_dbm: float = DEFAULT_THRESHOLD_DBM) -> str:
    """One CSV record: busy samples at threshold+10 dBm, idle at threshold-10 dBm."""
    hi, lo = f"{threshold_dbm + 10:g}", f"{threshold_dbm - 10:g}"
    return ",".join(np.where(trace.busy, hi, lo).tolist())


def load_occupancy_traces(path, threshold_dbm: float = DEFAULT_THRESHOLD_DBM,
                          samples_per_record: int | None = SAMPLES_PER_RECORD) -> list[OccupancyTrace]:
    """Load every record of a CSV file, or of every ``*.csv`` in a directory.

    Each trace is labelled ``<file>#<record index>``.
    """
    from pathlib import Path

    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no trace files under {path}")
    out = []
    for f in files:
        with open(f) as fh:
            records = parse_rssi_trace(fh, f.stem, samples_per_record)
        for i, rec in enumerate(records):
            out.append(to_occupancy(rec, threshold_dbm, label=f"{f}#{i}"))
    return out
