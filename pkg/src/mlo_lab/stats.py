"""Delay pooling and summary statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

MIN_P95_SAMPLES = 20


class PoolSummary(NamedTuple):
    n_packets: int
    mean_delay_us: float
    p95_delay_us: Optional[int]


def nearest_rank(sorted_values, pct: int):
    """Nearest-rank percentile: the value at 1-based rank ceil(pct/100 * n)."""
    n = len(sorted_values)
    rank = max(1, (pct * n + 99) // 100)
    return sorted_values[rank - 1]


def summarize(delays_us: Iterable[int]) -> PoolSummary:
    pool = sorted(delays_us)
    if not pool:
        raise ValueError("cannot summarize an empty delay pool")
    p95 = nearest_rank(pool, 95) if len(pool) >= MIN_P95_SAMPLES else None
    return PoolSummary(len(pool), sum(pool) / len(pool), p95)


@dataclass
class DelaySummary:
    mode: str
    primary_bin_pct: int
    secondary_bin_pct: Optional[int]
    load_fraction: float
    n_packets: int
    mean_delay_us: Optional[float]
    p95_delay_us: Optional[int]
    runs_retained: int
    runs_discarded: int
    throughput_mbps: Optional[float] = None

    @property
    def warning(self) -> bool:
        return self.runs_retained == 0 or self.n_packets == 0
