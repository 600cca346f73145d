"""DCF contention: backoff draws, DIFS sensing, slotted countdown with freezing."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .phy import PhyParams
from .traces import OccupancyTrace, is_idle

DEFAULT_CW = 16

SEEKING_DIFS = "seeking-difs"
COUNTING = "counting"
FROZEN = "frozen"
EXPIRED = "expired"


def draw_backoff(cw: int, rng: np.random.Generator) -> int:
    """Uniform backoff counter in ``[0, cw - 1]``."""
    if cw < 1:
        raise ValueError("contention window must be at least 1")
    return int(rng.integers(cw))


class DrawStream:
    """Reproducible sequence of backoff draws addressable by position.

    Draws are produced in fixed-size blocks, so ``at(i)`` returns the same
    value no matter how far the stream has already been consumed. The
    primary interface of every access mode reads ``at(k)`` for its k-th
    allocated packet, which is what couples modes that share a seed.
    """

    BLOCK = 1024

    def __init__(self, cw: int = DEFAULT_CW, seed=None):
        if cw < 1:
            raise ValueError("contention window must be at least 1")
        self.cw = cw
        self._rng = np.random.default_rng(seed)
        self._values: list[int] = []
        self._pos = 0

    def at(self, index: int) -> int:
        """1-based draw ``index``."""
        if index < 1:
            raise ValueError("draw index is 1-based")
        while len(self._values) < index:
            self._values.extend(self._rng.integers(self.cw, size=self.BLOCK).tolist())
        return self._values[index - 1]

    def next(self) -> int:
        self._pos += 1
        return self.at(self._pos)


@dataclass
class BackoffInstance:
    counter_slots: int
    created_at_us: int
    expiry_us: Optional[int]
    cw: int = DEFAULT_CW
    state: str = COUNTING
    held_since_us: Optional[int] = None


@dataclass
class InterfaceState:
    name: str
    channel: OccupancyTrace
    role: str = "single"
    busy_until_us: int = 0
    allocated_packet: object = None
    backoff: Optional[BackoffInstance] = None
    draws: DrawStream = field(default_factory=DrawStream)

    def is_free(self, t_us: int) -> bool:
        return self.allocated_packet is None and self.busy_until_us <= t_us


def next_backoff_expiry(trace: OccupancyTrace, t_now_us: int, counter_slots: int,
                        phy: PhyParams = PhyParams()) -> Optional[int]:
    """Instant the backoff counter reaches zero, or None if the trace ends first.

    The channel must be idle for a full DIFS before counting starts. Slots
    are anchored at the end of that DIFS and the counter drops at the end of
    every fully idle slot. A busy sample inside a slot freezes the counter
    and the DIFS search restarts once the busy run is over.
    """
    if t_now_us < 0 or t_now_us > trace.duration_us:
        raise ValueError(f"t_now {t_now_us} outside trace of {trace.duration_us} us")
    if counter_slots < 0:
        raise ValueError("backoff counter must be non-negative")
    starts, ends = trace.idle_intervals
    difs, slot = phy.difs_us, phy.slot_us
    i = bisect_right(ends, t_now_us)
    remaining = counter_slots
    n = len(starts)
    while i < n:
        countdown = max(t_now_us, starts[i]) + difs
        end = ends[i]
        if countdown <= end:
            full_slots = (end - countdown) // slot
            if remaining <= full_slots:
                return countdown + remaining * slot
            remaining -= full_slots
        i += 1
    return None


def pifs_idle(trace: OccupancyTrace, t_us: int, phy: PhyParams = PhyParams()) -> bool:
    pifs = phy.pifs_us
    if t_us < pifs:
        raise ValueError(f"PIFS check needs t >= {pifs} us")
    return is_idle(trace, t_us - pifs, t_us)


def start_backoff(iface: InterfaceState, t_us: int, counter_slots: int, phy: PhyParams) -> BackoffInstance:
    expiry = next_backoff_expiry(iface.channel, t_us, counter_slots, phy)
    iface.backoff = BackoffInstance(counter_slots, t_us, expiry, cw=iface.draws.cw)
    return iface.backoff
