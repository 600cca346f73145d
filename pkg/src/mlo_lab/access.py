"""Channel-access coordinators for SLO, MLO-STR, MLO-NSTR and MLO-STR+.

A coordinator owns the transmit queue, the radio interfaces and a heap of
pending interface events. The event loop in :mod:`mlo_lab.engine` feeds it
packet arrivals and pops its events in time order; the coordinator decides
which packet goes on which interface and when.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dcf import EXPIRED, BackoffInstance, InterfaceState, pifs_idle, start_backoff
from .phy import McsConfig, PhyParams, exchange_airtime
from .traces import is_idle

SLO = "SLO"
STR = "MLO-STR"
NSTR = "MLO-NSTR"
STR_PLUS = "MLO-STR+"
MODES = (SLO, STR, NSTR, STR_PLUS)

_ALIASES = {
    "slo": SLO,
    "str": STR, "mlo-str": STR,
    "nstr": NSTR, "mlo-nstr": NSTR,
    "str+": STR_PLUS, "mlo-str+": STR_PLUS, "strp": STR_PLUS,
}

# event priorities at equal timestamps
TX_END, EXPIRY, ARRIVAL = 0, 1, 2


def parse_mode(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown access mode {name!r}") from None


def interface_count(mode: str) -> int:
    return 1 if mode == SLO else 2


@dataclass(frozen=True)
class Packet:
    id: int
    arrival_us: int
    size_bits: int = 12000


@dataclass(frozen=True)
class PacketRecord:
    packet_id: int
    interface_used: str
    arrival_us: int
    tx_start_us: int
    depart_us: int

    @property
    def delay_us(self) -> int:
        return self.depart_us - self.arrival_us


class Coordinator:
    mode: str = ""

    def __init__(self, interfaces: list[InterfaceState], phy: PhyParams, mcs: list[McsConfig],
                 duration_us: int, capacity: Optional[int] = None, tiebreak_rng=None):
        self.interfaces = interfaces
        self.phy = phy
        self.mcs = mcs
        self.duration_us = duration_us
        self.capacity = capacity
        self.tiebreak_rng = tiebreak_rng if tiebreak_rng is not None else np.random.default_rng()
        self.queue: deque[Packet] = deque()
        self.events: list = []
        self.records: list[PacketRecord] = []
        self.dropped = 0
        self.allocated = 0  # packets handed to an interface so far, in FIFO order
        self.unfinished_tx = 0  # transmissions whose ACK would end after the trace
        self._seq = 0
        self._airtime: dict[tuple[int, int], int] = {}

    def schedule(self, t_us: int, kind: int, idx: int, payload=None):
        self._seq += 1
        heapq.heappush(self.events, (t_us, kind, idx, self._seq, payload))

    def enqueue(self, packet: Packet) -> bool:
        if self.capacity is not None and len(self.queue) >= self.capacity:
            self.dropped += 1
            return False
        self.queue.append(packet)
        return True

    def draw(self, idx: int) -> int:
        # primary draw k always belongs to the k-th allocated packet,
        # so any two modes sharing the stream see the same counters
        if idx == 0:
            return self.interfaces[0].draws.at(self.allocated + 1)
        return self.interfaces[idx].draws.next()

    def contend(self, idx: int, t_us: int, counter: int) -> BackoffInstance:
        backoff = start_backoff(self.interfaces[idx], t_us, counter, self.phy)
        if backoff.expiry_us is not None:
            self.schedule(backoff.expiry_us, EXPIRY, idx, backoff)
        return backoff

    def transmit(self, idx: int, packet: Packet, t_us: int):
        key = (idx, packet.size_bits)
        airtime = self._airtime.get(key)
        if airtime is None:
            airtime = self._airtime[key] = exchange_airtime(self.phy, self.mcs[idx], packet.size_bits)
        iface = self.interfaces[idx]
        end = t_us + airtime
        iface.busy_until_us = end
        if end <= self.duration_us:
            self.records.append(PacketRecord(packet.id, iface.name, packet.arrival_us, t_us, end))
        else:
            self.unfinished_tx += 1
        self.schedule(end, TX_END, idx)

    def in_flight(self) -> int:
        held = sum(1 for f in self.interfaces if f.allocated_packet is not None)
        return held + self.unfinished_tx

    def on_arrival(self, packet: Packet, t_us: int):
        raise NotImplementedError

    def on_expiry(self, idx: int, t_us: int, backoff: BackoffInstance):
        raise NotImplementedError

    def on_tx_end(self, idx: int, t_us: int):
        raise NotImplementedError


class STRCoordinator(Coordinator):
    """Allocate the head packet to any free interface, then contend there.

    With both interfaces free the choice is a coin flip from the tie-break
    stream (``allocation="random"``) or, with ``"prefer-idle-channel"``,
    the interface whose channel is idle right now when exactly one is.
    """

    mode = STR

    def __init__(self, *args, allocation: str = "random", **kwargs):
        super().__init__(*args, **kwargs)
        if allocation not in ("random", "prefer-idle-channel"):
            raise ValueError(f"unknown STR allocation policy {allocation!r}")
        self.allocation = allocation
        self.tiebreaks = 0
        self.tiebreaks_primary = 0

    def on_arrival(self, packet, t_us):
        if self.enqueue(packet):
            self.dispatch(t_us)

    def on_tx_end(self, idx, t_us):
        self.dispatch(t_us)

    def on_expiry(self, idx, t_us, backoff):
        iface = self.interfaces[idx]
        if iface.backoff is not backoff:
            return
        backoff.state = EXPIRED
        packet = iface.allocated_packet
        iface.allocated_packet = None
        iface.backoff = None
        self.transmit(idx, packet, t_us)

    def dispatch(self, t_us: int):
        while self.queue:
            free = [i for i, f in enumerate(self.interfaces) if f.is_free(t_us)]
            if not free:
                return
            idx = free[0] if len(free) == 1 else self._choose(free, t_us)
            counter = self.draw(idx)
            self.interfaces[idx].allocated_packet = self.queue.popleft()
            self.allocated += 1
            self.contend(idx, t_us, counter)

    def _choose(self, free: list[int], t_us: int) -> int:
        if self.allocation == "prefer-idle-channel":
            idle = [i for i in free if not self.interfaces[i].channel.busy_at(t_us)]
            if len(idle) == 1:
                return idle[0]
        self.tiebreaks += 1
        idx = free[int(self.tiebreak_rng.integers(len(free)))]
        self.tiebreaks_primary += idx == 0
        return idx


class SLOCoordinator(STRCoordinator):
    """Legacy single-link DCF: one interface, packets served one at a time."""

    mode = SLO


class NSTRCoordinator(Coordinator):
    """Primary contends; on expiry a second packet rides the secondary when
    that channel was idle for PIFS. The secondary never contends alone."""

    mode = NSTR

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.txops = 0
        self.dual_txops = 0

    def on_arrival(self, packet, t_us):
        if self.enqueue(packet):
            self._contend(t_us)

    def on_tx_end(self, idx, t_us):
        if idx == 0:
            self._contend(t_us)

    def _contend(self, t_us: int):
        primary = self.interfaces[0]
        if self.queue and primary.backoff is None and primary.busy_until_us <= t_us:
            self.contend(0, t_us, self.draw(0))

    def on_expiry(self, idx, t_us, backoff):
        primary, secondary = self.interfaces
        if primary.backoff is not backoff:
            return
        backoff.state = EXPIRED
        primary.backoff = None
        self.txops += 1
        dual = (len(self.queue) >= 2 and secondary.busy_until_us <= t_us
                and t_us >= self.phy.pifs_us and pifs_idle(secondary.channel, t_us, self.phy))
        self.allocated += 1
        self.transmit(0, self.queue.popleft(), t_us)
        if dual:
            self.dual_txops += 1
            self.allocated += 1
            self.transmit(1, self.queue.popleft(), t_us)


class STRPlusCoordinator(Coordinator):
    """Both interfaces count down without a packet attached; the first
    backoff to expire takes the head of the queue.

    A backoff that expires on an empty queue is held at zero. On the next
    arrival the interface transmits at once if its channel stayed idle since
    the expiry (so it has been idle for at least DIFS), otherwise it redraws.
    A backoff outlives the packet that triggered it, so a packet may leave
    sooner than DIFS after it arrived.
    """

    mode = STR_PLUS

    def on_arrival(self, packet, t_us):
        if self.enqueue(packet):
            self._arm(t_us)

    def on_tx_end(self, idx, t_us):
        self._arm(t_us)

    def _arm(self, t_us: int):
        for idx, iface in enumerate(self.interfaces):
            if not self.queue:
                return
            if iface.busy_until_us > t_us:
                continue
            backoff = iface.backoff
            if backoff is None:
                self.contend(idx, t_us, self.draw(idx))
            elif backoff.state == EXPIRED:
                if is_idle(iface.channel, backoff.held_since_us, t_us):
                    iface.backoff = None
                    self.allocated += 1
                    self.transmit(idx, self.queue.popleft(), t_us)
                else:
                    self.contend(idx, t_us, self.draw(idx))

    def on_expiry(self, idx, t_us, backoff):
        iface = self.interfaces[idx]
        if iface.backoff is not backoff:
            return
        backoff.state = EXPIRED
        if not self.queue:
            backoff.held_since_us = t_us
            return
        iface.backoff = None
        self.allocated += 1
        self.transmit(idx, self.queue.popleft(), t_us)


COORDINATORS = {
    SLO: SLOCoordinator,
    STR: STRCoordinator,
    NSTR: NSTRCoordinator,
    STR_PLUS: STRPlusCoordinator,
}
