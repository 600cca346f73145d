"""Trace-driven event loop, traffic generation and cross-mode comparison."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .access import (ARRIVAL, COORDINATORS, MODES, SLO, STR, TX_END, Packet, PacketRecord,
                     interface_count, parse_mode)
from .dcf import DEFAULT_CW, DrawStream, InterfaceState
from .phy import McsConfig, PhyParams, exchange_airtime
from .traces import OccupancyTrace

DELIVERY_THRESHOLD = 0.95
DEFAULT_QUEUE_CAPACITY = 10_000


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for a child stream identified by ``keys``."""
    state = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in keys)).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


@dataclass(frozen=True)
class ArrivalSchedule:
    packets: tuple[Packet, ...]
    duration_us: int
    rate_pkts_per_s: float = 0.0

    def __post_init__(self):
        last = -1
        for p in self.packets:
            if p.arrival_us < last:
                raise ValueError("arrivals must be ordered by packet id")
            if p.arrival_us >= self.duration_us:
                raise ValueError(f"packet {p.id} arrives after the schedule ends")
            last = p.arrival_us

    def __len__(self):
        return len(self.packets)

    @classmethod
    def at_times(cls, times: Sequence[int], duration_us: int, size_bits: int = 12000) -> "ArrivalSchedule":
        return cls(tuple(Packet(i, int(t), size_bits) for i, t in enumerate(times)), duration_us)


def gen_poisson_arrivals(rate_pkts_per_s: float, duration_us: int, seed=None,
                         size_bits: int = 12000) -> ArrivalSchedule:
    """Poisson arrivals on the integer-microsecond grid.

    Continuous arrival instants are floored to whole microseconds; an
    arrival that would share a microsecond with its predecessor is pushed
    one microsecond later so ids stay strictly increasing in time.
    """
    if rate_pkts_per_s < 0:
        raise ValueError("arrival rate must be non-negative")
    if rate_pkts_per_s == 0:
        return ArrivalSchedule((), duration_us, 0.0)
    rng = np.random.default_rng(seed)
    mean_gap = 1e6 / rate_pkts_per_s
    chunk = int(duration_us / mean_gap * 1.2) + 64
    times = np.empty(0)
    last = 0.0
    while last < duration_us:
        block = last + np.cumsum(rng.exponential(mean_gap, chunk))
        times = np.concatenate((times, block))
        last = block[-1]
    times = times[times < duration_us]
    ticks = np.floor(times).astype(np.int64)
    if ticks.size:
        # strictly increasing: t_i = max(t_i, t_{i-1} + 1)
        offsets = np.arange(ticks.size)
        ticks = np.maximum.accumulate(ticks - offsets) + offsets
        ticks = ticks[ticks < duration_us]
    packets = tuple(Packet(i, t, size_bits) for i, t in enumerate(ticks.tolist()))
    return ArrivalSchedule(packets, duration_us, rate_pkts_per_s)


@dataclass(frozen=True)
class SimConfig:
    mode: str
    primary_trace: OccupancyTrace
    secondary_trace: Optional[OccupancyTrace] = None
    phy: PhyParams = field(default_factory=PhyParams)
    mcs: McsConfig = field(default_factory=McsConfig)
    secondary_mcs: Optional[McsConfig] = None
    cw: int = DEFAULT_CW
    queue_capacity: Optional[int] = DEFAULT_QUEUE_CAPACITY
    backoff_seed: int = 0
    tiebreak_seed: int = 1
    str_allocation: str = "random"

    def __post_init__(self):
        object.__setattr__(self, "mode", parse_mode(self.mode))
        if self.mode != SLO:
            if self.secondary_trace is None:
                raise ValueError(f"{self.mode} needs a secondary trace")
            if self.secondary_trace.duration_us != self.primary_trace.duration_us:
                raise ValueError("primary and secondary traces must have the same duration")

    @property
    def duration_us(self) -> int:
        return self.primary_trace.duration_us


@dataclass
class RunResult:
    mode: str
    records: list[PacketRecord]
    generated: int
    dropped: int = 0
    in_queue: int = 0
    in_flight: int = 0
    duration_us: int = 0
    payload_bits: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def delivered(self) -> int:
        return len(self.records)

    @property
    def delivered_fraction(self) -> float:
        if self.generated == 0:
            return 1.0
        return self.delivered / self.generated

    @property
    def discarded(self) -> bool:
        return self.delivered_fraction < DELIVERY_THRESHOLD

    @property
    def delays_us(self) -> list[int]:
        return [r.delay_us for r in self.records]

    @property
    def throughput_bps(self) -> float:
        return self.payload_bits / (self.duration_us * 1e-6) if self.duration_us else 0.0

    def departures_by_id(self) -> dict[int, int]:
        return {r.packet_id: r.depart_us for r in self.records}


def backoff_streams(backoff_seed: int, cw: int = DEFAULT_CW) -> tuple[DrawStream, DrawStream]:
    """Primary and secondary draw streams derived from one backoff seed."""
    return (DrawStream(cw, np.random.SeedSequence(backoff_seed, spawn_key=(0,))),
            DrawStream(cw, np.random.SeedSequence(backoff_seed, spawn_key=(1,))))


def _build(config: SimConfig):
    primary_draws, secondary_draws = backoff_streams(config.backoff_seed, config.cw)
    if config.mode == SLO:
        ifaces = [InterfaceState("primary", config.primary_trace, "single", draws=primary_draws)]
        mcs = [config.mcs]
    else:
        ifaces = [
            InterfaceState("primary", config.primary_trace, "primary", draws=primary_draws),
            InterfaceState("secondary", config.secondary_trace, "secondary", draws=secondary_draws),
        ]
        mcs = [config.mcs, config.secondary_mcs or config.mcs]
    kwargs = dict(duration_us=config.duration_us, capacity=config.queue_capacity,
                  tiebreak_rng=np.random.default_rng(config.tiebreak_seed))
    cls = COORDINATORS[config.mode]
    if config.mode in (SLO, STR):
        kwargs["allocation"] = config.str_allocation
    return cls(ifaces, config.phy, mcs, **kwargs)


def run(config: SimConfig, arrivals: ArrivalSchedule) -> RunResult:
    """Replay ``arrivals`` against the configured coordinator over the whole trace.

    The trace only gates carrier sense and backoff freezing; our own
    transmissions always succeed and never touch the trace. Packets not
    acknowledged by the end of the trace stay undelivered.
    """
    if arrivals.duration_us != config.duration_us:
        raise ValueError(f"schedule lasts {arrivals.duration_us} us but traces last {config.duration_us} us")
    coord = _build(config)
    events = coord.events
    packets = arrivals.packets
    horizon = config.duration_us
    i, n = 0, len(packets)
    while True:
        if events and (i >= n or (events[0][0], events[0][1]) < (packets[i].arrival_us, ARRIVAL)):
            t, kind, idx, _, payload = heapq.heappop(events)
            if t > horizon:
                break
            if kind == TX_END:
                coord.on_tx_end(idx, t)
            else:
                coord.on_expiry(idx, t, payload)
        elif i < n:
            packet = packets[i]
            i += 1
            coord.on_arrival(packet, packet.arrival_us)
        else:
            break
    sizes = {p.id: p.size_bits for p in packets}
    stats = {k: getattr(coord, k) for k in ("tiebreaks", "tiebreaks_primary", "txops", "dual_txops")
             if hasattr(coord, k)}
    return RunResult(
        mode=config.mode,
        records=coord.records,
        generated=n,
        dropped=coord.dropped,
        in_queue=len(coord.queue),
        in_flight=coord.in_flight(),
        duration_us=horizon,
        payload_bits=sum(sizes[r.packet_id] for r in coord.records),
        stats=stats,
    )


def full_buffer_throughput(mode: str, config: SimConfig, traces) -> float:
    """Mean delivered bit rate (bits/s) with a queue that never runs dry.

    ``traces`` holds OccupancyTrace objects for SLO, or (primary, secondary)
    pairs for the MLO modes. Trace ``k`` uses backoff and tie-break seeds
    derived from the config seeds and ``k``.
    """
    mode = parse_mode(mode)
    traces = list(traces)
    if not traces:
        raise ValueError("no traces supplied")
    rates = []
    for k, item in enumerate(traces):
        primary, secondary = (item, None) if isinstance(item, OccupancyTrace) else item
        cfg = replace(config, mode=mode, primary_trace=primary, secondary_trace=secondary,
                      queue_capacity=None,
                      backoff_seed=derive_seed(config.backoff_seed, k),
                      tiebreak_seed=derive_seed(config.tiebreak_seed, k))
        size = cfg.phy.l_frame_bits
        shortest = cfg.phy.difs_us + exchange_airtime(cfg.phy, cfg.mcs, size)
        backlog = interface_count(mode) * (cfg.duration_us // shortest + 1) + 1
        schedule = ArrivalSchedule.at_times([0] * backlog, cfg.duration_us, size)
        rates.append(run(cfg, schedule).throughput_bps)
    return float(np.mean(rates))


def compare_modes(primary: OccupancyTrace, secondary: Optional[OccupancyTrace], arrivals: ArrivalSchedule,
                  modes: Sequence[str] = MODES, backoff_seed: int = 0, tiebreak_seed: int = 1,
                  coupled: bool = True, **config) -> dict[str, RunResult]:
    """Run every mode on the same trace pair and the same arrival schedule.

    Coupled runs share one backoff seed, so every mode's primary interface
    sees the same counter for its k-th packet. Otherwise each mode gets a
    seed derived from ``backoff_seed`` and its position in MODES.
    """
    results = {}
    for name in modes:
        mode = parse_mode(name)
        seed = backoff_seed if coupled else derive_seed(backoff_seed, MODES.index(mode))
        cfg = SimConfig(mode, primary, None if mode == SLO else secondary,
                        backoff_seed=seed, tiebreak_seed=tiebreak_seed, **config)
        results[mode] = run(cfg, arrivals)
    return results


def filter_saturated(results: Sequence[RunResult], threshold: float = DELIVERY_THRESHOLD) -> list[RunResult]:
    """Keep runs that delivered at least ``threshold`` of their packets."""
    return [r for r in results if r.delivered_fraction >= threshold]


def load_to_rate(load: float, throughput_bps: float, size_bits: int = 12000) -> float:
    """Poisson rate (packets/s) for a load fraction of a reference throughput."""
    if not 0 < load <= 1 or math.isnan(load):
        raise ValueError("load must lie in (0, 1]")
    return load * throughput_bps / size_bits
