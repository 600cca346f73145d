"""Trace-driven latency simulator for Wi-Fi multi-link channel access."""

from .access import MODES, NSTR, SLO, STR, STR_PLUS, Packet, PacketRecord
from .engine import (ArrivalSchedule, RunResult, SimConfig, compare_modes, filter_saturated,
                     full_buffer_throughput, gen_poisson_arrivals, run)
from .phy import McsConfig, PhyParams, ack_airtime, data_frame_airtime, exchange_airtime
from .traces import OccupancyTrace, RssiTrace, SynthTraceParams, synthesize_onoff, to_occupancy

__version__ = "0.1.0"
