"""Frame, ACK and exchange airtimes (integer microseconds)."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields


@dataclass(frozen=True)
class PhyParams:
    t_phy_legacy_us: int = 20
    t_phy_he_su_us: int = 52
    sigma_us: int = 16
    sigma_legacy_us: int = 4
    sifs_us: int = 16
    difs_us: int = 30
    slot_us: int = 10
    l_sf_bits: int = 32
    l_mh_bits: int = 272
    l_tb_bits: int = 6
    l_ack_bits: int = 112
    l_frame_bits: int = 12000

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be strictly positive")

    @property
    def pifs_us(self) -> int:
        return self.sifs_us + self.slot_us


@dataclass(frozen=True)
class McsConfig:
    data_bits_per_symbol: int = 1950
    legacy_bits_per_symbol: int = 96

    def __post_init__(self):
        if self.data_bits_per_symbol < 1 or self.legacy_bits_per_symbol < 1:
            raise ValueError("bits per symbol must be at least 1")


def data_frame_airtime(phy: PhyParams, mcs: McsConfig, payload_bits: int) -> int:
    if payload_bits < 1:
        raise ValueError("payload must be at least one bit")
    bits = phy.l_sf_bits + phy.l_mh_bits + payload_bits + phy.l_tb_bits
    return phy.t_phy_he_su_us + math.ceil(bits / mcs.data_bits_per_symbol) * phy.sigma_us


def ack_airtime(phy: PhyParams, mcs: McsConfig) -> int:
    bits = phy.l_sf_bits + phy.l_ack_bits + phy.l_tb_bits
    return phy.t_phy_legacy_us + math.ceil(bits / mcs.legacy_bits_per_symbol) * phy.sigma_legacy_us


def exchange_airtime(phy: PhyParams, mcs: McsConfig, payload_bits: int | None = None) -> int:
    """DATA + SIFS + ACK. DIFS is charged by the contention logic instead."""
    if payload_bits is None:
        payload_bits = phy.l_frame_bits
    return data_frame_airtime(phy, mcs, payload_bits) + phy.sifs_us + ack_airtime(phy, mcs)
