import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlo_lab.phy import McsConfig, PhyParams, ack_airtime, data_frame_airtime, exchange_airtime

DEFAULT = PhyParams()
MCS = McsConfig()


def test_defaults_match_parameter_table():
    assert (DEFAULT.t_phy_legacy_us, DEFAULT.t_phy_he_su_us, DEFAULT.sigma_us, DEFAULT.sigma_legacy_us) == (20, 52, 16, 4)
    assert (DEFAULT.sifs_us, DEFAULT.difs_us, DEFAULT.slot_us) == (16, 30, 10)
    assert (DEFAULT.l_sf_bits, DEFAULT.l_mh_bits, DEFAULT.l_tb_bits, DEFAULT.l_ack_bits) == (32, 272, 6, 112)
    assert DEFAULT.l_frame_bits == 12000
    assert DEFAULT.pifs_us == 26


@pytest.mark.parametrize("mcs,payload,expected", [
    (MCS, 12000, 164),
    (MCS, 100, 68),
    (McsConfig(data_bits_per_symbol=12310), 12000, 68),
])
def test_data_frame_airtime(mcs, payload, expected):
    assert data_frame_airtime(DEFAULT, mcs, payload) == expected


@pytest.mark.parametrize("legacy,expected", [(96, 28), (150, 24), (1, 620)])
def test_ack_airtime(legacy, expected):
    assert ack_airtime(DEFAULT, McsConfig(legacy_bits_per_symbol=legacy)) == expected


def test_exchange_airtime():
    assert exchange_airtime(DEFAULT, MCS, 12000) == 208
    assert exchange_airtime(DEFAULT, MCS) == 208
    assert exchange_airtime(DEFAULT, MCS, 100) == 112


def test_exchange_degenerate_minimum():
    # zero SIFS is rejected by PhyParams, so build the degenerate sum by hand
    mcs = McsConfig(data_bits_per_symbol=10**9, legacy_bits_per_symbol=10**9)
    data = data_frame_airtime(DEFAULT, mcs, 1) - DEFAULT.sigma_us
    ack = ack_airtime(DEFAULT, mcs) - DEFAULT.sigma_legacy_us
    assert data + ack == 72


def test_validation():
    with pytest.raises(ValueError):
        data_frame_airtime(DEFAULT, MCS, 0)
    with pytest.raises(ValueError):
        McsConfig(data_bits_per_symbol=0)
    with pytest.raises(ValueError):
        PhyParams(slot_us=0)


@given(st.integers(1, 100_000), st.integers(1, 100_000), st.integers(1, 5000), st.integers(1, 5000))
def test_airtime_monotone(p1, p2, r1, r2):
    lo_p, hi_p = sorted((p1, p2))
    lo_r, hi_r = sorted((r1, r2))
    mcs = McsConfig(data_bits_per_symbol=lo_r)
    assert data_frame_airtime(DEFAULT, mcs, lo_p) <= data_frame_airtime(DEFAULT, mcs, hi_p)
    assert (data_frame_airtime(DEFAULT, McsConfig(data_bits_per_symbol=hi_r), hi_p)
            <= data_frame_airtime(DEFAULT, mcs, hi_p))
    assert isinstance(exchange_airtime(DEFAULT, mcs, lo_p), int)
