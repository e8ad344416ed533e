"""Test Configuration."""

import pytest

from pathloss_dsa.channel import ChannelState, LinkMode
from pathloss_dsa.phy import OfdmConfig
from pathloss_dsa.propagation import table1_set

TABLE1_LABELS = ("Set1", "Set2", "Set3", "Set4")


@pytest.fixture(scope="session")
def table1_sets():
    return {label: table1_set(label) for label in TABLE1_LABELS}


@pytest.fixture(scope="session")
def set1(table1_sets):
    return table1_sets["Set1"]


@pytest.fixture()
def ofdm_config():
    return OfdmConfig()


@pytest.fixture()
def empirical_channel(set1):
    """Set1 measurements at 1.9 GHz with a flat gain chain."""
    return ChannelState(freq=1.9e9, mode=LinkMode.EMPIRICAL, empirical_set=set1, tx_gain_db=0.0, rx_gain_db=0.0)
