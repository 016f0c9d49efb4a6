"""!
@brief Unit tests for the network_json_parser module.

@file test_network_json_parser.py
"""
import os
from unittest.mock import MagicMock, patch

import pytest

from P2PVC.grid.network_json_parser import (load_network, network_to_dict, parse_network, read_json,
                                            write_network_json)
from P2PVC.utilities.exceptions import CycleDetected, UnknownKey, UnknownNode, ValidationError


@pytest.fixture
def two_bus_json():
    """!
    @brief Fixture for the two bus network JSON file.
    """
    return os.path.dirname(__file__) + "/two_bus_network.json"


@pytest.fixture
def loop_json():
    return os.path.dirname(__file__) + "/loop_network.json"


@pytest.fixture
def two_bus_data(two_bus_json):
    return read_json(two_bus_json)


def test_read_json(two_bus_json):
    data = read_json(two_bus_json)
    assert isinstance(data, dict)
    assert data["s_base_va"] == 16000.0


def test_load_network(two_bus_json):
    network = load_network(two_bus_json)
    assert network.n_nodes == 2
    assert network.names == ["bus", "house"]
    assert network.der_nodes() == {"pv1": 1}
    assert network.branches[0].resistance == pytest.approx(0.1)
    assert not network.per_unit


def test_load_network_loop(loop_json):
    with pytest.raises(CycleDetected):
        load_network(loop_json)


def test_unknown_top_level_key(two_bus_data):
    two_bus_data["frequency_hz"] = 50
    with pytest.raises(UnknownKey):
        parse_network(two_bus_data)


def test_unknown_branch_key(two_bus_data):
    two_bus_data["branches"][0]["length_m"] = 30
    with pytest.raises(UnknownKey):
        parse_network(two_bus_data)


def test_missing_key(two_bus_data):
    del two_bus_data["s_base_va"]
    with pytest.raises(ValidationError):
        parse_network(two_bus_data)


def test_branch_to_unknown_node(two_bus_data):
    two_bus_data["branches"][0]["to"] = "barn"
    with pytest.raises(UnknownNode):
        parse_network(two_bus_data)


def test_bad_node_kind(two_bus_data):
    two_bus_data["nodes"][1]["kind"] = "generator"
    with pytest.raises(ValidationError):
        parse_network(two_bus_data)


def test_read_json_mock():
    """!
    @brief read_json with a mocked file handle.
    """
    with patch("builtins.open", MagicMock()) as mock_open:
        mock_file = MagicMock()
        mock_file.__enter__.return_value = mock_file
        mock_file.read.return_value = '{"v_base_volts": 400}'
        mock_open.return_value = mock_file
        data = read_json("network.json")
    assert data == {"v_base_volts": 400}


def test_network_to_dict_reloads(two_bus_json):
    network = load_network(two_bus_json)
    again = load_network(network_to_dict(network))
    assert again.names == network.names
    assert again.branches == network.branches


def test_write_network_json(two_bus_json, tmp_path):
    network = load_network(two_bus_json)
    target = tmp_path / "copy.json"
    write_network_json(network, target)
    assert load_network(target).branches == network.branches
