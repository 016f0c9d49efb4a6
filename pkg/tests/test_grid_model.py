"""!
@brief Unit tests for the grid_model module.

@file test_grid_model.py
"""
import math

import networkx as nx
import pytest
from numpy import testing

from P2PVC.grid.grid_model import LOAD, SLACK, Node, build_network, path_impedance, to_per_unit
from P2PVC.grid.network_json_parser import load_network
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import (AlreadyPerUnit, CycleDetected, Disconnected, DuplicateNode, MissingSlack,
                                        MultipleSlack, NonPositiveImpedance, NotPerUnit, UnknownNode)


def make_nodes(count, slack=0):
    return [Node(i, str(i), SLACK if i == slack else LOAD) for i in range(count)]


@pytest.fixture
def series_feeder():
    """!
    @brief Slack plus three series branches of 0.01 + j0.005 pu (unit bases so ohm equals pu).
    """
    edges = [(0, 1, 0.01, 0.005), (1, 2, 0.01, 0.005), (2, 3, 0.01, 0.005)]
    return to_per_unit(build_network(make_nodes(4), edges, 1.0, 1.0))


@pytest.fixture
def bundled_network():
    return load_network(defaults.bundled("case_study_network.json"))


def test_two_node_network():
    """!
    @brief Slack and one load give a single branch oriented away from the slack.
    """
    network = build_network(make_nodes(2), [(1, 0, 0.1, 0.05)], 400.0, 16000.0)
    assert len(network.branches) == 1
    assert network.branches[0].from_node == 0
    assert network.branches[0].to_node == 1
    assert network.slack == 0


def test_loop_is_rejected():
    edges = [(0, 1, 0.1, 0.05), (1, 2, 0.1, 0.05), (2, 3, 0.1, 0.05), (3, 1, 0.1, 0.05)]
    with pytest.raises(CycleDetected):
        build_network(make_nodes(4), edges, 400.0, 16000.0)


def test_parallel_branch_is_a_loop():
    with pytest.raises(CycleDetected):
        build_network(make_nodes(2), [(0, 1, 0.1, 0.05), (1, 0, 0.1, 0.05)], 400.0, 16000.0)


def test_bundled_network_structure(bundled_network):
    """!
    @brief 20 nodes, 19 branches, one slack and every node reachable by an independent traversal.
    """
    assert bundled_network.n_nodes == 20
    assert len(bundled_network.branches) == 19
    assert [node.kind for node in bundled_network.nodes].count(SLACK) == 1
    graph = nx.Graph((b.from_node, b.to_node) for b in bundled_network.branches)
    assert nx.descendants(graph, bundled_network.slack) | {bundled_network.slack} == set(range(20))
    assert len(bundled_network.der_nodes()) == 10


def test_missing_and_multiple_slack():
    nodes = [Node(0, "a"), Node(1, "b")]
    with pytest.raises(MissingSlack):
        build_network(nodes, [(0, 1, 0.1, 0.05)], 400.0, 16000.0)
    nodes = [Node(0, "a", SLACK), Node(1, "b", SLACK)]
    with pytest.raises(MultipleSlack):
        build_network(nodes, [(0, 1, 0.1, 0.05)], 400.0, 16000.0)


def test_duplicate_node_names():
    nodes = [Node(0, "a", SLACK), Node(1, "a")]
    with pytest.raises(DuplicateNode):
        build_network(nodes, [(0, 1, 0.1, 0.05)], 400.0, 16000.0)


def test_disconnected_node():
    with pytest.raises(Disconnected):
        build_network(make_nodes(3), [(0, 1, 0.1, 0.05)], 400.0, 16000.0)


@pytest.mark.parametrize("resistance, reactance", [(0.0, 0.05), (-0.1, 0.05), (0.1, -0.01), (math.nan, 0.05),
                                                  (0.1, math.nan), (math.inf, 0.05), (0.1, math.inf)])
def test_non_positive_impedance(resistance, reactance):
    with pytest.raises(NonPositiveImpedance):
        build_network(make_nodes(2), [(0, 1, resistance, reactance)], 400.0, 16000.0)


def test_per_unit_conversion():
    """!
    @brief Z_base = 400**2 / 16000 = 10 ohm, so 0.1 ohm is 0.01 pu.
    """
    network = to_per_unit(build_network(make_nodes(2), [(0, 1, 0.1, 0.05)], 400.0, 16000.0))
    assert network.per_unit
    assert network.branches[0].resistance == pytest.approx(0.01)
    assert network.branches[0].reactance == pytest.approx(0.005)


def test_per_unit_twice():
    network = to_per_unit(build_network(make_nodes(2), [(0, 1, 0.1, 0.05)], 400.0, 16000.0))
    with pytest.raises(AlreadyPerUnit):
        to_per_unit(network)


def test_path_impedance_from_slack(series_feeder):
    for d in range(4):
        assert path_impedance(series_feeder, 0, d) == (0.0, 0.0)


def test_path_impedance_series_leaf(series_feeder):
    r, x = path_impedance(series_feeder, 3, 3)
    assert r == pytest.approx(0.03)
    assert x == pytest.approx(0.015)
    r, x = path_impedance(series_feeder, 3, 1)
    assert r == pytest.approx(0.01)


def test_path_impedance_disjoint_laterals():
    """!
    @brief Two laterals on a one-branch trunk share only the trunk resistance.
    """
    edges = [(0, 1, 0.02, 0.01), (1, 2, 0.05, 0.02), (1, 3, 0.04, 0.03)]
    network = to_per_unit(build_network(make_nodes(4), edges, 1.0, 1.0))
    r, x = path_impedance(network, 2, 3)
    assert r == pytest.approx(0.02)
    assert x == pytest.approx(0.01)


def test_path_impedance_needs_per_unit():
    network = build_network(make_nodes(2), [(0, 1, 0.1, 0.05)], 400.0, 16000.0)
    with pytest.raises(NotPerUnit):
        path_impedance(network, 1, 1)


def test_path_impedance_unknown_node(series_feeder):
    with pytest.raises(UnknownNode):
        path_impedance(series_feeder, 1, 7)


def test_common_impedance_is_symmetric(bundled_network):
    network = to_per_unit(bundled_network)
    testing.assert_allclose(network.common_impedance, network.common_impedance.T)


def test_index_of(bundled_network):
    assert bundled_network.index_of("10") == 10
    with pytest.raises(UnknownNode):
        bundled_network.index_of("house 99")
