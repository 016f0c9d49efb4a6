"""!
@brief Unit tests for the scenario_json_parser module.

@file test_scenario_json_parser.py
"""
import copy
import math
import os

import pytest

from P2PVC.grid.network_json_parser import read_json
from P2PVC.sim.profiles import interpolate_profile
from P2PVC.sim.scenario_json_parser import load_reactive_factor, load_scenario, realize_profiles
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import InvalidScenario, UnknownDer, UnknownKey, UnknownNode

TEST_DIR = os.path.dirname(__file__)


@pytest.fixture
def document():
    """!
    @brief Parsed small scenario document, free to be modified by the test.
    """
    return read_json(TEST_DIR + "/small_scenario.json")


def load(document):
    return load_scenario(document, base_dir=TEST_DIR)


def test_small_scenario():
    scenario = load_scenario(TEST_DIR + "/small_scenario.json")
    assert scenario.network.n_nodes == 5
    assert (scenario.start_s, scenario.end_s, scenario.seed) == (43200.0, 43260.0, 7)
    assert [load.node_id for load in scenario.loads] == [1, 2, 3, 4]
    assert [(der.der_id, der.node_id) for der in scenario.ders] == [("pv2", 2), ("pv4", 4)]
    assert not scenario.ders[0].allow_curtailment
    assert scenario.ders[0].c_q == defaults.C_Q
    assert scenario.tick_ms == defaults.GOSSIP_TICK_MS
    assert scenario.gossip_mode == defaults.GOSSIP_MODE
    assert scenario.control_enabled


def test_bundled_case_study():
    scenario = load_scenario(defaults.bundled("case_study_scenario.json"))
    assert scenario.network.n_nodes == 20
    assert len(scenario.ders) == 10
    assert len(scenario.loads) == 19
    assert all(der.kind == "pv" and not der.allow_curtailment for der in scenario.ders)
    assert scenario.end_s - scenario.start_s == 36000


def test_profiles_in_per_unit():
    scenario = load_scenario(TEST_DIR + "/small_scenario.json")
    loads, ders = realize_profiles(scenario)
    assert interpolate_profile(ders[0], 43230) == pytest.approx(0.048)
    assert all(profile.unit == "pu" for profile in loads)
    assert all(value >= 0 for profile in loads for value in profile.values)


def test_noise_differs_per_house_and_repeats_per_seed():
    scenario = load_scenario(TEST_DIR + "/small_scenario.json")
    first, _ = realize_profiles(scenario)
    again, _ = realize_profiles(scenario)
    assert list(first[0].values) == list(again[0].values)
    assert list(first[0].values) != list(first[1].values)
    reseeded, _ = realize_profiles(scenario.with_overrides(seed=8))
    assert list(first[0].values) != list(reseeded[0].values)


def test_with_overrides():
    scenario = load_scenario(TEST_DIR + "/small_scenario.json")
    assert scenario.with_overrides() is scenario
    changed = scenario.with_overrides(seed=3, control_enabled=False)
    assert (changed.seed, changed.control_enabled) == (3, False)
    assert (scenario.seed, scenario.control_enabled) == (7, True)


def test_inline_samples_and_network(document):
    document["network"] = read_json(TEST_DIR + "/small_network.json")
    document["profiles"]["pv"] = {"samples": [[43200, 1000], [43260, 2000]]}
    scenario = load(document)
    _, ders = realize_profiles(scenario)
    assert interpolate_profile(ders[1], 43230) == pytest.approx(0.015)


def test_der_node_must_match_network(document):
    document["ders"][0]["node"] = "3"
    with pytest.raises(InvalidScenario):
        load(document)


def test_der_without_node(document):
    document["ders"].append({"id": "bat1", "s_rated_va": 3000.0})
    with pytest.raises(UnknownDer):
        load(document)


def test_storage_der_placed_by_node(document):
    document["ders"].append({"id": "bat1", "node": "3", "kind": "storage", "s_rated_va": 3000.0})
    scenario = load(document)
    assert scenario.ders[-1].node_id == 3
    assert scenario.ders[-1].profile is None


def test_network_der_needs_scenario_entry(document):
    del document["ders"][1]
    with pytest.raises(InvalidScenario):
        load(document)


def test_unknown_key(document):
    document["gossip_fanout"] = 2
    with pytest.raises(UnknownKey):
        load(document)
    document = copy.deepcopy(document)
    del document["gossip_fanout"]
    document["loads"][0]["phase"] = "a"
    with pytest.raises(UnknownKey):
        load(document)


def test_unknown_node(document):
    document["loads"][0]["node"] = "42"
    with pytest.raises(UnknownNode):
        load(document)


@pytest.mark.parametrize("key, value", [("end_s", 43000), ("alpha", 0.0), ("tick_ms", 0), ("latency_ms", -1),
                                        ("drop_probability", 1.0), ("seed", -1), ("seed", 1.5),
                                        ("gossip_mode", "flood"), ("topology", "star"), ("v_min", 1.1),
                                        ("start_s", "noon")])
def test_invalid_values(document, key, value):
    document[key] = value
    with pytest.raises(InvalidScenario):
        load(document)


@pytest.mark.parametrize("change", [
    lambda d: d["loads"].append({"node": "1", "profile": "household"}),
    lambda d: d["loads"].append({"node": "0", "profile": "household"}),
    lambda d: d["loads"][0].update(profile="office"),
    lambda d: d["loads"][0].update(power_factor=0.0),
    lambda d: d["ders"][0].update(s_rated_va=0.0),
    lambda d: d["ders"][0].update(kind="wind"),
    lambda d: d["ders"][0].update(dq_min_var=100.0, dq_max_var=-100.0),
    lambda d: d["profiles"]["pv"].update(samples=[[0, 1], [1, 2]]),
    lambda d: d.update(topology="edges"),
])
def test_invalid_entries(document, change):
    change(document)
    with pytest.raises(InvalidScenario):
        load(document)


def test_topology_edges_by_name(document):
    document["topology"] = "edges"
    document["topology_edges"] = [["0", "1"], ["1", "2"], ["2", "3"], ["3", "4"]]
    scenario = load(document)
    assert scenario.topology_edges == ((0, 1), (1, 2), (2, 3), (3, 4))


def test_load_reactive_factor():
    assert load_reactive_factor(1.0) == 0.0
    assert load_reactive_factor(0.85) == pytest.approx(math.tan(math.acos(0.85)))
