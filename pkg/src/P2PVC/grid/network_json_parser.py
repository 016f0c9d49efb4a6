import json
import logging
from pathlib import Path
from typing import AbstractSet, Any, Dict, Mapping, Union

from P2PVC.grid.grid_model import LOAD, SLACK, Node, NetworkModel, build_network
from P2PVC.utilities.exceptions import UnknownKey, UnknownNode, ValidationError

logger = logging.getLogger(__name__)

NETWORK_KEYS = {"name", "v_base_volts", "s_base_va", "v_nom_pu", "nodes", "branches"}
REQUIRED_NETWORK_KEYS = {"v_base_volts", "s_base_va", "nodes", "branches"}
NODE_KEYS = {"id", "kind", "der"}
BRANCH_KEYS = {"from", "to", "r_ohm", "x_ohm"}


def check_keys(data: Mapping[str, Any], allowed: AbstractSet[str], required: AbstractSet[str], where: str) -> None:
    """
    Reject unknown keys and report missing ones.

    Parameters:
    - data (Mapping[str, Any]): Parsed JSON object.
    - allowed (AbstractSet[str]): Keys the object may carry.
    - required (AbstractSet[str]): Keys the object must carry.
    - where (str): Location used in error messages.
    """
    if not isinstance(data, Mapping):
        raise ValidationError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = set(data) - allowed
    if unknown:
        raise UnknownKey(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(data)
    if missing:
        raise ValidationError(f"{where}: missing keys {sorted(missing)}")


def read_json(json_file: Union[str, Path]) -> Dict[str, Any]:
    with open(json_file, 'r') as fid:
        data = json.load(fid)
    return data


def parse_network(data: Mapping[str, Any]) -> NetworkModel:
    """
    Build a NetworkModel from an already parsed network document.

    Parameters:
    - data (Mapping[str, Any]): Network document (see README for the schema).

    Returns:
    - NetworkModel: Validated model in physical units.
    """
    check_keys(data, NETWORK_KEYS, REQUIRED_NETWORK_KEYS, "network")
    nodes = []
    index: Dict[str, int] = {}
    for position, raw in enumerate(data["nodes"]):
        check_keys(raw, NODE_KEYS, {"id"}, f"nodes[{position}]")
        name = str(raw["id"])
        kind = raw.get("kind", LOAD)
        if kind not in (SLACK, LOAD):
            raise ValidationError(f"node '{name}': kind must be '{SLACK}' or '{LOAD}', got '{kind}'")
        der = raw.get("der")
        # duplicates are reported by build_network
        index.setdefault(name, position)
        nodes.append(Node(position, name, kind, None if der is None else str(der)))

    edges = []
    for position, raw in enumerate(data["branches"]):
        check_keys(raw, BRANCH_KEYS, BRANCH_KEYS, f"branches[{position}]")
        ends = []
        for key in ("from", "to"):
            name = str(raw[key])
            if name not in index:
                raise UnknownNode(f"branches[{position}]: unknown node '{name}'")
            ends.append(index[name])
        edges.append((ends[0], ends[1], float(raw["r_ohm"]), float(raw["x_ohm"])))

    network = build_network(nodes, edges, float(data["v_base_volts"]), float(data["s_base_va"]),
                            float(data.get("v_nom_pu", 1.0)))
    logger.info(f"loaded network '{data.get('name', '')}': {network.n_nodes} nodes, "
                f"{len(network.branches)} branches")
    return network


def load_network(spec: Union[str, Path, Mapping[str, Any]]) -> NetworkModel:
    """
    Load and validate a network document.

    Parameters:
    - spec (Union[str, Path, Mapping[str, Any]]): Path to a JSON file or an already parsed document.

    Returns:
    - NetworkModel: Validated model in physical units.
    """
    if isinstance(spec, Mapping):
        return parse_network(spec)
    return parse_network(read_json(spec))


def network_to_dict(network: NetworkModel) -> Dict[str, Any]:
    """
    Serialise a physical-unit network back to the document schema.

    Parameters:
    - network (NetworkModel): Network with impedances in ohm.

    Returns:
    - Dict[str, Any]: Document accepted by ``load_network``.
    """
    if network.per_unit:
        raise ValidationError("network_to_dict expects impedances in ohm")
    nodes = []
    for node in network.nodes:
        entry: Dict[str, Any] = {"id": node.name, "kind": node.kind}
        if node.der is not None:
            entry["der"] = node.der
        nodes.append(entry)
    branches = [{"from": network.nodes[b.from_node].name, "to": network.nodes[b.to_node].name,
                 "r_ohm": b.resistance, "x_ohm": b.reactance} for b in network.branches]
    return {"v_base_volts": network.v_base, "s_base_va": network.s_base, "v_nom_pu": network.v_nom_pu,
            "nodes": nodes, "branches": branches}


def write_network_json(network: NetworkModel, json_filename: Union[str, Path]) -> None:
    with open(json_filename, 'w') as json_file:
        json.dump(network_to_dict(network), json_file, indent=4)
