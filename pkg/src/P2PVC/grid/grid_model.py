"""
Radial feeder model: nodes, branches, topology validation and per-unit conversion.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from P2PVC.utilities.exceptions import (CycleDetected, Disconnected, DuplicateNode, MissingSlack, MultipleSlack,
                                        NonPositiveImpedance, NotPerUnit, AlreadyPerUnit, UnknownNode,
                                        ValidationError)

logger = logging.getLogger(__name__)

SLACK = "slack"
LOAD = "load"


@dataclass(frozen=True)
class Node:
    id: int
    name: str
    kind: str = LOAD
    der: Optional[str] = None


@dataclass(frozen=True)
class Branch:
    """
    Line section between two nodes. After loading, ``from_node`` is the end closer to the slack.
    Impedances are in ohm until the network is converted to per unit.
    """
    from_node: int
    to_node: int
    resistance: float
    reactance: float


@dataclass(frozen=True)
class NetworkModel:
    """
    Immutable radial feeder.

    Parameters:
    - nodes (Tuple[Node, ...]): Nodes with dense ids 0..N-1 (``nodes[i].id == i``).
    - branches (Tuple[Branch, ...]): Tree branches oriented away from the slack.
    - v_base (float): Line-to-line base voltage (V).
    - s_base (float): Three-phase base power (VA).
    - v_nom_pu (float): Nominal voltage, also the slack voltage (pu).
    - per_unit (bool): True once branch impedances are expressed in pu.
    """
    nodes: Tuple[Node, ...]
    branches: Tuple[Branch, ...]
    v_base: float
    s_base: float
    v_nom_pu: float = 1.0
    per_unit: bool = False
    _name_index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def z_base(self) -> float:
        return self.v_base ** 2 / self.s_base

    @cached_property
    def slack(self) -> int:
        return next(node.id for node in self.nodes if node.kind == SLACK)

    @property
    def names(self) -> List[str]:
        return [node.name for node in self.nodes]

    def index_of(self, name: str) -> int:
        """
        Dense id of a node given its name in the input document.

        Parameters:
        - name (str): Node name.

        Returns:
        - int: Node id.
        """
        try:
            return self._name_index[name]
        except KeyError:
            raise UnknownNode(f"unknown node '{name}'") from None

    def der_nodes(self) -> Dict[str, int]:
        """Mapping DER id -> hosting node id for nodes that declare a DER."""
        return {node.der: node.id for node in self.nodes if node.der is not None}

    @cached_property
    def parent(self) -> np.ndarray:
        """Parent node id per node, -1 for the slack."""
        parent = np.full(self.n_nodes, -1, dtype=int)
        for branch in self.branches:
            parent[branch.to_node] = branch.from_node
        return parent

    @cached_property
    def order(self) -> Tuple[int, ...]:
        """Node ids in breadth-first order from the slack (parents before children)."""
        children: Dict[int, List[int]] = {i: [] for i in range(self.n_nodes)}
        for branch in self.branches:
            children[branch.from_node].append(branch.to_node)
        ordered = [self.slack]
        for node_id in ordered:
            ordered.extend(children[node_id])
        return tuple(ordered)

    @cached_property
    def branch_impedance(self) -> np.ndarray:
        """Complex impedance of the branch feeding each node (0 for the slack)."""
        z = np.zeros(self.n_nodes, dtype=complex)
        for branch in self.branches:
            z[branch.to_node] = complex(branch.resistance, branch.reactance)
        return z

    @cached_property
    def path_matrix(self) -> np.ndarray:
        """
        Ancestor incidence: ``path_matrix[n, k] == 1`` when the branch feeding node k lies on the slack->n path.
        Its transpose maps bus injections to branch currents, the matrix itself maps branch drops to bus voltages.
        """
        paths = np.zeros((self.n_nodes, self.n_nodes))
        for node_id in self.order:
            parent = self.parent[node_id]
            if parent >= 0:
                paths[node_id] = paths[parent]
                paths[node_id, node_id] = 1.0
        return paths

    @cached_property
    def common_impedance(self) -> np.ndarray:
        """Complex impedance of the shared slack path for every node pair."""
        return (self.path_matrix * self.branch_impedance) @ self.path_matrix.T


def build_network(nodes: Sequence[Node],
                  edges: Sequence[Tuple[int, int, float, float]],
                  v_base: float,
                  s_base: float,
                  v_nom_pu: float = 1.0) -> NetworkModel:
    """
    Validate a node/edge description and orient it as a tree rooted at the slack.

    Parameters:
    - nodes (Sequence[Node]): Nodes with dense ids in order.
    - edges (Sequence[Tuple[int, int, float, float]]): (a, b, resistance, reactance) in ohm, any orientation.
    - v_base (float): Line-to-line base voltage (V).
    - s_base (float): Base power (VA).
    - v_nom_pu (float): Nominal voltage (pu).

    Returns:
    - NetworkModel: Validated model in physical units.
    """
    if v_base <= 0 or s_base <= 0:
        raise ValidationError(f"bases must be positive (v_base={v_base}, s_base={s_base})")
    names = [node.name for node in nodes]
    if len(set(names)) != len(names):
        duplicates = sorted({name for name in names if names.count(name) > 1})
        raise DuplicateNode(f"duplicate node ids: {duplicates}")
    slacks = [node.id for node in nodes if node.kind == SLACK]
    if not slacks:
        raise MissingSlack("network has no slack node")
    if len(slacks) > 1:
        raise MultipleSlack(f"network has {len(slacks)} slack nodes: {[names[i] for i in slacks]}")
    slack = slacks[0]

    graph = nx.Graph()
    graph.add_nodes_from(range(len(nodes)))
    impedances = {}
    for a, b, resistance, reactance in edges:
        if not (np.isfinite(resistance) and np.isfinite(reactance)) or resistance <= 0 or reactance < 0:
            raise NonPositiveImpedance(f"branch {names[a]}-{names[b]}: r={resistance}, x={reactance}")
        if a == b or graph.has_edge(a, b):
            raise CycleDetected(f"branch {names[a]}-{names[b]} closes a loop")
        graph.add_edge(a, b)
        impedances[frozenset((a, b))] = (resistance, reactance)
    cycles = nx.cycle_basis(graph)
    if cycles:
        raise CycleDetected(f"loop through nodes {[names[i] for i in cycles[0]]}")
    reachable = nx.node_connected_component(graph, slack)
    if len(reachable) != len(nodes):
        missing = sorted(names[i] for i in set(range(len(nodes))) - reachable)
        raise Disconnected(f"nodes unreachable from slack: {missing}")

    branches = []
    for child, parent in nx.bfs_predecessors(graph, slack):
        resistance, reactance = impedances[frozenset((parent, child))]
        branches.append(Branch(parent, child, resistance, reactance))
    network = NetworkModel(tuple(nodes), tuple(branches), float(v_base), float(s_base), float(v_nom_pu),
                           _name_index={name: i for i, name in enumerate(names)})
    logger.debug(f"built network: {network.n_nodes} nodes, {len(branches)} branches, slack '{names[slack]}'")
    return network


def to_per_unit(network: NetworkModel) -> NetworkModel:
    """
    Scale branch impedances by s_base / v_base**2.

    Parameters:
    - network (NetworkModel): Network with impedances in ohm.

    Returns:
    - NetworkModel: Copy with impedances in pu and ``per_unit`` set.
    """
    if network.per_unit:
        raise AlreadyPerUnit("network is already in per unit")
    z_base = network.z_base
    branches = tuple(replace(branch, resistance=branch.resistance / z_base, reactance=branch.reactance / z_base)
                     for branch in network.branches)
    logger.debug(f"per-unit conversion with Z_base={z_base:.6g} ohm")
    return replace(network, branches=branches, per_unit=True)


def path_impedance(network: NetworkModel, n: int, d: int) -> Tuple[float, float]:
    """
    Resistance and reactance shared by the slack->n and slack->d paths.

    Parameters:
    - network (NetworkModel): Per-unit network.
    - n (int): Monitored node id.
    - d (int): Node id hosting the DER.

    Returns:
    - Tuple[float, float]: (r_nd, x_nd) in pu.
    """
    if not network.per_unit:
        raise NotPerUnit("path_impedance needs a per-unit network")
    for node_id in (n, d):
        if not 0 <= node_id < network.n_nodes:
            raise UnknownNode(f"unknown node id {node_id}")
    z = network.common_impedance[n, d]
    return float(z.real), float(z.imag)
