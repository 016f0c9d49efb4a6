"""
Randomised dissemination of multiplier views between agents.

Each agent pushes its whole view to one random neighbour per tick. In push-pull mode a receiver that holds
entries fresher than a push answers once with its own view; answers are never answered themselves. Whether a push
is stale is judged at the reply flush against the view merged from every delivery of that instant, so the replies
do not depend on the delivery order.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from P2PVC.gossip.lambda_vector import LambdaEntry, LambdaVector, fresher, merge
from P2PVC.grid.grid_model import NetworkModel
from P2PVC.utilities import defaults
from P2PVC.utilities.event_queue import DELIVERY, GOSSIP_TICK, REPLY_FLUSH, EventQueue
from P2PVC.utilities.exceptions import Disconnected, IsolatedAgent, ValidationError

logger = logging.getLogger(__name__)

PUSH = "push"
PUSH_PULL = "push_pull"
GOSSIP_MODES = (PUSH, PUSH_PULL)

COMPLETE = "complete"
ELECTRICAL = "electrical"
RING = "ring"
EDGE_LIST = "edges"
TOPOLOGIES = (COMPLETE, ELECTRICAL, RING, EDGE_LIST)

TraceRow = Tuple[int, int, int, int, float, float, int]


@dataclass(frozen=True)
class GossipMessage:
    sender: int
    receiver: int
    payload: LambdaVector
    send_time: int
    reply: bool = False


@dataclass
class GossipAgent:
    """
    Gossip endpoint of one monitored node.

    Parameters:
    - agent_id (int): Node id the agent lives on.
    - view (LambdaVector): Freshest multipliers known to the agent.
    - neighbors (Tuple[int, ...]): Sorted communication neighbours.
    - rng (np.random.Generator): Agent-owned stream for peer choice and drops.
    - pending_replies (Dict[int, np.ndarray]): Versions carried by each push since the last reply flush, by sender.
    """
    agent_id: int
    view: LambdaVector
    neighbors: Tuple[int, ...]
    rng: np.random.Generator
    pending_replies: Dict[int, np.ndarray] = field(default_factory=dict)
    sent: int = 0

    def publish(self, entry: LambdaEntry) -> None:
        """Install a new locally computed entry in the agent's own view."""
        self.view = self.view.with_entry(entry)


def build_topology(kind: str,
                   agents: Sequence[int],
                   network: Optional[NetworkModel] = None,
                   edges: Optional[Iterable[Tuple[int, int]]] = None) -> nx.Graph:
    """
    Communication graph between agents.

    Parameters:
    - kind (str): 'complete', 'electrical' (feeder adjacency), 'ring' or 'edges'.
    - agents (Sequence[int]): Agent ids (node ids).
    - network (Optional[NetworkModel]): Feeder, required for 'electrical'.
    - edges (Optional[Iterable[Tuple[int, int]]]): Explicit links, required for 'edges'.

    Returns:
    - nx.Graph: Connected graph over ``agents``.
    """
    agents = list(agents)
    if kind == COMPLETE:
        graph = nx.complete_graph(agents)
    elif kind == RING:
        graph = nx.cycle_graph(agents) if len(agents) > 2 else nx.path_graph(agents)
    elif kind == ELECTRICAL:
        if network is None:
            raise ValidationError("electrical topology needs the network")
        graph = nx.Graph()
        graph.add_nodes_from(agents)
        graph.add_edges_from((b.from_node, b.to_node) for b in network.branches
                             if b.from_node in graph and b.to_node in graph)
    elif kind == EDGE_LIST:
        if edges is None:
            raise ValidationError("edge-list topology needs edges")
        graph = nx.Graph()
        graph.add_nodes_from(agents)
        for a, b in edges:
            if a not in graph or b not in graph:
                raise ValidationError(f"topology edge ({a}, {b}) references a node without an agent")
            graph.add_edge(a, b)
    else:
        raise ValidationError(f"unknown topology '{kind}', expected one of {TOPOLOGIES}")

    if len(agents) > 1:
        isolated = sorted(nx.isolates(graph))
        if isolated:
            raise IsolatedAgent(f"agents without neighbours: {isolated}")
        if not nx.is_connected(graph):
            raise Disconnected(f"communication topology '{kind}' is not connected")
    return graph


def neighbors_of(topology: nx.Graph, agent_id: int) -> Tuple[int, ...]:
    neighbors = tuple(sorted(topology.neighbors(agent_id)))
    if not neighbors:
        raise IsolatedAgent(f"agent {agent_id} has no neighbours")
    return neighbors


def select_peer(agent_id: int, topology: nx.Graph, rng: np.random.Generator) -> int:
    """
    Uniformly random neighbour of an agent.

    Parameters:
    - agent_id (int): Sending agent.
    - topology (nx.Graph): Communication graph.
    - rng (np.random.Generator): Sender's stream.

    Returns:
    - int: Chosen neighbour.
    """
    return _pick(neighbors_of(topology, agent_id), rng)


def _pick(neighbors: Tuple[int, ...], rng: np.random.Generator) -> int:
    return neighbors[int(rng.integers(len(neighbors)))]


def _transmit(agent: GossipAgent, message: GossipMessage, drop_probability: float) -> List[GossipMessage]:
    agent.sent += 1
    if drop_probability > 0 and agent.rng.random() < drop_probability:
        return []
    return [message]


def on_gossip_tick(agent: GossipAgent, now: int, drop_probability: float = defaults.DROP_PROBABILITY) \
        -> List[GossipMessage]:
    """
    Push the agent's view to one random neighbour.

    Parameters:
    - agent (GossipAgent): Sending agent.
    - now (int): Simulated time (ms).
    - drop_probability (float): Probability the message is lost in transit.

    Returns:
    - List[GossipMessage]: The message, or nothing when it was dropped.
    """
    peer = _pick(agent.neighbors, agent.rng)
    return _transmit(agent, GossipMessage(agent.agent_id, peer, agent.view, now), drop_probability)


def receive(agent: GossipAgent, message: GossipMessage, mode: str = defaults.GOSSIP_MODE) -> np.ndarray:
    """
    Merge a delivered view into the agent's view.

    Parameters:
    - agent (GossipAgent): Receiving agent, updated in place.
    - message (GossipMessage): Delivered message.
    - mode (str): 'push' or 'push_pull'.

    Returns:
    - np.ndarray: Mask of view positions that were accepted from the message.
    """
    local = agent.view
    accepted = fresher(local, message.payload)
    if mode == PUSH_PULL and not message.reply:
        agent.pending_replies[message.sender] = message.payload.version
    if accepted.any():
        agent.view = merge(local, message.payload)
    return accepted


def flush_replies(agent: GossipAgent, now: int, drop_probability: float = defaults.DROP_PROBABILITY) \
        -> List[GossipMessage]:
    """
    Answer every push that arrived with stale entries, in sender order.

    Parameters:
    - agent (GossipAgent): Replying agent.
    - now (int): Simulated time (ms).
    - drop_probability (float): Probability each reply is lost.

    Returns:
    - List[GossipMessage]: Replies to send.
    """
    messages: List[GossipMessage] = []
    for sender in sorted(agent.pending_replies):
        if not np.any(agent.view.version > agent.pending_replies[sender]):
            continue
        messages += _transmit(agent, GossipMessage(agent.agent_id, sender, agent.view, now, reply=True),
                              drop_probability)
    agent.pending_replies.clear()
    return messages


def trace_rows(message: GossipMessage, accepted: np.ndarray, now: int) -> List[TraceRow]:
    payload = message.payload
    return [(now, message.sender, message.receiver, payload.nodes[i], float(payload.lambda_min[i]),
             float(payload.lambda_max[i]), int(payload.version[i])) for i in np.flatnonzero(accepted)]


def spawn_agents(nodes: Sequence[int], topology: nx.Graph, seed_sequence: np.random.SeedSequence) \
        -> List[GossipAgent]:
    """
    One agent per node, each with its own random stream.

    Parameters:
    - nodes (Sequence[int]): Monitored node ids.
    - topology (nx.Graph): Communication graph over ``nodes``.
    - seed_sequence (np.random.SeedSequence): Parent sequence, one child is spawned per agent.

    Returns:
    - List[GossipAgent]: Agents in ``nodes`` order.
    """
    view = LambdaVector.zeros(nodes)
    streams = seed_sequence.spawn(len(nodes))
    return [GossipAgent(node_id, view, neighbors_of(topology, node_id) if len(nodes) > 1 else (node_id,),
                        np.random.default_rng(stream))
            for node_id, stream in zip(nodes, streams)]


def dissemination_trial(n_agents: int = 20,
                        seed: int = defaults.SEED,
                        topology: str = COMPLETE,
                        tick_ms: int = defaults.GOSSIP_TICK_MS,
                        latency_ms: int = defaults.LATENCY_MS,
                        mode: str = defaults.GOSSIP_MODE,
                        drop_probability: float = defaults.DROP_PROBABILITY,
                        horizon_ms: int = 60_000) -> float:
    """
    Time for a single version bump to reach every agent, on a gossip-only event loop.

    Agents start with random tick phases; agent 0 publishes version 1 of its own entry right before its first tick,
    and time is counted from there.

    Parameters:
    - n_agents (int): Number of agents.
    - seed (int): Seed for phases and agent streams.
    - topology (str): 'complete' or 'ring'.
    - tick_ms (int): Gossip period (ms).
    - latency_ms (int): Message latency (ms).
    - mode (str): 'push' or 'push_pull'.
    - drop_probability (float): Message loss probability.
    - horizon_ms (int): Give up after this long.

    Returns:
    - float: Milliseconds from the bump until the last agent holds it, ``inf`` when the horizon is hit.
    """
    nodes = list(range(n_agents))
    graph = build_topology(topology, nodes)
    phase_stream, agent_stream = np.random.SeedSequence(seed).spawn(2)
    agents = spawn_agents(nodes, graph, agent_stream)
    phases = np.random.default_rng(phase_stream).integers(0, tick_ms, size=n_agents)
    bump_ms = int(phases[0])
    now = bump_ms
    informed = {0}

    queue = EventQueue()
    for agent, phase in zip(agents, phases):
        queue.push(int(phase), GOSSIP_TICK, "tick", agent.agent_id)
    while queue and len(informed) < n_agents:
        now, kind, data = queue.pop()
        if now - bump_ms > horizon_ms:
            break
        if kind == "tick":
            agent = agents[data]
            if data == 0 and agent.view.version[0] == 0:
                agent.publish(LambdaEntry(0, 1.0, 0.0, 1))
            for message in on_gossip_tick(agent, now, drop_probability):
                queue.push(now + latency_ms, DELIVERY, "deliver", message)
            queue.push(now + tick_ms, GOSSIP_TICK, "tick", data)
        elif kind == "deliver":
            receiver = agents[data.receiver]
            had_replies = bool(receiver.pending_replies)
            receive(receiver, data, mode)
            if receiver.view.version[0] >= 1:
                informed.add(receiver.agent_id)
            if receiver.pending_replies and not had_replies:
                queue.push(now, REPLY_FLUSH, "flush", receiver.agent_id)
        elif kind == "flush":
            for message in flush_replies(agents[data], now, drop_probability):
                queue.push(now + latency_ms, DELIVERY, "deliver", message)
    if len(informed) < n_agents:
        logger.debug(f"seed {seed}: {len(informed)}/{n_agents} agents informed within {horizon_ms} ms")
        return math.inf
    return float(now - bump_ms)
