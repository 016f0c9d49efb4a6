"""
Discrete-event closed loop: profiles drive the injections, the grid is re-solved on the gossip cadence, Lagrangian
agents update their multipliers from measured voltages and gossip carries them to the compensators.
"""
import logging
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from P2PVC.control.agents import (CompensatorState, LagrangianState, apply_compensation, compensator_update,
                                  lagrangian_update)
from P2PVC.control.CentralizedSolver import CentralizedSolver, Snapshot
from P2PVC.gossip.gossip_protocol import (GossipAgent, GossipMessage, TraceRow, build_topology, flush_replies,
                                          on_gossip_tick, receive, spawn_agents, trace_rows)
from P2PVC.gossip.lambda_vector import LambdaVector
from P2PVC.grid.grid_model import to_per_unit
from P2PVC.grid.PowerFlowCalculator import InjectionSet, PowerFlowCalculator
from P2PVC.grid.SensitivityCalculator import SensitivityCalculator
from P2PVC.sim.profiles import interpolate_profile
from P2PVC.sim.results import TimeSeriesResult, result_columns
from P2PVC.sim.scenario_json_parser import Scenario, load_reactive_factor, realize_profiles
from P2PVC.utilities.event_queue import (DELIVERY, GOSSIP_TICK, LAMBDA_UPDATE, PHYSICS, PROFILE, REPLY_FLUSH,
                                         SAMPLE, EventQueue)
from P2PVC.utilities.exceptions import NonConvergence, PowerFlowDiverged

logger = logging.getLogger(__name__)


class Simulation:
    """
    One run of a scenario. Build it, then call ``run``; the object is not reusable afterwards.

    Parameters:
    - scenario (Scenario): Validated scenario.
    - tie_shuffle_seed (Optional[int]): Randomise the order of same-time, same-priority events.
    - trace (Optional[List[TraceRow]]): Receives one row per accepted gossip entry.
    """

    def __init__(self, scenario: Scenario, tie_shuffle_seed: Optional[int] = None,
                 trace: Optional[List[TraceRow]] = None) -> None:
        self.scenario = scenario
        self.network = to_per_unit(scenario.network)
        self.trace = trace
        n = self.network.n_nodes
        s_base = self.network.s_base
        self.start_ms = int(round(scenario.start_s * 1000))
        self.end_ms = int(round(scenario.end_s * 1000))

        self.load_profiles, self.der_profiles = realize_profiles(scenario)
        self.load_nodes = np.array([load.node_id for load in scenario.loads], dtype=int)
        self.load_q_factor = np.array([load_reactive_factor(load.power_factor) for load in scenario.loads])
        self.p_load = np.zeros(n)
        self.q_load = np.zeros(n)

        der_nodes = [der.node_id for der in scenario.ders]
        self.sensitivity = SensitivityCalculator.sensitivity_matrix(self.network, der_nodes,
                                                                    [der.der_id for der in scenario.ders])
        self.der_nodes = np.array(der_nodes, dtype=int)
        self.compensators = [
            CompensatorState(der.der_id, der.node_id, der.c_p, der.c_q, 0.0, 0.0,
                             der.dp_min_w / s_base, der.dp_max_w / s_base,
                             der.dq_min_var / s_base, der.dq_max_var / s_base,
                             der.s_rated_va / s_base,
                             self.sensitivity.dv_dp[:, j].copy(), self.sensitivity.dv_dq[:, j].copy(),
                             allow_curtailment=der.allow_curtailment, curtail_only=der.kind == "pv")
            for j, der in enumerate(scenario.ders)]
        self.compensators_at: Dict[int, List[CompensatorState]] = {}
        for compensator in self.compensators:
            self.compensators_at.setdefault(compensator.node_id, []).append(compensator)
        self._clipped: set = set()

        phase_stream, agent_stream = np.random.SeedSequence(scenario.seed).spawn(2)
        self.agents: List[GossipAgent] = []
        self.lagrangians: List[LagrangianState] = []
        self.gossip_phases = np.zeros(0, dtype=int)
        self.lambda_phases = np.zeros(0, dtype=int)
        if scenario.control_enabled:
            nodes = list(range(n))
            topology = build_topology(scenario.topology, nodes, self.network, scenario.topology_edges)
            self.agents = spawn_agents(nodes, topology, agent_stream)
            self.lagrangians = [LagrangianState(i, 0.0, 0.0, scenario.alpha, scenario.v_min, scenario.v_max)
                                for i in nodes]
            phase_rng = np.random.default_rng(phase_stream)
            self.gossip_phases = phase_rng.integers(0, scenario.tick_ms, size=n)
            self.lambda_phases = phase_rng.integers(0, scenario.lambda_update_period_ms, size=n)
        self.empty_view = LambdaVector.zeros(range(n))

        shuffle = None if tie_shuffle_seed is None else np.random.default_rng(tie_shuffle_seed)
        self.queue = EventQueue(shuffle)
        self.voltages = np.full(n, self.network.v_nom_pu)
        self.solved_p = np.zeros(n)
        self.dirty = True
        self.solves = 0
        self.rows: List[np.ndarray] = []

    def view_at(self, node_id: int) -> LambdaVector:
        return self.agents[node_id].view if self.agents else self.empty_view

    def injections(self) -> InjectionSet:
        p = -self.p_load
        q = -self.q_load
        if self.compensators:
            applied = np.array([apply_compensation(c) for c in self.compensators])
            np.add.at(p, self.der_nodes, applied[:, 0])
            np.add.at(q, self.der_nodes, applied[:, 1])
        return InjectionSet(p, q)

    def apply_profiles(self, now_ms: int) -> None:
        """Load and PV values at ``now_ms``; compensators re-clamp against the new operating point."""
        t = now_ms / 1000
        for k, profile in enumerate(self.load_profiles):
            self.p_load[self.load_nodes[k]] = interpolate_profile(profile, t)
        self.q_load[self.load_nodes] = self.p_load[self.load_nodes] * self.load_q_factor
        for compensator, profile in zip(self.compensators, self.der_profiles):
            available = 0.0 if profile is None else interpolate_profile(profile, t)
            if abs(available) > compensator.s_rated:
                if compensator.der_id not in self._clipped:
                    logger.warning(f"DER '{compensator.der_id}' profile exceeds its rating, clipping")
                    self._clipped.add(compensator.der_id)
                available = float(np.clip(available, -compensator.s_rated, compensator.s_rated))
            compensator.p_setpoint_0 = available
            if self.scenario.control_enabled:
                compensator_update(compensator, self.view_at(compensator.node_id))
        self.dirty = True

    def solve(self, now_ms: int) -> None:
        injections = self.injections()
        try:
            solution = PowerFlowCalculator.solve_bfs(self.network, injections)
        except NonConvergence as error:
            logger.error(f"power flow diverged at t={now_ms / 1000:.1f} s: {error}")
            raise PowerFlowDiverged(now_ms / 1000, self.result()) from error
        self.voltages = solution.magnitude
        self.solved_p = injections.p
        self.dirty = False
        self.solves += 1

    def on_view_change(self, node_id: int) -> None:
        for compensator in self.compensators_at.get(node_id, ()):
            before = (compensator.delta_p, compensator.delta_q)
            if compensator_update(compensator, self.agents[node_id].view) != before:
                self.dirty = True

    def deliver(self, now_ms: int, message: GossipMessage) -> None:
        receiver = self.agents[message.receiver]
        had_replies = bool(receiver.pending_replies)
        accepted = receive(receiver, message, self.scenario.gossip_mode)
        if accepted.any():
            if self.trace is not None:
                self.trace.extend(trace_rows(message, accepted, now_ms))
            self.on_view_change(receiver.agent_id)
        if receiver.pending_replies and not had_replies:
            self.queue.push(now_ms, REPLY_FLUSH, "flush", receiver.agent_id)

    def send(self, now_ms: int, messages: Sequence[GossipMessage]) -> None:
        for message in messages:
            self.queue.push(now_ms + self.scenario.latency_ms, DELIVERY, "deliver", message)

    def update_lambda(self, node_id: int) -> None:
        state = lagrangian_update(self.lagrangians[node_id], float(self.voltages[node_id]))
        self.lagrangians[node_id] = state
        self.agents[node_id].publish(state.to_entry())
        self.on_view_change(node_id)

    def sample(self, now_ms: int) -> None:
        n = self.network.n_nodes
        if self.lagrangians:
            lambda_min = np.array([s.lambda_min for s in self.lagrangians])
            lambda_max = np.array([s.lambda_max for s in self.lagrangians])
        else:
            lambda_min = lambda_max = np.zeros(n)
        der = np.array([[c.delta_p, c.delta_q, *apply_compensation(c)] for c in self.compensators]).reshape(-1, 4)
        self.rows.append(np.concatenate(([now_ms / 1000], self.voltages, self.solved_p, der[:, 0], der[:, 1],
                                         der[:, 2], der[:, 3], lambda_min, lambda_max)))

    def result(self) -> TimeSeriesResult:
        names = tuple(self.network.names)
        der_ids = tuple(c.der_id for c in self.compensators)
        width = len(result_columns(names, der_ids))
        data = np.vstack(self.rows) if self.rows else np.zeros((0, width))
        return TimeSeriesResult(names, der_ids, data, np.array([c.s_rated for c in self.compensators]),
                                self.scenario.v_min, self.scenario.v_max,
                                sum(agent.sent for agent in self.agents),
                                self.scenario.sample_period_ms / 1000)

    def snapshot(self) -> Snapshot:
        """Centralized-problem snapshot of the current state."""
        return CentralizedSolver.build_snapshot(self.sensitivity, self.compensators, self.voltages,
                                                self.scenario.v_min, self.scenario.v_max, self.scenario.alpha)

    def _schedule(self, now_ms: int, priority: int, kind: str, data: object = None) -> None:
        if now_ms <= self.end_ms:
            self.queue.push(now_ms, priority, kind, data)

    def run(self) -> TimeSeriesResult:
        scenario = self.scenario
        start = self.start_ms
        self._schedule(start, PROFILE, "profile")
        self._schedule(start, PHYSICS, "physics")
        self._schedule(start, SAMPLE, "sample")
        for i in range(len(self.agents)):
            self._schedule(start + int(self.gossip_phases[i]), GOSSIP_TICK, "tick", i)
            self._schedule(start + int(self.lambda_phases[i]), LAMBDA_UPDATE, "lambda", i)
        logger.info(f"simulating '{scenario.name}' from {scenario.start_s:.0f} s to {scenario.end_s:.0f} s, "
                    f"control {'on' if scenario.control_enabled else 'off'}, seed {scenario.seed}")

        queue = self.queue
        while queue:
            now, kind, data = queue.pop()
            if now > self.end_ms:
                break
            if kind == "deliver":
                self.deliver(now, data)
            elif kind == "tick":
                self.send(now, on_gossip_tick(self.agents[data], now, scenario.drop_probability))
                self._schedule(now + scenario.tick_ms, GOSSIP_TICK, "tick", data)
            elif kind == "flush":
                self.send(now, flush_replies(self.agents[data], now, scenario.drop_probability))
            elif kind == "physics":
                if self.dirty:
                    self.solve(now)
                self._schedule(now + scenario.tick_ms, PHYSICS, "physics")
            elif kind == "lambda":
                self.update_lambda(data)
                self._schedule(now + scenario.lambda_update_period_ms, LAMBDA_UPDATE, "lambda", data)
            elif kind == "profile":
                self.apply_profiles(now)
                self._schedule(now + scenario.profile_step_ms, PROFILE, "profile")
            elif kind == "sample":
                self.sample(now)
                self._schedule(now + scenario.sample_period_ms, SAMPLE, "sample")
        result = self.result()
        logger.info(f"simulation done: {len(result)} rows, {self.solves} power flows, "
                    f"{result.message_count} gossip messages")
        return result


def run_simulation(scenario: Scenario, tie_shuffle_seed: Optional[int] = None,
                   trace: Optional[List[TraceRow]] = None) -> TimeSeriesResult:
    """
    Run a scenario to its end time.

    Parameters:
    - scenario (Scenario): Validated scenario.
    - tie_shuffle_seed (Optional[int]): Randomise the order of simultaneous events of equal priority.
    - trace (Optional[List[TraceRow]]): Receives accepted gossip entries when given.

    Returns:
    - TimeSeriesResult: Rows sampled every ``sample_period_ms`` from start to end inclusive.
    """
    return Simulation(scenario, tie_shuffle_seed, trace).run()


def initial_snapshot(scenario: Scenario, time_s: Optional[float] = None) -> Tuple[Snapshot, Simulation]:
    """
    Uncontrolled operating point at ``time_s`` (default: scenario start) as a centralized snapshot.

    Parameters:
    - scenario (Scenario): Validated scenario.
    - time_s (Optional[float]): Absolute time of the profiles (s).

    Returns:
    - Tuple[Snapshot, Simulation]: Snapshot and the simulation object holding the solved state.
    """
    simulation = Simulation(scenario.with_overrides(control_enabled=False))
    now_ms = simulation.start_ms if time_s is None else int(round(time_s * 1000))
    simulation.apply_profiles(now_ms)
    simulation.solve(now_ms)
    return simulation.snapshot(), simulation


def _run_seed(arguments: Tuple[Scenario, int]) -> TimeSeriesResult:
    scenario, seed = arguments
    return run_simulation(scenario.with_overrides(seed=seed))


def run_sweep(scenario: Scenario, seeds: Sequence[int], workers: int = 1) -> List[TimeSeriesResult]:
    """
    Independent runs of one scenario for several seeds, optionally in worker processes.

    Parameters:
    - scenario (Scenario): Validated scenario.
    - seeds (Sequence[int]): Seeds to run.
    - workers (int): Worker processes; 1 runs in-process.

    Returns:
    - List[TimeSeriesResult]: Results in ``seeds`` order.
    """
    jobs = [(scenario, seed) for seed in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_seed(job) for job in jobs]
    logger.info(f"running {len(jobs)} seeds on {workers} workers")
    with Pool(processes=workers) as pool:
        return pool.map(_run_seed, jobs)
