import logging
import math
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from P2PVC.grid.grid_model import NetworkModel
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import ComplexVoltage, NonConvergence, NotPerUnit, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InjectionSet:
    """
    Per-node complex power injections in pu, generator convention (positive = into the grid).
    The slack entry is ignored by the solver.
    """
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise ValidationError(f"injection arrays must be 1-D and equal length, got {self.p.shape}, {self.q.shape}")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValidationError("injections must be finite")

    @classmethod
    def zeros(cls, n_nodes: int) -> "InjectionSet":
        return cls(np.zeros(n_nodes), np.zeros(n_nodes))

    @classmethod
    def from_mapping(cls, n_nodes: int, values: Mapping[int, Tuple[float, float]]) -> "InjectionSet":
        """
        Build an injection set from sparse {node id: (p, q)} values, zero elsewhere.

        Parameters:
        - n_nodes (int): Number of nodes in the network.
        - values (Mapping[int, Tuple[float, float]]): Injections in pu.

        Returns:
        - InjectionSet: Dense injection arrays.
        """
        p = np.zeros(n_nodes)
        q = np.zeros(n_nodes)
        for node_id, (p_value, q_value) in values.items():
            p[node_id] = p_value
            q[node_id] = q_value
        return cls(p, q)

    def with_node(self, node_id: int, dp: float = 0.0, dq: float = 0.0) -> "InjectionSet":
        p = self.p.copy()
        q = self.q.copy()
        p[node_id] += dp
        q[node_id] += dq
        return InjectionSet(p, q)


@dataclass(frozen=True)
class VoltageSolution:
    """
    Converged load-flow state.

    Parameters:
    - magnitude (np.ndarray): |V_n| per node (pu).
    - angle (np.ndarray): Voltage angle per node (rad).
    - iterations (int): Sweeps performed.
    - residual (float): Largest voltage change in the last sweep (pu).
    - voltage (np.ndarray): Complex node voltages (pu).
    - branch_current (np.ndarray): Current flowing towards the slack in the branch feeding each node (pu).
    """
    magnitude: np.ndarray
    angle: np.ndarray
    iterations: int
    residual: float
    voltage: np.ndarray
    branch_current: np.ndarray


class PowerFlowCalculator:
    @staticmethod
    def solve_bfs(network: NetworkModel,
                  injections: InjectionSet,
                  tolerance: float = defaults.PF_TOLERANCE,
                  max_iterations: int = defaults.PF_MAX_ITERATIONS) -> VoltageSolution:
        """
        Backward/forward sweep load flow for constant-power injections, flat start.

        Parameters:
        - network (NetworkModel): Per-unit radial network.
        - injections (InjectionSet): Node injections (pu).
        - tolerance (float): Convergence bound on the largest per-node voltage change (pu).
        - max_iterations (int): Sweep cap.

        Returns:
        - VoltageSolution: Converged voltages.
        """
        if not network.per_unit:
            raise NotPerUnit("solve_bfs needs a per-unit network")
        if injections.p.shape[0] != network.n_nodes:
            raise ValidationError(f"{injections.p.shape[0]} injections for {network.n_nodes} nodes")
        power = injections.p + 1j * injections.q
        power[network.slack] = 0.0
        paths = network.path_matrix
        z = network.branch_impedance
        v_nom = network.v_nom_pu
        voltage = np.full(network.n_nodes, v_nom, dtype=complex)
        residual = math.inf
        for iteration in range(1, max_iterations + 1):
            bus_current = np.conj(power / voltage)
            # backward sweep: each branch carries the injections of its subtree
            branch_current = paths.T @ bus_current
            # forward sweep: accumulate branch drops from the slack outwards
            new_voltage = v_nom + paths @ (z * branch_current)
            residual = float(np.max(np.abs(new_voltage - voltage)))
            voltage = new_voltage
            if residual <= tolerance:
                return VoltageSolution(np.abs(voltage), np.angle(voltage), iteration, residual, voltage,
                                       branch_current)
        logger.warning(f"backward/forward sweep did not converge: residual {residual:.3e} "
                       f"after {max_iterations} sweeps")
        raise NonConvergence(f"no convergence after {max_iterations} sweeps (residual {residual:.3e})",
                             max_iterations, residual)

    @staticmethod
    def exact_two_bus_voltage(r: float, x: float, p: float, q: float) -> float:
        """
        Closed-form receiving-end voltage of a single line fed from a 1 pu slack.

        Parameters:
        - r (float): Line resistance (pu).
        - x (float): Line reactance (pu).
        - p (float): Active power leaving the slack into the line (pu).
        - q (float): Reactive power leaving the slack into the line (pu).

        Returns:
        - float: |V| at the far end (pu).
        """
        radicand = 1 - 2 * (r * p + x * q) + (r ** 2 + x ** 2) * (p ** 2 + q ** 2)
        if not radicand >= 0:
            raise ComplexVoltage(f"radicand {radicand:.3e} < 0 for r={r}, x={x}, P={p}, Q={q}")
        return math.sqrt(radicand)

    @staticmethod
    def slack_power(network: NetworkModel, injections: InjectionSet, solution: VoltageSolution) -> complex:
        """
        Complex power delivered by the slack bus into the feeder.

        Parameters:
        - network (NetworkModel): Per-unit network.
        - injections (InjectionSet): Injections the solution was computed for.
        - solution (VoltageSolution): Converged solution.

        Returns:
        - complex: P + jQ leaving the slack (pu).
        """
        power = injections.p + 1j * injections.q
        power[network.slack] = 0.0
        bus_current = np.conj(power / solution.voltage)
        outgoing = -np.sum(bus_current)
        return complex(solution.voltage[network.slack] * np.conj(outgoing))

    @staticmethod
    def branch_losses(network: NetworkModel, solution: VoltageSolution) -> np.ndarray:
        """
        Series losses z|I|^2 of the branch feeding each node (0 at the slack).

        Parameters:
        - network (NetworkModel): Per-unit network.
        - solution (VoltageSolution): Converged solution.

        Returns:
        - np.ndarray: Complex losses per node (pu).
        """
        return network.branch_impedance * np.abs(solution.branch_current) ** 2
