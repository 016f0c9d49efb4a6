import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from P2PVC.grid.grid_model import NetworkModel
from P2PVC.grid.PowerFlowCalculator import InjectionSet, PowerFlowCalculator
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import InvalidEpsilon, NotPerUnit, UnknownDer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensitivityMatrix:
    """
    Linearised voltage response to DER set-point changes.

    Parameters:
    - dv_dp (np.ndarray): N x D matrix of d|V_n|/dP_d (pu/pu).
    - dv_dq (np.ndarray): N x D matrix of d|V_n|/dQ_d (pu/pu).
    - der_nodes (Tuple[int, ...]): Hosting node id of each column.
    - der_ids (Tuple[str, ...]): DER id of each column.
    - v_nom (float): Nominal voltage the entries are divided by (pu).
    """
    dv_dp: np.ndarray
    dv_dq: np.ndarray
    der_nodes: Tuple[int, ...]
    der_ids: Tuple[str, ...]
    v_nom: float
    der_index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_nodes(self) -> int:
        return int(self.dv_dp.shape[0])

    @property
    def n_ders(self) -> int:
        return int(self.dv_dp.shape[1])

    def column(self, der_id: str) -> int:
        try:
            return self.der_index[der_id]
        except KeyError:
            raise UnknownDer(f"unknown DER '{der_id}'") from None


class SensitivityCalculator:
    @staticmethod
    def sensitivity_matrix(network: NetworkModel,
                           ders: Sequence[int],
                           der_ids: Optional[Sequence[str]] = None) -> SensitivityMatrix:
        """
        Topology-only voltage sensitivities r_nd / V_nom and x_nd / V_nom.

        Parameters:
        - network (NetworkModel): Per-unit network.
        - ders (Sequence[int]): Node ids hosting the DERs, one column each.
        - der_ids (Optional[Sequence[str]]): Column labels, defaults to the node names.

        Returns:
        - SensitivityMatrix: Matrices over every node (rows) and DER (columns).
        """
        if not network.per_unit:
            raise NotPerUnit("sensitivity_matrix needs a per-unit network")
        columns = []
        for node_id in ders:
            if not 0 <= node_id < network.n_nodes:
                raise UnknownDer(f"DER node id {node_id} does not exist")
            columns.append(int(node_id))
        if der_ids is None:
            der_ids = [network.nodes[node_id].name for node_id in columns]
        if len(der_ids) != len(columns):
            raise UnknownDer(f"{len(der_ids)} DER ids for {len(columns)} DER nodes")
        z = network.common_impedance[:, columns] / network.v_nom_pu
        return SensitivityMatrix(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), tuple(columns),
                                 tuple(der_ids), network.v_nom_pu,
                                 der_index={der_id: i for i, der_id in enumerate(der_ids)})

    @staticmethod
    def finite_difference_sensitivity(network: NetworkModel,
                                      operating_point: InjectionSet,
                                      der: int,
                                      epsilon: float = defaults.FD_EPSILON,
                                      tolerance: float = defaults.FD_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
        """
        Central-difference sensitivities of every |V_n| to the injection at one node.

        Parameters:
        - network (NetworkModel): Per-unit network.
        - operating_point (InjectionSet): Injections to linearise around (pu).
        - der (int): Node id whose injection is perturbed.
        - epsilon (float): Perturbation step (pu).
        - tolerance (float): Power-flow tolerance used for the four solves.

        Returns:
        - Tuple[np.ndarray, np.ndarray]: (d|V|/dP, d|V|/dQ) columns over all nodes.
        """
        if not epsilon > 0:
            raise InvalidEpsilon(f"epsilon must be positive, got {epsilon}")
        if not 0 <= der < network.n_nodes:
            raise UnknownDer(f"DER node id {der} does not exist")

        def magnitude(injections: InjectionSet) -> np.ndarray:
            return PowerFlowCalculator.solve_bfs(network, injections, tolerance=tolerance).magnitude

        dv_dp = (magnitude(operating_point.with_node(der, dp=epsilon))
                 - magnitude(operating_point.with_node(der, dp=-epsilon))) / (2 * epsilon)
        dv_dq = (magnitude(operating_point.with_node(der, dq=epsilon))
                 - magnitude(operating_point.with_node(der, dq=-epsilon))) / (2 * epsilon)
        logger.debug(f"finite-difference column for node {der}: max dV/dP {dv_dp.max():.6g}")
        return dv_dp, dv_dq
