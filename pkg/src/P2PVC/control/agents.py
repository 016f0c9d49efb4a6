"""
Local controllers: compensators on DER nodes and Lagrangian agents on monitored nodes.

Compensators turn the multiplier view into clamped set-point changes, Lagrangian agents turn a voltage
measurement into projected multiplier updates.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple, Union

import numpy as np

from P2PVC.gossip.lambda_vector import LambdaEntry, LambdaVector
from P2PVC.utilities.exceptions import RatingExceeded, ValidationError

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[np.ndarray, float]


@dataclass
class CompensatorState:
    """
    Mutable state of one DER controller, all powers in pu.

    Parameters:
    - der_id (str): DER identifier.
    - node_id (int): Hosting node.
    - c_p (float): Cost weight of active-power changes.
    - c_q (float): Cost weight of reactive-power changes.
    - p_setpoint_0 (float): Uncontrolled active injection P_{d,0}.
    - q_setpoint_0 (float): Uncontrolled reactive injection Q_{d,0}.
    - delta_p_min, delta_p_max (float): Static active-power change bounds.
    - delta_q_min, delta_q_max (float): Static reactive-power change bounds.
    - s_rated (float): Inverter rating.
    - dv_dp (np.ndarray): d|V_n|/dP_d for every monitored node.
    - dv_dq (np.ndarray): d|V_n|/dQ_d for every monitored node.
    - allow_curtailment (bool): When False the active-power box is [0, 0].
    - curtail_only (bool): PV semantics, ΔP limited to [-P_{d,0}, 0]; False for storage.
    - delta_p, delta_q (float): Currently applied changes.
    """
    der_id: str
    node_id: int
    c_p: float
    c_q: float
    p_setpoint_0: float
    q_setpoint_0: float
    delta_p_min: float
    delta_p_max: float
    delta_q_min: float
    delta_q_max: float
    s_rated: float
    dv_dp: np.ndarray
    dv_dq: np.ndarray
    allow_curtailment: bool = True
    curtail_only: bool = True
    delta_p: float = 0.0
    delta_q: float = 0.0

    def __post_init__(self) -> None:
        if not (self.c_p > 0 and self.c_q > 0):
            raise ValidationError(f"DER '{self.der_id}': cost weights must be positive "
                                  f"(c_p={self.c_p}, c_q={self.c_q})")
        if self.delta_p_min > self.delta_p_max or self.delta_q_min > self.delta_q_max:
            raise ValidationError(f"DER '{self.der_id}': inverted bounds")
        if self.s_rated < 0:
            raise ValidationError(f"DER '{self.der_id}': negative rating {self.s_rated}")
        if self.dv_dp.shape != self.dv_dq.shape:
            raise ValidationError(f"DER '{self.der_id}': sensitivity rows differ in shape")


@dataclass(frozen=True)
class LagrangianState:
    node_id: int
    lambda_max: float
    lambda_min: float
    alpha: float
    v_min: float
    v_max: float
    version: int = 0

    def __post_init__(self) -> None:
        if self.lambda_max < 0 or self.lambda_min < 0:
            raise ValidationError(f"node {self.node_id}: multipliers must be >= 0")
        if not self.v_min < self.v_max:
            raise ValidationError(f"node {self.node_id}: v_min {self.v_min} >= v_max {self.v_max}")
        if not self.alpha > 0:
            raise ValidationError(f"node {self.node_id}: alpha must be positive, got {self.alpha}")

    def to_entry(self) -> LambdaEntry:
        return LambdaEntry(self.node_id, self.lambda_max, self.lambda_min, self.version)


def intersect_box(lower: ArrayOrFloat, upper: ArrayOrFloat,
                  static_lower: ArrayOrFloat, static_upper: ArrayOrFloat) -> Tuple[np.ndarray, np.ndarray]:
    """
    Intersect a physical box with static bounds; the physical box is kept when the two do not overlap.

    Parameters:
    - lower, upper (ArrayOrFloat): Physical (dynamic) bounds.
    - static_lower, static_upper (ArrayOrFloat): Scenario bounds.

    Returns:
    - Tuple[np.ndarray, np.ndarray]: Lower and upper bounds of the intersection.
    """
    lo = np.maximum(lower, static_lower)
    hi = np.minimum(upper, static_upper)
    empty = lo > hi
    return np.where(empty, lower, lo), np.where(empty, upper, hi)


def active_power_box(p_setpoint_0: ArrayOrFloat, s_rated: ArrayOrFloat,
                     delta_p_min: ArrayOrFloat, delta_p_max: ArrayOrFloat,
                     allow_curtailment: Union[np.ndarray, bool],
                     curtail_only: Union[np.ndarray, bool]) -> Tuple[np.ndarray, np.ndarray]:
    """
    ΔP box intersected with the static bounds.

    PV inverters can only curtail ([-P_0, 0]), storage may move anywhere inside its rating
    ([-S - P_0, S - P_0]); with curtailment disabled the box is [0, 0].
    """
    p0 = np.asarray(p_setpoint_0, dtype=float)
    s = np.asarray(s_rated, dtype=float)
    lower = np.where(curtail_only, -np.maximum(p0, 0.0), -s - p0)
    upper = np.where(curtail_only, 0.0, s - p0)
    lo, hi = intersect_box(lower, upper, delta_p_min, delta_p_max)
    allowed = np.asarray(allow_curtailment, dtype=bool)
    return np.where(allowed, lo, 0.0), np.where(allowed, hi, 0.0)


def reactive_power_box(s_rated: ArrayOrFloat, p_now: ArrayOrFloat, q_setpoint_0: ArrayOrFloat,
                       delta_q_min: ArrayOrFloat, delta_q_max: ArrayOrFloat) -> Tuple[np.ndarray, np.ndarray]:
    """
    ΔQ box given the active power the inverter delivers after its ΔP.
    """
    q_available = np.sqrt(np.maximum(np.square(s_rated) - np.square(p_now), 0.0))
    return intersect_box(-q_available - q_setpoint_0, q_available - q_setpoint_0, delta_q_min, delta_q_max)


def reactive_capability(s_rated: float, p_now: float) -> float:
    """
    Reactive power still available to an inverter.

    Parameters:
    - s_rated (float): Apparent power rating (pu).
    - p_now (float): Momentary active power (pu).

    Returns:
    - float: sqrt(s_rated**2 - p_now**2) (pu).
    """
    if abs(p_now) > s_rated:
        raise RatingExceeded(f"|P|={abs(p_now):.6g} exceeds rating {s_rated:.6g}")
    return math.sqrt(max(s_rated ** 2 - p_now ** 2, 0.0))


def raw_compensator_response(state: CompensatorState, lambdas: LambdaVector) -> Tuple[float, float]:
    """
    Unclamped minimiser of the per-DER Lagrangian for the given multipliers.

    Parameters:
    - state (CompensatorState): DER controller.
    - lambdas (LambdaVector): Multiplier view over the monitored nodes.

    Returns:
    - Tuple[float, float]: (ΔP, ΔQ) before clamping (pu).
    """
    pressure = lambdas.lambda_min - lambdas.lambda_max
    return (float(state.dv_dp @ pressure) / (2 * state.c_p),
            float(state.dv_dq @ pressure) / (2 * state.c_q))


def compensator_update(state: CompensatorState, lambdas: LambdaVector) -> Tuple[float, float]:
    """
    Recompute the DER's set-point changes from a multiplier view and store them in ``state``.

    Parameters:
    - state (CompensatorState): DER controller, updated in place.
    - lambdas (LambdaVector): Multiplier view; entries not yet received are zero.

    Returns:
    - Tuple[float, float]: Clamped (ΔP, ΔQ) (pu).
    """
    raw_p, raw_q = raw_compensator_response(state, lambdas)
    p_lo, p_hi = active_power_box(state.p_setpoint_0, state.s_rated, state.delta_p_min, state.delta_p_max,
                                  state.allow_curtailment, state.curtail_only)
    delta_p = float(np.clip(raw_p, p_lo, p_hi))
    q_lo, q_hi = reactive_power_box(state.s_rated, state.p_setpoint_0 + delta_p, state.q_setpoint_0,
                                    state.delta_q_min, state.delta_q_max)
    delta_q = float(np.clip(raw_q, q_lo, q_hi))
    state.delta_p = delta_p
    state.delta_q = delta_q
    return delta_p, delta_q


def apply_compensation(state: CompensatorState) -> Tuple[float, float]:
    """Set points P_{d,0} + ΔP and Q_{d,0} + ΔQ fed to the grid."""
    return state.p_setpoint_0 + state.delta_p, state.q_setpoint_0 + state.delta_q


def lagrangian_update(state: LagrangianState, v_measured: float) -> LagrangianState:
    """
    Projected dual-ascent step on both voltage-limit multipliers of one node.

    Parameters:
    - state (LagrangianState): Current multipliers.
    - v_measured (float): Latest |V| at the node (pu).

    Returns:
    - LagrangianState: New multipliers with the version incremented.
    """
    lambda_max = max(state.lambda_max + state.alpha * (v_measured - state.v_max), 0.0)
    lambda_min = max(state.lambda_min + state.alpha * (state.v_min - v_measured), 0.0)
    return replace(state, lambda_max=lambda_max, lambda_min=lambda_min, version=state.version + 1)
