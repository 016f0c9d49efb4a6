import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from P2PVC.control.agents import CompensatorState, active_power_box, reactive_power_box
from P2PVC.grid.SensitivityCalculator import SensitivityMatrix
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import NoConvergence, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Snapshot:
    """
    Frozen operating point for the centralized problem.

    Parameters:
    - v0 (np.ndarray): Voltages |V_{n,0}| without control action (pu), one per monitored node.
    - sensitivity (SensitivityMatrix): Linear voltage model, columns in compensator order.
    - compensators (Tuple[CompensatorState, ...]): DER states supplying set points, weights and bounds.
    - v_min (float): Lower voltage limit (pu).
    - v_max (float): Upper voltage limit (pu).
    - alpha (float): Dual step size.
    """
    v0: np.ndarray
    sensitivity: SensitivityMatrix
    compensators: Tuple[CompensatorState, ...]
    v_min: float
    v_max: float
    alpha: float

    def __post_init__(self) -> None:
        if self.v0.shape != (self.sensitivity.n_nodes,):
            raise ValidationError(f"snapshot has {self.v0.shape[0]} voltages for {self.sensitivity.n_nodes} nodes")
        if tuple(c.der_id for c in self.compensators) != self.sensitivity.der_ids:
            raise ValidationError("compensators do not match the sensitivity columns")
        if not self.v_min < self.v_max:
            raise ValidationError(f"v_min {self.v_min} >= v_max {self.v_max}")
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class CentralizedResult:
    delta_p: np.ndarray
    delta_q: np.ndarray
    lambda_max: np.ndarray
    lambda_min: np.ndarray
    v_linear: np.ndarray
    iterations: int
    residual: float
    converged: bool
    monotone: bool = True

    def raise_if_unconverged(self) -> "CentralizedResult":
        if not self.converged:
            raise NoConvergence(f"dual ascent stopped after {self.iterations} iterations "
                                f"(last multiplier change {self.residual:.3e})")
        return self


@dataclass(frozen=True)
class AlphaCalibration:
    """Accepted step size, the smallest rejected one (``inf`` when none failed) and the dual ascent runs spent."""
    alpha: float
    alpha_rejected: float
    evaluations: int


class _DerBank:
    """Compensator data stacked into arrays for vectorised responses."""

    def __init__(self, snapshot: Snapshot) -> None:
        compensators = snapshot.compensators
        self.dv_dp = snapshot.sensitivity.dv_dp
        self.dv_dq = snapshot.sensitivity.dv_dq
        self.c_p = np.array([c.c_p for c in compensators])
        self.c_q = np.array([c.c_q for c in compensators])
        self.p0 = np.array([c.p_setpoint_0 for c in compensators])
        self.q0 = np.array([c.q_setpoint_0 for c in compensators])
        self.s_rated = np.array([c.s_rated for c in compensators])
        self.dq_min = np.array([c.delta_q_min for c in compensators])
        self.dq_max = np.array([c.delta_q_max for c in compensators])
        self.p_lo, self.p_hi = active_power_box(self.p0, self.s_rated,
                                                np.array([c.delta_p_min for c in compensators]),
                                                np.array([c.delta_p_max for c in compensators]),
                                                np.array([c.allow_curtailment for c in compensators], dtype=bool),
                                                np.array([c.curtail_only for c in compensators], dtype=bool))

    def respond(self, pressure: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        delta_p = np.clip(self.dv_dp.T @ pressure / (2 * self.c_p), self.p_lo, self.p_hi)
        q_lo, q_hi = reactive_power_box(self.s_rated, self.p0 + delta_p, self.q0, self.dq_min, self.dq_max)
        delta_q = np.clip(self.dv_dq.T @ pressure / (2 * self.c_q), q_lo, q_hi)
        return delta_p, delta_q


def _dual_ascent(snapshot: Snapshot, alpha: float, tolerance: float, max_iterations: int,
                 stop_on_increase: bool = False) -> CentralizedResult:
    bank = _DerBank(snapshot)
    n = snapshot.v0.shape[0]
    lambda_max = np.zeros(n)
    lambda_min = np.zeros(n)
    best = (np.inf, lambda_max, lambda_min)
    change = np.inf
    monotone = True
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        previous = change
        delta_p, delta_q = bank.respond(lambda_min - lambda_max)
        v_linear = snapshot.v0 + bank.dv_dp @ delta_p + bank.dv_dq @ delta_q
        new_max = np.maximum(lambda_max + alpha * (v_linear - snapshot.v_max), 0.0)
        new_min = np.maximum(lambda_min + alpha * (snapshot.v_min - v_linear), 0.0)
        change = float(max(np.max(np.abs(new_max - lambda_max), initial=0.0),
                           np.max(np.abs(new_min - lambda_min), initial=0.0)))
        if change > previous:
            monotone = False
        lambda_max, lambda_min = new_max, new_min
        if change < best[0]:
            best = (change, lambda_max, lambda_min)
        if change <= tolerance or (stop_on_increase and not monotone):
            break
    converged = change <= tolerance
    if not converged:
        change, lambda_max, lambda_min = best
    delta_p, delta_q = bank.respond(lambda_min - lambda_max)
    v_linear = snapshot.v0 + bank.dv_dp @ delta_p + bank.dv_dq @ delta_q
    return CentralizedResult(delta_p, delta_q, lambda_max, lambda_min, v_linear, iteration, change, converged,
                             monotone)


class CentralizedSolver:
    @staticmethod
    def build_snapshot(sensitivity: SensitivityMatrix,
                       compensators: Sequence[CompensatorState],
                       v_measured: np.ndarray,
                       v_min: float = defaults.V_MIN_PU,
                       v_max: float = defaults.V_MAX_PU,
                       alpha: float = 1.0) -> Snapshot:
        """
        Snapshot anchored at a measured operating point with the compensators' current deltas applied.

        The linear effect of the applied deltas is removed from the measured voltages so the snapshot describes
        the uncontrolled state the centralized problem starts from.

        Parameters:
        - sensitivity (SensitivityMatrix): Linear voltage model.
        - compensators (Sequence[CompensatorState]): DER states in sensitivity column order.
        - v_measured (np.ndarray): Measured |V| per node with the deltas applied (pu).
        - v_min (float): Lower voltage limit (pu).
        - v_max (float): Upper voltage limit (pu).
        - alpha (float): Dual step size.

        Returns:
        - Snapshot: Centralized problem data.
        """
        delta_p = np.array([c.delta_p for c in compensators])
        delta_q = np.array([c.delta_q for c in compensators])
        v0 = np.asarray(v_measured, dtype=float)
        if delta_p.size:
            v0 = v0 - sensitivity.dv_dp @ delta_p - sensitivity.dv_dq @ delta_q
        return Snapshot(v0, sensitivity, tuple(compensators), v_min, v_max, alpha)

    @staticmethod
    def centralized_solve(snapshot: Snapshot,
                          tolerance: float = defaults.CENTRAL_TOLERANCE,
                          max_iterations: int = defaults.CENTRAL_MAX_ITERATIONS) -> CentralizedResult:
        """
        Synchronous dual ascent on the linearised problem, iterated to a fixed point.

        Parameters:
        - snapshot (Snapshot): Problem data.
        - tolerance (float): Stop when no multiplier changes by more than this in one sweep.
        - max_iterations (int): Sweep cap.

        Returns:
        - CentralizedResult: Optimal deltas and multipliers, or the best iterate with ``converged`` False.
        """
        result = _dual_ascent(snapshot, snapshot.alpha, tolerance, max_iterations)
        if result.converged:
            logger.info(f"centralized solve converged in {result.iterations} iterations")
        else:
            logger.warning(f"centralized solve did not converge in {max_iterations} iterations "
                           f"(best multiplier change {result.residual:.3e})")
        return result

    @staticmethod
    def lagrangian_value(snapshot: Snapshot, delta_p: np.ndarray, delta_q: np.ndarray,
                         lambda_max: np.ndarray, lambda_min: np.ndarray) -> float:
        """
        Quadratic cost plus multiplier-weighted linearised voltage-limit violations.

        Parameters:
        - snapshot (Snapshot): Problem data.
        - delta_p (np.ndarray): ΔP per DER (pu).
        - delta_q (np.ndarray): ΔQ per DER (pu).
        - lambda_max (np.ndarray): Upper-limit multipliers per node.
        - lambda_min (np.ndarray): Lower-limit multipliers per node.

        Returns:
        - float: Lagrangian value.
        """
        c_p = np.array([c.c_p for c in snapshot.compensators])
        c_q = np.array([c.c_q for c in snapshot.compensators])
        v_linear = snapshot.v0 + snapshot.sensitivity.dv_dp @ delta_p + snapshot.sensitivity.dv_dq @ delta_q
        cost = float(np.sum(c_p * delta_p ** 2 + c_q * delta_q ** 2))
        return cost + float(lambda_max @ (v_linear - snapshot.v_max) + lambda_min @ (snapshot.v_min - v_linear))

    @staticmethod
    def reference_qp_solve(snapshot: Snapshot) -> Tuple[np.ndarray, np.ndarray]:
        """
        Solve the linearised primal problem directly with SLSQP, as an independent cross-check.

        Parameters:
        - snapshot (Snapshot): Problem data.

        Returns:
        - Tuple[np.ndarray, np.ndarray]: (ΔP, ΔQ) per DER (pu).
        """
        bank = _DerBank(snapshot)
        n_ders = bank.c_p.size
        if n_ders == 0:
            return np.zeros(0), np.zeros(0)

        def split(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return x[:n_ders], x[n_ders:]

        def objective(x: np.ndarray) -> float:
            dp, dq = split(x)
            return float(np.sum(bank.c_p * dp ** 2 + bank.c_q * dq ** 2))

        def gradient(x: np.ndarray) -> np.ndarray:
            dp, dq = split(x)
            return np.concatenate((2 * bank.c_p * dp, 2 * bank.c_q * dq))

        def v_linear(x: np.ndarray) -> np.ndarray:
            dp, dq = split(x)
            return snapshot.v0 + bank.dv_dp @ dp + bank.dv_dq @ dq

        def capability(x: np.ndarray) -> np.ndarray:
            dp, dq = split(x)
            return bank.s_rated ** 2 - (bank.p0 + dp) ** 2 - (bank.q0 + dq) ** 2

        bounds = [(lo, hi) for lo, hi in zip(bank.p_lo, bank.p_hi)]
        bounds += [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
                   for lo, hi in zip(bank.dq_min, bank.dq_max)]
        constraints = [{'type': 'ineq', 'fun': lambda x: snapshot.v_max - v_linear(x)},
                       {'type': 'ineq', 'fun': lambda x: v_linear(x) - snapshot.v_min},
                       {'type': 'ineq', 'fun': capability}]
        res = minimize(objective, np.zeros(2 * n_ders), jac=gradient, bounds=bounds, constraints=constraints,
                       method='SLSQP', options={'ftol': 1e-14, 'maxiter': 1000})
        if not res.success:
            raise NoConvergence(f"reference QP failed: {res.message}")
        return split(res.x)

    @staticmethod
    def calibrate_alpha(snapshot: Snapshot,
                        start: float = 1.0,
                        tolerance: float = 1e-3,
                        trial_iterations: int = defaults.CENTRAL_MAX_ITERATIONS,
                        max_steps: int = 40) -> AlphaCalibration:
        """
        Largest step size for which synchronous dual ascent on ``snapshot`` converges with a residual that never
        grows from one sweep to the next.

        The step is doubled (or halved) from ``start`` until the acceptance flips, then the bracket is bisected
        until its width is below ``tolerance`` relative to the accepted end.

        Parameters:
        - snapshot (Snapshot): Problem data; its own alpha is ignored.
        - start (float): First step size tried.
        - tolerance (float): Relative width of the final bracket.
        - trial_iterations (int): Iteration cap of every trial run.
        - max_steps (int): Doublings or halvings tried before giving up.

        Returns:
        - AlphaCalibration: Accepted step size, the smallest rejected one and the number of trial runs.
        """
        if not start > 0:
            raise ValidationError(f"start must be positive, got {start}")
        if not 0 < tolerance < 1:
            raise ValidationError(f"tolerance must be in (0, 1), got {tolerance}")
        if not snapshot.compensators:
            logger.warning("no controllable DER in snapshot, any step size is stable")
            return AlphaCalibration(np.inf, np.inf, 0)
        evaluations = 0

        def accepted(alpha: float) -> bool:
            nonlocal evaluations
            evaluations += 1
            run = _dual_ascent(snapshot, alpha, defaults.CENTRAL_TOLERANCE, trial_iterations, stop_on_increase=True)
            logger.debug(f"alpha={alpha:.9g}: converged={run.converged} monotone={run.monotone} "
                         f"after {run.iterations} iterations")
            return run.converged and run.monotone

        alpha = start
        if accepted(alpha):
            lo = alpha
            for _ in range(max_steps):
                alpha *= 2.0
                if not accepted(alpha):
                    break
                lo = alpha
            else:
                logger.warning(f"dual ascent still converges at alpha={lo:.6g}, no upper bound found")
                return AlphaCalibration(np.inf, np.inf, evaluations)
            hi = alpha
        else:
            hi = alpha
            for _ in range(max_steps):
                alpha /= 2.0
                if accepted(alpha):
                    break
                hi = alpha
            else:
                raise NoConvergence(f"dual ascent does not converge monotonically for any alpha down to {alpha:.3e}")
            lo = alpha
        while hi - lo > tolerance * lo:
            mid = 0.5 * (lo + hi)
            if accepted(mid):
                lo = mid
            else:
                hi = mid
        logger.info(f"calibrated alpha {lo:.6g} (rejected {hi:.6g}) after {evaluations} dual ascent runs")
        return AlphaCalibration(lo, hi, evaluations)
