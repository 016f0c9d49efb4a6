"""!
@brief Unit tests for the CentralizedSolver module.

@file test_centralized_solver.py
"""
import math
from dataclasses import replace

import numpy as np
import pytest
from numpy import testing

from P2PVC.control.agents import CompensatorState
from P2PVC.control.CentralizedSolver import CentralizedSolver, Snapshot
from P2PVC.grid.SensitivityCalculator import SensitivityMatrix
from P2PVC.sim.scenario_json_parser import load_scenario
from P2PVC.sim.simulation import initial_snapshot
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import NoConvergence, ValidationError


def make_snapshot(v0, dv_dp, dv_dq, alpha, s_rated=10.0, p0=0.0, curtail=False):
    """!
    @brief Snapshot over explicit sensitivity columns, one compensator per column, generous ratings.
    """
    dv_dp = np.asarray(dv_dp, dtype=float)
    dv_dq = np.asarray(dv_dq, dtype=float)
    der_ids = tuple(f"pv{d}" for d in range(dv_dp.shape[1]))
    sensitivity = SensitivityMatrix(dv_dp, dv_dq, tuple(1 for _ in der_ids), der_ids, 1.0,
                                    der_index={der_id: d for d, der_id in enumerate(der_ids)})
    compensators = tuple(
        CompensatorState(der_id, 1, 4.0, 1.0, p0, 0.0, -math.inf, math.inf, -math.inf, math.inf, s_rated,
                         dv_dp[:, d].copy(), dv_dq[:, d].copy(), allow_curtailment=curtail)
        for d, der_id in enumerate(der_ids))
    return Snapshot(np.asarray(v0, dtype=float), sensitivity, compensators, 0.95, 1.05, alpha)


@pytest.fixture
def over_voltage():
    """!
    @brief Two nodes, the far one at 1.07 pu, one reactive-only DER seeing 0.05 pu/pu.
    """
    return make_snapshot([1.0, 1.07], [[0.0], [0.1]], [[0.0], [0.05]], alpha=400.0)


@pytest.fixture
def static_snapshot():
    snapshot, _ = initial_snapshot(load_scenario(defaults.bundled("case_study_static.json")))
    return snapshot


def test_no_action_inside_limits():
    snapshot = make_snapshot([1.0, 1.02], [[0.0], [0.1]], [[0.0], [0.05]], alpha=400.0)
    result = CentralizedSolver.centralized_solve(snapshot)
    assert result.converged
    assert result.iterations == 1
    assert not result.delta_q.any()
    assert not result.lambda_max.any()


def test_over_voltage_single_der(over_voltage):
    """!
    @brief ΔQ* = -(1.07 - 1.05) / 0.05 = -0.4 pu with λ* = 2 * 0.4 / 0.05 = 16.
    """
    result = CentralizedSolver.centralized_solve(over_voltage).raise_if_unconverged()
    assert result.delta_q[0] == pytest.approx(-0.4, abs=1e-6)
    assert result.delta_p[0] == 0.0
    assert result.lambda_max[1] == pytest.approx(16.0, abs=1e-4)
    assert result.v_linear[1] == pytest.approx(1.05, abs=1e-8)


def test_matches_brute_force_grid(over_voltage):
    candidates = np.linspace(-1.0, 0.0, 10_001)
    feasible = candidates[1.07 + 0.05 * candidates <= 1.05 + 1e-12]
    best = feasible[np.argmin(feasible ** 2)]
    result = CentralizedSolver.centralized_solve(over_voltage)
    assert result.delta_q[0] == pytest.approx(best, abs=2e-4)


def test_under_voltage_raises_reactive_power():
    snapshot = make_snapshot([1.0, 0.93], [[0.0], [0.1]], [[0.0], [0.05]], alpha=400.0)
    result = CentralizedSolver.centralized_solve(snapshot).raise_if_unconverged()
    assert result.delta_q[0] == pytest.approx(0.4, abs=1e-6)
    assert result.lambda_min[1] == pytest.approx(16.0, abs=1e-4)
    assert not result.lambda_max.any()


def test_identical_ders_share_the_effort():
    """!
    @brief Two DERs with equal sensitivities split the correction equally, as a 2-D grid search confirms.
    """
    snapshot = make_snapshot([1.0, 1.07], [[0.0, 0.0], [0.1, 0.1]], [[0.0, 0.0], [0.05, 0.05]], alpha=200.0)
    result = CentralizedSolver.centralized_solve(snapshot).raise_if_unconverged()
    testing.assert_allclose(result.delta_q, [-0.2, -0.2], atol=1e-6)

    axis = np.linspace(-0.6, 0.0, 301)
    q1, q2 = np.meshgrid(axis, axis)
    cost = np.where(1.07 + 0.05 * (q1 + q2) <= 1.05 + 1e-12, q1 ** 2 + q2 ** 2, np.inf)
    row, column = np.unravel_index(np.argmin(cost), cost.shape)
    testing.assert_allclose(result.delta_q, [q1[row, column], q2[row, column]], atol=2e-3)


def test_unconverged_returns_best_iterate(over_voltage):
    result = CentralizedSolver.centralized_solve(replace(over_voltage, alpha=1.0), max_iterations=5)
    assert not result.converged
    assert result.iterations == 5
    with pytest.raises(NoConvergence):
        result.raise_if_unconverged()


def test_static_case_matches_reference_qp(static_snapshot):
    result = CentralizedSolver.centralized_solve(static_snapshot).raise_if_unconverged()
    delta_p, delta_q = CentralizedSolver.reference_qp_solve(static_snapshot)
    testing.assert_allclose(result.delta_q, delta_q, atol=1e-4)
    testing.assert_allclose(result.delta_p, delta_p, atol=1e-4)


def test_static_case_is_a_kkt_point(static_snapshot):
    """!
    @brief Primal feasibility, dual feasibility and complementary slackness at the fixed point.
    """
    result = CentralizedSolver.centralized_solve(static_snapshot).raise_if_unconverged()
    assert np.all(result.v_linear <= static_snapshot.v_max + 1e-6)
    assert np.all(result.v_linear >= static_snapshot.v_min - 1e-6)
    assert np.all(result.lambda_max >= 0) and np.all(result.lambda_min >= 0)
    assert np.max(np.abs(result.lambda_max * (result.v_linear - static_snapshot.v_max))) <= 1e-4
    assert np.max(np.abs(result.lambda_min * (static_snapshot.v_min - result.v_linear))) <= 1e-4
    assert result.lambda_max[10] > 0


def test_static_case_feeder_end(static_snapshot):
    result = CentralizedSolver.centralized_solve(static_snapshot).raise_if_unconverged()
    end = 10
    assert static_snapshot.v0[end] == pytest.approx(1.0552, abs=1e-4)
    assert result.lambda_max[end] == pytest.approx(0.0637, rel=0.01)
    assert np.count_nonzero(result.lambda_max) == 1
    column = static_snapshot.sensitivity.column("pv10")
    assert result.delta_q[column] == pytest.approx(-0.00700, rel=0.01)
    assert not result.delta_p.any()


def test_lagrangian_minimised_at_fixed_point(over_voltage):
    result = CentralizedSolver.centralized_solve(over_voltage).raise_if_unconverged()
    at_optimum = CentralizedSolver.lagrangian_value(over_voltage, result.delta_p, result.delta_q,
                                                    result.lambda_max, result.lambda_min)
    assert at_optimum == pytest.approx(0.16, abs=1e-6)
    for step in (-1e-3, 1e-3):
        moved = CentralizedSolver.lagrangian_value(over_voltage, result.delta_p, result.delta_q + step,
                                                   result.lambda_max, result.lambda_min)
        assert moved > at_optimum


def test_build_snapshot_removes_applied_deltas(over_voltage):
    compensators = tuple(replace(c, delta_q=-0.4) for c in over_voltage.compensators)
    snapshot = CentralizedSolver.build_snapshot(over_voltage.sensitivity, compensators, np.array([1.0, 1.05]))
    testing.assert_allclose(snapshot.v0, [1.0, 1.07])


def test_calibrate_alpha_two_bus(over_voltage):
    """!
    @brief The multiplier error shrinks by |1 - alpha * 0.05^2 / 2| per sweep, so 1600 is the first step that cycles.
    """
    calibration = CentralizedSolver.calibrate_alpha(over_voltage)
    assert calibration.alpha == pytest.approx(1599.0, abs=1.0)
    assert calibration.alpha < 1600.0 <= calibration.alpha_rejected
    assert calibration.alpha_rejected - calibration.alpha <= 1e-3 * calibration.alpha
    below = CentralizedSolver.centralized_solve(replace(over_voltage, alpha=0.9 * 1600.0))
    above = CentralizedSolver.centralized_solve(replace(over_voltage, alpha=1.2 * 1600.0), max_iterations=1000)
    assert below.converged and below.monotone
    assert not above.converged


def test_calibrate_alpha_halves_a_diverging_start(over_voltage):
    calibration = CentralizedSolver.calibrate_alpha(over_voltage, start=5000.0)
    assert calibration.alpha == pytest.approx(1599.0, abs=2.0)
    assert calibration.alpha < 1600.0


@pytest.mark.parametrize("name", ["case_study_static.json", "case_study_scenario.json"])
def test_bundled_alpha_is_the_calibrated_step(static_snapshot, name):
    """!
    @brief Both bundled scenarios record the step size calibrated on the static peak snapshot.
    """
    calibration = CentralizedSolver.calibrate_alpha(static_snapshot)
    recorded = load_scenario(defaults.bundled(name)).alpha
    assert recorded == pytest.approx(calibration.alpha, rel=1e-3)
    assert calibration.alpha_rejected > recorded
    assert CentralizedSolver.centralized_solve(static_snapshot).monotone


def test_calibrate_alpha_without_ders():
    snapshot = make_snapshot([1.0, 1.0], np.zeros((2, 0)), np.zeros((2, 0)), alpha=2.0)
    calibration = CentralizedSolver.calibrate_alpha(snapshot)
    assert math.isinf(calibration.alpha)
    assert calibration.evaluations == 0


def test_calibrate_alpha_rejects_bad_arguments(over_voltage):
    with pytest.raises(ValidationError):
        CentralizedSolver.calibrate_alpha(over_voltage, start=0.0)
    with pytest.raises(ValidationError):
        CentralizedSolver.calibrate_alpha(over_voltage, tolerance=1.0)



def test_snapshot_validation(over_voltage):
    with pytest.raises(ValidationError):
        replace(over_voltage, alpha=0.0)
    with pytest.raises(ValidationError):
        replace(over_voltage, v0=np.ones(3))
    with pytest.raises(ValidationError):
        replace(over_voltage, v_min=1.1)
