"""!
@brief Unit tests for the plot_data module.

@file test_plot_data.py
"""
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from numpy import testing

from P2PVC.sim.plot_data import (CONTROLLED_VOLTAGE_PANEL, NET_INJECTION_PANEL, REACTIVE_PANEL,
                                 UNCONTROLLED_VOLTAGE_PANEL, build_panels, uncontrolled_path, write_panels)
from P2PVC.sim.results import TimeSeriesResult, result_columns
from P2PVC.utilities.exceptions import SchemaMismatch


def make_result(der_ids=("pv1", "pv2"), s_rated=(0.05, 0.03), rows=4, offset=0.0):
    """!
    @brief Result over three nodes with distinct, easily summed injections.
    """
    nodes = ("0", "1", "2")
    width = len(result_columns(nodes, der_ids))
    data = np.zeros((rows, width))
    data[:, 0] = np.arange(rows)
    data[:, 1:4] = 1.0 + offset
    data[:, 4:7] = [[0.0, -0.01, 0.04]] * rows
    data[:, 7 + len(der_ids):7 + 2 * len(der_ids)] = -0.002
    return TimeSeriesResult(nodes, tuple(der_ids), data, np.asarray(s_rated, dtype=float), 0.95, 1.05)


@pytest.fixture
def pair():
    return make_result(offset=-0.01), make_result(offset=0.02)


def test_uncontrolled_path():
    assert uncontrolled_path("out/run.csv").as_posix() == "out/run_uncontrolled.csv"


def test_panels(pair):
    controlled, uncontrolled = pair
    panels = build_panels(controlled, uncontrolled)
    assert list(panels) == [NET_INJECTION_PANEL, UNCONTROLLED_VOLTAGE_PANEL, REACTIVE_PANEL,
                            CONTROLLED_VOLTAGE_PANEL]
    testing.assert_allclose(panels[NET_INJECTION_PANEL]["net_injection"], [0.03] * 4)
    testing.assert_allclose(panels[UNCONTROLLED_VOLTAGE_PANEL]["V_2"], [1.02] * 4)
    testing.assert_allclose(panels[CONTROLLED_VOLTAGE_PANEL]["V_2"], [0.99] * 4)
    reactive = panels[REACTIVE_PANEL]
    assert list(reactive.columns) == ["time_s", "dQ_pv1", "dQ_pv2", "q_limit_upper_pv1", "q_limit_upper_pv2",
                                      "q_limit_lower_pv1", "q_limit_lower_pv2"]
    testing.assert_allclose(reactive["dQ_pv2"], [-0.002] * 4)
    # Qd is zero while dQ is -0.002, so the set point sits at +0.002
    testing.assert_allclose(reactive["q_limit_upper_pv1"], [0.048] * 4)
    testing.assert_allclose(reactive["q_limit_lower_pv2"], [-0.032] * 4)


def test_reactive_limits_follow_applied_power():
    """!
    @brief 0.04 pu of active power leaves sqrt(0.05^2 - 0.04^2) = 0.03 pu of reactive headroom on a 0.05 pu DER.
    """
    result = make_result()
    data = result.data.copy()
    dq, pd_, qd = 7 + 2, 7 + 4, 7 + 6
    data[:, pd_] = [0.0, 0.03, 0.04, 0.05]
    data[:, qd:qd + 2] = data[:, dq:dq + 2]
    reactive = build_panels(replace(result, data=data), result)[REACTIVE_PANEL]
    testing.assert_allclose(reactive["q_limit_upper_pv1"], [0.05, 0.04, 0.03, 0.0], atol=1e-12)
    testing.assert_allclose(reactive["q_limit_lower_pv1"], [-0.05, -0.04, -0.03, 0.0], atol=1e-12)
    testing.assert_allclose(reactive["q_limit_upper_pv2"], [0.03] * 4)


def test_no_ders_leaves_only_time():
    result = make_result(der_ids=(), s_rated=())
    reactive = build_panels(result, result)[REACTIVE_PANEL]
    assert list(reactive.columns) == ["time_s"]
    assert len(reactive) == 4


@pytest.mark.parametrize("other", [make_result(der_ids=("pv1", "pv3")), make_result(rows=5),
                                   make_result(der_ids=(), s_rated=())])
def test_mismatched_pair(other):
    with pytest.raises(SchemaMismatch):
        build_panels(make_result(), other)


def test_shifted_times():
    result = make_result()
    shifted = replace(result, data=result.data + np.eye(1, result.data.shape[1]))
    with pytest.raises(SchemaMismatch):
        build_panels(result, shifted)


def test_write_panels(pair, tmp_path):
    out = tmp_path / "figures" / "case"
    written = write_panels(*pair, out)
    assert [path.name for path in written] == [NET_INJECTION_PANEL, UNCONTROLLED_VOLTAGE_PANEL, REACTIVE_PANEL,
                                               CONTROLLED_VOLTAGE_PANEL]
    first = [path.read_bytes() for path in written]
    write_panels(*pair, out)
    assert [path.read_bytes() for path in written] == first
    assert pd.read_csv(out / NET_INJECTION_PANEL).shape == (4, 2)
