"""
Plot-ready panels from a controlled run and its paired uncontrolled run.
"""
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

from P2PVC.sim.results import FLOAT_FORMAT, TimeSeriesResult
from P2PVC.utilities.exceptions import ResultIoError, SchemaMismatch

logger = logging.getLogger(__name__)

NET_INJECTION_PANEL = "panel1_net_injection.csv"
UNCONTROLLED_VOLTAGE_PANEL = "panel2_voltage_uncontrolled.csv"
REACTIVE_PANEL = "panel3_reactive_compensation.csv"
CONTROLLED_VOLTAGE_PANEL = "panel4_voltage_controlled.csv"


def uncontrolled_path(run_csv: Union[str, Path]) -> Path:
    """Default location of the control-off run paired with ``run_csv``."""
    run_csv = Path(run_csv)
    return run_csv.with_name(f"{run_csv.stem}_uncontrolled{run_csv.suffix}")


def net_injection_panel(result: TimeSeriesResult) -> pd.DataFrame:
    return pd.DataFrame({"time_s": result.times, "net_injection": result.net_injection.sum(axis=1)})


def voltage_panel(result: TimeSeriesResult) -> pd.DataFrame:
    frame = pd.DataFrame(result.voltages, columns=[f"V_{name}" for name in result.node_names])
    frame.insert(0, "time_s", result.times)
    return frame


def reactive_panel(result: TimeSeriesResult) -> pd.DataFrame:
    """
    Reactive compensation of every DER with the limits of its capability box at each sample.

    The box bounds the total reactive power by sqrt(s_rated^2 - Pd^2) at the applied active power Pd, shifted by
    the DER's own set point so it reads on the same axis as ΔQ.

    Parameters:
    - result (TimeSeriesResult): Controlled run.

    Returns:
    - pd.DataFrame: time_s, dQ_<der>..., q_limit_upper_<der>..., q_limit_lower_<der>....
    """
    der_ids = list(result.der_ids)
    headroom = np.sqrt(np.clip(result.s_rated ** 2 - result.p_applied ** 2, 0.0, None))
    setpoint = result.q_applied - result.delta_q
    frame = pd.DataFrame(result.delta_q, columns=[f"dQ_{der}" for der in der_ids])
    frame.insert(0, "time_s", result.times)
    upper = pd.DataFrame(headroom - setpoint, columns=[f"q_limit_upper_{der}" for der in der_ids])
    lower = pd.DataFrame(-headroom - setpoint, columns=[f"q_limit_lower_{der}" for der in der_ids])
    return pd.concat((frame, upper, lower), axis=1)


def check_pair(controlled: TimeSeriesResult, uncontrolled: TimeSeriesResult) -> None:
    if controlled.node_names != uncontrolled.node_names:
        raise SchemaMismatch("controlled and uncontrolled runs monitor different nodes")
    if controlled.der_ids != uncontrolled.der_ids:
        raise SchemaMismatch("controlled and uncontrolled runs have different DERs")
    if len(controlled) != len(uncontrolled) or not np.array_equal(controlled.times, uncontrolled.times):
        raise SchemaMismatch("controlled and uncontrolled runs are sampled at different times")


def build_panels(controlled: TimeSeriesResult, uncontrolled: TimeSeriesResult) -> Dict[str, pd.DataFrame]:
    """
    All four panels keyed by file name.

    Parameters:
    - controlled (TimeSeriesResult): Control-on run.
    - uncontrolled (TimeSeriesResult): Control-off run of the same scenario.

    Returns:
    - Dict[str, pd.DataFrame]: Panel frames.
    """
    check_pair(controlled, uncontrolled)
    return {NET_INJECTION_PANEL: net_injection_panel(controlled),
            UNCONTROLLED_VOLTAGE_PANEL: voltage_panel(uncontrolled),
            REACTIVE_PANEL: reactive_panel(controlled),
            CONTROLLED_VOLTAGE_PANEL: voltage_panel(controlled)}


def write_panels(controlled: TimeSeriesResult, uncontrolled: TimeSeriesResult,
                 out_dir: Union[str, Path]) -> List[Path]:
    """
    Write the four panel CSV files into ``out_dir`` (created when missing).

    Returns:
    - List[Path]: Written files in panel order.
    """
    panels = build_panels(controlled, uncontrolled)
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, frame in panels.items():
            frame.to_csv(out_dir / name, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            written.append(out_dir / name)
    except OSError as error:
        raise ResultIoError(f"cannot write panels to {out_dir}: {error}") from error
    logger.info(f"wrote {len(written)} panels to {out_dir}")
    return written
