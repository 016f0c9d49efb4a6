"""
Sampled simulation output, its CSV form and the analysis helpers used on it.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from P2PVC.gossip.gossip_protocol import TraceRow
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import ResultIoError, SchemaMismatch

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"
TRACE_COLUMNS = ["time_ms", "sender", "receiver", "node_id", "lambda_min", "lambda_max", "version"]
NODE_GROUPS = ("V", "P")
DER_GROUPS = ("dP", "dQ", "Pd", "Qd")
LAMBDA_GROUPS = ("lmin", "lmax")


def result_columns(node_names: Sequence[str], der_ids: Sequence[str]) -> List[str]:
    """Header of the result CSV: time, node groups, DER groups, then multiplier groups."""
    columns = ["time_s"]
    for group in NODE_GROUPS:
        columns += [f"{group}_{name}" for name in node_names]
    for group in DER_GROUPS:
        columns += [f"{group}_{der}" for der in der_ids]
    for group in LAMBDA_GROUPS:
        columns += [f"{group}_{name}" for name in node_names]
    return columns


@dataclass(frozen=True, eq=False)
class TimeSeriesResult:
    """
    Rows sampled at a fixed period.

    Parameters:
    - node_names (Tuple[str, ...]): Monitored nodes in column order.
    - der_ids (Tuple[str, ...]): DERs in column order.
    - data (np.ndarray): Row matrix laid out as ``result_columns``.
    - s_rated (np.ndarray): DER ratings (pu), used for limit lines.
    - v_min, v_max (float): Voltage limits (pu).
    - message_count (int): Gossip messages sent during the run.
    - sample_period_s (float): Row spacing (s).
    """
    node_names: Tuple[str, ...]
    der_ids: Tuple[str, ...]
    data: np.ndarray
    s_rated: np.ndarray
    v_min: float
    v_max: float
    message_count: int = 0
    sample_period_s: float = 1.0
    extra_summary: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        width = len(result_columns(self.node_names, self.der_ids))
        if self.data.ndim != 2 or self.data.shape[1] != width:
            raise SchemaMismatch(f"result data has shape {self.data.shape}, expected (rows, {width})")

    @property
    def columns(self) -> List[str]:
        return result_columns(self.node_names, self.der_ids)

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def _block(self, index: int, width: int) -> np.ndarray:
        return self.data[:, index:index + width]

    @property
    def times(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def voltages(self) -> np.ndarray:
        return self._block(1, len(self.node_names))

    @property
    def net_injection(self) -> np.ndarray:
        return self._block(1 + len(self.node_names), len(self.node_names))

    def _der_block(self, group: int) -> np.ndarray:
        return self._block(1 + 2 * len(self.node_names) + group * len(self.der_ids), len(self.der_ids))

    @property
    def delta_p(self) -> np.ndarray:
        return self._der_block(0)

    @property
    def delta_q(self) -> np.ndarray:
        return self._der_block(1)

    @property
    def p_applied(self) -> np.ndarray:
        return self._der_block(2)

    @property
    def q_applied(self) -> np.ndarray:
        return self._der_block(3)

    @property
    def lambda_min(self) -> np.ndarray:
        return self._block(1 + 2 * len(self.node_names) + 4 * len(self.der_ids), len(self.node_names))

    @property
    def lambda_max(self) -> np.ndarray:
        return self._block(1 + 3 * len(self.node_names) + 4 * len(self.der_ids), len(self.node_names))

    def summary(self) -> Dict[str, float]:
        """
        Scalar metrics written next to the CSV.

        Returns:
        - Dict[str, float]: violation_s per node, violation_fraction, max_abs_dq, message_count, s_rated per DER
          and the limits.
        """
        voltages = self.voltages
        outside = (voltages < self.v_min) | (voltages > self.v_max)
        metrics: Dict[str, float] = {}
        for i, name in enumerate(self.node_names):
            metrics[f"violation_s_{name}"] = float(np.count_nonzero(outside[:, i]) * self.sample_period_s)
        metrics["violation_fraction"] = sample_violation_fraction(self)
        metrics["max_abs_dq"] = float(np.max(np.abs(self.delta_q), initial=0.0))
        metrics["message_count"] = float(self.message_count)
        for der, rating in zip(self.der_ids, self.s_rated):
            metrics[f"s_rated_{der}"] = float(rating)
        metrics["v_min"] = self.v_min
        metrics["v_max"] = self.v_max
        metrics["sample_period_s"] = self.sample_period_s
        metrics.update(self.extra_summary)
        return metrics


def summary_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_summary.csv")


def export_csv(result: TimeSeriesResult, path: Union[str, Path]) -> None:
    """
    Write the rows to ``path`` and the summary to ``<stem>_summary.csv``.

    Parameters:
    - result (TimeSeriesResult): Rows to write.
    - path (Union[str, Path]): Target CSV file.
    """
    frame = pd.DataFrame(result.data, columns=result.columns)
    summary = pd.DataFrame(list(result.summary().items()), columns=["metric", "value"])
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        summary.to_csv(summary_path(path), index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as error:
        raise ResultIoError(f"cannot write results to {path}: {error}") from error
    logger.info(f"wrote {len(result)} rows to {path}")


def _split_header(columns: Sequence[str]) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    if not columns or columns[0] != "time_s":
        raise SchemaMismatch("result CSV must start with a time_s column")
    groups: Dict[str, List[str]] = {}
    for column in columns[1:]:
        prefix, _, name = column.partition("_")
        groups.setdefault(prefix, []).append(name)
    node_names = tuple(groups.get("V", []))
    der_ids = tuple(groups.get("dP", []))
    if list(columns) != result_columns(node_names, der_ids):
        raise SchemaMismatch("result CSV header does not follow the result schema")
    return node_names, der_ids


def read_result_csv(path: Union[str, Path]) -> TimeSeriesResult:
    """
    Read a result CSV and, when present, its summary file.

    Parameters:
    - path (Union[str, Path]): Result CSV.

    Returns:
    - TimeSeriesResult: Rows and limits (defaults 0.95/1.05 pu when no summary exists).
    """
    try:
        frame = pd.read_csv(path, dtype=float)
    except OSError as error:
        raise ResultIoError(f"cannot read {path}: {error}") from error
    node_names, der_ids = _split_header([str(c) for c in frame.columns])
    metrics: Dict[str, float] = {}
    summary_file = summary_path(path)
    if summary_file.exists():
        summary = pd.read_csv(summary_file)
        metrics = dict(zip(summary["metric"].astype(str), summary["value"].astype(float)))
    s_rated = np.array([metrics.get(f"s_rated_{der}", 0.0) for der in der_ids])
    return TimeSeriesResult(node_names, der_ids, frame.to_numpy(dtype=float), s_rated,
                            metrics.get("v_min", defaults.V_MIN_PU), metrics.get("v_max", defaults.V_MAX_PU),
                            int(metrics.get("message_count", 0)), metrics.get("sample_period_s", 1.0))


def write_trace_csv(rows: Iterable[TraceRow], path: Union[str, Path]) -> None:
    frame = pd.DataFrame(list(rows), columns=TRACE_COLUMNS)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as error:
        raise ResultIoError(f"cannot write trace to {path}: {error}") from error


def violation_fractions(result: TimeSeriesResult, margin: float = 0.0, after_s: float = 0.0) -> np.ndarray:
    """
    Fraction of samples per node outside [v_min - margin, v_max + margin].

    Parameters:
    - result (TimeSeriesResult): Simulation output.
    - margin (float): Tolerance added to both limits (pu).
    - after_s (float): Ignore rows earlier than this many seconds after the first row.

    Returns:
    - np.ndarray: Fraction per node (zeros for an empty selection).
    """
    if not len(result):
        return np.zeros(len(result.node_names))
    keep = result.times >= result.times[0] + after_s
    voltages = result.voltages[keep]
    if not voltages.shape[0]:
        return np.zeros(len(result.node_names))
    outside = (voltages < result.v_min - margin) | (voltages > result.v_max + margin)
    return np.count_nonzero(outside, axis=0) / voltages.shape[0]


def economy_windows(result: TimeSeriesResult, min_duration_s: float = 30.0,
                    guard_band: float = 0.002) -> List[Tuple[float, float]]:
    """
    Maximal runs of rows where every voltage lies inside the limits by at least ``guard_band``.

    Parameters:
    - result (TimeSeriesResult): Simulation output.
    - min_duration_s (float): Shortest window reported (s).
    - guard_band (float): Distance to the limits required (pu).

    Returns:
    - List[Tuple[float, float]]: (start_s, end_s) of each window.
    """
    inside = np.all((result.voltages > result.v_min + guard_band) & (result.voltages < result.v_max - guard_band),
                    axis=1)
    windows = []
    start = None
    for i, ok in enumerate(inside):
        if ok and start is None:
            start = i
        if start is not None and (not ok or i == len(inside) - 1):
            end = i if ok else i - 1
            if result.times[end] - result.times[start] >= min_duration_s:
                windows.append((float(result.times[start]), float(result.times[end])))
            start = None
    return windows


def sample_violation_fraction(result: TimeSeriesResult, margin: float = 0.0, after_s: float = 0.0) -> float:
    """Fraction of rows in which at least one node lies outside [v_min - margin, v_max + margin]."""
    if not len(result):
        return 0.0
    keep = result.times >= result.times[0] + after_s
    voltages = result.voltages[keep]
    if not voltages.shape[0]:
        return 0.0
    outside = (voltages < result.v_min - margin) | (voltages > result.v_max + margin)
    return float(np.count_nonzero(np.any(outside, axis=1)) / voltages.shape[0])
