"""
Command-line entry point ``p2pvc``.

Data goes to files or standard output, diagnostics to standard error. Exit codes: 0 success, 1 invalid input or
file problems, 2 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from P2PVC.control.CentralizedSolver import CentralizedSolver
from P2PVC.gossip.gossip_protocol import TraceRow
from P2PVC.grid.grid_model import NetworkModel, to_per_unit
from P2PVC.grid.network_json_parser import load_network
from P2PVC.grid.PowerFlowCalculator import InjectionSet, PowerFlowCalculator, VoltageSolution
from P2PVC.grid.SensitivityCalculator import SensitivityCalculator
from P2PVC.sim.plot_data import uncontrolled_path, write_panels
from P2PVC.sim.results import FLOAT_FORMAT, export_csv, read_result_csv, write_trace_csv
from P2PVC.sim.scenario_json_parser import Scenario, load_scenario
from P2PVC.sim.simulation import initial_snapshot, run_simulation, run_sweep
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import NumericalError, PowerFlowDiverged, ValidationError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(message)s (%(filename)s:%(lineno)s)"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

SCHEMAS = """\
network JSON:
  {"name": str, "v_base_volts": float, "s_base_va": float, "v_nom_pu": float (default 1.0),
   "nodes": [{"id": str, "kind": "slack" | "load", "der": str (optional DER id)}],
   "branches": [{"from": str, "to": str, "r_ohm": float, "x_ohm": float}]}

scenario JSON (times in s of day, periods in ms; keys override built-in defaults):
  {"name": str, "network": path | network object, "start_s": float, "end_s": float, "seed": int,
   "control_enabled": bool, "alpha": float, "v_min": 0.95, "v_max": 1.05, "tick_ms": 100, "latency_ms": 100,
   "lambda_update_period_ms": 1000, "profile_step_ms": 1000, "sample_period_ms": 1000, "drop_probability": 0.0,
   "gossip_mode": "push_pull" | "push", "topology": "complete" | "electrical" | "ring" | "edges",
   "topology_edges": [[node, node], ...],
   "profiles": {name: {"samples": [[t, value], ...]} | {"csv": path} | {"synthetic": [component, ...],
                "step_s": 60, "floor": float, "ceiling": float}, "interpolation": "linear" | "step",
                "unit": "W" | "pu"},
   "loads": [{"node": str, "profile": name, "power_factor": 0.85}],
   "ders": [{"id": str, "node": str, "kind": "pv" | "storage", "s_rated_va": float, "profile": name,
             "c_p": 4.0, "c_q": 1.0, "allow_curtailment": bool, "dp_min_w", "dp_max_w", "dq_min_var",
             "dq_max_var": float}]}
  synthetic components: {"type": "constant", "value"}, {"type": "ramp", "start_s", "end_s", "to", "start_value"},
  {"type": "square", "start_s", "period_s", "duty", "amplitude", "end_s"}, {"type": "half_sine", "rise_s",
  "set_s", "peak"}, {"type": "noise", "sigma"}

result CSV columns: time_s, V_<node>, P_<node>, dP_<der>, dQ_<der>, Pd_<der>, Qd_<der>, lmin_<node>, lmax_<node>
(per unit); summary in <stem>_summary.csv.

The default output directory is $P2PVC_OUTPUT_DIR or the working directory.
"""


def _check_seeds(args: argparse.Namespace) -> None:
    seed = getattr(args, "seed", None)
    seeds = ([] if seed is None else [seed]) + (getattr(args, "sweep", None) or [])
    negative = [seed for seed in seeds if seed < 0]
    if negative:
        raise ValidationError(f"seeds must be nonnegative integers, got {negative}")


def build_parser() -> argparse.ArgumentParser:
    """
    Argument parser for every subcommand.

    Returns:
    - argparse.ArgumentParser: Configured parser.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed override (default: the scenario's seed)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="p2pvc", description="Peer-to-peer voltage control simulator",
                                     epilog=SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="run a scenario and export the time series",
                                   epilog=SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
    simulate.add_argument("--scenario", type=Path, default=defaults.bundled("case_study_scenario.json"))
    simulate.add_argument("--out", type=Path, default=None, help="result CSV (default: <output dir>/run.csv)")
    simulate.add_argument("--control", choices=("on", "off"), default=None,
                          help="control switch override (default: the scenario's control_enabled)")
    simulate.add_argument("--sweep", type=int, nargs="+", default=None,
                          help="run several seeds, writing <stem>_seed<k>.csv")
    simulate.add_argument("--workers", type=int, default=1, help="worker processes for --sweep")
    simulate.add_argument("--paired", action="store_true",
                          help="also write the control-off run to <stem>_uncontrolled.csv")
    simulate.add_argument("--trace", type=Path, default=None, help="CSV of accepted gossip entries")

    powerflow = commands.add_parser("powerflow", parents=[common], help="solve one operating point")
    source = powerflow.add_mutually_exclusive_group(required=True)
    source.add_argument("--network", type=Path, help="network JSON, solved without injections")
    source.add_argument("--scenario", type=Path, help="scenario JSON, solved at --time with zero control")
    powerflow.add_argument("--time", type=float, default=None, help="profile time in s (default: scenario start)")

    sensitivity = commands.add_parser("sensitivity", parents=[common], help="dump the voltage sensitivity matrix")
    source = sensitivity.add_mutually_exclusive_group(required=True)
    source.add_argument("--network", type=Path)
    source.add_argument("--scenario", type=Path)
    sensitivity.add_argument("--out", type=Path, default=None, help="CSV file (default: standard output)")

    snapshot = commands.add_parser("solve-snapshot", parents=[common],
                                   help="centralized reference solution at one instant")
    snapshot.add_argument("--scenario", type=Path, required=True)
    snapshot.add_argument("--time", type=float, default=None)
    snapshot.add_argument("--reference", action="store_true", help="also solve with SLSQP and compare")
    snapshot.add_argument("--out", type=Path, default=None, help="CSV file (default: standard output)")

    calibrate = commands.add_parser("calibrate-alpha", parents=[common],
                                    help="stability edge and recommended dual step size at one instant")
    calibrate.add_argument("--scenario", type=Path, required=True)
    calibrate.add_argument("--time", type=float, default=None)

    plot = commands.add_parser("plot-data", parents=[common], help="plot-ready panel CSVs from a paired run")
    plot.add_argument("--run", type=Path, required=True, help="control-on result CSV")
    plot.add_argument("--uncontrolled", type=Path, default=None,
                      help="control-off result CSV (default: <stem>_uncontrolled.csv next to --run)")
    plot.add_argument("--out", type=Path, default=None, help="panel directory (default: the output directory)")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if verbose else logging.INFO,
                        format=LOG_FORMAT, datefmt=LOG_DATE_FORMAT, force=True)


def _scenario(path: Path, seed: Optional[int], control: Optional[bool] = None) -> Scenario:
    return load_scenario(path).with_overrides(seed=seed, control_enabled=control)


def _emit(frame: pd.DataFrame, out: Optional[Path], index: bool = False) -> None:
    if out is None:
        frame.to_csv(sys.stdout, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    else:
        frame.to_csv(out, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"wrote {out}")


def simulate_command(args: argparse.Namespace) -> int:
    control = None if args.control is None else args.control == "on"
    scenario = _scenario(args.scenario, args.seed, control)
    out = args.out if args.out is not None else defaults.default_output_dir() / "run.csv"
    if args.sweep:
        if args.paired or args.trace is not None:
            raise ValidationError("--paired and --trace cannot be combined with --sweep")
        results = run_sweep(scenario, args.sweep, args.workers)
        for seed, result in zip(args.sweep, results):
            export_csv(result, out.with_name(f"{out.stem}_seed{seed}{out.suffix}"))
        return 0

    trace: Optional[List[TraceRow]] = [] if args.trace is not None else None
    try:
        result = run_simulation(scenario, trace=trace)
    except PowerFlowDiverged as error:
        if error.partial_result is not None:
            export_csv(error.partial_result, out)
        raise
    export_csv(result, out)
    if trace is not None:
        write_trace_csv(trace, args.trace)
    if args.paired:
        export_csv(run_simulation(scenario.with_overrides(control_enabled=False)), uncontrolled_path(out))
    return 0


def _solved_network(args: argparse.Namespace) -> Tuple[NetworkModel, InjectionSet, VoltageSolution]:
    if args.network is not None:
        network = to_per_unit(load_network(args.network))
        injections = InjectionSet.zeros(network.n_nodes)
        return network, injections, PowerFlowCalculator.solve_bfs(network, injections)
    _, simulation = initial_snapshot(_scenario(args.scenario, args.seed), args.time)
    injections = simulation.injections()
    return simulation.network, injections, PowerFlowCalculator.solve_bfs(simulation.network, injections)


def powerflow_command(args: argparse.Namespace) -> int:
    network, injections, solution = _solved_network(args)
    table = pd.DataFrame({"node": network.names, "v_pu": solution.magnitude,
                          "angle_deg": np.degrees(solution.angle), "p_pu": injections.p, "q_pu": injections.q})
    print(table.to_string(index=False, float_format=lambda value: f"{value:.6f}"))
    slack = PowerFlowCalculator.slack_power(network, injections, solution)
    losses = PowerFlowCalculator.branch_losses(network, solution)
    print(f"slack power: {slack.real:.6f} + j{slack.imag:.6f} pu")
    print(f"losses: {losses.real.sum():.6f} + j{losses.imag.sum():.6f} pu")
    print(f"iterations: {solution.iterations}, residual: {solution.residual:.3e}")
    return 0


def sensitivity_command(args: argparse.Namespace) -> int:
    if args.network is not None:
        network: NetworkModel = to_per_unit(load_network(args.network))
        declared = network.der_nodes()
        der_ids = sorted(declared)
        der_nodes = [declared[der] for der in der_ids]
    else:
        scenario = _scenario(args.scenario, args.seed)
        network = to_per_unit(scenario.network)
        der_ids = [der.der_id for der in scenario.ders]
        der_nodes = [der.node_id for der in scenario.ders]
    matrix = SensitivityCalculator.sensitivity_matrix(network, der_nodes, der_ids)
    frame = pd.DataFrame(np.hstack((matrix.dv_dp, matrix.dv_dq)),
                         columns=[f"dVdP_{der}" for der in der_ids] + [f"dVdQ_{der}" for der in der_ids])
    frame.insert(0, "node", network.names)
    _emit(frame, args.out)
    return 0


def solve_snapshot_command(args: argparse.Namespace) -> int:
    scenario = _scenario(args.scenario, args.seed)
    snapshot, simulation = initial_snapshot(scenario, args.time)
    result = CentralizedSolver.centralized_solve(snapshot)
    der_ids = [c.der_id for c in snapshot.compensators]
    frame = pd.DataFrame({"der": der_ids, "delta_p": result.delta_p, "delta_q": result.delta_q})
    if args.reference and der_ids:
        delta_p, delta_q = CentralizedSolver.reference_qp_solve(snapshot)
        frame["reference_delta_p"] = delta_p
        frame["reference_delta_q"] = delta_q
        logger.info(f"largest difference to the reference QP: "
                    f"{max(np.max(np.abs(delta_p - result.delta_p)), np.max(np.abs(delta_q - result.delta_q))):.3e}")
    _emit(frame, args.out)
    multipliers = pd.DataFrame({"node": simulation.network.names, "v_linear": result.v_linear,
                                "lambda_min": result.lambda_min, "lambda_max": result.lambda_max})
    if args.out is None:
        _emit(multipliers, None)
    else:
        _emit(multipliers, args.out.with_name(f"{args.out.stem}_multipliers{args.out.suffix}"))
    if not result.converged:
        logger.error(f"centralized solve did not converge after {result.iterations} iterations "
                     f"(residual {result.residual:.3e})")
        return 2
    return 0


def calibrate_alpha_command(args: argparse.Namespace) -> int:
    snapshot, _ = initial_snapshot(_scenario(args.scenario, args.seed), args.time)
    calibration = CentralizedSolver.calibrate_alpha(snapshot)
    print(f"alpha,{calibration.alpha:.9g}")
    print(f"alpha_rejected,{calibration.alpha_rejected:.9g}")
    print(f"evaluations,{calibration.evaluations}")
    return 0


def plot_data_command(args: argparse.Namespace) -> int:
    uncontrolled = args.uncontrolled if args.uncontrolled is not None else uncontrolled_path(args.run)
    out = args.out if args.out is not None else defaults.default_output_dir()
    write_panels(read_result_csv(args.run), read_result_csv(uncontrolled), out)
    return 0


COMMANDS = {"simulate": simulate_command,
            "powerflow": powerflow_command,
            "sensitivity": sensitivity_command,
            "solve-snapshot": solve_snapshot_command,
            "calibrate-alpha": calibrate_alpha_command,
            "plot-data": plot_data_command}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Parameters:
    - argv (Optional[Sequence[str]]): Arguments without the program name (default: ``sys.argv[1:]``).

    Returns:
    - int: Exit code.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        _check_seeds(args)
        return COMMANDS[args.command](args)
    except NumericalError as error:
        logger.error(f"{type(error).__name__}: {error}")
        return 2
    except (ValidationError, OSError, json.JSONDecodeError) as error:
        logger.error(f"{type(error).__name__}: {error}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
