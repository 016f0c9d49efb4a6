"""
Scenario documents: network reference, DER placements, load and PV profiles, controller and gossip settings.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from P2PVC.grid.grid_model import NetworkModel
from P2PVC.grid.network_json_parser import check_keys, load_network, read_json
from P2PVC.gossip.gossip_protocol import EDGE_LIST, GOSSIP_MODES, TOPOLOGIES
from P2PVC.sim.profiles import (INTERPOLATIONS, LINEAR, UNITS, WATTS, Profile, noise_rng, read_profile_csv,
                                synthesize_profile)
from P2PVC.utilities import defaults
from P2PVC.utilities.exceptions import InvalidScenario, UnknownDer, UnknownNode, ValidationError

logger = logging.getLogger(__name__)

SCENARIO_KEYS = {"name", "network", "start_s", "end_s", "seed", "control_enabled", "alpha", "v_min", "v_max",
                 "tick_ms", "latency_ms", "lambda_update_period_ms", "profile_step_ms", "sample_period_ms",
                 "drop_probability", "gossip_mode", "topology", "topology_edges", "profiles", "loads", "ders"}
REQUIRED_SCENARIO_KEYS = {"network", "start_s", "end_s", "alpha", "profiles"}
PROFILE_KEYS = {"samples", "csv", "synthetic", "step_s", "floor", "ceiling", "interpolation", "unit"}
LOAD_KEYS = {"node", "profile", "power_factor"}
DER_KEYS = {"id", "node", "kind", "s_rated_va", "profile", "c_p", "c_q", "allow_curtailment",
            "dp_min_w", "dp_max_w", "dq_min_var", "dq_max_var"}
DER_KINDS = ("pv", "storage")


@dataclass(frozen=True)
class ProfileSource:
    """
    Profile definition as written in the scenario; synthetic sources are realised per consumer.

    Parameters:
    - name (str): Key in the scenario ``profiles`` object.
    - fixed (Optional[Profile]): Sampled or CSV profile, shared by all consumers.
    - components (Tuple[Mapping[str, Any], ...]): Synthetic components.
    - step_s (float): Synthetic sample spacing (s).
    - floor, ceiling (Optional[float]): Synthetic clipping.
    - interpolation (str): 'linear' or 'step'.
    - unit (str): 'W' or 'pu'.
    """
    name: str
    fixed: Optional[Profile] = None
    components: Tuple[Mapping[str, Any], ...] = ()
    step_s: float = 60.0
    floor: Optional[float] = None
    ceiling: Optional[float] = None
    interpolation: str = LINEAR
    unit: str = WATTS

    def realize(self, consumer: str, seed: int, start_s: float, end_s: float) -> Profile:
        if self.fixed is not None:
            return self.fixed
        return synthesize_profile(self.components, start_s, end_s, self.step_s, self.interpolation, self.unit,
                                  self.floor, self.ceiling, noise_rng(seed, self.name, consumer))


@dataclass(frozen=True)
class LoadSpec:
    node_id: int
    profile: str
    power_factor: float = defaults.POWER_FACTOR


@dataclass(frozen=True)
class DerSpec:
    der_id: str
    node_id: int
    s_rated_va: float
    profile: Optional[str]
    kind: str = "pv"
    c_p: float = defaults.C_P
    c_q: float = defaults.C_Q
    allow_curtailment: bool = True
    dp_min_w: float = -math.inf
    dp_max_w: float = math.inf
    dq_min_var: float = -math.inf
    dq_max_var: float = math.inf


@dataclass(frozen=True)
class Scenario:
    """
    Validated simulation input. Times are absolute seconds of the day, periods are milliseconds.
    """
    network: NetworkModel
    start_s: float
    end_s: float
    alpha: float
    profiles: Dict[str, ProfileSource]
    loads: Tuple[LoadSpec, ...] = ()
    ders: Tuple[DerSpec, ...] = ()
    name: str = ""
    seed: int = defaults.SEED
    control_enabled: bool = True
    v_min: float = defaults.V_MIN_PU
    v_max: float = defaults.V_MAX_PU
    tick_ms: int = defaults.GOSSIP_TICK_MS
    latency_ms: int = defaults.LATENCY_MS
    lambda_update_period_ms: int = defaults.LAMBDA_UPDATE_PERIOD_MS
    profile_step_ms: int = defaults.PROFILE_STEP_MS
    sample_period_ms: int = defaults.SAMPLE_PERIOD_MS
    drop_probability: float = defaults.DROP_PROBABILITY
    gossip_mode: str = defaults.GOSSIP_MODE
    topology: str = defaults.TOPOLOGY
    topology_edges: Tuple[Tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        validate_scenario(self)

    def with_overrides(self, seed: Optional[int] = None, control_enabled: Optional[bool] = None) -> "Scenario":
        """
        Copy with CLI-level overrides applied; ``None`` keeps the scenario value.

        Parameters:
        - seed (Optional[int]): Seed override.
        - control_enabled (Optional[bool]): Control switch override.

        Returns:
        - Scenario: Overridden copy.
        """
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if control_enabled is not None:
            changes["control_enabled"] = control_enabled
        return replace(self, **changes) if changes else self


def validate_scenario(scenario: Scenario) -> None:
    if not scenario.v_min < scenario.v_max:
        raise InvalidScenario(f"v_min {scenario.v_min} must be below v_max {scenario.v_max}")
    if scenario.end_s < scenario.start_s:
        raise InvalidScenario(f"end_s {scenario.end_s} is before start_s {scenario.start_s}")
    for key in ("tick_ms", "latency_ms", "lambda_update_period_ms", "profile_step_ms", "sample_period_ms"):
        value = getattr(scenario, key)
        if key == "latency_ms" and value < 0 or key != "latency_ms" and value <= 0:
            raise InvalidScenario(f"{key} must be positive, got {value}")
    if not scenario.alpha > 0:
        raise InvalidScenario(f"alpha must be positive, got {scenario.alpha}")
    if not 0 <= scenario.drop_probability < 1:
        raise InvalidScenario(f"drop_probability must be in [0, 1), got {scenario.drop_probability}")
    if scenario.seed < 0:
        raise InvalidScenario(f"seed must be a nonnegative integer, got {scenario.seed}")
    if scenario.gossip_mode not in GOSSIP_MODES:
        raise InvalidScenario(f"gossip_mode must be one of {GOSSIP_MODES}, got '{scenario.gossip_mode}'")
    if scenario.topology not in TOPOLOGIES:
        raise InvalidScenario(f"topology must be one of {TOPOLOGIES}, got '{scenario.topology}'")
    if scenario.topology == EDGE_LIST and not scenario.topology_edges:
        raise InvalidScenario("topology 'edges' needs topology_edges")

    network = scenario.network
    slack = network.slack
    seen_loads = set()
    for load in scenario.loads:
        if load.node_id == slack:
            raise InvalidScenario("the slack node cannot carry a load")
        if load.node_id in seen_loads:
            raise InvalidScenario(f"node '{network.nodes[load.node_id].name}' has two loads")
        seen_loads.add(load.node_id)
        if load.profile not in scenario.profiles:
            raise InvalidScenario(f"load at '{network.nodes[load.node_id].name}' uses unknown profile "
                                  f"'{load.profile}'")
        if not 0 < load.power_factor <= 1:
            raise InvalidScenario(f"power factor {load.power_factor} outside (0, 1]")
    der_ids = set()
    for der in scenario.ders:
        if der.der_id in der_ids:
            raise InvalidScenario(f"duplicate DER id '{der.der_id}'")
        der_ids.add(der.der_id)
        if der.node_id == slack:
            raise InvalidScenario(f"DER '{der.der_id}' sits on the slack node")
        if der.kind not in DER_KINDS:
            raise InvalidScenario(f"DER '{der.der_id}': kind must be one of {DER_KINDS}")
        if not der.s_rated_va > 0:
            raise InvalidScenario(f"DER '{der.der_id}': s_rated_va must be positive")
        if der.profile is not None and der.profile not in scenario.profiles:
            raise InvalidScenario(f"DER '{der.der_id}' uses unknown profile '{der.profile}'")
        if der.dp_min_w > der.dp_max_w or der.dq_min_var > der.dq_max_var:
            raise InvalidScenario(f"DER '{der.der_id}': inverted static bounds")
    for a, b in scenario.topology_edges:
        for node_id in (a, b):
            if not 0 <= node_id < network.n_nodes:
                raise UnknownNode(f"topology edge references unknown node id {node_id}")


def _number(data: Mapping[str, Any], key: str, default: Optional[float] = None) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidScenario(f"'{key}' must be a number, got {value!r}")
    return float(value)


def _integer(data: Mapping[str, Any], key: str, default: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidScenario(f"'{key}' must be an integer, got {value!r}")
    return value


def _bound(data: Mapping[str, Any], key: str, default: float) -> float:
    return default if data.get(key) is None else _number(data, key)


def parse_profile(name: str, data: Mapping[str, Any], base_dir: Path) -> ProfileSource:
    check_keys(data, PROFILE_KEYS, set(), f"profiles.{name}")
    sources = [key for key in ("samples", "csv", "synthetic") if key in data]
    if len(sources) != 1:
        raise InvalidScenario(f"profiles.{name}: exactly one of samples, csv, synthetic is required")
    interpolation = data.get("interpolation", LINEAR)
    unit = data.get("unit", WATTS)
    if interpolation not in INTERPOLATIONS or unit not in UNITS:
        raise InvalidScenario(f"profiles.{name}: bad interpolation '{interpolation}' or unit '{unit}'")
    if "samples" in data:
        return ProfileSource(name, fixed=Profile.from_samples(data["samples"], interpolation, unit),
                             interpolation=interpolation, unit=unit)
    if "csv" in data:
        csv_path = Path(data["csv"])
        if not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        return ProfileSource(name, fixed=read_profile_csv(csv_path, interpolation, unit),
                             interpolation=interpolation, unit=unit)
    components = data["synthetic"]
    if not isinstance(components, list) or not all(isinstance(c, Mapping) for c in components):
        raise InvalidScenario(f"profiles.{name}.synthetic must be a list of objects")
    floor = data.get("floor")
    ceiling = data.get("ceiling")
    return ProfileSource(name, components=tuple(components), step_s=_number(data, "step_s", 60.0),
                         floor=None if floor is None else float(floor),
                         ceiling=None if ceiling is None else float(ceiling),
                         interpolation=interpolation, unit=unit)


def parse_scenario(data: Mapping[str, Any], base_dir: Union[str, Path] = ".") -> Scenario:
    """
    Build a Scenario from an already parsed document.

    Parameters:
    - data (Mapping[str, Any]): Scenario document (see README for the schema).
    - base_dir (Union[str, Path]): Directory relative network and CSV paths are resolved against.

    Returns:
    - Scenario: Validated scenario.
    """
    base_dir = Path(base_dir)
    check_keys(data, SCENARIO_KEYS, REQUIRED_SCENARIO_KEYS, "scenario")
    network_spec = data["network"]
    if isinstance(network_spec, str):
        network_path = Path(network_spec)
        if not network_path.is_absolute():
            network_path = base_dir / network_path
        network = load_network(network_path)
    else:
        network = load_network(network_spec)

    if not isinstance(data["profiles"], Mapping):
        raise InvalidScenario("'profiles' must be an object")
    profiles = {str(name): parse_profile(str(name), spec, base_dir) for name, spec in data["profiles"].items()}

    loads = []
    for position, raw in enumerate(data.get("loads", [])):
        check_keys(raw, LOAD_KEYS, {"node", "profile"}, f"loads[{position}]")
        loads.append(LoadSpec(network.index_of(str(raw["node"])), str(raw["profile"]),
                              _number(raw, "power_factor", defaults.POWER_FACTOR)))

    declared = network.der_nodes()
    ders = []
    for position, raw in enumerate(data.get("ders", [])):
        check_keys(raw, DER_KEYS, {"id", "s_rated_va"}, f"ders[{position}]")
        der_id = str(raw["id"])
        if "node" in raw:
            node_id = network.index_of(str(raw["node"]))
            if der_id in declared and declared[der_id] != node_id:
                raise InvalidScenario(f"DER '{der_id}' is attached to '{network.nodes[declared[der_id]].name}' "
                                      f"in the network but placed at '{raw['node']}'")
        elif der_id in declared:
            node_id = declared[der_id]
        else:
            raise UnknownDer(f"ders[{position}]: DER '{der_id}' has no node")
        ders.append(DerSpec(der_id, node_id, _number(raw, "s_rated_va"), raw.get("profile"),
                            str(raw.get("kind", "pv")), _number(raw, "c_p", defaults.C_P),
                            _number(raw, "c_q", defaults.C_Q), bool(raw.get("allow_curtailment", True)),
                            _bound(raw, "dp_min_w", -math.inf), _bound(raw, "dp_max_w", math.inf),
                            _bound(raw, "dq_min_var", -math.inf), _bound(raw, "dq_max_var", math.inf)))
    missing = sorted(set(declared) - {der.der_id for der in ders})
    if missing:
        raise InvalidScenario(f"network declares DERs without a scenario entry: {missing}")

    edges = []
    for pair in data.get("topology_edges", []):
        if len(pair) != 2:
            raise InvalidScenario(f"topology edge {pair!r} must have two node ids")
        edges.append((network.index_of(str(pair[0])), network.index_of(str(pair[1]))))

    scenario = Scenario(network=network,
                        start_s=_number(data, "start_s"),
                        end_s=_number(data, "end_s"),
                        alpha=_number(data, "alpha"),
                        profiles=profiles,
                        loads=tuple(loads),
                        ders=tuple(ders),
                        name=str(data.get("name", "")),
                        seed=_integer(data, "seed", defaults.SEED),
                        control_enabled=bool(data.get("control_enabled", True)),
                        v_min=_number(data, "v_min", defaults.V_MIN_PU),
                        v_max=_number(data, "v_max", defaults.V_MAX_PU),
                        tick_ms=_integer(data, "tick_ms", defaults.GOSSIP_TICK_MS),
                        latency_ms=_integer(data, "latency_ms", defaults.LATENCY_MS),
                        lambda_update_period_ms=_integer(data, "lambda_update_period_ms",
                                                         defaults.LAMBDA_UPDATE_PERIOD_MS),
                        profile_step_ms=_integer(data, "profile_step_ms", defaults.PROFILE_STEP_MS),
                        sample_period_ms=_integer(data, "sample_period_ms", defaults.SAMPLE_PERIOD_MS),
                        drop_probability=_number(data, "drop_probability", defaults.DROP_PROBABILITY),
                        gossip_mode=str(data.get("gossip_mode", defaults.GOSSIP_MODE)),
                        topology=str(data.get("topology", defaults.TOPOLOGY)),
                        topology_edges=tuple(edges))
    logger.info(f"loaded scenario '{scenario.name}': {len(scenario.loads)} loads, {len(scenario.ders)} DERs, "
                f"{scenario.start_s:.0f}-{scenario.end_s:.0f} s")
    return scenario


def load_scenario(spec: Union[str, Path, Mapping[str, Any]], base_dir: Union[str, Path, None] = None) -> Scenario:
    """
    Load and validate a scenario document.

    Parameters:
    - spec (Union[str, Path, Mapping[str, Any]]): Path to a JSON file or an already parsed document.
    - base_dir (Union[str, Path, None]): Directory for relative paths, defaults to the file's directory.

    Returns:
    - Scenario: Validated scenario.
    """
    if isinstance(spec, Mapping):
        return parse_scenario(spec, base_dir if base_dir is not None else ".")
    path = Path(spec)
    return parse_scenario(read_json(path), base_dir if base_dir is not None else path.parent)


def profile_in_pu(profile: Profile, s_base: float) -> Profile:
    """Profile with values converted to per unit on ``s_base``; pu profiles are returned unchanged."""
    if profile.unit != WATTS:
        return profile
    return Profile(profile.times, np.asarray(profile.values) / s_base, profile.interpolation, "pu")


def load_reactive_factor(power_factor: float) -> float:
    """Q/P ratio of a load with the given power factor."""
    if not 0 < power_factor <= 1:
        raise ValidationError(f"power factor {power_factor} outside (0, 1]")
    return math.tan(math.acos(power_factor))


def realize_profiles(scenario: Scenario) -> Tuple[Sequence[Profile], Sequence[Optional[Profile]]]:
    """
    Per-unit profiles for every load and DER, with synthetic noise seeded per consumer.

    Parameters:
    - scenario (Scenario): Validated scenario.

    Returns:
    - Tuple[Sequence[Profile], Sequence[Optional[Profile]]]: Load profiles in ``scenario.loads`` order and
      DER profiles in ``scenario.ders`` order (``None`` for DERs without a profile).
    """
    network = scenario.network
    loads = [profile_in_pu(scenario.profiles[load.profile].realize(network.nodes[load.node_id].name,
                                                                   scenario.seed, scenario.start_s,
                                                                   scenario.end_s), network.s_base)
             for load in scenario.loads]
    ders = [None if der.profile is None else
            profile_in_pu(scenario.profiles[der.profile].realize(der.der_id, scenario.seed, scenario.start_s,
                                                                 scenario.end_s), network.s_base)
            for der in scenario.ders]
    return loads, ders
