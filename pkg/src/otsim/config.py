"""Scenario configuration: strict parsing, full-error validation, defaults.

A scenario file is one JSON object naming the plant layout, the network,
the PLC fleet with embedded rung programs, an attack timeline, monitor
settings, and output paths.  Loading is strict — unknown keys are errors,
and validation reports every problem it finds, not just the first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import attacks, factory, modbus, plc

__all__ = [
    "ConfigError", "ScenarioConfig", "NetworkConfig", "PlantConfig",
    "PlcConfig", "MonitorConfig", "ApiConfig", "OutputConfig", "AttackEntry",
    "load_config", "config_from_dict", "default_scenario", "config_digest",
    "build_attack_entry",
]

TABLES = ("coils", "discrete_inputs", "holding_registers", "input_registers")
# Scenario files spell tables out; the io-map object uses the short tags.
_TABLE_TAGS = {"coils": "coil", "discrete_inputs": "di",
               "holding_registers": "hr", "input_registers": "ir"}
_TAG_TABLES = {tag: table for table, tag in _TABLE_TAGS.items()}
ATTACK_KINDS = ("syn_flood", "forge_write", "rewrite", "connect_scan")


class ConfigError(Exception):
    """Carries every validation failure found in one pass."""

    def __init__(self, errors):
        self.errors = [str(e) for e in errors]
        super().__init__("invalid scenario: " + "; ".join(self.errors))


@dataclass(frozen=True)
class NetworkConfig:
    nodes: dict                      # name -> dotted IPv4
    latency_ticks: int = 0
    half_open_timeout: int = 8000
    syn_retry_interval: int = 20
    syn_retries: int = 3
    listener_capacity: int = 128
    accept_budget: int = 64


@dataclass(frozen=True)
class PlantConfig:
    node: str = "plant"
    poll_period: int = 5             # ticks between sensor/actuator polls
    recycle_requests: int = 100         # txn-count reconnect cadence, shared by all clients
    request_timeout: int = 10
    spawn_period: int = 200
    spawn_offsets: dict = field(default_factory=dict)
    metrics_window: int = 6000
    recent_scrap_window: int = 2000


@dataclass(frozen=True)
class PlcConfig:
    node: str
    program: dict                    # rung program spec (unit, scan_period, rungs)
    recycle_requests: int = 100
    request_timeout: int = 10
    stale_after: int = 2
    diagnostics_port: int = 502


@dataclass(frozen=True)
class MonitorConfig:
    enabled: bool = True
    schema: str = "subset4"
    k: int = 5
    seed: int = 7
    train_split: float = 0.3         # leading fraction of the RUN DURATION
    threshold: float | None = None
    report_full10: bool = True


@dataclass(frozen=True)
class ApiConfig:
    snapshot_period: int = 25        # ticks between stream records


@dataclass(frozen=True)
class OutputConfig:
    pcap: str | None = None
    report: str | None = None
    labels: str | None = None


@dataclass(frozen=True)
class AttackEntry:
    kind: str
    attacker: str                    # node launching / interposing
    spec: object                     # matching frozen spec dataclass
    raw: dict                        # canonical JSON form, for digest/emission


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    tick_ms: int
    duration_ticks: int
    io_map: dict                     # table -> {role: address}
    network: NetworkConfig
    plant: PlantConfig
    plcs: tuple
    attacks: tuple                   # AttackEntry
    monitor: MonitorConfig
    api: ApiConfig
    outputs: OutputConfig

    def build_io_map(self) -> factory.IoMap:
        entries = {}
        for table in TABLES:
            for role, address in self.io_map.get(table, {}).items():
                entries[role] = (_TABLE_TAGS[table], int(address))
        return factory.IoMap(entries)

    def factory_config(self) -> factory.FactoryConfig:
        return factory.FactoryConfig(
            tick_ms=self.tick_ms,
            spawn_period=self.plant.spawn_period,
            spawn_offsets=dict(self.plant.spawn_offsets),
            metrics_window=self.plant.metrics_window,
            recent_scrap_window=self.plant.recent_scrap_window)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "tick_ms": self.tick_ms,
            "duration_ticks": self.duration_ticks,
            "io_map": self.io_map,
            "network": {
                "nodes": dict(self.network.nodes),
                "latency_ticks": self.network.latency_ticks,
                "half_open_timeout": self.network.half_open_timeout,
                "syn_retry_interval": self.network.syn_retry_interval,
                "syn_retries": self.network.syn_retries,
                "listener_capacity": self.network.listener_capacity,
                "accept_budget": self.network.accept_budget,
            },
            "plant": {
                "node": self.plant.node,
                "poll_period": self.plant.poll_period,
                "recycle_requests": self.plant.recycle_requests,
                "request_timeout": self.plant.request_timeout,
                "spawn_period": self.plant.spawn_period,
                "spawn_offsets": dict(self.plant.spawn_offsets),
                "metrics_window": self.plant.metrics_window,
                "recent_scrap_window": self.plant.recent_scrap_window,
            },
            "plcs": [{
                "node": p.node,
                "program": p.program,
                "recycle_requests": p.recycle_requests,
                "request_timeout": p.request_timeout,
                "stale_after": p.stale_after,
                "diagnostics_port": p.diagnostics_port,
            } for p in self.plcs],
            "attacks": [dict(entry.raw) for entry in self.attacks],
            "monitor": {
                "enabled": self.monitor.enabled,
                "schema": self.monitor.schema,
                "k": self.monitor.k,
                "seed": self.monitor.seed,
                "train_split": self.monitor.train_split,
                "threshold": self.monitor.threshold,
                "report_full10": self.monitor.report_full10,
            },
            "api": {"snapshot_period": self.api.snapshot_period},
            "outputs": {
                "pcap": self.outputs.pcap,
                "report": self.outputs.report,
                "labels": self.outputs.labels,
            },
        }


def config_digest(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# -- parsing helpers ----------------------------------------------------------------


def _section(data, key, errors, default=None):
    value = data.get(key, default if default is not None else {})
    if not isinstance(value, dict):
        errors.append(f"{key}: expected an object")
        return {}
    return value


def _check_keys(data: dict, allowed, errors, where: str):
    extra = set(data) - set(allowed)
    for key in sorted(extra):
        errors.append(f"{where}: unknown key {key!r}")


def _int(data, key, errors, where, default=None, minimum=None):
    value = data.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        errors.append(f"{where}.{key}: expected an integer")
        return default if isinstance(default, int) else 0
    if minimum is not None and value < minimum:
        errors.append(f"{where}.{key}: must be >= {minimum}")
    return value


def _ipv4(text) -> bool:
    if not isinstance(text, str):
        return False
    parts = text.split(".")
    return (len(parts) == 4
            and all(p.isdigit() and 0 <= int(p) <= 255 for p in parts))


def _resolve_target(value, nodes: dict, errors, where: str) -> str:
    """A node name or a dotted IP -> dotted IP."""
    if isinstance(value, str) and value in nodes:
        return nodes[value]
    if _ipv4(value):
        return value
    errors.append(f"{where}: {value!r} is neither a node name nor an IPv4 "
                  f"address")
    return "0.0.0.0"


# -- attack entries -----------------------------------------------------------------

_FUNCTION_NAMES = {
    "write_single_coil": modbus.FC_WRITE_SINGLE_COIL,
    "write_single_register": modbus.FC_WRITE_SINGLE_REGISTER,
    "write_multiple_coils": modbus.FC_WRITE_MULTIPLE_COILS,
    "write_multiple_registers": modbus.FC_WRITE_MULTIPLE_REGISTERS,
}


def function_code(name: str) -> int:
    """Write function name -> code; -1 when unknown."""
    return _FUNCTION_NAMES.get(name, -1)

_ATTACK_KEYS = {
    "syn_flood": {"type", "attacker", "target", "port", "start_tick",
                  "end_tick", "rate", "payload_len", "window", "seed"},
    "forge_write": {"type", "attacker", "target", "port", "unit", "function",
                    "address", "values", "start_tick", "repeat", "interval",
                    "request_timeout"},
    "rewrite": {"type", "attacker", "pair", "rules", "dst_port", "marker",
                "start_tick", "end_tick"},
    "connect_scan": {"type", "attacker", "targets", "ports", "start_tick"},
}


def build_attack_entry(data: dict, nodes: dict, default_seed: int,
                       errors: list, where: str) -> AttackEntry | None:
    if not isinstance(data, dict):
        errors.append(f"{where}: expected an object")
        return None
    kind = data.get("type")
    if kind not in ATTACK_KINDS:
        errors.append(f"{where}: unknown attack type {kind!r} "
                      f"(known: {', '.join(ATTACK_KINDS)})")
        return None
    _check_keys(data, _ATTACK_KEYS[kind], errors, where)
    local = list(errors)
    attacker = data.get("attacker", "attacker")
    if attacker not in nodes:
        errors.append(f"{where}: attacker node {attacker!r} is not in the "
                      f"network")
    try:
        if kind == "syn_flood":
            spec = attacks.SynFloodSpec(
                target_ip=_resolve_target(data.get("target"), nodes, errors,
                                          where),
                target_port=data.get("port", 502),
                start_tick=data.get("start_tick", 0),
                end_tick=data.get("end_tick", 0),
                rate=data.get("rate", 50),
                payload_len=data.get("payload_len", 120),
                window=data.get("window", 512),
                seed=data.get("seed", default_seed))
        elif kind == "forge_write":
            function = data.get("function", modbus.FC_WRITE_MULTIPLE_COILS)
            if isinstance(function, str):
                function = _FUNCTION_NAMES.get(function, -1)
            spec = attacks.ForgeWriteSpec(
                target_ip=_resolve_target(data.get("target"), nodes, errors,
                                          where),
                target_port=data.get("port", 502),
                unit=data.get("unit", 0),
                function=function,
                address=data.get("address", 34),
                values=tuple(data.get("values", (1,))),
                start_tick=data.get("start_tick", 0),
                repeat=data.get("repeat", 1),
                interval=data.get("interval", 40),
                request_timeout=data.get("request_timeout", 20))
        elif kind == "rewrite":
            pair = data.get("pair", ())
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                errors.append(f"{where}.pair: expected two endpoints")
                return None
            resolved = tuple(_resolve_target(p, nodes, errors, where)
                             for p in pair)
            rules = data.get("rules", "belt_reversal")
            if rules == "belt_reversal":
                rule_objs = attacks.belt_reversal_rules()
            else:
                rule_objs = tuple(
                    attacks.FilterRule(bytes.fromhex(m), bytes.fromhex(r))
                    for m, r in rules)
            spec = attacks.RewriteSpec(
                pair=resolved, rules=rule_objs,
                dst_port=data.get("dst_port", 502),
                marker=bytes.fromhex(data.get("marker", "ffce")),
                start_tick=data.get("start_tick", 0),
                end_tick=data.get("end_tick"))
        else:
            targets = tuple(_resolve_target(t, nodes, errors,
                                            f"{where}.targets")
                            for t in data.get("targets", ()))
            spec = attacks.ReconSpec(
                targets=targets,
                ports=tuple(data.get("ports", (502,))),
                start_tick=data.get("start_tick", 0))
    except (ValueError, TypeError) as err:
        errors.append(f"{where}: {err}")
        return None
    if len(errors) > len(local):
        return None
    raw = dict(data)
    raw.setdefault("attacker", attacker)
    if kind == "syn_flood":
        raw.setdefault("seed", spec.seed)
    return AttackEntry(kind=kind, attacker=attacker, spec=spec, raw=raw)


# -- top-level parsing ---------------------------------------------------------------


def config_from_dict(data: dict) -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a JSON object"])
    _check_keys(data, ("name", "seed", "tick_ms", "duration_ticks", "io_map",
                       "network", "plant", "plcs", "attacks", "monitor",
                       "api", "outputs"), errors, "top level")

    name = data.get("name", "scenario")
    seed = _int(data, "seed", errors, "top level", default=0)
    tick_ms = _int(data, "tick_ms", errors, "top level", default=10,
                   minimum=1)
    duration = _int(data, "duration_ticks", errors, "top level",
                    default=60000, minimum=1)

    # network
    net_data = _section(data, "network", errors)
    _check_keys(net_data, ("nodes", "latency_ticks", "half_open_timeout",
                           "syn_retry_interval", "syn_retries",
                           "listener_capacity", "accept_budget"),
                errors, "network")
    nodes = net_data.get("nodes", {})
    if not isinstance(nodes, dict) or not nodes:
        errors.append("network.nodes: at least one node is required")
        nodes = {}
    seen_ips = {}
    for node_name, ip in nodes.items():
        if not _ipv4(ip):
            errors.append(f"network.nodes.{node_name}: {ip!r} is not a "
                          f"dotted IPv4 address")
        elif ip in seen_ips:
            errors.append(f"network.nodes.{node_name}: ip {ip} already "
                          f"assigned to {seen_ips[ip]}")
        else:
            seen_ips[ip] = node_name
    network = NetworkConfig(
        nodes=dict(nodes),
        latency_ticks=_int(net_data, "latency_ticks", errors, "network",
                           default=0, minimum=0),
        half_open_timeout=_int(net_data, "half_open_timeout", errors,
                               "network", default=8000, minimum=1),
        syn_retry_interval=_int(net_data, "syn_retry_interval", errors,
                                "network", default=20, minimum=1),
        syn_retries=_int(net_data, "syn_retries", errors, "network",
                         default=3, minimum=0),
        listener_capacity=_int(net_data, "listener_capacity", errors,
                               "network", default=128, minimum=1),
        accept_budget=_int(net_data, "accept_budget", errors, "network",
                           default=64, minimum=1))
    if "bridge" not in nodes:
        errors.append("network.nodes: a 'bridge' node is required")

    # io map
    io_map_data = _section(data, "io_map", errors)
    _check_keys(io_map_data, TABLES, errors, "io_map")
    io_map_clean: dict = {}
    for table in TABLES:
        entries = io_map_data.get(table, {})
        if not isinstance(entries, dict):
            errors.append(f"io_map.{table}: expected an object")
            continue
        io_map_clean[table] = {}
        for role, address in entries.items():
            if not isinstance(address, int) or address < 0:
                errors.append(f"io_map.{table}.{role}: bad address "
                              f"{address!r}")
            else:
                io_map_clean[table][role] = address
    io_map_obj = None
    try:
        io_map_obj = factory.IoMap({
            role: (_TABLE_TAGS[table], address)
            for table, entries in io_map_clean.items()
            for role, address in entries.items()})
    except ValueError as err:
        errors.append(f"io_map: {err}")

    # plant
    plant_data = _section(data, "plant", errors)
    _check_keys(plant_data, ("node", "poll_period", "recycle_requests",
                             "request_timeout", "spawn_period",
                             "spawn_offsets", "metrics_window",
                             "recent_scrap_window"), errors, "plant")
    plant = PlantConfig(
        node=plant_data.get("node", "plant"),
        poll_period=_int(plant_data, "poll_period", errors, "plant",
                         default=5, minimum=1),
        recycle_requests=_int(plant_data, "recycle_requests", errors, "plant",
                           default=100, minimum=1),
        request_timeout=_int(plant_data, "request_timeout", errors, "plant",
                             default=10, minimum=1),
        spawn_period=_int(plant_data, "spawn_period", errors, "plant",
                          default=200, minimum=1),
        spawn_offsets=dict(plant_data.get("spawn_offsets", {})),
        metrics_window=_int(plant_data, "metrics_window", errors, "plant",
                            default=6000, minimum=1),
        recent_scrap_window=_int(plant_data, "recent_scrap_window", errors,
                                 "plant", default=2000, minimum=1))
    if plant.node not in nodes:
        errors.append(f"plant.node: {plant.node!r} is not in network.nodes")

    # plcs
    plc_list = data.get("plcs", [])
    if not isinstance(plc_list, list):
        errors.append("plcs: expected a list")
        plc_list = []
    plcs = []
    units_seen = {}
    for i, entry in enumerate(plc_list):
        where = f"plcs[{i}]"
        if not isinstance(entry, dict):
            errors.append(f"{where}: expected an object")
            continue
        _check_keys(entry, ("node", "program", "recycle_requests",
                            "request_timeout", "stale_after",
                            "diagnostics_port"), errors, where)
        program = entry.get("program")
        if not isinstance(program, dict):
            errors.append(f"{where}.program: expected a program object")
            continue
        if io_map_obj is not None:
            try:
                compiled = plc.PlcProgram(program, io_map_obj)
            except plc.DslError as err:
                errors.append(f"{where}.program: {err}")
                compiled = None
            if compiled is not None:
                unit = compiled.unit
                if unit in units_seen:
                    errors.append(f"{where}: unit {unit} already used by "
                                  f"{units_seen[unit]}")
                units_seen[unit] = entry.get("node", f"plcs[{i}]")
        node = entry.get("node", "")
        if node not in nodes:
            errors.append(f"{where}.node: {node!r} is not in network.nodes")
        plcs.append(PlcConfig(
            node=node,
            program=program,
            recycle_requests=_int(entry, "recycle_requests", errors, where,
                                default=100, minimum=1),
            request_timeout=_int(entry, "request_timeout", errors, where,
                                 default=10, minimum=1),
            stale_after=_int(entry, "stale_after", errors, where, default=2,
                             minimum=1),
            diagnostics_port=_int(entry, "diagnostics_port", errors, where,
                                  default=502, minimum=1)))

    # attacks
    attack_list = data.get("attacks", [])
    if not isinstance(attack_list, list):
        errors.append("attacks: expected a list")
        attack_list = []
    attack_entries = []
    for i, entry in enumerate(attack_list):
        where = f"attacks[{i}]"
        built = build_attack_entry(entry, nodes, seed, errors, where)
        if built is None:
            continue
        start = built.raw.get("start_tick", 0)
        if start >= duration:
            errors.append(f"{where}: start_tick {start} is not before the "
                          f"run's {duration} ticks")
        attack_entries.append(built)

    # monitor
    mon_data = _section(data, "monitor", errors)
    _check_keys(mon_data, ("enabled", "schema", "k", "seed", "train_split",
                           "threshold", "report_full10"), errors, "monitor")
    schema = mon_data.get("schema", "subset4")
    if schema not in ("subset4", "full10"):
        errors.append(f"monitor.schema: {schema!r} is not one of subset4, "
                      f"full10")
    train_split = mon_data.get("train_split", 0.3)
    if not isinstance(train_split, (int, float)) or not 0 < train_split < 1:
        errors.append("monitor.train_split: expected a fraction in (0, 1)")
        train_split = 0.3
    threshold = mon_data.get("threshold")
    if threshold is not None and not isinstance(threshold, (int, float)):
        errors.append("monitor.threshold: expected a number or null")
        threshold = None
    monitor_cfg = MonitorConfig(
        enabled=bool(mon_data.get("enabled", True)),
        schema=schema,
        k=_int(mon_data, "k", errors, "monitor", default=5, minimum=1),
        seed=_int(mon_data, "seed", errors, "monitor", default=7),
        train_split=float(train_split),
        threshold=None if threshold is None else float(threshold),
        report_full10=bool(mon_data.get("report_full10", True)))

    # api + outputs
    api_data = _section(data, "api", errors)
    _check_keys(api_data, ("snapshot_period",), errors, "api")
    api_cfg = ApiConfig(snapshot_period=_int(
        api_data, "snapshot_period", errors, "api", default=25, minimum=1))

    out_data = _section(data, "outputs", errors)
    _check_keys(out_data, ("pcap", "report", "labels"), errors, "outputs")
    outputs = OutputConfig(pcap=out_data.get("pcap"),
                           report=out_data.get("report"),
                           labels=out_data.get("labels"))

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        name=name, seed=seed, tick_ms=tick_ms, duration_ticks=duration,
        io_map=io_map_clean, network=network, plant=plant,
        plcs=tuple(plcs), attacks=tuple(attack_entries),
        monitor=monitor_cfg, api=api_cfg, outputs=outputs)


def load_config(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError([f"not valid JSON: {err}"]) from err
    return config_from_dict(data)


# -- shipped defaults ---------------------------------------------------------------

DEFAULT_NODES = {
    "plant": "192.168.1.10",
    "plc1": "192.168.1.21",
    "plc2": "192.168.1.22",
    "plc3": "192.168.1.23",
    "plc4": "192.168.1.24",
    "bridge": "192.168.1.62",
    "attacker": "192.168.1.66",
}


def _io_map_tables() -> dict:
    tables: dict = {table: {} for table in TABLES}
    io_map = factory.default_io_map()
    for role, (tag, address) in io_map.entries.items():
        tables[_TAG_TABLES[tag]][role] = address
    return tables


def default_scenario_dict() -> dict:
    """The shipped scenario: ten simulated minutes with one flood burst
    against the palletizer's PLC and one forged-coil burst at the bridge."""
    return {
        "name": "default",
        "seed": 42,
        "tick_ms": 10,
        "duration_ticks": 60000,
        "io_map": _io_map_tables(),
        "network": {"nodes": dict(DEFAULT_NODES)},
        "plant": {
            "spawn_offsets": {"sorting": 50, "combine": 100,
                              "palletize": 150},
        },
        "plcs": [
            {"node": "plc1", "program": plc.infeed_program()},
            {"node": "plc2", "program": plc.sorting_program()},
            {"node": "plc3", "program": plc.combine_program()},
            {"node": "plc4", "program": plc.palletize_program()},
        ],
        "attacks": [
            {"type": "syn_flood", "attacker": "attacker", "target": "plc4",
             "start_tick": 20000, "end_tick": 26000, "rate": 50,
             "payload_len": 120, "seed": 42},
            {"type": "forge_write", "attacker": "attacker",
             "target": "bridge", "unit": 0, "function": 15, "address": 34,
             "values": [1], "start_tick": 33000, "repeat": 3,
             "interval": 40},
        ],
        "monitor": {"schema": "subset4", "k": 5, "seed": 7,
                    "train_split": 0.3},
        "api": {"snapshot_period": 25},
        "outputs": {"pcap": "out/default.pcap",
                    "report": "out/default-report.json",
                    "labels": "out/default-labels.json"},
    }


def default_scenario() -> ScenarioConfig:
    return config_from_dict(default_scenario_dict())
