"""Scenario runner: wires plant, PLCs, bridge, fabric, attackers, monitor.

One ``Simulation`` owns every component and advances them on a single
deterministic clock.  Within a tick the phases run in a fixed order —
queued operator commands, plant I/O and physics, PLC scans by unit id,
attack actors, fabric delivery, housekeeping, then metrics — so equal
(config, seed, command transcript) always reproduces the same capture
and report.

The plant is the bridge's only unrestricted legitimate client, pushing
its sensor images through the alias window and reading the actuator
image back, which is exactly the traffic pattern the monitor later
learns as normal.
"""

from __future__ import annotations

import bisect
import json
import os
import queue
import threading
import time
from collections import deque

import numpy as np

from . import attacks, factory, modbus, monitor, plc
from .bridge import Bridge, Ownership
from .client import ModbusClientSession
from .config import AttackEntry, ScenarioConfig, build_attack_entry, \
    config_digest
from .fabric import Fabric, ip_to_int

__all__ = ["Simulation", "PlantIo", "run_scenario"]

ALIAS_BASE = 512


class PlantIo:
    """The plant's Modbus poll loop against the bridge.

    Every ``poll_period`` ticks it pushes the discrete-input and
    input-register images through the alias window and reads the full
    coil and holding-register images back.  The freshly read actuator
    image drives the next physics ticks.  Sessions are recycled after
    ``recycle_requests`` transactions so ids stay inside one bounded
    range that every client on the wire shares.
    """

    def __init__(self, node, bridge_ip: int, io_map: factory.IoMap,
                 poll_period: int = 5, recycle_requests: int = 100,
                 request_timeout: int = 10, alias_base: int = ALIAS_BASE):
        self.node = node
        self.bridge_ip = bridge_ip
        self.io_map = io_map
        self.poll_period = poll_period
        self.recycle_requests = recycle_requests
        self.request_timeout = request_timeout
        self.alias_base = alias_base

        di = io_map.roles_in("di")
        ir = io_map.roles_in("ir")
        self.di_span = max(di.values()) + 1
        self.ir_span = max(ir.values()) + 1
        self.di_roles = [io_map.role_at("di", a) for a in range(self.di_span)]
        self.ir_roles = [io_map.role_at("ir", a) for a in range(self.ir_span)]
        self.coil_span = max(io_map.roles_in("coil").values()) + 1
        self.hr_span = max(io_map.roles_in("hr").values()) + 1

        self.actuators = modbus.DataStore()
        self.session: ModbusClientSession | None = None
        self.polls_started = 0
        self.polls_completed = 0
        self.timeouts = 0
        self._outstanding = 0
        self._failed_in_poll = False

    def _fresh_session(self):
        self.session = ModbusClientSession(
            self.node, self.bridge_ip,
            request_timeout=self.request_timeout)
        self.session.connect()
        self._outstanding = 0

    def on_tick(self, tick: int, sensors: dict | None):
        if self.session is not None:
            self.session.poll(tick)
        if tick % self.poll_period:
            return
        if self.session is None or self.session.state in ("failed", "closed"):
            self._fresh_session()
            return
        if self.session.state != "ready" or self._outstanding:
            return
        if (self.recycle_requests
                and self.session.txns.counter >= self.recycle_requests):
            self.session.close()
            self._fresh_session()
            return
        self.polls_started += 1
        self._failed_in_poll = False
        di_image = tuple(bool(sensors.get(role, 0)) if role else False
                         for role in self.di_roles)
        ir_image = tuple(int(sensors.get(role, 0)) & 0xFFFF if role else 0
                         for role in self.ir_roles)
        self._outstanding = 4
        self.session.request(
            modbus.WriteMultipleCoilsRequest(self.alias_base, di_image),
            self._done)
        self.session.request(
            modbus.WriteMultipleRegistersRequest(self.alias_base, ir_image),
            self._done)
        self.session.request(
            modbus.ReadCoilsRequest(0, self.coil_span), self._on_coils)
        self.session.request(
            modbus.ReadHoldingRegistersRequest(0, self.hr_span), self._on_hr)

    def _done(self, response):
        self._outstanding -= 1
        if response is None or isinstance(response, modbus.ExceptionResponse):
            self._failed_in_poll = True
            if response is None:
                self.timeouts += 1
        if self._outstanding == 0 and not self._failed_in_poll:
            self.polls_completed += 1

    def _on_coils(self, response):
        if isinstance(response, modbus.ReadCoilsResponse):
            bits = response.bits[:self.coil_span]
            self.actuators.coils[:len(bits)] = bits
        self._done(response)

    def _on_hr(self, response):
        if isinstance(response, modbus.ReadHoldingRegistersResponse):
            words = response.values[:self.hr_span]
            self.actuators.holding_registers[:len(words)] = words
        self._done(response)


class RateWatch:
    """Live per-flow packet-rate spike alerts over the mirror stream.

    The same weighted mean/variance rule as the offline baseline, run
    incrementally per capture bucket so the snapshot stream can carry an
    alert feed while the scenario runs.
    """

    def __init__(self, bucket_ticks: int = 100, alpha: float = 0.1,
                 warmup_buckets: int = 5, min_rate: int = 10):
        self.bucket_ticks = bucket_ticks
        self.alpha = alpha
        self.warmup_buckets = warmup_buckets
        self.min_rate = min_rate
        self.counts: dict[tuple, int] = {}
        self.stats: dict[tuple, tuple] = {}
        self.alerts: list[dict] = []
        self._next_id = 1
        self._bucket_index = 0

    def observe(self, packet):
        # Key by the service port regardless of direction so a client
        # recycling its ephemeral port stays the same flow.
        service = packet.dst_port if packet.dst_port < 49152 \
            else packet.src_port
        flow = (packet.src_ip, packet.dst_ip, service)
        self.counts[flow] = self.counts.get(flow, 0) + 1

    def close_bucket(self, tick: int):
        for flow in set(self.stats) | set(self.counts):
            count = self.counts.get(flow, 0)
            mean, var = self.stats.get(flow, (0.0, 0.0))
            sigma = var ** 0.5
            if (self._bucket_index >= self.warmup_buckets
                    and count >= self.min_rate
                    and count > mean + 3.0 * sigma
                    and count > 2.0 * mean):
                from .fabric import int_to_ip
                self.alerts.append({
                    "id": self._next_id, "tick": tick,
                    "src": int_to_ip(flow[0]), "dst": int_to_ip(flow[1]),
                    "dst_port": flow[2], "rate": count,
                    "mean": round(mean, 2), "acked": False})
                self._next_id += 1
            delta = count - mean
            mean += self.alpha * delta
            var = (1.0 - self.alpha) * (var + self.alpha * delta * delta)
            self.stats[flow] = (mean, var)
        self.counts.clear()
        self._bucket_index += 1

    def ack(self, alert_id: int) -> bool:
        for alert in self.alerts:
            if alert["id"] == alert_id:
                alert["acked"] = True
                return True
        return False


def _build_actor(entry: AttackEntry, fabric: Fabric, nodes: dict):
    node = nodes[entry.attacker]
    if entry.kind == "syn_flood":
        return attacks.SynFlood(node, fabric, entry.spec)
    if entry.kind == "forge_write":
        return attacks.ForgeWrite(node, entry.spec)
    if entry.kind == "rewrite":
        return attacks.PayloadRewriter(fabric, entry.attacker, entry.spec)
    return attacks.ConnectScan(node, entry.spec)


def _actor_stats(kind: str, actor) -> dict:
    if kind == "syn_flood":
        return {"packets_sent": actor.packets_sent}
    if kind == "forge_write":
        return {"sent": actor.sent, "accepted": actor.accepted,
                "rejected": actor.rejected, "timeouts": actor.timeouts}
    if kind == "rewrite":
        return {"relayed": actor.relayed, "rewritten": actor.rewritten,
                "installed": actor.installed}
    return {"results": {f"{ip}:{port}": verdict
                        for (ip, port), verdict in sorted(actor.results.items())}}


class Simulation:
    """Everything behind one scenario run, advanced tick by tick."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.io_map = cfg.build_io_map()
        self.fabric = Fabric(
            latency_ticks=cfg.network.latency_ticks,
            tick_ms=cfg.tick_ms,
            half_open_timeout=cfg.network.half_open_timeout,
            syn_retry_interval=cfg.network.syn_retry_interval,
            syn_retries=cfg.network.syn_retries)
        self.nodes = {name: self.fabric.add_node(name, ip)
                      for name, ip in sorted(cfg.network.nodes.items())}

        # Bridge with per-PLC write policy derived from the programs.
        self.programs = {}
        ownership = {}
        plc_units = {}
        for plc_cfg in cfg.plcs:
            program = plc.PlcProgram(plc_cfg.program, self.io_map)
            self.programs[plc_cfg.node] = program
            coil_ranges, hr_ranges = plc.ownership_ranges(program)
            ownership[program.unit] = Ownership(
                coils=coil_ranges, holding_registers=hr_ranges)
            plc_units[self.nodes[plc_cfg.node].ip] = program.unit
        self.bridge = Bridge(ownership=ownership, plc_units=plc_units,
                             alias_base=ALIAS_BASE)
        self.bridge.attach(self.nodes["bridge"],
                           capacity=cfg.network.listener_capacity,
                           accept_budget=cfg.network.accept_budget)

        # Soft PLCs, each with its read-only diagnostic server.
        self.plcs = {}
        for plc_cfg in cfg.plcs:
            soft = plc.SoftPlc(
                self.programs[plc_cfg.node], self.nodes[plc_cfg.node],
                self.nodes["bridge"].ip,
                request_timeout=plc_cfg.request_timeout,
                recycle_requests=plc_cfg.recycle_requests,
                stale_after=plc_cfg.stale_after)
            soft.attach_diagnostics(port=plc_cfg.diagnostics_port,
                                    capacity=cfg.network.listener_capacity,
                                    accept_budget=cfg.network.accept_budget)
            self.plcs[plc_cfg.node] = soft
        self._plc_order = sorted(self.plcs,
                                 key=lambda n: self.programs[n].unit)

        # Plant physics plus its I/O poll loop.
        self.state = factory.FactoryState(cfg.factory_config())
        self.plant_io = PlantIo(
            self.nodes[cfg.plant.node], self.nodes["bridge"].ip, self.io_map,
            poll_period=cfg.plant.poll_period,
            recycle_requests=cfg.plant.recycle_requests,
            request_timeout=cfg.plant.request_timeout)

        # Attack actors straight from the timeline.
        self.attack_entries: list[AttackEntry] = list(cfg.attacks)
        self.actors = [_build_actor(entry, self.fabric, self.nodes)
                       for entry in self.attack_entries]

        # Live rate alerts feed off the mirror.
        self.rate_watch = RateWatch()
        self.fabric.on_capture = self.rate_watch.observe

        self.tick = 0
        self.paused = False
        self.finished = False
        self._commands: queue.Queue = queue.Queue(maxsize=256)
        self._applied_commands: list[dict] = []
        self._pending_steps = 0
        self._snapshot_lock = threading.Lock()
        self._latest_snapshot: dict = {}
        self._snapshot_seq = 0
        self._snapshot_event = threading.Condition()

        stride = max(1, cfg.duration_ticks // 120)
        self.series_stride = stride
        self.series: dict = {"stride": stride, "ticks": [], "light": []}
        for name in self.state.cells:
            self.series[name] = {"completed": [], "scrapped": [],
                                 "throughput_per_min": []}
        self._refresh_snapshot()

    # -- commands --------------------------------------------------------------

    VALID_COMMANDS = ("estop", "clear_estop", "reset_crane", "launch_attack",
                      "ack_alert", "pause", "resume", "step")

    def enqueue_command(self, command: dict) -> dict:
        """Validate now (caller's thread), apply at the next tick boundary."""
        if not isinstance(command, dict):
            return {"ok": False, "error": "command must be an object"}
        kind = command.get("type")
        if kind not in self.VALID_COMMANDS:
            return {"ok": False,
                    "error": f"unknown command type {kind!r} "
                             f"(known: {', '.join(self.VALID_COMMANDS)})"}
        if kind == "launch_attack":
            errors: list[str] = []
            entry = build_attack_entry(
                command.get("attack", {}), self.cfg.network.nodes,
                self.cfg.seed, errors, "attack")
            if entry is None:
                return {"ok": False, "error": "; ".join(errors)}
            command = {"type": kind, "attack": entry.raw, "_entry": entry}
        if kind == "ack_alert" and not isinstance(command.get("id"), int):
            return {"ok": False, "error": "ack_alert needs an integer id"}
        try:
            self._commands.put_nowait(command)
        except queue.Full:
            return {"ok": False, "error": "command queue full"}
        return {"ok": True, "queued_at_tick": self.tick}

    def _apply_commands(self):
        while True:
            try:
                command = self._commands.get_nowait()
            except queue.Empty:
                return
            kind = command["type"]
            if kind in ("estop", "clear_estop", "reset_crane"):
                factory.apply_plant_command(self.state, kind)
            elif kind == "launch_attack":
                entry = command.pop("_entry")
                self.attack_entries.append(entry)
                self.actors.append(
                    _build_actor(entry, self.fabric, self.nodes))
            elif kind == "ack_alert":
                self.rate_watch.ack(command["id"])
            elif kind == "pause":
                self.paused = True
            elif kind == "resume":
                self.paused = False
            elif kind == "step":
                self._pending_steps += 1
            self._applied_commands.append(
                {"tick": self.tick, **{k: v for k, v in command.items()
                                       if not k.startswith("_")}})

    # -- the tick loop -----------------------------------------------------------

    def tick_once(self):
        tick = self.tick
        self.fabric.begin_tick(tick)
        self._apply_commands()

        sensors = factory.read_sensors(self.state)
        self.plant_io.on_tick(tick, sensors)
        factory.factory_tick(self.state, self.plant_io.actuators,
                             self.cfg.tick_ms)

        for name in self._plc_order:
            self.plcs[name].on_tick(tick)
        for actor in self.actors:
            actor.on_tick(tick)

        self.fabric.step()
        self.fabric.housekeeping()

        if tick % self.rate_watch.bucket_ticks == self.rate_watch.bucket_ticks - 1:
            self.rate_watch.close_bucket(tick)
        if tick % self.series_stride == 0:
            metrics = factory.production_metrics(self.state)
            self.series["ticks"].append(tick)
            self.series["light"].append(metrics["light"])
            for name, cell in metrics["cells"].items():
                self.series[name]["completed"].append(cell["completed"])
                self.series[name]["scrapped"].append(cell["scrapped"])
                self.series[name]["throughput_per_min"].append(
                    cell["throughput_per_min"])
        self.tick += 1
        if self.tick % self.cfg.api.snapshot_period == 0 or \
                self.tick >= self.cfg.duration_ticks:
            self._refresh_snapshot()

    # -- snapshots ----------------------------------------------------------------

    def _refresh_snapshot(self):
        metrics = factory.production_metrics(self.state)
        plant = self.state.snapshot()
        speeds = {}
        coils = {}
        hr = self.plant_io.actuators.holding_registers
        for role, (table, address) in self.io_map.entries.items():
            if table == "hr":
                speeds[role] = int(factory.signed16(int(hr[address])))
            elif table == "coil":
                coils[role] = bool(self.plant_io.actuators.coils[address])
        snap = {
            "tick": self.tick,
            "time_s": round(self.tick * self.cfg.tick_ms / 1000.0, 3),
            "duration_ticks": self.cfg.duration_ticks,
            "paused": self.paused,
            "finished": self.finished,
            "light": metrics["light"],
            "estop": self.state.estop,
            "cells": {
                name: {**metrics["cells"][name],
                       "conveyors": plant["cells"][name]["conveyors"]}
                for name in metrics["cells"]},
            "crane": plant["crane"],
            "pusher": plant["pusher"],
            "speeds": speeds,
            "actuator_coils": coils,
            "plcs": {name: {"unit": self.programs[name].unit,
                            "stale": soft.stale,
                            "cycles": soft.cycles_completed}
                     for name, soft in self.plcs.items()},
            "attacks": [{"type": entry.kind,
                         "start_tick": entry.raw.get("start_tick", 0),
                         "done": actor.done,
                         "stats": _actor_stats(entry.kind, actor)}
                        for entry, actor in zip(self.attack_entries,
                                                self.actors)],
            "alerts": self.rate_watch.alerts[-20:],
            "network": {"captured": len(self.fabric.capture),
                        "drops": dict(self.fabric.drops)},
        }
        with self._snapshot_lock:
            self._latest_snapshot = snap
            self._snapshot_seq += 1
        with self._snapshot_event:
            self._snapshot_event.notify_all()

    def snapshot(self) -> dict:
        with self._snapshot_lock:
            return self._latest_snapshot

    def wait_snapshot(self, seen_seq: int, timeout: float = 5.0) -> int:
        """Block until a snapshot newer than ``seen_seq`` exists."""
        deadline = time.monotonic() + timeout
        with self._snapshot_event:
            while self._snapshot_seq <= seen_seq:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._snapshot_event.wait(remaining)
        with self._snapshot_lock:
            return self._snapshot_seq

    # -- whole-run driving ----------------------------------------------------------

    def run(self, pace_s: float = 0.0, stop=None):
        """Advance to the configured duration.  ``pace_s`` sleeps between
        ticks (live demo mode); ``stop`` is an optional threading.Event."""
        started = time.perf_counter()
        while self.tick < self.cfg.duration_ticks:
            if stop is not None and stop.is_set():
                break
            if self.paused and not self._pending_steps:
                self._apply_commands()
                self._refresh_snapshot()
                time.sleep(0.02)
                continue
            if self._pending_steps:
                self._pending_steps -= 1
            self.tick_once()
            if pace_s:
                time.sleep(pace_s)
        self.finished = True
        self._refresh_snapshot()
        self.wall_clock = time.perf_counter() - started

    # -- labels, detection, report ----------------------------------------------------

    def ground_truth(self) -> np.ndarray:
        """Per captured frame: was it attacker work?  True for frames the
        attacker originated, relayed, or rewrote."""
        attacker_names = {entry.attacker for entry in self.attack_entries}
        return np.array(
            [p.origin in attacker_names or p.relayed_by in attacker_names
             or p.rewritten for p in self.fabric.capture], dtype=bool)

    def _train_count(self) -> int:
        cutoff = int(self.cfg.duration_ticks * self.cfg.monitor.train_split)
        ticks = [p.tick for p in self.fabric.capture]
        return bisect.bisect_left(ticks, cutoff)

    def detect(self, records=None, labels=None) -> dict | None:
        """Post-run anomaly detection over the capture; None if disabled."""
        mon = self.cfg.monitor
        if not mon.enabled:
            return None
        if records is None:
            records = list(self.fabric.pcap_records())
        if labels is None:
            labels = self.ground_truth()
        train_count = self._train_count()
        features = monitor.extract_features(records, mon.schema)
        result = monitor.run_detection(
            features, mon.schema, k=mon.k, seed=mon.seed,
            threshold=mon.threshold, labels=labels, train_count=train_count)
        report = result.report()
        report["train_split"] = mon.train_split
        report["split_rule"] = "leading fraction of the run duration"
        report["projection"] = monitor.projection_sample(result, features)
        if mon.report_full10 and mon.schema != monitor.FULL10:
            wide = monitor.run_detection(
                monitor.extract_features(records, monitor.FULL10),
                monitor.FULL10, k=mon.k, seed=mon.seed, labels=labels,
                train_count=train_count)
            report["full10"] = {
                "alert_count": int(len(wide.alerts)),
                "evaluation": None if wide.evaluation is None
                else wide.evaluation.as_dict(),
            }
        return report

    def report(self, detection: dict | None = None) -> dict:
        metrics = factory.production_metrics(self.state)
        return {
            "name": self.cfg.name,
            "config_digest": config_digest(self.cfg),
            "seed": self.cfg.seed,
            "tick_ms": self.cfg.tick_ms,
            "duration_ticks": self.cfg.duration_ticks,
            "ticks_run": self.tick,
            "scheduling_order": "commands, plant io + physics, plc scans "
                                "by unit id, attacks, fabric delivery, "
                                "housekeeping, metrics",
            "wall_clock_seconds": round(getattr(self, "wall_clock", 0.0), 3),
            "light": metrics["light"],
            "cells": metrics["cells"],
            "series": self.series,
            "plcs": {name: {"unit": self.programs[name].unit,
                            "cycles_completed": soft.cycles_completed,
                            "missed_cycles": soft.missed_cycles,
                            "stale": soft.stale,
                            "write_errors": soft.write_errors}
                     for name, soft in self.plcs.items()},
            "bridge": {
                "requests_served": self.bridge.requests_served,
                "exceptions_returned": self.bridge.exceptions_returned,
                "rejected_writes": self.bridge.rejected_writes,
                "protocol_errors": self.bridge.protocol_errors,
            },
            "plant_io": {
                "polls_started": self.plant_io.polls_started,
                "polls_completed": self.plant_io.polls_completed,
                "timeouts": self.plant_io.timeouts,
            },
            "network": {
                "frames_captured": len(self.fabric.capture),
                "frames_forwarded": self.fabric.forwarded,
                "drops": dict(self.fabric.drops),
                "rst_sent": self.fabric.rst_sent,
            },
            "attacks": [{**entry.raw,
                         "stats": _actor_stats(entry.kind, actor),
                         "done": actor.done}
                        for entry, actor in zip(self.attack_entries,
                                                self.actors)],
            "commands": self._applied_commands,
            "rate_alerts": {
                "count": len(self.rate_watch.alerts),
                "first": self.rate_watch.alerts[:20],
            },
            "labels_positive": int(self.ground_truth().sum()),
            "detection": detection,
        }


def run_scenario(cfg: ScenarioConfig, pcap_path: str | None = None,
                 report_path: str | None = None,
                 labels_path: str | None = None,
                 detect: bool | None = None) -> dict:
    """Headless end-to-end: run, write artifacts, return the report."""
    sim = Simulation(cfg)
    sim.run()

    records = list(sim.fabric.pcap_records())
    labels = sim.ground_truth()

    pcap_path = pcap_path if pcap_path is not None else cfg.outputs.pcap
    report_path = report_path if report_path is not None \
        else cfg.outputs.report
    labels_path = labels_path if labels_path is not None \
        else cfg.outputs.labels

    from . import pcap as pcap_mod
    if pcap_path:
        _ensure_parent(pcap_path)
        with open(pcap_path, "wb") as fh:
            pcap_mod.write_pcap(records, fh)
    if labels_path:
        _ensure_parent(labels_path)
        with open(labels_path, "w") as fh:
            json.dump({"count": int(len(labels)),
                       "positive": np.flatnonzero(labels).tolist()}, fh)

    run_detect = cfg.monitor.enabled if detect is None else detect
    detection = sim.detect(records, labels) if run_detect else None
    report = sim.report(detection)
    if report_path:
        _ensure_parent(report_path)
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
    return report


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
