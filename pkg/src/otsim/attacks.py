"""Adversarial actors that run inside the simulated network.

Four attack primitives, each driven from the scenario tick loop:

* :class:`SynFlood` — half-open connection exhaustion against one
  listener, hammering raw SYN frames (with a data payload, the way
  packet-crafting floods usually do) from randomised source ports.
* :class:`ForgeWrite` — a perfectly legal Modbus session that writes an
  actuator it has no business touching.  The server cannot tell it from
  an engineering workstation; that is the point.
* :class:`PayloadRewriter` — an in-path filter over one host pair that
  rewrites byte patterns inside matching frames, leaving lengths (and
  therefore TCP bookkeeping) untouched.
* :class:`ConnectScan` — a serial TCP connect sweep that classifies each
  (host, port) probe as open, closed, or filtered.

Every actor exposes ``on_tick(tick)`` plus a ``done`` property so the
scenario loop can drive them uniformly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import modbus
from .client import ModbusClientSession
from .fabric import SYN, ConnectionOwner, Fabric, Node, Packet, ip_to_int

__all__ = [
    "SynFloodSpec", "SynFlood",
    "ForgeWriteSpec", "ForgeWrite",
    "FilterRule", "RewriteSpec", "PayloadRewriter",
    "apply_rewrite", "belt_reversal_rules",
    "ReconSpec", "ConnectScan",
]


# -- SYN flood ------------------------------------------------------------------


@dataclass(frozen=True)
class SynFloodSpec:
    target_ip: str
    target_port: int = 502
    start_tick: int = 0
    end_tick: int = 0
    rate: int = 50            # SYN frames per tick
    payload_len: int = 120    # data-bearing SYNs, crafted-flood style
    window: int = 512
    seed: int = 1

    def __post_init__(self):
        if self.end_tick < self.start_tick:
            raise ValueError("end_tick before start_tick")
        if self.rate < 1:
            raise ValueError("rate must be positive")


class SynFlood:
    """Emit ``rate`` raw SYNs per tick at one listener for the window."""

    def __init__(self, node: Node, fabric: Fabric, spec: SynFloodSpec):
        self.node = node
        self.fabric = fabric
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.packets_sent = 0
        self._dst_ip = ip_to_int(spec.target_ip)
        self._payload = bytes(spec.payload_len)

    @property
    def done(self) -> bool:
        return self.fabric.current_tick >= self.spec.end_tick

    def on_tick(self, tick: int):
        if not (self.spec.start_tick <= tick < self.spec.end_tick):
            return
        for _ in range(self.spec.rate):
            self.fabric.send(Packet(
                src_mac=self.node.mac,
                dst_mac=self.fabric.mac_of(self._dst_ip),
                src_ip=self.node.ip,
                dst_ip=self._dst_ip,
                ip_id=self.node.next_ip_id(),
                src_port=self.rng.randint(1024, 65535),
                dst_port=self.spec.target_port,
                tcp_seq=self.rng.getrandbits(32),
                tcp_ack=0,
                flags=SYN,
                window=self.spec.window,
                payload=self._payload,
                origin=self.node.name))
            self.packets_sent += 1


# -- forged actuator writes --------------------------------------------------------


@dataclass(frozen=True)
class ForgeWriteSpec:
    target_ip: str
    target_port: int = 502
    unit: int = 0
    function: int = modbus.FC_WRITE_MULTIPLE_COILS
    address: int = 34
    values: tuple = (1,)
    start_tick: int = 0
    repeat: int = 1
    interval: int = 40
    request_timeout: int = 20

    def __post_init__(self):
        valid = (modbus.FC_WRITE_SINGLE_COIL, modbus.FC_WRITE_SINGLE_REGISTER,
                 modbus.FC_WRITE_MULTIPLE_COILS,
                 modbus.FC_WRITE_MULTIPLE_REGISTERS)
        if self.function not in valid:
            raise ValueError(f"function {self.function} is not a write")
        if self.repeat < 1:
            raise ValueError("repeat must be at least 1")
        if not self.values:
            raise ValueError("values must not be empty")


class ForgeWrite:
    """Connect, push one or more write requests, disconnect."""

    def __init__(self, node: Node, spec: ForgeWriteSpec):
        self.node = node
        self.spec = spec
        self.session: ModbusClientSession | None = None
        self.sent = 0
        self.accepted = 0
        self.rejected = 0
        self.timeouts = 0
        self._answered = 0
        self._next_at = spec.start_tick

    @property
    def done(self) -> bool:
        return self.sent >= self.spec.repeat and self._answered >= self.sent

    def request_pdu(self):
        spec = self.spec
        if spec.function == modbus.FC_WRITE_SINGLE_COIL:
            return modbus.WriteSingleCoilRequest(spec.address,
                                                 bool(spec.values[0]))
        if spec.function == modbus.FC_WRITE_SINGLE_REGISTER:
            return modbus.WriteSingleRegisterRequest(spec.address,
                                                     int(spec.values[0]))
        if spec.function == modbus.FC_WRITE_MULTIPLE_COILS:
            return modbus.WriteMultipleCoilsRequest(
                spec.address, tuple(bool(v) for v in spec.values))
        return modbus.WriteMultipleRegistersRequest(
            spec.address, tuple(int(v) for v in spec.values))

    def _on_reply(self, response):
        self._answered += 1
        if response is None:
            self.timeouts += 1
        elif isinstance(response, modbus.ExceptionResponse):
            self.rejected += 1
        else:
            self.accepted += 1
        if self.done and self.session is not None:
            self.session.close()

    def on_tick(self, tick: int):
        if self.session is not None:
            self.session.poll(tick)
        if tick < self.spec.start_tick or self.sent >= self.spec.repeat:
            return
        if self.session is None or self.session.state in ("failed", "closed"):
            self.session = ModbusClientSession(
                self.node, ip_to_int(self.spec.target_ip),
                self.spec.target_port, unit_id=self.spec.unit,
                request_timeout=self.spec.request_timeout)
            self.session.connect()
            return
        if self.session.state != "ready" or tick < self._next_at:
            return
        self.session.request(self.request_pdu(), self._on_reply)
        self.sent += 1
        self._next_at = tick + self.spec.interval


# -- in-path payload rewriting -------------------------------------------------------


@dataclass(frozen=True)
class FilterRule:
    """Replace every occurrence of ``match`` with ``replace`` (same length,
    so sequence numbers and frame sizes stay untouched)."""

    match: bytes
    replace: bytes

    def __post_init__(self):
        if not self.match:
            raise ValueError("empty match pattern")
        if len(self.match) != len(self.replace):
            raise ValueError(
                f"length-preserving rewrite required: "
                f"{self.match.hex()} -> {self.replace.hex()}")


@dataclass(frozen=True)
class RewriteSpec:
    pair: tuple[str, str]            # the two IPs to sit between
    rules: tuple[FilterRule, ...]
    dst_port: int = 502              # only frames toward this port
    marker: bytes = b"\xff\xce"      # and only when this appears in the data
    start_tick: int = 0
    end_tick: int | None = None      # None: stay in place for the whole run

    def __post_init__(self):
        if not self.rules:
            raise ValueError("no rules")


def apply_rewrite(spec: RewriteSpec, packet: Packet) -> bytes:
    """Pure filter body: the payload to forward for one frame."""
    data = packet.payload
    if packet.dst_port != spec.dst_port or spec.marker not in data:
        return data
    for rule in spec.rules:
        data = data.replace(rule.match, rule.replace)
    return data


def belt_reversal_rules() -> tuple[FilterRule, ...]:
    """Rewrite any speed-block write so every belt it covers reverses.

    The rules key on the byte patterns of the sorting cell's speed block
    (idle 50, busy 250, and the -50 creep setpoint that doubles as the
    marker) and replace them with -1251, hard reverse.  Ordered longest
    first so the specific images win before the two-byte catch-alls.
    """
    reverse = b"\xfb\x1d"
    return (
        FilterRule(b"\x00\x00\x00\xfa", reverse * 2),
        FilterRule(b"\x00\x32\x00\x00\x00\x00", reverse * 3),
        FilterRule(b"\x00\xfa", reverse),
        FilterRule(b"\x00\x32", reverse),
        FilterRule(b"\xff\xce", b"\x01\xfa"),
    )


class PayloadRewriter:
    """Install/remove the rewrite filter on the fabric for its window."""

    def __init__(self, fabric: Fabric, attacker_name: str, spec: RewriteSpec):
        self.fabric = fabric
        self.attacker_name = attacker_name
        self.spec = spec
        self.relayed = 0
        self.rewritten = 0
        self.installed = False

    @property
    def done(self) -> bool:
        return (self.spec.end_tick is not None
                and self.fabric.current_tick >= self.spec.end_tick
                and not self.installed)

    def transform(self, packet: Packet) -> bytes:
        data = apply_rewrite(self.spec, packet)
        self.relayed += 1
        if data != packet.payload:
            self.rewritten += 1
        return data

    def on_tick(self, tick: int):
        spec = self.spec
        if not self.installed and tick >= spec.start_tick and (
                spec.end_tick is None or tick < spec.end_tick):
            self.fabric.set_interposition(self.attacker_name, spec.pair,
                                          self.transform)
            self.installed = True
        elif self.installed and spec.end_tick is not None \
                and tick >= spec.end_tick:
            self.fabric.clear_interposition(spec.pair)
            self.installed = False


# -- connect scan -----------------------------------------------------------------


@dataclass(frozen=True)
class ReconSpec:
    targets: tuple[str, ...]
    ports: tuple[int, ...] = (502,)
    start_tick: int = 0

    def __post_init__(self):
        if not self.targets or not self.ports:
            raise ValueError("nothing to scan")


class _Probe(ConnectionOwner):
    def __init__(self, scan: "ConnectScan", key):
        self.scan = scan
        self.key = key

    def on_established(self, conn):
        self.scan._finish(self.key, "open")
        conn.close()

    def on_refused(self, conn):
        self.scan._finish(self.key, "closed")

    def on_timeout(self, conn):
        self.scan._finish(self.key, "filtered")


class ConnectScan:
    """One probe at a time over targets x ports, in order."""

    def __init__(self, node: Node, spec: ReconSpec):
        self.node = node
        self.spec = spec
        self.results: dict[tuple[str, int], str] = {}
        self._pending = [(ip, port) for ip in spec.targets
                         for port in spec.ports]
        self._active = None

    @property
    def done(self) -> bool:
        return not self._pending and self._active is None

    def _finish(self, key, verdict: str):
        self.results[key] = verdict
        self._active = None

    def on_tick(self, tick: int):
        if tick < self.spec.start_tick or self._active is not None \
                or not self._pending:
            return
        key = self._pending.pop(0)
        self._active = key
        ip, port = key
        self.node.connect(ip_to_int(ip), port, _Probe(self, key))
