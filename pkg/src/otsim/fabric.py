"""Virtual switched network with enough TCP to be attacked.

One Fabric instance models a single switched segment: every node hangs off
the same switch, frames route by destination IP (ARP is abstracted away),
and a mirror port records every forwarded frame in delivery order.  The
TCP emulation covers what the testbed traffic and the attacks exercise:
three-way handshakes with a bounded half-open table and a per-tick accept
budget, sequence/ack arithmetic advanced by payload bytes, RST on closed
ports, and a simplified FIN close.  There is no retransmission beyond SYN
retries and no congestion control; the fabric itself never loses or
reorders frames, so drops happen only for modelled reasons and each one
is counted.

Time is the simulation tick.  Within a tick, deliveries get consecutive
sub-sequence numbers; (tick, subseq) totally orders the capture and maps
straight onto pcap timestamps.

Denial of service semantics: while a node's half-open table sits at
capacity the node's NIC is effectively jammed and every inbound frame to
that node is dropped (counted as ``overloaded``).  Half-open entries age
out after ``half_open_timeout`` ticks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from . import pcap

__all__ = [
    "FIN", "SYN", "RST", "PSH", "ACK",
    "ip_to_int", "int_to_ip", "mac_to_int", "int_to_mac",
    "Packet", "Connection", "ConnectionOwner", "Listener", "Node", "Fabric",
]

FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10

# Connection states.
SYN_SENT = "syn_sent"
ESTABLISHED = "established"
FIN_WAIT = "fin_wait"
CLOSED = "closed"
REFUSED = "refused"
TIMED_OUT = "timed_out"


def ip_to_int(text: str) -> int:
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {text!r}")
    value = 0
    for part in parts:
        octet = int(part)
        if not 0 <= octet <= 255:
            raise ValueError(f"bad IPv4 address {text!r}")
        value = (value << 8) | octet
    return value


def int_to_ip(value: int) -> str:
    return ".".join(str(value >> shift & 0xFF) for shift in (24, 16, 8, 0))


def mac_to_int(text: str) -> int:
    return int(text.replace(":", ""), 16)


def int_to_mac(value: int) -> str:
    raw = value.to_bytes(6, "big")
    return ":".join(f"{b:02x}" for b in raw)


@dataclass(slots=True)
class Packet:
    """One L2 frame in flight.  IPs and MACs are ints; see the converters."""

    src_mac: int
    dst_mac: int
    src_ip: int
    dst_ip: int
    ip_id: int
    src_port: int
    dst_port: int
    tcp_seq: int
    tcp_ack: int
    flags: int
    window: int
    payload: bytes
    origin: str
    tick: int = -1
    subseq: int = -1
    relayed_by: str | None = None
    rewritten: bool = False

    @property
    def frame_len(self) -> int:
        return pcap.FRAME_OVERHEAD + len(self.payload)

    def to_wire(self) -> bytes:
        return pcap.render_ethernet_ipv4_tcp(
            self.src_mac, self.dst_mac, self.src_ip, self.dst_ip, self.ip_id,
            self.src_port, self.dst_port, self.tcp_seq, self.tcp_ack,
            self.flags, self.window, self.payload)


class ConnectionOwner:
    """Callback surface a connection reports into.  Subclass what you need."""

    def on_established(self, conn: "Connection"):
        pass

    def on_data(self, conn: "Connection", data: bytes):
        pass

    def on_closed(self, conn: "Connection"):
        pass

    def on_refused(self, conn: "Connection"):
        pass

    def on_timeout(self, conn: "Connection"):
        pass


class Connection:
    """One endpoint of an emulated TCP connection."""

    __slots__ = ("node", "local_port", "remote_ip", "remote_port", "state",
                 "owner", "snd_nxt", "rcv_nxt", "last_syn_tick", "syn_retries_used",
                 "opened_tick", "is_server")

    def __init__(self, node, local_port, remote_ip, remote_port, owner,
                 state, tick, is_server):
        self.node = node
        self.local_port = local_port
        self.remote_ip = remote_ip
        self.remote_port = remote_port
        self.owner = owner
        self.state = state
        self.snd_nxt = 0
        self.rcv_nxt = 0
        self.last_syn_tick = tick
        self.syn_retries_used = 0
        self.opened_tick = tick
        self.is_server = is_server

    @property
    def key(self):
        return (self.local_port, self.remote_ip, self.remote_port)

    def send(self, payload: bytes):
        """Push application bytes as one PSH|ACK segment."""
        if self.state != ESTABLISHED:
            raise RuntimeError(f"send on {self.state} connection")
        self.node._emit(self.remote_ip, self.remote_port, self.local_port,
                        self.snd_nxt, self.rcv_nxt, PSH | ACK, payload)
        self.snd_nxt = (self.snd_nxt + len(payload)) & 0xFFFFFFFF

    def close(self):
        """Send FIN and stop caring; the peer acks and both sides drop state."""
        if self.state == ESTABLISHED:
            self.node._emit(self.remote_ip, self.remote_port, self.local_port,
                            self.snd_nxt, self.rcv_nxt, FIN | ACK, b"")
            self.snd_nxt = (self.snd_nxt + 1) & 0xFFFFFFFF
            self.state = FIN_WAIT


class Listener:
    """A listening port with a bounded half-open table and accept budget."""

    __slots__ = ("port", "owner_factory", "capacity", "accept_budget",
                 "half_open", "budget_tick", "budget_used")

    def __init__(self, port, owner_factory, capacity=128, accept_budget=64):
        self.port = port
        self.owner_factory = owner_factory
        self.capacity = capacity
        self.accept_budget = accept_budget
        self.half_open = {}  # (ip, port) -> (created_tick, local_isn, remote_isn)
        self.budget_tick = -1
        self.budget_used = 0

    def budget_left(self, tick: int) -> bool:
        if tick != self.budget_tick:
            self.budget_tick = tick
            self.budget_used = 0
        return self.budget_used < self.accept_budget

    def spend(self):
        self.budget_used += 1


class Node:
    """One attached host: address pair, listeners, live connections."""

    def __init__(self, fabric, name, ip, mac, window=8192):
        self.fabric = fabric
        self.name = name
        self.ip = ip
        self.mac = mac
        self.window = window
        self.listeners: dict[int, Listener] = {}
        self.conns: dict[tuple, Connection] = {}
        self._ip_id = 0
        self._isn = 1 + (ip & 0xFF) * 1000
        self._ephemeral = list(range(49152, 49152 + 16))
        self._ephemeral_next = 0

    # -- wiring ------------------------------------------------------------

    def listen(self, port, owner_factory, capacity=128, accept_budget=64) -> Listener:
        listener = Listener(port, owner_factory, capacity, accept_budget)
        self.listeners[port] = listener
        return listener

    def next_ephemeral_port(self) -> int:
        port = self._ephemeral[self._ephemeral_next % len(self._ephemeral)]
        self._ephemeral_next += 1
        return port

    def next_ip_id(self) -> int:
        self._ip_id = (self._ip_id + 1) & 0xFFFF
        return self._ip_id

    def next_isn(self) -> int:
        isn = self._isn
        self._isn = (self._isn + 64) & 0xFFFFFFFF
        return isn

    def saturated(self) -> bool:
        return any(len(ls.half_open) >= ls.capacity for ls in self.listeners.values())

    # -- client side -------------------------------------------------------

    def connect(self, remote_ip: int, remote_port: int, owner: ConnectionOwner,
                local_port: int | None = None) -> Connection:
        if local_port is None:
            local_port = self.next_ephemeral_port()
        conn = Connection(self, local_port, remote_ip, remote_port, owner,
                          SYN_SENT, self.fabric.current_tick, is_server=False)
        conn.snd_nxt = self.next_isn()
        self.conns[conn.key] = conn
        self._emit(remote_ip, remote_port, local_port, conn.snd_nxt,
                   0, SYN, b"")
        conn.snd_nxt = (conn.snd_nxt + 1) & 0xFFFFFFFF  # SYN consumes one
        return conn

    # -- frame handling ----------------------------------------------------

    def _emit(self, dst_ip, dst_port, src_port, seq, ack, flags, payload,
              window=None):
        self.fabric.send(Packet(
            src_mac=self.mac, dst_mac=self.fabric.mac_of(dst_ip),
            src_ip=self.ip, dst_ip=dst_ip, ip_id=self.next_ip_id(),
            src_port=src_port, dst_port=dst_port, tcp_seq=seq, tcp_ack=ack,
            flags=flags, window=self.window if window is None else window,
            payload=payload, origin=self.name))

    def handle(self, pkt: Packet, tick: int):
        counters = self.fabric.drops
        flags = pkt.flags
        key = (pkt.dst_port, pkt.src_ip, pkt.src_port)
        conn = self.conns.get(key)

        if flags & RST:
            if conn is not None and conn.state in (SYN_SENT, ESTABLISHED, FIN_WAIT):
                was = conn.state
                conn.state = REFUSED if was == SYN_SENT else CLOSED
                del self.conns[key]
                if was == SYN_SENT:
                    conn.owner.on_refused(conn)
                else:
                    conn.owner.on_closed(conn)
            return

        if flags & SYN and not flags & ACK:
            listener = self.listeners.get(pkt.dst_port)
            if listener is None:
                # Closed port: refuse loudly.
                self._emit(pkt.src_ip, pkt.src_port, pkt.dst_port,
                           0, (pkt.tcp_seq + 1) & 0xFFFFFFFF, RST | ACK, b"")
                self.fabric.rst_sent += 1
                return
            if not listener.budget_left(tick):
                counters["budget_exhausted"] += 1
                return
            ho_key = (pkt.src_ip, pkt.src_port)
            entry = listener.half_open.get(ho_key)
            if entry is not None:
                # Retransmitted SYN: repeat our SYN-ACK, no new state.
                listener.spend()
                _created, local_isn, remote_isn = entry
                self._emit(pkt.src_ip, pkt.src_port, pkt.dst_port, local_isn,
                           (remote_isn + 1) & 0xFFFFFFFF, SYN | ACK, b"")
                return
            if len(listener.half_open) >= listener.capacity:
                counters["backlog_full"] += 1
                return
            listener.spend()
            local_isn = self.next_isn()
            listener.half_open[ho_key] = (tick, local_isn, pkt.tcp_seq)
            self._emit(pkt.src_ip, pkt.src_port, pkt.dst_port, local_isn,
                       (pkt.tcp_seq + 1) & 0xFFFFFFFF, SYN | ACK, b"")
            return

        if flags & SYN and flags & ACK:
            if conn is not None and conn.state == SYN_SENT:
                conn.state = ESTABLISHED
                conn.rcv_nxt = (pkt.tcp_seq + 1) & 0xFFFFFFFF
                self._emit(pkt.src_ip, pkt.src_port, pkt.dst_port,
                           conn.snd_nxt, conn.rcv_nxt, ACK, b"")
                conn.owner.on_established(conn)
            return

        if flags & FIN:
            if conn is not None and conn.state in (ESTABLISHED, FIN_WAIT):
                conn.rcv_nxt = (pkt.tcp_seq + 1 + len(pkt.payload)) & 0xFFFFFFFF
                self._emit(pkt.src_ip, pkt.src_port, pkt.dst_port,
                           conn.snd_nxt, conn.rcv_nxt, ACK, b"")
                conn.state = CLOSED
                del self.conns[key]
                conn.owner.on_closed(conn)
            return

        if flags & ACK and pkt.payload:
            if conn is None:
                # Data for a connection we do not have.
                counters["no_connection"] += 1
                return
            if conn.state not in (ESTABLISHED, FIN_WAIT):
                counters["no_connection"] += 1
                return
            if pkt.tcp_seq != conn.rcv_nxt:
                counters["reordered"] += 1
            conn.rcv_nxt = (pkt.tcp_seq + len(pkt.payload)) & 0xFFFFFFFF
            conn.owner.on_data(conn, pkt.payload)
            return

        if flags & ACK:
            listener = self.listeners.get(pkt.dst_port)
            if listener is not None:
                ho_key = (pkt.src_ip, pkt.src_port)
                entry = listener.half_open.pop(ho_key, None)
                if entry is not None:
                    _created, local_isn, remote_isn = entry
                    conn = Connection(self, pkt.dst_port, pkt.src_ip,
                                      pkt.src_port, None, ESTABLISHED, tick,
                                      is_server=True)
                    conn.snd_nxt = (local_isn + 1) & 0xFFFFFFFF
                    conn.rcv_nxt = (remote_isn + 1) & 0xFFFFFFFF
                    conn.owner = listener.owner_factory(conn)
                    self.conns[conn.key] = conn
                    conn.owner.on_established(conn)
                    return
            if conn is not None and conn.state == FIN_WAIT:
                conn.state = CLOSED
                del self.conns[key]
                conn.owner.on_closed(conn)
            return

    def housekeeping(self, tick: int):
        fabric = self.fabric
        for listener in self.listeners.values():
            expired = [k for k, (created, _i, _r) in listener.half_open.items()
                       if tick - created >= fabric.half_open_timeout]
            for k in expired:
                del listener.half_open[k]
                fabric.drops["half_open_expired"] += 1
        for conn in list(self.conns.values()):
            if conn.state != SYN_SENT:
                continue
            if tick - conn.last_syn_tick < fabric.syn_retry_interval:
                continue
            if conn.syn_retries_used < fabric.syn_retries:
                conn.syn_retries_used += 1
                conn.last_syn_tick = tick
                isn = (conn.snd_nxt - 1) & 0xFFFFFFFF
                self._emit(conn.remote_ip, conn.remote_port, conn.local_port,
                           isn, 0, SYN, b"")
            else:
                conn.state = TIMED_OUT
                del self.conns[conn.key]
                conn.owner.on_timeout(conn)


class Fabric:
    """The switch, its mirror port, and the tick-scoped delivery queue."""

    def __init__(self, latency_ticks: int = 0, tick_ms: int = 10,
                 half_open_timeout: int = 8000, syn_retry_interval: int = 20,
                 syn_retries: int = 3, capture_enabled: bool = True):
        self.latency_ticks = latency_ticks
        self.tick_ms = tick_ms
        self.half_open_timeout = half_open_timeout
        self.syn_retry_interval = syn_retry_interval
        self.syn_retries = syn_retries
        self.capture_enabled = capture_enabled
        self.nodes: dict[str, Node] = {}
        self.by_ip: dict[int, Node] = {}
        self.capture: list[Packet] = []
        self.on_capture = None
        self.drops = {"unknown_destination": 0, "overloaded": 0,
                      "backlog_full": 0, "budget_exhausted": 0,
                      "no_connection": 0, "reordered": 0,
                      "half_open_expired": 0, "interposer_dropped": 0}
        self.forwarded = 0
        self.rst_sent = 0
        self.current_tick = 0
        self._queue: list[tuple[int, int, Packet]] = []
        self._enqueue_seq = 0
        self._capture_seq = 0
        self._interpositions: dict[frozenset, tuple[str, object]] = {}

    # -- topology ----------------------------------------------------------

    def add_node(self, name: str, ip: str, mac: str | None = None,
                 window: int = 8192) -> Node:
        if name in self.nodes:
            raise ValueError(f"duplicate node name {name!r}")
        ip_int = ip_to_int(ip)
        if ip_int in self.by_ip:
            raise ValueError(f"duplicate node address {ip}")
        if mac is None:
            mac = f"02:00:00:00:00:{ip_int & 0xFF:02x}"
        node = Node(self, name, ip_int, mac_to_int(mac), window)
        self.nodes[name] = node
        self.by_ip[ip_int] = node
        return node

    def node(self, name: str) -> Node:
        return self.nodes[name]

    def mac_of(self, ip: int) -> int:
        node = self.by_ip.get(ip)
        return node.mac if node is not None else 0xFFFFFFFFFFFF

    def set_interposition(self, attacker: str, pair: tuple[str, str], transform):
        """Route every frame between the pair of IPs through the attacker.

        ``transform(packet) -> bytes | None`` returns the payload to forward
        (possibly the original) or None to drop the frame.
        """
        key = frozenset((ip_to_int(pair[0]), ip_to_int(pair[1])))
        self._interpositions[key] = (attacker, transform)

    def clear_interposition(self, pair: tuple[str, str]):
        self._interpositions.pop(
            frozenset((ip_to_int(pair[0]), ip_to_int(pair[1]))), None)

    # -- tick loop ---------------------------------------------------------

    def begin_tick(self, tick: int):
        self.current_tick = tick
        self._capture_seq = 0

    def send(self, packet: Packet, extra_latency: int = 0):
        deliver = self.current_tick + self.latency_ticks + extra_latency
        heapq.heappush(self._queue, (deliver, self._enqueue_seq, packet))
        self._enqueue_seq += 1

    def step(self):
        """Deliver everything due this tick, including frames sent while
        delivering (the in-tick request/response ripple)."""
        tick = self.current_tick
        while self._queue and self._queue[0][0] <= tick:
            _deliver, _seq, packet = heapq.heappop(self._queue)
            self._route(packet, tick)

    def housekeeping(self):
        for node in self.nodes.values():
            node.housekeeping(self.current_tick)

    def _route(self, packet: Packet, tick: int):
        if self._interpositions and packet.relayed_by is None:
            hit = self._interpositions.get(
                frozenset((packet.src_ip, packet.dst_ip)))
            if hit is not None:
                attacker_name, transform = hit
                attacker = self.nodes[attacker_name]
                self._capture(packet, tick)
                new_payload = transform(packet)
                if new_payload is None:
                    self.drops["interposer_dropped"] += 1
                    return
                relayed = Packet(
                    src_mac=attacker.mac, dst_mac=packet.dst_mac,
                    src_ip=packet.src_ip, dst_ip=packet.dst_ip,
                    ip_id=packet.ip_id, src_port=packet.src_port,
                    dst_port=packet.dst_port, tcp_seq=packet.tcp_seq,
                    tcp_ack=packet.tcp_ack, flags=packet.flags,
                    window=packet.window, payload=new_payload,
                    origin=packet.origin, relayed_by=attacker_name,
                    rewritten=new_payload != packet.payload)
                self.send(relayed)
                return
        dst = self.by_ip.get(packet.dst_ip)
        if dst is None:
            self.drops["unknown_destination"] += 1
            return
        self._capture(packet, tick)
        if dst.saturated():
            listener = dst.listeners.get(packet.dst_port)
            if (packet.flags & SYN and not packet.flags & ACK
                    and listener is not None
                    and len(listener.half_open) >= listener.capacity):
                self.drops["backlog_full"] += 1
            else:
                self.drops["overloaded"] += 1
            return
        dst.handle(packet, tick)

    def _capture(self, packet: Packet, tick: int):
        packet.tick = tick
        packet.subseq = self._capture_seq
        self._capture_seq += 1
        self.forwarded += 1
        if self.capture_enabled:
            self.capture.append(packet)
        if self.on_capture is not None:
            self.on_capture(packet)

    # -- capture export ----------------------------------------------------

    def pcap_records(self):
        for packet in self.capture:
            ts_sec, ts_usec = pcap.tick_timestamp(packet.tick, packet.subseq,
                                                  self.tick_ms)
            yield ts_sec, ts_usec, packet.to_wire()

    def write_pcap(self, fh) -> int:
        return pcap.write_pcap(self.pcap_records(), fh)
