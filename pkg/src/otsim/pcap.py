"""Classic pcap file writing/reading and Ethernet/IPv4/TCP frame bytes.

Capture files use the original little-endian pcap format: magic 0xA1B2C3D4
(bytes D4 C3 B2 A1 on disk), version 2.4, snaplen 65535, linktype 1
(Ethernet).  Each record is a 16-byte header (seconds, microseconds,
captured length, original length) followed by the frame.  Frames are
Ethernet II + IPv4 + TCP with the IPv4 header checksum computed and the
TCP checksum left at zero, which libpcap tools accept.

Timestamps come from the simulation clock: a tick lasts ``tick_ms``
milliseconds and the per-tick delivery sequence number lands in the
microsecond digits, so total ordering survives into the capture file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

__all__ = [
    "PCAP_MAGIC",
    "LINKTYPE_ETHERNET",
    "ETH_HEADER_LEN",
    "IPV4_HEADER_LEN",
    "TCP_HEADER_LEN",
    "FRAME_OVERHEAD",
    "GLOBAL_HEADER",
    "ipv4_checksum",
    "render_ethernet_ipv4_tcp",
    "FrameFields",
    "parse_ethernet_ipv4_tcp",
    "tick_timestamp",
    "write_pcap",
    "read_pcap",
]

PCAP_MAGIC = 0xA1B2C3D4
PCAP_VERSION = (2, 4)
SNAPLEN = 65535
LINKTYPE_ETHERNET = 1

ETH_HEADER_LEN = 14
IPV4_HEADER_LEN = 20
TCP_HEADER_LEN = 20
FRAME_OVERHEAD = ETH_HEADER_LEN + IPV4_HEADER_LEN + TCP_HEADER_LEN  # 54

ETHERTYPE_IPV4 = 0x0800
IP_PROTO_TCP = 6

_GLOBAL = struct.Struct("<IHHiIII")
_RECORD = struct.Struct("<IIII")
_IPV4 = struct.Struct(">BBHHHBBHII")
_TCP = struct.Struct(">HHIIBBHHH")

GLOBAL_HEADER = _GLOBAL.pack(PCAP_MAGIC, *PCAP_VERSION, 0, 0, SNAPLEN,
                             LINKTYPE_ETHERNET)


def ipv4_checksum(header: bytes) -> int:
    """Ones-complement sum of 16-bit words with the checksum field zeroed."""
    if len(header) % 2:
        header += b"\x00"
    total = sum(struct.unpack(f">{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def render_ethernet_ipv4_tcp(src_mac: int, dst_mac: int, src_ip: int, dst_ip: int,
                             ip_id: int, src_port: int, dst_port: int,
                             tcp_seq: int, tcp_ack: int, flags: int,
                             window: int, payload: bytes) -> bytes:
    """Build one on-wire frame.  MACs are 48-bit ints, IPs 32-bit ints."""
    eth = dst_mac.to_bytes(6, "big") + src_mac.to_bytes(6, "big") \
        + ETHERTYPE_IPV4.to_bytes(2, "big")
    total_len = IPV4_HEADER_LEN + TCP_HEADER_LEN + len(payload)
    ip = _IPV4.pack(0x45, 0, total_len, ip_id & 0xFFFF, 0x4000, 64,
                    IP_PROTO_TCP, 0, src_ip, dst_ip)
    ip = ip[:10] + ipv4_checksum(ip).to_bytes(2, "big") + ip[12:]
    # Data offset 5 words, no options; TCP checksum intentionally zero.
    tcp = _TCP.pack(src_port, dst_port, tcp_seq & 0xFFFFFFFF,
                    tcp_ack & 0xFFFFFFFF, 0x50, flags & 0x3F, window, 0, 0)
    return eth + ip + tcp + payload


@dataclass(frozen=True)
class FrameFields:
    """Parsed view of one captured frame."""

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

    @property
    def frame_len(self) -> int:
        return FRAME_OVERHEAD + len(self.payload)


def parse_ethernet_ipv4_tcp(frame: bytes) -> FrameFields:
    if len(frame) < FRAME_OVERHEAD:
        raise ValueError(f"frame of {len(frame)} bytes is shorter than headers")
    dst_mac = int.from_bytes(frame[0:6], "big")
    src_mac = int.from_bytes(frame[6:12], "big")
    ethertype = int.from_bytes(frame[12:14], "big")
    if ethertype != ETHERTYPE_IPV4:
        raise ValueError(f"unexpected ethertype 0x{ethertype:04x}")
    (vihl, _tos, total_len, ip_id, _frag, _ttl, proto, _csum,
     src_ip, dst_ip) = _IPV4.unpack(frame[14:34])
    if vihl != 0x45:
        raise ValueError(f"unexpected IP version/IHL 0x{vihl:02x}")
    if proto != IP_PROTO_TCP:
        raise ValueError(f"unexpected IP protocol {proto}")
    (src_port, dst_port, tcp_seq, tcp_ack, offset, flags,
     window, _csum2, _urg) = _TCP.unpack(frame[34:54])
    if offset >> 4 != 5:
        raise ValueError("TCP options are never emitted here")
    payload_len = total_len - IPV4_HEADER_LEN - TCP_HEADER_LEN
    payload = frame[54:54 + payload_len]
    if len(payload) != payload_len:
        raise ValueError("IP total length disagrees with captured bytes")
    return FrameFields(src_mac, dst_mac, src_ip, dst_ip, ip_id, src_port,
                       dst_port, tcp_seq, tcp_ack, flags, window, payload)


def tick_timestamp(tick: int, subseq: int, tick_ms: int = 10) -> tuple[int, int]:
    """Map (tick, within-tick sequence) to (seconds, microseconds)."""
    total_us = tick * tick_ms * 1000 + subseq
    return total_us // 1_000_000, total_us % 1_000_000


def write_pcap(records, fh) -> int:
    """Write (ts_sec, ts_usec, frame_bytes) records.  Returns record count."""
    fh.write(GLOBAL_HEADER)
    count = 0
    for ts_sec, ts_usec, data in records:
        fh.write(_RECORD.pack(ts_sec, ts_usec, len(data), len(data)))
        fh.write(data)
        count += 1
    return count


def read_pcap(fh) -> list[tuple[int, int, bytes]]:
    """Read a capture written by write_pcap.  Strict about the header."""
    head = fh.read(_GLOBAL.size)
    if len(head) != _GLOBAL.size:
        raise ValueError("truncated pcap global header")
    magic, major, minor, _zone, _sig, _snap, link = _GLOBAL.unpack(head)
    if magic != PCAP_MAGIC:
        raise ValueError(f"unsupported pcap magic 0x{magic:08x}")
    if (major, minor) != PCAP_VERSION:
        raise ValueError(f"unsupported pcap version {major}.{minor}")
    if link != LINKTYPE_ETHERNET:
        raise ValueError(f"unsupported linktype {link}")
    out = []
    while True:
        rec = fh.read(_RECORD.size)
        if not rec:
            return out
        if len(rec) != _RECORD.size:
            raise ValueError("truncated pcap record header")
        ts_sec, ts_usec, incl, orig = _RECORD.unpack(rec)
        if incl != orig:
            raise ValueError("sliced captures are never written here")
        data = fh.read(incl)
        if len(data) != incl:
            raise ValueError("truncated pcap record body")
        out.append((ts_sec, ts_usec, data))
