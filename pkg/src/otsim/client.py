"""Request/response Modbus client session over an emulated connection.

A session owns one TCP connection to a server, allocates transaction ids,
matches responses back to requests, and reports per-request timeouts.
Callers drive it from their tick hook: call ``poll`` once per tick to
expire overdue requests, check ``state`` before issuing new ones.
"""

from __future__ import annotations

from . import modbus
from .fabric import ConnectionOwner

__all__ = ["ModbusClientSession"]

IDLE = "idle"
CONNECTING = "connecting"
READY = "ready"
FAILED = "failed"
CLOSED = "closed"


class ModbusClientSession(ConnectionOwner):
    """One client connection with transaction bookkeeping."""

    def __init__(self, node, server_ip: int, server_port: int = 502,
                 unit_id: int = 0, request_timeout: int = 10,
                 on_ready=None, on_failed=None):
        self.node = node
        self.server_ip = server_ip
        self.server_port = server_port
        self.unit_id = unit_id
        self.request_timeout = request_timeout
        self.on_ready = on_ready
        self.on_failed = on_failed
        self.state = IDLE
        self.conn = None
        self.txns = modbus.TransactionIds()
        self.outstanding: dict[int, tuple[object, object, int]] = {}
        self.buffer = bytearray()
        self.requests_sent = 0
        self.requests_completed = 0
        self.exception_responses = 0
        self.request_timeouts = 0
        self.protocol_errors = 0
        self.connects_attempted = 0

    # -- lifecycle ---------------------------------------------------------

    def connect(self):
        if self.state in (CONNECTING, READY):
            return
        self.connects_attempted += 1
        self.state = CONNECTING
        self.buffer.clear()
        self.conn = self.node.connect(self.server_ip, self.server_port, self)

    def close(self):
        if self.conn is not None and self.state == READY:
            self.conn.close()
        self._fail_outstanding()
        self.state = CLOSED
        self.conn = None

    def _fail_outstanding(self):
        pending = list(self.outstanding.values())
        self.outstanding.clear()
        for _pdu, callback, _deadline in pending:
            self.request_timeouts += 1
            if callback is not None:
                callback(None)

    # -- connection callbacks ----------------------------------------------

    def on_established(self, conn):
        self.state = READY
        if self.on_ready is not None:
            self.on_ready()

    def on_refused(self, conn):
        self.state = FAILED
        self.conn = None
        self._fail_outstanding()
        if self.on_failed is not None:
            self.on_failed("refused")

    def on_timeout(self, conn):
        self.state = FAILED
        self.conn = None
        self._fail_outstanding()
        if self.on_failed is not None:
            self.on_failed("timeout")

    def on_closed(self, conn):
        if self.state not in (CLOSED, FAILED):
            self.state = CLOSED
        self._fail_outstanding()

    def on_data(self, conn, data: bytes):
        self.buffer.extend(data)
        while True:
            out = modbus.decode_frame(bytes(self.buffer), role="response")
            if out is modbus.INCOMPLETE:
                return
            if isinstance(out, modbus.Invalid):
                # A server speaking garbage ends the session.
                self.protocol_errors += 1
                self.state = FAILED
                self._fail_outstanding()
                return
            del self.buffer[:out.consumed]
            entry = self.outstanding.pop(out.header.transaction_id, None)
            if entry is None:
                self.protocol_errors += 1
                continue
            _req, callback, _deadline = entry
            self.requests_completed += 1
            if isinstance(out.pdu, modbus.ExceptionResponse):
                self.exception_responses += 1
            if callback is not None:
                callback(out.pdu)

    # -- requests ------------------------------------------------------------

    def request(self, pdu, callback=None) -> int:
        """Send one request.  ``callback(response_pdu)`` fires on the response
        (which may be an ExceptionResponse) or ``callback(None)`` on timeout."""
        if self.state != READY:
            raise RuntimeError(f"session is {self.state}, not ready")
        txn = self.txns.next()
        data = modbus.frame(txn, self.unit_id, pdu)
        deadline = self.node.fabric.current_tick + self.request_timeout
        self.outstanding[txn] = (pdu, callback, deadline)
        self.requests_sent += 1
        self.conn.send(data)
        return txn

    def poll(self, tick: int):
        """Expire overdue requests.  Call once per tick before new requests."""
        if not self.outstanding:
            return
        overdue = [txn for txn, (_p, _c, deadline) in self.outstanding.items()
                   if tick >= deadline]
        for txn in overdue:
            _pdu, callback, _deadline = self.outstanding.pop(txn)
            self.request_timeouts += 1
            if callback is not None:
                callback(None)
