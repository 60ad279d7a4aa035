"""Modbus/TCP server bridging every PLC's process image into one store.

The factory simulator only speaks to a single Modbus endpoint, so all
PLCs and the plant I/O share one authoritative DataStore behind this
bridge, the way a protocol gateway fronts a line of controllers.  Clients
are told apart by source address: registered PLC addresses may only write
the coil and holding-register ranges they own, while the plant I/O feed
and any unregistered client (that is the vulnerability) write unchecked.

The plant pushes sensor values through an alias window: coil writes at
``alias_base + i`` land in discrete input ``i`` and holding-register
writes at ``alias_base + i`` land in input register ``i``.  Standard
Modbus has no write function for those read-only tables, and this keeps
the wire format plain while letting one client feed them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import modbus
from .fabric import ConnectionOwner

__all__ = ["Ownership", "Bridge", "ModbusServerOwner", "DEFAULT_PORT"]

DEFAULT_PORT = 502


@dataclass(frozen=True)
class Ownership:
    """Writable address ranges for one PLC: lists of (start, count)."""

    coils: tuple = ()
    holding_registers: tuple = ()

    def covers_coils(self, address: int, count: int) -> bool:
        return _covered(self.coils, address, count)

    def covers_holding(self, address: int, count: int) -> bool:
        return _covered(self.holding_registers, address, count)


def _covered(ranges, address: int, count: int) -> bool:
    need = set(range(address, address + count))
    for start, span in ranges:
        need -= set(range(start, start + span))
    return not need


class Bridge:
    """Shared data store plus per-client write policy."""

    def __init__(self, store: modbus.DataStore | None = None,
                 ownership: dict[int, Ownership] | None = None,
                 plc_units: dict[int, int] | None = None,
                 alias_base: int = 512):
        self.store = store if store is not None else modbus.DataStore()
        self.ownership = ownership or {}
        # src ip (int) -> unit id, for clients whose writes are policed.
        self.plc_units = plc_units or {}
        self.alias_base = alias_base
        self.requests_served = 0
        self.exceptions_returned = 0
        self.rejected_writes = 0
        self.protocol_errors = 0

    def snapshot(self) -> modbus.DataStore:
        return self.store.copy()

    # -- request routing -----------------------------------------------------

    def route_request(self, src_ip: int, pdu):
        """Apply one request under the source's write policy."""
        self.requests_served += 1
        response = self._route(src_ip, pdu)
        if isinstance(response, modbus.ExceptionResponse):
            self.exceptions_returned += 1
        return response

    def _route(self, src_ip: int, pdu):
        unit = self.plc_units.get(src_ip)
        if unit is not None and not self._write_allowed(unit, pdu):
            self.rejected_writes += 1
            return modbus.ExceptionResponse(pdu.FUNCTION | 0x80,
                                            modbus.EXC_ILLEGAL_DATA_ADDRESS)
        aliased = self._apply_aliased(pdu)
        if aliased is not None:
            return aliased
        return modbus.apply_request(self.store, pdu)

    def _write_allowed(self, unit: int, pdu) -> bool:
        owned = self.ownership.get(unit, Ownership())
        if isinstance(pdu, modbus.WriteSingleCoilRequest):
            return owned.covers_coils(pdu.address, 1)
        if isinstance(pdu, modbus.WriteMultipleCoilsRequest):
            return owned.covers_coils(pdu.address, len(pdu.bits))
        if isinstance(pdu, modbus.WriteSingleRegisterRequest):
            return owned.covers_holding(pdu.address, 1)
        if isinstance(pdu, modbus.WriteMultipleRegistersRequest):
            return owned.covers_holding(pdu.address, len(pdu.values))
        return True  # reads are open to everyone

    def _apply_aliased(self, pdu):
        """Translate alias-window writes into the read-only tables."""
        base = self.alias_base
        exc = None
        try:
            if isinstance(pdu, modbus.WriteSingleCoilRequest) and pdu.address >= base:
                self.store.write_discrete_input(pdu.address - base, pdu.on)
                return modbus.WriteSingleCoilResponse(pdu.address, pdu.on)
            if isinstance(pdu, modbus.WriteMultipleCoilsRequest) and pdu.address >= base:
                self.store.write_discrete_inputs(pdu.address - base, pdu.bits)
                return modbus.WriteMultipleCoilsResponse(pdu.address, len(pdu.bits))
            if isinstance(pdu, modbus.WriteSingleRegisterRequest) and pdu.address >= base:
                self.store.write_input_register(pdu.address - base, pdu.value)
                return modbus.WriteSingleRegisterResponse(pdu.address, pdu.value)
            if isinstance(pdu, modbus.WriteMultipleRegistersRequest) and pdu.address >= base:
                self.store.write_input_registers(pdu.address - base, pdu.values)
                return modbus.WriteMultipleRegistersResponse(pdu.address, len(pdu.values))
        except modbus.RangeError:
            exc = modbus.ExceptionResponse(pdu.FUNCTION | 0x80,
                                           modbus.EXC_ILLEGAL_DATA_ADDRESS)
        return exc

    # -- fabric attachment -----------------------------------------------------

    def attach(self, node, port: int = DEFAULT_PORT, capacity: int = 128,
               accept_budget: int = 64):
        node.listen(port, lambda conn: ModbusServerOwner(self, conn),
                    capacity=capacity, accept_budget=accept_budget)


class ModbusServerOwner(ConnectionOwner):
    """Per-connection server side: reassemble frames, answer each request."""

    def __init__(self, bridge: Bridge, conn):
        self.bridge = bridge
        self.conn = conn
        self.buffer = bytearray()

    def on_data(self, conn, data: bytes):
        self.buffer.extend(data)
        while True:
            out = modbus.decode_frame(bytes(self.buffer), role="request")
            if out is modbus.INCOMPLETE:
                return
            if isinstance(out, modbus.Invalid):
                # Malformed stream: drop the connection, keep the counter.
                self.bridge.protocol_errors += 1
                conn.close()
                return
            del self.buffer[:out.consumed]
            response = self.bridge.route_request(conn.remote_ip, out.pdu)
            conn.send(modbus.encode_frame(
                modbus.MbapHeader(out.header.transaction_id,
                                  out.header.unit_id), response))
