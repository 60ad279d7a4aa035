"""Modbus/TCP codec, data store, and server-side request semantics.

Every application frame on the testbed wire is Modbus/TCP: a 7-byte MBAP
header (transaction id, protocol id, length, unit id) followed by a PDU
(function code plus data).  This module gives a bit-exact encoder/decoder
for the common read/write function codes, a four-table data store with
standard addressing rules, and the request application logic a server
needs.  It is deliberately transport-free; the fabric and the interop
layer move the bytes.

All multi-byte fields are big-endian.  The MBAP length field counts the
unit id plus the PDU, so a frame is ``6 + length`` bytes long in total.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FC_READ_COILS",
    "FC_READ_DISCRETE_INPUTS",
    "FC_READ_HOLDING_REGISTERS",
    "FC_READ_INPUT_REGISTERS",
    "FC_WRITE_SINGLE_COIL",
    "FC_WRITE_SINGLE_REGISTER",
    "FC_WRITE_MULTIPLE_COILS",
    "FC_WRITE_MULTIPLE_REGISTERS",
    "EXC_ILLEGAL_FUNCTION",
    "EXC_ILLEGAL_DATA_ADDRESS",
    "EXC_ILLEGAL_DATA_VALUE",
    "MbapHeader",
    "ReadCoilsRequest",
    "ReadCoilsResponse",
    "ReadDiscreteInputsRequest",
    "ReadDiscreteInputsResponse",
    "ReadHoldingRegistersRequest",
    "ReadHoldingRegistersResponse",
    "ReadInputRegistersRequest",
    "ReadInputRegistersResponse",
    "WriteSingleCoilRequest",
    "WriteSingleCoilResponse",
    "WriteSingleRegisterRequest",
    "WriteSingleRegisterResponse",
    "WriteMultipleCoilsRequest",
    "WriteMultipleCoilsResponse",
    "WriteMultipleRegistersRequest",
    "WriteMultipleRegistersResponse",
    "ExceptionResponse",
    "Incomplete",
    "Invalid",
    "DecodedFrame",
    "EncodeError",
    "RangeError",
    "encode_pdu",
    "decode_pdu",
    "encode_frame",
    "frame",
    "decode_frame",
    "transaction_id_of",
    "DataStore",
    "apply_request",
    "TransactionIds",
    "next_transaction_id",
]

# Function codes handled by the codec.
FC_READ_COILS = 0x01
FC_READ_DISCRETE_INPUTS = 0x02
FC_READ_HOLDING_REGISTERS = 0x03
FC_READ_INPUT_REGISTERS = 0x04
FC_WRITE_SINGLE_COIL = 0x05
FC_WRITE_SINGLE_REGISTER = 0x06
FC_WRITE_MULTIPLE_COILS = 0x0F
FC_WRITE_MULTIPLE_REGISTERS = 0x10

# Exception codes.
EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_DATA_ADDRESS = 0x02
EXC_ILLEGAL_DATA_VALUE = 0x03

# Quantity limits from the protocol: requests outside these are malformed,
# not merely out of range.
MAX_READ_BITS = 2000
MAX_READ_REGISTERS = 125
MAX_WRITE_BITS = 1968
MAX_WRITE_REGISTERS = 123

COIL_ON = 0xFF00
COIL_OFF = 0x0000

_MBAP = struct.Struct(">HHHB")
MBAP_SIZE = _MBAP.size  # 7
# MBAP length counts unit id + PDU; PDU is 1..253 bytes.
MIN_MBAP_LENGTH = 2
MAX_MBAP_LENGTH = 254


class EncodeError(ValueError):
    """Raised when a PDU or frame cannot be encoded as requested."""


class RangeError(ValueError):
    """Raised by DataStore accessors for out-of-range addresses or counts."""


@dataclass(frozen=True)
class MbapHeader:
    """MBAP header fields.  ``length`` may be None to compute on encode."""

    transaction_id: int
    unit_id: int
    protocol_id: int = 0
    length: int | None = None


def _pack_bits(bits) -> bytes:
    """Pack booleans LSB-first into bytes, zero padded."""
    out = bytearray((len(bits) + 7) // 8)
    for i, bit in enumerate(bits):
        if bit:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def _unpack_bits(data: bytes, count: int) -> tuple[bool, ...]:
    return tuple(bool(data[i // 8] >> (i % 8) & 1) for i in range(count))


def _pad_bits(bits) -> tuple[bool, ...]:
    """Normalize a bit vector to a whole number of bytes, as the wire does."""
    bits = tuple(bool(b) for b in bits)
    pad = -len(bits) % 8
    return bits + (False,) * pad


@dataclass(frozen=True)
class ReadCoilsRequest:
    FUNCTION = FC_READ_COILS
    address: int
    count: int


@dataclass(frozen=True)
class ReadCoilsResponse:
    """Coil read result.  Bit vectors are padded to a byte boundary because
    the wire format carries no count; requesters slice to what they asked."""

    FUNCTION = FC_READ_COILS
    bits: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", _pad_bits(self.bits))


@dataclass(frozen=True)
class ReadDiscreteInputsRequest:
    FUNCTION = FC_READ_DISCRETE_INPUTS
    address: int
    count: int


@dataclass(frozen=True)
class ReadDiscreteInputsResponse:
    FUNCTION = FC_READ_DISCRETE_INPUTS
    bits: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", _pad_bits(self.bits))


@dataclass(frozen=True)
class ReadHoldingRegistersRequest:
    FUNCTION = FC_READ_HOLDING_REGISTERS
    address: int
    count: int


@dataclass(frozen=True)
class ReadHoldingRegistersResponse:
    FUNCTION = FC_READ_HOLDING_REGISTERS
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))


@dataclass(frozen=True)
class ReadInputRegistersRequest:
    FUNCTION = FC_READ_INPUT_REGISTERS
    address: int
    count: int


@dataclass(frozen=True)
class ReadInputRegistersResponse:
    FUNCTION = FC_READ_INPUT_REGISTERS
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))


@dataclass(frozen=True)
class WriteSingleCoilRequest:
    FUNCTION = FC_WRITE_SINGLE_COIL
    address: int
    on: bool


@dataclass(frozen=True)
class WriteSingleCoilResponse:
    FUNCTION = FC_WRITE_SINGLE_COIL
    address: int
    on: bool


@dataclass(frozen=True)
class WriteSingleRegisterRequest:
    FUNCTION = FC_WRITE_SINGLE_REGISTER
    address: int
    value: int


@dataclass(frozen=True)
class WriteSingleRegisterResponse:
    FUNCTION = FC_WRITE_SINGLE_REGISTER
    address: int
    value: int


@dataclass(frozen=True)
class WriteMultipleCoilsRequest:
    FUNCTION = FC_WRITE_MULTIPLE_COILS
    address: int
    bits: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))


@dataclass(frozen=True)
class WriteMultipleCoilsResponse:
    FUNCTION = FC_WRITE_MULTIPLE_COILS
    address: int
    count: int


@dataclass(frozen=True)
class WriteMultipleRegistersRequest:
    FUNCTION = FC_WRITE_MULTIPLE_REGISTERS
    address: int
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))


@dataclass(frozen=True)
class WriteMultipleRegistersResponse:
    FUNCTION = FC_WRITE_MULTIPLE_REGISTERS
    address: int
    count: int


@dataclass(frozen=True)
class ExceptionResponse:
    """Exception PDU.  ``function`` is the on-wire value, i.e. the request
    function code with the high bit set."""

    function: int
    code: int


_REQUEST_TYPES = (
    ReadCoilsRequest,
    ReadDiscreteInputsRequest,
    ReadHoldingRegistersRequest,
    ReadInputRegistersRequest,
    WriteSingleCoilRequest,
    WriteSingleRegisterRequest,
    WriteMultipleCoilsRequest,
    WriteMultipleRegistersRequest,
)

_KNOWN_FUNCTIONS = frozenset(
    (
        FC_READ_COILS,
        FC_READ_DISCRETE_INPUTS,
        FC_READ_HOLDING_REGISTERS,
        FC_READ_INPUT_REGISTERS,
        FC_WRITE_SINGLE_COIL,
        FC_WRITE_SINGLE_REGISTER,
        FC_WRITE_MULTIPLE_COILS,
        FC_WRITE_MULTIPLE_REGISTERS,
    )
)


def is_request(pdu) -> bool:
    return isinstance(pdu, _REQUEST_TYPES)


def _check_u16(value: int, what: str) -> int:
    value = int(value)
    if not 0 <= value <= 0xFFFF:
        raise EncodeError(f"{what} {value} does not fit in 16 bits")
    return value


def encode_pdu(pdu) -> bytes:
    """Serialize a PDU dataclass to function code + data bytes."""
    if isinstance(pdu, (ReadCoilsRequest, ReadDiscreteInputsRequest,
                        ReadHoldingRegistersRequest, ReadInputRegistersRequest)):
        return struct.pack(">BHH", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           _check_u16(pdu.count, "count"))
    if isinstance(pdu, (ReadCoilsResponse, ReadDiscreteInputsResponse)):
        data = _pack_bits(pdu.bits)
        if len(data) > 255:
            raise EncodeError("bit payload exceeds one PDU")
        return struct.pack(">BB", pdu.FUNCTION, len(data)) + data
    if isinstance(pdu, (ReadHoldingRegistersResponse, ReadInputRegistersResponse)):
        if len(pdu.values) > 125:
            raise EncodeError("register payload exceeds one PDU")
        body = b"".join(struct.pack(">H", _check_u16(v, "register")) for v in pdu.values)
        return struct.pack(">BB", pdu.FUNCTION, len(body)) + body
    if isinstance(pdu, (WriteSingleCoilRequest, WriteSingleCoilResponse)):
        return struct.pack(">BHH", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           COIL_ON if pdu.on else COIL_OFF)
    if isinstance(pdu, (WriteSingleRegisterRequest, WriteSingleRegisterResponse)):
        return struct.pack(">BHH", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           _check_u16(pdu.value, "register"))
    if isinstance(pdu, WriteMultipleCoilsRequest):
        count = len(pdu.bits)
        if not 1 <= count <= MAX_WRITE_BITS:
            raise EncodeError(f"coil write count {count} outside 1..{MAX_WRITE_BITS}")
        data = _pack_bits(pdu.bits)
        return struct.pack(">BHHB", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           count, len(data)) + data
    if isinstance(pdu, WriteMultipleCoilsResponse):
        return struct.pack(">BHH", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           _check_u16(pdu.count, "count"))
    if isinstance(pdu, WriteMultipleRegistersRequest):
        count = len(pdu.values)
        if not 1 <= count <= MAX_WRITE_REGISTERS:
            raise EncodeError(f"register write count {count} outside 1..{MAX_WRITE_REGISTERS}")
        body = b"".join(struct.pack(">H", _check_u16(v, "register")) for v in pdu.values)
        return struct.pack(">BHHB", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           count, len(body)) + body
    if isinstance(pdu, WriteMultipleRegistersResponse):
        return struct.pack(">BHH", pdu.FUNCTION, _check_u16(pdu.address, "address"),
                           _check_u16(pdu.count, "count"))
    if isinstance(pdu, ExceptionResponse):
        if not pdu.function & 0x80:
            raise EncodeError("exception function code must have the high bit set")
        return struct.pack(">BB", pdu.function, pdu.code)
    raise EncodeError(f"cannot encode {type(pdu).__name__}")


class Incomplete:
    """Decode verdict: more bytes are needed.  Singleton."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Incomplete()"


INCOMPLETE = Incomplete()


@dataclass(frozen=True)
class Invalid:
    """Decode verdict: the bytes can never become a valid frame."""

    reason: str


@dataclass(frozen=True)
class DecodedFrame:
    header: MbapHeader
    pdu: object
    consumed: int


def _decode_request_pdu(data: bytes):
    fc = data[0]
    body = data[1:]
    if fc in (FC_READ_COILS, FC_READ_DISCRETE_INPUTS,
              FC_READ_HOLDING_REGISTERS, FC_READ_INPUT_REGISTERS):
        if len(body) != 4:
            return Invalid("pdu length")
        address, count = struct.unpack(">HH", body)
        limit = MAX_READ_BITS if fc in (FC_READ_COILS, FC_READ_DISCRETE_INPUTS) \
            else MAX_READ_REGISTERS
        if not 1 <= count <= limit:
            return Invalid("count")
        cls = {FC_READ_COILS: ReadCoilsRequest,
               FC_READ_DISCRETE_INPUTS: ReadDiscreteInputsRequest,
               FC_READ_HOLDING_REGISTERS: ReadHoldingRegistersRequest,
               FC_READ_INPUT_REGISTERS: ReadInputRegistersRequest}[fc]
        return cls(address, count)
    if fc == FC_WRITE_SINGLE_COIL:
        if len(body) != 4:
            return Invalid("pdu length")
        address, value = struct.unpack(">HH", body)
        if value not in (COIL_ON, COIL_OFF):
            return Invalid("coil value")
        return WriteSingleCoilRequest(address, value == COIL_ON)
    if fc == FC_WRITE_SINGLE_REGISTER:
        if len(body) != 4:
            return Invalid("pdu length")
        address, value = struct.unpack(">HH", body)
        return WriteSingleRegisterRequest(address, value)
    if fc == FC_WRITE_MULTIPLE_COILS:
        if len(body) < 5:
            return Invalid("pdu length")
        address, count, byte_count = struct.unpack(">HHB", body[:5])
        if not 1 <= count <= MAX_WRITE_BITS:
            return Invalid("count")
        if byte_count != (count + 7) // 8 or len(body) != 5 + byte_count:
            return Invalid("byte count")
        return WriteMultipleCoilsRequest(address, _unpack_bits(body[5:], count))
    if fc == FC_WRITE_MULTIPLE_REGISTERS:
        if len(body) < 5:
            return Invalid("pdu length")
        address, count, byte_count = struct.unpack(">HHB", body[:5])
        if not 1 <= count <= MAX_WRITE_REGISTERS:
            return Invalid("count")
        if byte_count != 2 * count or len(body) != 5 + byte_count:
            return Invalid("byte count")
        values = struct.unpack(f">{count}H", body[5:])
        return WriteMultipleRegistersRequest(address, values)
    return Invalid("function code")


def _decode_response_pdu(data: bytes):
    fc = data[0]
    body = data[1:]
    if fc & 0x80:
        if fc & 0x7F not in _KNOWN_FUNCTIONS:
            return Invalid("function code")
        if len(body) != 1:
            return Invalid("pdu length")
        return ExceptionResponse(fc, body[0])
    if fc in (FC_READ_COILS, FC_READ_DISCRETE_INPUTS):
        if len(body) < 1 or len(body) != 1 + body[0] or body[0] < 1:
            return Invalid("byte count")
        bits = _unpack_bits(body[1:], body[0] * 8)
        cls = ReadCoilsResponse if fc == FC_READ_COILS else ReadDiscreteInputsResponse
        return cls(bits)
    if fc in (FC_READ_HOLDING_REGISTERS, FC_READ_INPUT_REGISTERS):
        if len(body) < 1 or len(body) != 1 + body[0] or body[0] % 2 or body[0] < 2:
            return Invalid("byte count")
        values = struct.unpack(f">{body[0] // 2}H", body[1:])
        cls = ReadHoldingRegistersResponse if fc == FC_READ_HOLDING_REGISTERS \
            else ReadInputRegistersResponse
        return cls(values)
    if fc == FC_WRITE_SINGLE_COIL:
        if len(body) != 4:
            return Invalid("pdu length")
        address, value = struct.unpack(">HH", body)
        if value not in (COIL_ON, COIL_OFF):
            return Invalid("coil value")
        return WriteSingleCoilResponse(address, value == COIL_ON)
    if fc == FC_WRITE_SINGLE_REGISTER:
        if len(body) != 4:
            return Invalid("pdu length")
        return WriteSingleRegisterResponse(*struct.unpack(">HH", body))
    if fc == FC_WRITE_MULTIPLE_COILS:
        if len(body) != 4:
            return Invalid("pdu length")
        address, count = struct.unpack(">HH", body)
        if not 1 <= count <= MAX_WRITE_BITS:
            return Invalid("count")
        return WriteMultipleCoilsResponse(address, count)
    if fc == FC_WRITE_MULTIPLE_REGISTERS:
        if len(body) != 4:
            return Invalid("pdu length")
        address, count = struct.unpack(">HH", body)
        if not 1 <= count <= MAX_WRITE_REGISTERS:
            return Invalid("count")
        return WriteMultipleRegistersResponse(address, count)
    return Invalid("function code")


def decode_pdu(data: bytes, role: str = "request"):
    """Decode function code + data bytes.  ``role`` is ``request``,
    ``response``, or ``auto`` (try request first, then response)."""
    if not data:
        return Invalid("empty pdu")
    if role == "request":
        return _decode_request_pdu(data)
    if role == "response":
        return _decode_response_pdu(data)
    if role == "auto":
        out = _decode_request_pdu(data)
        if isinstance(out, Invalid):
            out = _decode_response_pdu(data)
        return out
    raise ValueError(f"unknown role {role!r}")


def encode_frame(header: MbapHeader, pdu) -> bytes:
    """Serialize header + PDU.  A header length of None is computed; a
    stated length that disagrees with the PDU raises EncodeError."""
    body = encode_pdu(pdu)
    length = 1 + len(body)
    if header.length is not None and header.length != length:
        raise EncodeError(f"header length {header.length} != computed {length}")
    if header.protocol_id != 0:
        raise EncodeError("protocol id must be 0")
    if not 0 <= header.transaction_id <= 0xFFFF:
        raise EncodeError("transaction id does not fit in 16 bits")
    if not 0 <= header.unit_id <= 0xFF:
        raise EncodeError("unit id does not fit in 8 bits")
    return _MBAP.pack(header.transaction_id, 0, length, header.unit_id) + body


def frame(transaction_id: int, unit_id: int, pdu) -> bytes:
    """Shorthand for encode_frame with a computed length."""
    return encode_frame(MbapHeader(transaction_id, unit_id), pdu)


def decode_frame(data, role: str = "request"):
    """Incremental frame decode.

    Returns DecodedFrame (with ``consumed`` bytes taken from the front),
    the Incomplete sentinel when more bytes may complete a frame, or
    Invalid when the prefix can never become one.  Extra trailing bytes
    are left for the next call, so back-to-back frames in one buffer
    decode one at a time.
    """
    data = bytes(data)
    if len(data) < MBAP_SIZE:
        if len(data) >= 6:
            # Header fields visible so far can already be hopeless.
            txn, proto, length = struct.unpack(">HHH", data[:6])
            if proto != 0:
                return Invalid("protocol id")
            if not MIN_MBAP_LENGTH <= length <= MAX_MBAP_LENGTH:
                return Invalid("length")
        return INCOMPLETE
    txn, proto, length, unit = _MBAP.unpack(data[:MBAP_SIZE])
    if proto != 0:
        return Invalid("protocol id")
    if not MIN_MBAP_LENGTH <= length <= MAX_MBAP_LENGTH:
        return Invalid("length")
    total = 6 + length
    if len(data) < total:
        return INCOMPLETE
    pdu = decode_pdu(data[MBAP_SIZE:total], role)
    if isinstance(pdu, Invalid):
        return pdu
    header = MbapHeader(txn, unit, proto, length)
    return DecodedFrame(header, pdu, total)


def transaction_id_of(data: bytes) -> int | None:
    """Transaction id of the first well-formed frame in ``data``, else None.

    Used for feature extraction: validates the MBAP header and that the
    function code is one the codec knows, without requiring the payload to
    decode fully in either role.
    """
    if len(data) < MBAP_SIZE:
        return None
    txn, proto, length, _unit = _MBAP.unpack(data[:MBAP_SIZE])
    if proto != 0 or not MIN_MBAP_LENGTH <= length <= MAX_MBAP_LENGTH:
        return None
    if len(data) < 6 + length:
        return None
    fc = data[MBAP_SIZE]
    if fc & 0x7F not in _KNOWN_FUNCTIONS:
        return None
    return txn


class DataStore:
    """Four addressable tables: coils, discrete inputs, holding registers,
    input registers.  Bits are numpy bool arrays, registers uint16.  All
    accessors range-check and raise RangeError; nothing ever wraps."""

    def __init__(self, coils: int = 1024, discrete_inputs: int = 1024,
                 holding_registers: int = 1024, input_registers: int = 1024):
        self.coils = np.zeros(coils, dtype=np.bool_)
        self.discrete_inputs = np.zeros(discrete_inputs, dtype=np.bool_)
        self.holding_registers = np.zeros(holding_registers, dtype=np.uint16)
        self.input_registers = np.zeros(input_registers, dtype=np.uint16)

    @staticmethod
    def _check(table, address: int, count: int):
        if count < 1:
            raise RangeError(f"count {count} below 1")
        if address < 0 or address + count > len(table):
            raise RangeError(f"address range {address}+{count} outside 0..{len(table) - 1}")

    def read_coils(self, address: int, count: int) -> list[bool]:
        self._check(self.coils, address, count)
        return [bool(b) for b in self.coils[address:address + count]]

    def read_discrete_inputs(self, address: int, count: int) -> list[bool]:
        self._check(self.discrete_inputs, address, count)
        return [bool(b) for b in self.discrete_inputs[address:address + count]]

    def read_holding_registers(self, address: int, count: int) -> list[int]:
        self._check(self.holding_registers, address, count)
        return [int(v) for v in self.holding_registers[address:address + count]]

    def read_input_registers(self, address: int, count: int) -> list[int]:
        self._check(self.input_registers, address, count)
        return [int(v) for v in self.input_registers[address:address + count]]

    def write_coil(self, address: int, on: bool):
        self._check(self.coils, address, 1)
        self.coils[address] = bool(on)

    def write_coils(self, address: int, bits):
        self._check(self.coils, address, len(bits))
        self.coils[address:address + len(bits)] = [bool(b) for b in bits]

    def write_register(self, address: int, value: int):
        self._check(self.holding_registers, address, 1)
        if not 0 <= int(value) <= 0xFFFF:
            raise RangeError(f"register value {value} outside 0..65535")
        self.holding_registers[address] = value

    def write_registers(self, address: int, values):
        self._check(self.holding_registers, address, len(values))
        for v in values:
            if not 0 <= int(v) <= 0xFFFF:
                raise RangeError(f"register value {v} outside 0..65535")
        self.holding_registers[address:address + len(values)] = values

    def write_discrete_input(self, address: int, on: bool):
        self._check(self.discrete_inputs, address, 1)
        self.discrete_inputs[address] = bool(on)

    def write_discrete_inputs(self, address: int, bits):
        self._check(self.discrete_inputs, address, len(bits))
        self.discrete_inputs[address:address + len(bits)] = [bool(b) for b in bits]

    def write_input_register(self, address: int, value: int):
        self._check(self.input_registers, address, 1)
        if not 0 <= int(value) <= 0xFFFF:
            raise RangeError(f"register value {value} outside 0..65535")
        self.input_registers[address] = value

    def write_input_registers(self, address: int, values):
        self._check(self.input_registers, address, len(values))
        for v in values:
            if not 0 <= int(v) <= 0xFFFF:
                raise RangeError(f"register value {v} outside 0..65535")
        self.input_registers[address:address + len(values)] = values

    def copy(self) -> "DataStore":
        out = DataStore(len(self.coils), len(self.discrete_inputs),
                        len(self.holding_registers), len(self.input_registers))
        out.coils[:] = self.coils
        out.discrete_inputs[:] = self.discrete_inputs
        out.holding_registers[:] = self.holding_registers
        out.input_registers[:] = self.input_registers
        return out

    def __eq__(self, other):
        if not isinstance(other, DataStore):
            return NotImplemented
        return (np.array_equal(self.coils, other.coils)
                and np.array_equal(self.discrete_inputs, other.discrete_inputs)
                and np.array_equal(self.holding_registers, other.holding_registers)
                and np.array_equal(self.input_registers, other.input_registers))


def apply_request(store: DataStore, pdu):
    """Apply a request PDU to a store and return the response PDU.

    Out-of-range access yields ExceptionResponse(ILLEGAL_DATA_ADDRESS) and
    leaves the store untouched; reads never mutate.  This is total over
    request PDUs the codec can decode.
    """
    if not is_request(pdu):
        raise TypeError(f"not a request PDU: {type(pdu).__name__}")
    exc = ExceptionResponse(pdu.FUNCTION | 0x80, EXC_ILLEGAL_DATA_ADDRESS)
    try:
        if isinstance(pdu, ReadCoilsRequest):
            return ReadCoilsResponse(tuple(store.read_coils(pdu.address, pdu.count)))
        if isinstance(pdu, ReadDiscreteInputsRequest):
            return ReadDiscreteInputsResponse(
                tuple(store.read_discrete_inputs(pdu.address, pdu.count)))
        if isinstance(pdu, ReadHoldingRegistersRequest):
            return ReadHoldingRegistersResponse(
                tuple(store.read_holding_registers(pdu.address, pdu.count)))
        if isinstance(pdu, ReadInputRegistersRequest):
            return ReadInputRegistersResponse(
                tuple(store.read_input_registers(pdu.address, pdu.count)))
        if isinstance(pdu, WriteSingleCoilRequest):
            store.write_coil(pdu.address, pdu.on)
            return WriteSingleCoilResponse(pdu.address, pdu.on)
        if isinstance(pdu, WriteSingleRegisterRequest):
            store.write_register(pdu.address, pdu.value)
            return WriteSingleRegisterResponse(pdu.address, pdu.value)
        if isinstance(pdu, WriteMultipleCoilsRequest):
            store.write_coils(pdu.address, pdu.bits)
            return WriteMultipleCoilsResponse(pdu.address, len(pdu.bits))
        if isinstance(pdu, WriteMultipleRegistersRequest):
            store.write_registers(pdu.address, pdu.values)
            return WriteMultipleRegistersResponse(pdu.address, len(pdu.values))
    except RangeError:
        return exc
    raise TypeError(f"unhandled request PDU: {type(pdu).__name__}")  # pragma: no cover


@dataclass
class TransactionIds:
    """Per-connection transaction id source: 0, 1, ... 65535, then wraps."""

    counter: int = 0

    def next(self) -> int:
        value = self.counter
        self.counter = (self.counter + 1) & 0xFFFF
        return value


def next_transaction_id(state: TransactionIds) -> int:
    return state.next()
