"""Data store semantics and server-side request application."""

import pytest
from hypothesis import given, strategies as st

from otsim import modbus as mb


def test_store_defaults_and_zeroing():
    store = mb.DataStore()
    assert len(store.coils) == 1024
    assert len(store.input_registers) == 1024
    assert store.read_coils(0, 1024) == [False] * 1024
    assert store.read_holding_registers(0, 125) == [0] * 125


def test_write_then_read_coil():
    store = mb.DataStore()
    resp = mb.apply_request(store, mb.WriteSingleCoilRequest(34, True))
    assert resp == mb.WriteSingleCoilResponse(34, True)
    read = mb.apply_request(store, mb.ReadCoilsRequest(34, 1))
    assert isinstance(read, mb.ReadCoilsResponse)
    assert read.bits[0] is True
    assert read.bits[1:] == (False,) * 7


def test_write_multiple_registers_then_read():
    store = mb.DataStore()
    values = (0x00FA, 0, 0, 0xFFCE, 0xFFCE)
    resp = mb.apply_request(store, mb.WriteMultipleRegistersRequest(21, values))
    assert resp == mb.WriteMultipleRegistersResponse(21, 5)
    read = mb.apply_request(store, mb.ReadHoldingRegistersRequest(21, 5))
    assert read.values == values


def test_out_of_range_read_is_exception_not_wrap():
    store = mb.DataStore()
    resp = mb.apply_request(store, mb.ReadCoilsRequest(1020, 10))
    assert resp == mb.ExceptionResponse(mb.FC_READ_COILS | 0x80,
                                        mb.EXC_ILLEGAL_DATA_ADDRESS)


def test_out_of_range_write_leaves_store_untouched():
    store = mb.DataStore()
    before = store.copy()
    resp = mb.apply_request(
        store, mb.WriteMultipleRegistersRequest(1020, (1, 2, 3, 4, 5)))
    assert isinstance(resp, mb.ExceptionResponse)
    assert resp.function == mb.FC_WRITE_MULTIPLE_REGISTERS | 0x80
    assert store == before


def test_reads_never_mutate():
    store = mb.DataStore()
    store.write_registers(0, [7, 8, 9])
    store.write_coils(0, [True, False, True])
    before = store.copy()
    for pdu in (mb.ReadCoilsRequest(0, 16), mb.ReadDiscreteInputsRequest(0, 16),
                mb.ReadHoldingRegistersRequest(0, 16), mb.ReadInputRegistersRequest(0, 16)):
        mb.apply_request(store, pdu)
    assert store == before


def test_direct_accessors_range_check():
    store = mb.DataStore(coils=8, discrete_inputs=8,
                         holding_registers=8, input_registers=8)
    with pytest.raises(mb.RangeError):
        store.read_coils(7, 2)
    with pytest.raises(mb.RangeError):
        store.write_register(8, 1)
    with pytest.raises(mb.RangeError):
        store.write_register(0, 0x10000)
    with pytest.raises(mb.RangeError):
        store.read_coils(-1, 1)
    store.write_register(7, 0xFFFF)
    assert store.read_holding_registers(7, 1) == [0xFFFF]


def test_copy_is_deep():
    store = mb.DataStore()
    dup = store.copy()
    dup.write_coil(0, True)
    assert not store.coils[0]
    assert store != dup


request_pdus = st.one_of(
    st.builds(mb.ReadCoilsRequest, st.integers(0, 1100), st.integers(1, 2000)),
    st.builds(mb.ReadHoldingRegistersRequest, st.integers(0, 1100), st.integers(1, 125)),
    st.builds(mb.WriteSingleCoilRequest, st.integers(0, 1100), st.booleans()),
    st.builds(mb.WriteMultipleRegistersRequest, st.integers(0, 1100),
              st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=123).map(tuple)),
)


@given(pdu=request_pdus)
def test_apply_request_is_total_over_requests(pdu):
    store = mb.DataStore()
    resp = mb.apply_request(store, pdu)
    assert resp is not None
    if isinstance(resp, mb.ExceptionResponse):
        assert resp.function == pdu.FUNCTION + 0x80
        assert resp.code == mb.EXC_ILLEGAL_DATA_ADDRESS
    # Every response must itself survive the codec.
    out = mb.decode_frame(mb.frame(1, 0, resp), role="response")
    assert isinstance(out, mb.DecodedFrame)


def test_apply_request_rejects_non_requests():
    store = mb.DataStore()
    with pytest.raises(TypeError):
        mb.apply_request(store, mb.ReadCoilsResponse((True,)))
