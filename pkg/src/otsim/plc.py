"""Soft PLCs: a small rung language, scan-cycle runtime, and transport.

Each PLC runs a ladder-style program expressed as ordered rungs.  A rung
has a ``when`` expression and two action lists (``then``/``else``).  Scans
follow classic semantics: inputs are sampled once at scan start, rungs
run top to bottom with later rungs seeing earlier rungs' writes, and the
output image latches between scans.  Timers count scans, not ticks.

Expression grammar (all references use global data-store addresses)::

    expr   := or ;  or := and ('or' and)* ;  and := not ('and' not)*
    not    := 'not' not | cmp
    cmp    := sum (('=='|'!='|'<'|'<='|'>'|'>=') sum)?
    sum    := atom (('+'|'-') atom)*
    atom   := INT | '-' atom | 'true' | 'false' | ref | '(' expr ')'
    ref    := ('di'|'ir'|'coil'|'hr') '[' INT ']'
            | ('flag'|'timer') '[' NAME ']'

Actions::

    set REF | clear REF            (coil or flag)
    latch REF | unlatch REF        (aliases of set/clear)
    write hr[N] <- expr            (signed, stored as two's complement)
    count timer[NAME] | reset timer[NAME]

Programs are plain dicts so scenarios can carry them as data.  Loading
validates every referenced address against the I/O map and rejects
programs that read coils or registers they never write (a PLC's coil and
holding-register view is its own output latch, not the network).

Over the network a PLC is a polling client of the bridge: each scan
period it reads its input spans, scans, and writes only the outputs that
changed (grouped holding registers go out as one block write).  Lost
responses freeze the outputs at their last written values; after two
consecutive missed cycles the PLC flags itself stale.  Sessions are
recycled after ``recycle_requests`` transactions, and a fresh session resends the
full output image.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import modbus
from .client import ModbusClientSession
from .factory import IoMap, signed16, unsigned16
from .fabric import ConnectionOwner

__all__ = ["DslError", "PlcProgram", "PlcCore", "SoftPlc", "ownership_ranges",
           "infeed_program", "sorting_program", "combine_program",
           "palletize_program", "default_programs"]


class DslError(ValueError):
    """Raised at load time listing every problem found."""


_TOKEN = re.compile(r"\s*(?:(\d+)|(==|!=|<=|>=|<-|<|>)|([A-Za-z_]\w*)|(.))")

_TABLES = ("di", "ir", "coil", "hr")
_KEYWORDS = {"and", "or", "not", "true", "false",
             "set", "clear", "latch", "unlatch", "write", "count", "reset"}


def _tokenize(text: str):
    out = []
    for number, op, name, other in _TOKEN.findall(text):
        if number:
            out.append(("int", int(number)))
        elif op:
            out.append(("op", op))
        elif name:
            out.append(("name", name))
        elif other.strip():
            out.append(("op", other))
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, kind, value=None):
        token = self.take()
        if token[0] != kind or (value is not None and token[1] != value):
            raise DslError(f"{self.text!r}: expected {value or kind}, "
                           f"got {token[1]!r}")
        return token

    def done(self):
        return self.peek()[0] == "end"

    # -- grammar -------------------------------------------------------------

    def parse_expr(self):
        node = self.parse_and()
        while self.peek() == ("name", "or"):
            self.take()
            node = ("or", node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_not()
        while self.peek() == ("name", "and"):
            self.take()
            node = ("and", node, self.parse_not())
        return node

    def parse_not(self):
        if self.peek() == ("name", "not"):
            self.take()
            return ("not", self.parse_not())
        return self.parse_cmp()

    def parse_cmp(self):
        node = self.parse_sum()
        kind, value = self.peek()
        if kind == "op" and value in ("==", "!=", "<", "<=", ">", ">="):
            self.take()
            return ("cmp", value, node, self.parse_sum())
        return node

    def parse_sum(self):
        node = self.parse_atom()
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = ("add" if op == "+" else "sub", node, self.parse_atom())
        return node

    def parse_atom(self):
        kind, value = self.take()
        if kind == "int":
            return ("int", value)
        if kind == "op" and value == "-":
            return ("neg", self.parse_atom())
        if kind == "op" and value == "(":
            node = self.parse_expr()
            self.expect("op", ")")
            return node
        if kind == "name":
            if value == "true":
                return ("int", 1)
            if value == "false":
                return ("int", 0)
            if value in _TABLES:
                self.expect("op", "[")
                index = self.expect("int")[1]
                self.expect("op", "]")
                return ("ref", value, index)
            if value in ("flag", "timer"):
                self.expect("op", "[")
                name = self.expect("name")[1]
                self.expect("op", "]")
                return (value, name)
        raise DslError(f"{self.text!r}: unexpected {value!r}")


def _parse_expression(text: str):
    parser = _Parser(text)
    node = parser.parse_expr()
    if not parser.done():
        raise DslError(f"{text!r}: trailing tokens")
    return node


def _parse_action(text: str):
    parser = _Parser(text)
    kind, verb = parser.take()
    if kind != "name" or verb not in ("set", "clear", "latch", "unlatch",
                                      "write", "count", "reset"):
        raise DslError(f"{text!r}: unknown action")
    if verb in ("set", "clear", "latch", "unlatch"):
        target = parser.parse_atom()
        if target[0] == "ref" and target[1] == "coil":
            node = ("set_coil" if verb in ("set", "latch") else "clear_coil",
                    target[2])
        elif target[0] == "flag":
            node = ("set_flag" if verb in ("set", "latch") else "clear_flag",
                    target[1])
        else:
            raise DslError(f"{text!r}: {verb} needs a coil or flag")
    elif verb in ("count", "reset"):
        target = parser.parse_atom()
        if target[0] != "timer":
            raise DslError(f"{text!r}: {verb} needs a timer")
        node = (f"{verb}_timer", target[1])
    else:  # write
        target = parser.parse_atom()
        if target[0] != "ref" or target[1] != "hr":
            raise DslError(f"{text!r}: write needs hr[N]")
        parser.expect("op", "<-")
        node = ("write_hr", target[2], parser.parse_expr())
    if not parser.done():
        raise DslError(f"{text!r}: trailing tokens")
    return node


def _walk(node, refs):
    kind = node[0]
    if kind == "ref":
        refs.append((node[1], node[2]))
    elif kind in ("and", "or", "cmp", "add", "sub"):
        for child in node[1 if kind != "cmp" else 2:]:
            _walk(child, refs)
    elif kind in ("not", "neg"):
        _walk(node[1], refs)


def _compile_expr(node):
    kind = node[0]
    if kind == "int":
        value = node[1]
        return lambda ctx: value
    if kind == "neg":
        inner = _compile_expr(node[1])
        return lambda ctx: -inner(ctx)
    if kind == "ref":
        table, index = node[1], node[2]
        if table == "di":
            return lambda ctx: ctx.di.get(index, 0)
        if table == "ir":
            return lambda ctx: signed16(ctx.ir.get(index, 0))
        if table == "coil":
            return lambda ctx: ctx.coils.get(index, 0)
        return lambda ctx: signed16(ctx.hr.get(index, 0))
    if kind == "flag":
        name = node[1]
        return lambda ctx: ctx.flags.get(name, 0)
    if kind == "timer":
        name = node[1]
        return lambda ctx: ctx.timers.get(name, 0)
    if kind == "not":
        inner = _compile_expr(node[1])
        return lambda ctx: 0 if inner(ctx) else 1
    if kind == "and":
        left, right = _compile_expr(node[1]), _compile_expr(node[2])
        return lambda ctx: right(ctx) if left(ctx) else 0
    if kind == "or":
        left, right = _compile_expr(node[1]), _compile_expr(node[2])
        return lambda ctx: left(ctx) or right(ctx)
    if kind == "cmp":
        op = node[1]
        left, right = _compile_expr(node[2]), _compile_expr(node[3])
        ops = {"==": lambda a, b: a == b, "!=": lambda a, b: a != b,
               "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
               ">": lambda a, b: a > b, ">=": lambda a, b: a >= b}[op]
        return lambda ctx: 1 if ops(left(ctx), right(ctx)) else 0
    if kind == "add":
        left, right = _compile_expr(node[1]), _compile_expr(node[2])
        return lambda ctx: left(ctx) + right(ctx)
    if kind == "sub":
        left, right = _compile_expr(node[1]), _compile_expr(node[2])
        return lambda ctx: left(ctx) - right(ctx)
    raise DslError(f"unknown node {kind}")  # pragma: no cover


def _compile_action(node):
    kind = node[0]
    if kind == "set_coil":
        index = node[1]
        return lambda ctx: ctx.coils.__setitem__(index, 1)
    if kind == "clear_coil":
        index = node[1]
        return lambda ctx: ctx.coils.__setitem__(index, 0)
    if kind == "set_flag":
        name = node[1]
        return lambda ctx: ctx.flags.__setitem__(name, 1)
    if kind == "clear_flag":
        name = node[1]
        return lambda ctx: ctx.flags.__setitem__(name, 0)
    if kind == "count_timer":
        name = node[1]
        return lambda ctx: ctx.timers.__setitem__(
            name, ctx.timers.get(name, 0) + 1)
    if kind == "reset_timer":
        name = node[1]
        return lambda ctx: ctx.timers.__setitem__(name, 0)
    if kind == "write_hr":
        index, expr = node[1], _compile_expr(node[2])
        return lambda ctx: ctx.hr.__setitem__(index, unsigned16(expr(ctx)))
    raise DslError(f"unknown action {kind}")  # pragma: no cover


@dataclass
class _Rung:
    name: str
    condition: object
    then_actions: list
    else_actions: list


class _ScanContext:
    __slots__ = ("di", "ir", "coils", "hr", "flags", "timers")

    def __init__(self, di, ir, coils, hr, flags, timers):
        self.di = di
        self.ir = ir
        self.coils = coils
        self.hr = hr
        self.flags = flags
        self.timers = timers


class PlcProgram:
    """Validated, compiled rung program."""

    def __init__(self, spec: dict, io_map: IoMap):
        self.spec = spec
        self.name = spec["name"]
        self.unit = int(spec["unit"])
        self.scan_period = int(spec.get("scan_period", 5))
        errors: list[str] = []
        self.rungs: list[_Rung] = []
        reads: list[tuple[str, int]] = []
        self.coil_writes: set[int] = set()
        self.hr_writes: set[int] = set()

        for i, rung in enumerate(spec.get("rungs", [])):
            label = rung.get("name", f"rung{i}")
            try:
                condition_ast = _parse_expression(rung["when"])
                _walk(condition_ast, reads)
                then_nodes = [_parse_action(a) for a in rung.get("then", [])]
                else_nodes = [_parse_action(a) for a in rung.get("else", [])]
            except DslError as err:
                errors.append(f"{label}: {err}")
                continue
            for node in then_nodes + else_nodes:
                if node[0] in ("set_coil", "clear_coil"):
                    self.coil_writes.add(node[1])
                elif node[0] == "write_hr":
                    self.hr_writes.add(node[1])
                    _walk(node[2], reads)
            self.rungs.append(_Rung(
                label, _compile_expr(condition_ast),
                [_compile_action(n) for n in then_nodes],
                [_compile_action(n) for n in else_nodes]))

        for table, index in reads:
            mapped = io_map.role_at(
                {"di": "di", "ir": "ir", "coil": "coil", "hr": "hr"}[table], index)
            if table in ("di", "ir"):
                if mapped is None:
                    errors.append(f"{table}[{index}] is not in the I/O map")
            elif table == "coil":
                if index not in self.coil_writes:
                    errors.append(f"coil[{index}] is read but never written "
                                  f"(a PLC only sees its own outputs)")
            elif table == "hr":
                if index not in self.hr_writes:
                    errors.append(f"hr[{index}] is read but never written")
        for index in sorted(self.coil_writes):
            if io_map.role_at("coil", index) is None:
                errors.append(f"coil[{index}] is not in the I/O map")
        for index in sorted(self.hr_writes):
            if io_map.role_at("hr", index) is None:
                errors.append(f"hr[{index}] is not in the I/O map")

        self.write_groups: list[tuple[int, int]] = []
        for start, count in spec.get("write_groups", []):
            missing = [a for a in range(start, start + count)
                       if a not in self.hr_writes]
            if missing:
                errors.append(f"write group {start}+{count} covers registers "
                              f"the program never writes: {missing}")
            else:
                self.write_groups.append((int(start), int(count)))

        if errors:
            raise DslError("; ".join(errors))

        di_reads = sorted(i for t, i in reads if t == "di")
        ir_reads = sorted(i for t, i in reads if t == "ir")
        self.di_span = (di_reads[0], di_reads[-1] - di_reads[0] + 1) \
            if di_reads else None
        self.ir_span = (ir_reads[0], ir_reads[-1] - ir_reads[0] + 1) \
            if ir_reads else None
        grouped = {a for s, c in self.write_groups for a in range(s, s + c)}
        self.hr_singles = sorted(self.hr_writes - grouped)


class PlcCore:
    """Scan-cycle state machine, free of any transport."""

    def __init__(self, program: PlcProgram):
        self.program = program
        self.coils: dict[int, int] = {a: 0 for a in sorted(program.coil_writes)}
        self.hr: dict[int, int] = {a: 0 for a in sorted(program.hr_writes)}
        self.flags: dict[str, int] = {}
        self.timers: dict[str, int] = {}
        self.scans_run = 0

    def clone(self) -> "PlcCore":
        dup = PlcCore(self.program)
        dup.coils = dict(self.coils)
        dup.hr = dict(self.hr)
        dup.flags = dict(self.flags)
        dup.timers = dict(self.timers)
        dup.scans_run = self.scans_run
        return dup

    def scan(self, di: dict[int, int], ir: dict[int, int] | None = None):
        """One scan against sampled input images; outputs latch in place."""
        ctx = _ScanContext(di, ir or {}, self.coils, self.hr,
                           self.flags, self.timers)
        for rung in self.program.rungs:
            actions = rung.then_actions if rung.condition(ctx) \
                else rung.else_actions
            for action in actions:
                action(ctx)
        self.scans_run += 1
        return dict(self.coils), dict(self.hr)


def ownership_ranges(program: PlcProgram):
    """Contiguous (start, count) runs of the addresses a program writes."""
    def runs(addresses):
        out = []
        for addr in sorted(addresses):
            if out and addr == out[-1][0] + out[-1][1]:
                out[-1] = (out[-1][0], out[-1][1] + 1)
            else:
                out.append((addr, 1))
        return tuple(out)

    return runs(program.coil_writes), runs(program.hr_writes)


class SoftPlc:
    """A PlcCore wired to the bridge as a polling Modbus client."""

    def __init__(self, program: PlcProgram, node, bridge_ip: int,
                 bridge_port: int = 502, request_timeout: int = 10,
                 recycle_requests: int = 100, offset: int | None = None,
                 stale_after: int = 2):
        self.core = PlcCore(program)
        self.program = program
        self.node = node
        self.bridge_ip = bridge_ip
        self.bridge_port = bridge_port
        self.request_timeout = request_timeout
        self.recycle_requests = recycle_requests
        self.offset = program.unit if offset is None else offset
        self.stale_after = stale_after
        self.session: ModbusClientSession | None = None
        self.awaiting_read = False
        self.missed_cycles = 0
        self.stale = False
        self.cycles_completed = 0
        self.di_image: dict[int, int] = {}
        self.ir_image: dict[int, int] = {}
        self.sent_coils: dict[int, int] = {}
        self.sent_hr_groups: dict[int, tuple] = {}
        self.sent_hr_singles: dict[int, int] = {}
        self.write_errors = 0

    # -- tick hook -----------------------------------------------------------

    def on_tick(self, tick: int):
        if self.session is not None:
            self.session.poll(tick)
        if tick < self.offset or (tick - self.offset) % self.program.scan_period:
            return
        if self.session is None or self.session.state in ("failed", "closed"):
            self._note_miss()
            self._fresh_session()
            return
        if self.session.state == "connecting":
            self._note_miss()
            return
        if self.awaiting_read:
            self._note_miss()
            return
        if (self.recycle_requests
                and self.session.txns.counter >= self.recycle_requests):
            # Uniform transaction-count recycling: every session spans the
            # same id range no matter how write-heavy its scan cycles were.
            self.session.close()
            self._note_miss()
            self._fresh_session()
            return
        self._issue_read()

    def _fresh_session(self):
        self.session = ModbusClientSession(
            self.node, self.bridge_ip, self.bridge_port,
            unit_id=self.program.unit, request_timeout=self.request_timeout)
        self.awaiting_read = False
        self.sent_coils = {}
        self.sent_hr_groups = {}
        self.sent_hr_singles = {}
        self.session.connect()

    def _note_miss(self):
        self.missed_cycles += 1
        if self.missed_cycles >= self.stale_after:
            self.stale = True

    def _issue_read(self):
        span = self.program.di_span
        if span is None:
            self._finish_cycle()
            return
        self.awaiting_read = True
        self.session.request(
            modbus.ReadDiscreteInputsRequest(span[0], span[1]),
            self._on_read_reply)

    def _on_read_reply(self, response):
        self.awaiting_read = False
        if not isinstance(response, modbus.ReadDiscreteInputsResponse):
            self._note_miss()
            return
        start, count = self.program.di_span
        bits = response.bits[:count]
        self.di_image = {start + i: int(bit) for i, bit in enumerate(bits)}
        self._finish_cycle()

    def _finish_cycle(self):
        self.missed_cycles = 0
        self.stale = False
        self.core.scan(self.di_image, self.ir_image)
        self._flush_outputs()
        self.cycles_completed += 1

    def _count_write_error(self, response):
        if response is None or isinstance(response, modbus.ExceptionResponse):
            self.write_errors += 1

    def _flush_outputs(self):
        if self.session.state != "ready":
            return
        core = self.core
        for addr in sorted(core.coils):
            value = core.coils[addr]
            if self.sent_coils.get(addr) != value:
                self.session.request(
                    modbus.WriteSingleCoilRequest(addr, bool(value)),
                    self._count_write_error)
                self.sent_coils[addr] = value
        for start, count in self.program.write_groups:
            values = tuple(core.hr[a] for a in range(start, start + count))
            if self.sent_hr_groups.get(start) != values:
                self.session.request(
                    modbus.WriteMultipleRegistersRequest(start, values),
                    self._count_write_error)
                self.sent_hr_groups[start] = values
        for addr in self.program.hr_singles:
            value = core.hr[addr]
            if self.sent_hr_singles.get(addr) != value:
                self.session.request(
                    modbus.WriteSingleRegisterRequest(addr, value),
                    self._count_write_error)
                self.sent_hr_singles[addr] = value

    # -- diagnostics listener --------------------------------------------------

    def attach_diagnostics(self, port: int = 502, capacity: int = 128,
                           accept_budget: int = 64):
        self.node.listen(port, lambda conn: _DiagnosticOwner(self, conn),
                         capacity=capacity, accept_budget=accept_budget)


class _DiagnosticOwner(ConnectionOwner):
    """Read-only view of a PLC's output latches on its own port."""

    def __init__(self, plc: SoftPlc, conn):
        self.plc = plc
        self.buffer = bytearray()

    def on_data(self, conn, data: bytes):
        self.buffer.extend(data)
        while True:
            out = modbus.decode_frame(bytes(self.buffer), role="request")
            if out is modbus.INCOMPLETE:
                return
            if isinstance(out, modbus.Invalid):
                conn.close()
                return
            del self.buffer[:out.consumed]
            response = self._serve(out.pdu)
            conn.send(modbus.encode_frame(
                modbus.MbapHeader(out.header.transaction_id,
                                  out.header.unit_id), response))

    def _serve(self, pdu):
        core = self.plc.core
        if isinstance(pdu, modbus.ReadCoilsRequest):
            addrs = range(pdu.address, pdu.address + pdu.count)
            if all(a in core.coils for a in addrs):
                return modbus.ReadCoilsResponse(
                    tuple(bool(core.coils[a]) for a in addrs))
            return modbus.ExceptionResponse(pdu.FUNCTION | 0x80,
                                            modbus.EXC_ILLEGAL_DATA_ADDRESS)
        if isinstance(pdu, modbus.ReadHoldingRegistersRequest):
            addrs = range(pdu.address, pdu.address + pdu.count)
            if all(a in core.hr for a in addrs):
                return modbus.ReadHoldingRegistersResponse(
                    tuple(core.hr[a] for a in addrs))
            return modbus.ExceptionResponse(pdu.FUNCTION | 0x80,
                                            modbus.EXC_ILLEGAL_DATA_ADDRESS)
        return modbus.ExceptionResponse(
            getattr(pdu, "FUNCTION", 0) | 0x80, modbus.EXC_ILLEGAL_FUNCTION)


# -- shipped control programs -------------------------------------------------


def infeed_program() -> dict:
    return {
        "name": "infeed",
        "unit": 1,
        "scan_period": 5,
        "write_groups": [],
        "rungs": [
            {"name": "entry_clear_timer", "when": "not di[10]",
             "then": ["count timer[entry_clear]"],
             "else": ["reset timer[entry_clear]"]},
            {"name": "enable", "when": "not di[0]",
             "then": ["set coil[11]"], "else": ["clear coil[11]"]},
            {"name": "feeder_raise",
             "when": "(not di[0]) and (not di[10]) and (not coil[10])"
                     " and timer[entry_clear] >= 3",
             "then": ["set coil[10]"]},
            {"name": "feeder_drop", "when": "di[10] and coil[10]",
             "then": ["clear coil[10]"]},
            {"name": "belt", "when": "di[0]",
             "then": ["write hr[20] <- 0"], "else": ["write hr[20] <- 250"]},
            {"name": "light_green",
             "when": "(not di[0]) and (not di[1]) and (not di[2])",
             "then": ["set coil[50]"], "else": ["clear coil[50]"]},
            {"name": "light_yellow",
             "when": "di[2] and (not di[0]) and (not di[1])",
             "then": ["set coil[51]"], "else": ["clear coil[51]"]},
            {"name": "light_red", "when": "di[0] or di[1]",
             "then": ["set coil[52]"], "else": ["clear coil[52]"]},
            {"name": "estop_feeder", "when": "di[0]",
             "then": ["clear coil[10]"]},
        ],
    }


def sorting_program() -> dict:
    return {
        "name": "sorting",
        "unit": 2,
        "scan_period": 5,
        "write_groups": [[21, 5]],
        "rungs": [
            {"name": "enable", "when": "not di[0]",
             "then": ["set coil[21]"], "else": ["clear coil[21]"]},
            {"name": "diverter", "when": "(not di[0]) and di[20] and di[21]",
             "then": ["set coil[20]"], "else": ["clear coil[20]"]},
            {"name": "s1_default", "when": "true",
             "then": ["write hr[21] <- 50"]},
            {"name": "s1_busy", "when": "di[22]",
             "then": ["write hr[21] <- 250"]},
            {"name": "spare_a", "when": "true", "then": ["write hr[22] <- 0"]},
            {"name": "spare_b", "when": "true", "then": ["write hr[23] <- 0"]},
            {"name": "s2_default", "when": "true",
             "then": ["write hr[24] <- 0"]},
            {"name": "s2_busy", "when": "di[23]",
             "then": ["write hr[24] <- 250"]},
            {"name": "creep", "when": "true", "then": ["write hr[25] <- -50"]},
            {"name": "estop_speeds", "when": "di[0]",
             "then": ["write hr[21] <- 0", "write hr[24] <- 0",
                      "write hr[25] <- 0"]},
        ],
    }


def combine_program() -> dict:
    # The rotate output is a one-shot pulse: any raise is dropped on the
    # next scan, and flag[cmd] holds off a new pulse until the moving
    # sensor acknowledges the step (or timer[retry] gives up and retries).
    return {
        "name": "combine",
        "unit": 3,
        "scan_period": 5,
        "write_groups": [[30, 2]],
        "rungs": [
            {"name": "enable", "when": "(not di[0]) and (not di[35])",
             "then": ["set coil[31]"], "else": ["clear coil[31]"]},
            {"name": "settle_timer",
             "when": "di[33] and di[32] and (not di[34])",
             "then": ["count timer[settle]"], "else": ["reset timer[settle]"]},
            {"name": "rotate_drop", "when": "coil[34]",
             "then": ["clear coil[34]"]},
            {"name": "motion_ack", "when": "di[34]",
             "then": ["unlatch flag[cmd]", "reset timer[retry]"]},
            {"name": "retry_wait", "when": "flag[cmd] and (not di[34])",
             "then": ["count timer[retry]"], "else": ["reset timer[retry]"]},
            {"name": "retry_give_up",
             "when": "flag[cmd] and timer[retry] >= 4",
             "then": ["unlatch flag[cmd]", "reset timer[retry]"]},
            {"name": "grab",
             "when": "(not di[0]) and (not di[35]) and di[31] and di[30]"
                     " and (not di[33]) and (not di[34])"
                     " and (not coil[35]) and (not flag[cmd])",
             "then": ["set coil[35]"]},
            {"name": "grab_done", "when": "di[33] and di[31] and coil[35]",
             "then": ["clear coil[35]"]},
            {"name": "lift",
             "when": "di[33] and di[31] and (not coil[35]) and (not di[34])"
                     " and (not flag[cmd]) and (not di[0]) and (not di[35])",
             "then": ["set coil[34]", "latch flag[cmd]"]},
            {"name": "release",
             "when": "di[33] and di[32] and (not di[34]) and (not flag[cmd])"
                     " and (not coil[35]) and timer[settle] >= 2"
                     " and (not di[0]) and (not di[35])",
             "then": ["set coil[35]"]},
            {"name": "release_done",
             "when": "(not di[33]) and di[32] and coil[35]",
             "then": ["clear coil[35]"]},
            {"name": "home",
             "when": "(not di[33]) and (not di[31]) and (not di[34])"
                     " and (not coil[35]) and (not flag[cmd])"
                     " and (not di[0]) and (not di[35])",
             "then": ["set coil[34]", "latch flag[cmd]"]},
            {"name": "speeds", "when": "di[0] or di[35]",
             "then": ["write hr[30] <- 0", "write hr[31] <- 0"],
             "else": ["write hr[30] <- 250", "write hr[31] <- 250"]},
            {"name": "halt_motion", "when": "di[0] or di[35]",
             "then": ["clear coil[34]", "clear coil[35]",
                      "unlatch flag[cmd]"]},
        ],
    }


def palletize_program() -> dict:
    return {
        "name": "palletize",
        "unit": 4,
        "scan_period": 5,
        "write_groups": [],
        "rungs": [
            {"name": "enable", "when": "not di[0]",
             "then": ["set coil[41]"], "else": ["clear coil[41]"]},
            {"name": "extend",
             "when": "(not di[0]) and di[40] and di[41] and (not coil[40])",
             "then": ["set coil[40]"]},
            {"name": "extend_done", "when": "di[42] and coil[40]",
             "then": ["clear coil[40]"]},
            {"name": "belt", "when": "di[0]",
             "then": ["write hr[40] <- 0"], "else": ["write hr[40] <- 250"]},
            {"name": "estop_pusher", "when": "di[0]",
             "then": ["clear coil[40]"]},
        ],
    }


def default_programs() -> list[dict]:
    return [infeed_program(), sorting_program(), combine_program(),
            palletize_program()]
