"""Discrete-time plant simulation: four independent production cells.

The plant is the physical side of the testbed.  It never talks Modbus
itself; each tick it is handed an actuator image (a DataStore sampled
from the bridge) and it exposes sensor values for the I/O feed to push
back.  Belts move items in millimetres, machines obey coil levels and
edges, and per-cell counters track produced/completed/scrapped items.

Cells:

* infeed: a feeder drops items onto one belt on a coil handshake.
* sorting: two belts with a diverter; kind B items belong on the second
  belt, anything reaching the wrong exit is scrapped as a mis-sort.
* combine: a feed belt ends at a gate where a pick-and-place crane grips
  the item, rotates 90 degrees, releases onto the out belt, then steps
  the remaining 270 degrees home.  A rotate pulse outside that sequence
  throws the arm out of alignment and blocks the whole cell.
* palletize: a belt ends at a gate where a pusher stroke completes each
  item.

Belt speeds are signed mm/s values read from holding registers, so
0x00FA moves an item +2.5 mm per 10 ms tick and 0xFB1D (-1251) drags it
backwards off the belt, scrapping it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import modbus

__all__ = [
    "signed16", "unsigned16", "IoMap", "default_io_map", "FactoryConfig",
    "FactoryState", "factory_tick", "read_sensors", "production_metrics",
    "apply_plant_command",
]

ITEM_GAP = 150.0
ENTRY_EYE = 300.0

INFEED_BELT_LEN = 5000.0
SORT_S1_LEN = 5000.0
SORT_S2_LEN = 3000.0
DIVERTER_ZONE = (2400.0, 2600.0)
COMBINE_FEED_LEN = 3000.0
COMBINE_GATE = 2900.0
COMBINE_OUT_LEN = 3000.0
CRANE_STEP_TICKS = 30
PALLETIZE_BELT_LEN = 4000.0
PALLETIZE_GATE = 3800.0
PUSHER_STROKE_TICKS = 10

CELLS = ("infeed", "sorting", "combine", "palletize")


def signed16(value: int) -> int:
    value &= 0xFFFF
    return value - 0x10000 if value >= 0x8000 else value


def unsigned16(value: int) -> int:
    return value & 0xFFFF


class IoMap:
    """Role names mapped onto (table, address).  Tables: coil, di, hr, ir."""

    TABLES = ("coil", "di", "hr", "ir")

    def __init__(self, entries: dict[str, tuple[str, int]]):
        taken = {}
        for role, (table, address) in entries.items():
            if table not in self.TABLES:
                raise ValueError(f"{role}: unknown table {table!r}")
            if address < 0:
                raise ValueError(f"{role}: negative address")
            key = (table, address)
            if key in taken:
                raise ValueError(f"{role}: {table}[{address}] already mapped "
                                 f"to {taken[key]}")
            taken[key] = role
        self.entries = dict(entries)
        self._by_key = taken

    def address(self, role: str) -> int:
        return self.entries[role][1]

    def table(self, role: str) -> str:
        return self.entries[role][0]

    def roles_in(self, table: str) -> dict[str, int]:
        return {role: addr for role, (tbl, addr) in self.entries.items()
                if tbl == table}

    def role_at(self, table: str, address: int) -> str | None:
        return self._by_key.get((table, address))

    def __contains__(self, role: str) -> bool:
        return role in self.entries


def default_io_map() -> IoMap:
    return IoMap({
        # Actuators (coils).
        "infeed.feeder": ("coil", 10),
        "infeed.enable": ("coil", 11),
        "sorting.diverter": ("coil", 20),
        "sorting.enable": ("coil", 21),
        "combine.enable": ("coil", 31),
        "combine.crane_rotate": ("coil", 34),
        "combine.crane_grip": ("coil", 35),
        "palletize.pusher": ("coil", 40),
        "palletize.enable": ("coil", 41),
        "light.green": ("coil", 50),
        "light.yellow": ("coil", 51),
        "light.red": ("coil", 52),
        # Sensors (discrete inputs).
        "plant.estop": ("di", 0),
        "plant.any_blocked": ("di", 1),
        "plant.recent_scrap": ("di", 2),
        "infeed.entry_occupied": ("di", 10),
        "infeed.exit_occupied": ("di", 11),
        "sorting.item_at_diverter": ("di", 20),
        "sorting.kind_b_at_diverter": ("di", 21),
        "sorting.s1_occupied": ("di", 22),
        "sorting.s2_occupied": ("di", 23),
        "combine.item_at_pick": ("di", 30),
        "combine.crane_at_0": ("di", 31),
        "combine.crane_at_90": ("di", 32),
        "combine.crane_gripping": ("di", 33),
        "combine.crane_moving": ("di", 34),
        "combine.blocked": ("di", 35),
        "palletize.gate_occupied": ("di", 40),
        "palletize.pusher_retracted": ("di", 41),
        "palletize.pusher_extended": ("di", 42),
        # Setpoints (holding registers).
        "infeed.belt_speed": ("hr", 20),
        "sorting.s1_speed": ("hr", 21),
        "sorting.spare_a": ("hr", 22),
        "sorting.spare_b": ("hr", 23),
        "sorting.s2_speed": ("hr", 24),
        "sorting.creep_setpoint": ("hr", 25),
        "combine.feed_speed": ("hr", 30),
        "combine.out_speed": ("hr", 31),
        "palletize.belt_speed": ("hr", 40),
        # Counters (input registers).
        "infeed.completed": ("ir", 0),
        "sorting.completed": ("ir", 1),
        "combine.completed": ("ir", 2),
        "palletize.completed": ("ir", 3),
        "infeed.scrapped": ("ir", 4),
        "sorting.scrapped": ("ir", 5),
        "combine.scrapped": ("ir", 6),
        "palletize.scrapped": ("ir", 7),
        "infeed.produced": ("ir", 8),
        "sorting.produced": ("ir", 9),
        "combine.produced": ("ir", 10),
        "palletize.produced": ("ir", 11),
    })


@dataclass
class FactoryConfig:
    tick_ms: int = 10
    spawn_period: int = 200
    spawn_offsets: dict = field(default_factory=lambda: {
        "sorting": 50, "combine": 100, "palletize": 150})
    metrics_window: int = 6000
    recent_scrap_window: int = 2000
    item_gap: float = ITEM_GAP


@dataclass
class Item:
    uid: int
    kind: str
    offset: float


class Conveyor:
    """One belt.  Items are kept leader-first (descending offset)."""

    def __init__(self, name: str, length: float, speed_role: str,
                 gate_pos: float | None = None, gap: float = ITEM_GAP):
        self.name = name
        self.length = length
        self.speed_role = speed_role
        self.gate_pos = gate_pos
        self.gap = gap
        self.items: list[Item] = []

    def entry_clear(self) -> bool:
        return not self.items or self.items[-1].offset >= self.gap

    def occupied_before(self, pos: float) -> bool:
        return any(item.offset < pos for item in self.items)

    def occupied_after(self, pos: float) -> bool:
        return any(item.offset > pos for item in self.items)

    def leader_at_gate(self) -> Item | None:
        if self.gate_pos is None or not self.items:
            return None
        leader = self.items[0]
        return leader if leader.offset >= self.gate_pos else None

    def take_gate_leader(self) -> Item | None:
        item = self.leader_at_gate()
        if item is not None:
            self.items.pop(0)
        return item

    def push(self, item: Item):
        self.items.append(item)

    def advance(self, dt_s: float, speed_mm_s: float):
        """Move items; returns (exited, scrapped) item lists."""
        exited, scrapped = [], []
        if speed_mm_s == 0 or not self.items:
            return exited, scrapped
        moved = speed_mm_s * dt_s
        if speed_mm_s > 0:
            prev = None
            keep = []
            for item in self.items:
                target = item.offset + moved
                if self.gate_pos is not None:
                    target = min(target, self.gate_pos)
                if prev is not None:
                    target = min(target, prev - self.gap)
                # A belt never drags an item backwards; a clamp can only
                # hold position (items squeezed below the nominal gap keep
                # their spacing until the queue ahead moves on).
                item.offset = max(target, item.offset)
                if item.offset >= self.length:
                    exited.append(item)
                    prev = None
                else:
                    keep.append(item)
                    prev = item.offset
            self.items = keep
        else:
            keep = []
            for item in self.items:
                item.offset += moved
                if item.offset < 0:
                    scrapped.append(item)
                else:
                    keep.append(item)
            self.items = keep
        return exited, scrapped


@dataclass
class Crane:
    angle: int = 0
    target: int = 0
    moving_ticks: int = 0
    gripping: bool = False
    held: Item | None = None
    misaligned: bool = False
    grip_handled: bool = False

    @property
    def moving(self) -> bool:
        return self.moving_ticks > 0

    @property
    def at_0(self) -> bool:
        return self.angle == 0 and not self.moving

    @property
    def at_90(self) -> bool:
        return self.angle == 90 and not self.moving


@dataclass
class Pusher:
    state: str = "retracted"  # retracted | extending | extended | retracting
    ticks_left: int = 0
    handled: bool = False


class Cell:
    """Counters and conveyors common to every cell."""

    def __init__(self, name: str, conveyors: list[Conveyor], config: FactoryConfig):
        self.name = name
        self.conveyors = {c.name: c for c in conveyors}
        self.config = config
        self.produced = 0
        self.completed = 0
        self.scrapped = 0
        self.blocked = False
        self.completion_ticks: deque = deque()
        self.last_scrap_tick: int | None = None
        self.spawn_offset = config.spawn_offsets.get(name, 0)

    def items_in_transit(self) -> int:
        return sum(len(c.items) for c in self.conveyors.values())

    def complete(self, item: Item, tick: int):
        self.completed += 1
        self.completion_ticks.append(tick)

    def scrap(self, item: Item, tick: int):
        self.scrapped += 1
        self.last_scrap_tick = tick

    def throughput_per_minute(self, tick: int) -> int:
        window = self.config.metrics_window
        while self.completion_ticks and self.completion_ticks[0] <= tick - window:
            self.completion_ticks.popleft()
        return len(self.completion_ticks)

    def spawn_due(self, tick: int) -> bool:
        period = self.config.spawn_period
        return tick >= self.spawn_offset and (tick - self.spawn_offset) % period == 0


class FactoryState:
    """Everything the plant remembers between ticks."""

    def __init__(self, config: FactoryConfig | None = None,
                 io_map: IoMap | None = None):
        self.config = config or FactoryConfig()
        self.io_map = io_map or default_io_map()
        self.tick = 0
        self.estop = False
        self._uid = 0
        gap = self.config.item_gap
        self.cells: dict[str, Cell] = {
            "infeed": Cell("infeed", [
                Conveyor("I1", INFEED_BELT_LEN, "infeed.belt_speed", gap=gap)],
                self.config),
            "sorting": Cell("sorting", [
                Conveyor("S1", SORT_S1_LEN, "sorting.s1_speed", gap=gap),
                Conveyor("S2", SORT_S2_LEN, "sorting.s2_speed", gap=gap)],
                self.config),
            "combine": Cell("combine", [
                Conveyor("C1", COMBINE_FEED_LEN, "combine.feed_speed",
                         gate_pos=COMBINE_GATE, gap=gap),
                Conveyor("C2", COMBINE_OUT_LEN, "combine.out_speed", gap=gap)],
                self.config),
            "palletize": Cell("palletize", [
                Conveyor("P1", PALLETIZE_BELT_LEN, "palletize.belt_speed",
                         gate_pos=PALLETIZE_GATE, gap=gap)],
                self.config),
        }
        self.crane = Crane()
        self.pusher = Pusher()
        self.feeder_handled = False
        self.sort_kind_flip = False
        self.combine_kind_flip = False
        self.prev_actuators: dict[str, int] = {}

    def next_uid(self) -> int:
        self._uid += 1
        return self._uid

    def any_blocked(self) -> bool:
        return any(cell.blocked for cell in self.cells.values())

    def recent_scrap(self) -> bool:
        window = self.config.recent_scrap_window
        return any(cell.last_scrap_tick is not None
                   and self.tick - cell.last_scrap_tick < window
                   for cell in self.cells.values())

    def snapshot(self) -> dict:
        """Plain-data view of the plant, stable across equal runs."""
        cells = {}
        for name, cell in self.cells.items():
            cells[name] = {
                "produced": cell.produced,
                "completed": cell.completed,
                "scrapped": cell.scrapped,
                "blocked": cell.blocked,
                "conveyors": {
                    cname: [(i.uid, i.kind, round(i.offset, 3))
                            for i in conv.items]
                    for cname, conv in cell.conveyors.items()},
            }
        return {
            "tick": self.tick,
            "estop": self.estop,
            "cells": cells,
            "crane": {"angle": self.crane.angle, "moving": self.crane.moving,
                      "gripping": self.crane.gripping,
                      "misaligned": self.crane.misaligned,
                      "held": self.crane.held.uid if self.crane.held else None},
            "pusher": self.pusher.state,
        }


class _ActuatorView:
    """Role-addressed view over a sampled actuator image."""

    def __init__(self, io_map: IoMap, store: modbus.DataStore):
        self.io_map = io_map
        self.store = store

    def coil(self, role: str) -> bool:
        return bool(self.store.coils[self.io_map.address(role)])

    def speed(self, role: str) -> float:
        return float(signed16(int(
            self.store.holding_registers[self.io_map.address(role)])))


def factory_tick(state: FactoryState, actuators: modbus.DataStore, dt_ms: int):
    """Advance the plant one tick against the sampled actuator image."""
    if dt_ms != state.config.tick_ms:
        raise ValueError(f"dt {dt_ms} ms does not match the configured "
                         f"{state.config.tick_ms} ms tick")
    view = _ActuatorView(state.io_map, actuators)
    dt_s = dt_ms / 1000.0
    tick = state.tick

    coil_roles = state.io_map.roles_in("coil")
    levels = {role: view.coil(role) for role in coil_roles}
    rising = {role: levels[role] and not state.prev_actuators.get(role, 0)
              for role in coil_roles}

    _tick_infeed(state, view, levels, dt_s, tick)
    _tick_sorting(state, view, levels, dt_s, tick)
    _tick_combine(state, view, levels, rising, dt_s, tick)
    _tick_palletize(state, view, levels, dt_s, tick)

    state.prev_actuators = {role: int(value) for role, value in levels.items()}
    state.tick = tick + 1


def _spawn(state: FactoryState, cell: Cell, conveyor: Conveyor, kind: str) -> bool:
    if not conveyor.entry_clear():
        return False
    conveyor.push(Item(state.next_uid(), kind, 0.0))
    cell.produced += 1
    return True


def _tick_infeed(state, view, levels, dt_s, tick):
    cell = state.cells["infeed"]
    belt = cell.conveyors["I1"]
    enabled = levels["infeed.enable"]
    feeder = levels["infeed.feeder"]
    if feeder and not state.feeder_handled:
        if enabled and belt.entry_clear():
            _spawn(state, cell, belt, "A")
            state.feeder_handled = True
    elif not feeder:
        state.feeder_handled = False
    exited, scrapped = belt.advance(dt_s, view.speed("infeed.belt_speed"))
    for item in exited:
        cell.complete(item, tick)
    for item in scrapped:
        cell.scrap(item, tick)


def _tick_sorting(state, view, levels, dt_s, tick):
    cell = state.cells["sorting"]
    s1, s2 = cell.conveyors["S1"], cell.conveyors["S2"]
    enabled = levels["sorting.enable"]
    if enabled and cell.spawn_due(tick):
        kind = "B" if state.sort_kind_flip else "A"
        if _spawn(state, cell, s1, kind):
            state.sort_kind_flip = not state.sort_kind_flip

    exited, scrapped = s1.advance(dt_s, view.speed("sorting.s1_speed"))
    for item in exited:
        if item.kind == "A":
            cell.complete(item, tick)
        else:
            cell.scrap(item, tick)  # mis-sort: B past the diverter
    for item in scrapped:
        cell.scrap(item, tick)

    # Diverter pushes whatever sits in its window while the coil is high.
    if enabled and levels["sorting.diverter"] and s2.entry_clear():
        lo, hi = DIVERTER_ZONE
        for item in list(s1.items):
            if lo <= item.offset <= hi:
                s1.items.remove(item)
                s2.push(item)
                break

    exited, scrapped = s2.advance(dt_s, view.speed("sorting.s2_speed"))
    for item in exited:
        if item.kind == "B":
            cell.complete(item, tick)
        else:
            cell.scrap(item, tick)
    for item in scrapped:
        cell.scrap(item, tick)


def _tick_combine(state, view, levels, rising, dt_s, tick):
    cell = state.cells["combine"]
    crane = state.crane
    feed, out = cell.conveyors["C1"], cell.conveyors["C2"]
    enabled = levels["combine.enable"]
    cell.blocked = crane.misaligned
    if cell.blocked:
        return  # everything in the cell is stopped until the arm is reset

    if enabled and cell.spawn_due(tick):
        kind = "B" if state.combine_kind_flip else "A"
        if _spawn(state, cell, feed, kind):
            state.combine_kind_flip = not state.combine_kind_flip

    # Motion completes before new commands are interpreted.
    if crane.moving:
        crane.moving_ticks -= 1
        if crane.moving_ticks == 0:
            crane.angle = crane.target

    grip = levels["combine.crane_grip"]
    if grip and not crane.grip_handled and enabled:
        if not crane.gripping and crane.at_0 and feed.leader_at_gate() is not None:
            crane.held = feed.take_gate_leader()
            crane.gripping = True
            crane.grip_handled = True
        elif crane.gripping and crane.at_90 and out.entry_clear():
            item = crane.held
            crane.held = None
            crane.gripping = False
            crane.grip_handled = True
            item.kind = "combined"
            item.offset = 0.0
            out.push(item)
    elif not grip:
        crane.grip_handled = False

    if rising["combine.crane_rotate"] and enabled:
        # The drive tolerates a step command only when stationary and
        # either lifting a grip from home or stepping an empty arm around.
        legal = (not crane.moving
                 and ((crane.gripping and crane.angle == 0)
                      or (not crane.gripping and crane.angle != 0)))
        if legal:
            crane.target = (crane.angle + 90) % 360
            crane.moving_ticks = CRANE_STEP_TICKS
        else:
            # Anything else slams the arm out of alignment and blocks the
            # cell until an operator resets the crane.
            crane.angle = 45
            crane.target = 45
            crane.moving_ticks = 0
            crane.misaligned = True
            cell.blocked = True
            return

    exited, scrapped = feed.advance(dt_s, view.speed("combine.feed_speed"))
    for item in exited:  # the gate holds items, so exits only happen gateless
        cell.complete(item, tick)
    for item in scrapped:
        cell.scrap(item, tick)
    exited, scrapped = out.advance(dt_s, view.speed("combine.out_speed"))
    for item in exited:
        cell.complete(item, tick)
    for item in scrapped:
        cell.scrap(item, tick)


def _tick_palletize(state, view, levels, dt_s, tick):
    cell = state.cells["palletize"]
    belt = cell.conveyors["P1"]
    pusher = state.pusher
    enabled = levels["palletize.enable"]
    if enabled and cell.spawn_due(tick):
        _spawn(state, cell, belt, "A")

    if pusher.state in ("extending", "retracting"):
        pusher.ticks_left -= 1
        if pusher.ticks_left == 0:
            if pusher.state == "extending":
                pusher.state = "extended"
                item = belt.take_gate_leader()
                if item is not None:
                    cell.complete(item, tick)
            else:
                pusher.state = "retracted"

    coil = levels["palletize.pusher"]
    if coil and not pusher.handled and enabled:
        if pusher.state == "retracted" and belt.leader_at_gate() is not None:
            pusher.state = "extending"
            pusher.ticks_left = PUSHER_STROKE_TICKS
            pusher.handled = True
    elif not coil:
        pusher.handled = False
        if pusher.state == "extended":
            pusher.state = "retracting"
            pusher.ticks_left = PUSHER_STROKE_TICKS

    exited, scrapped = belt.advance(dt_s, view.speed("palletize.belt_speed"))
    for item in exited:
        cell.complete(item, tick)
    for item in scrapped:
        cell.scrap(item, tick)


def read_sensors(state: FactoryState) -> dict[str, int]:
    """Sensor values by role, ready to be pushed through the I/O feed."""
    cells = state.cells
    s1 = cells["sorting"].conveyors["S1"]
    s2 = cells["sorting"].conveyors["S2"]
    i1 = cells["infeed"].conveyors["I1"]
    c1 = cells["combine"].conveyors["C1"]
    p1 = cells["palletize"].conveyors["P1"]
    crane = state.crane
    pusher = state.pusher
    lo, hi = DIVERTER_ZONE
    in_zone = [item for item in s1.items if lo <= item.offset <= hi]
    values = {
        "plant.estop": state.estop,
        "plant.any_blocked": state.any_blocked(),
        "plant.recent_scrap": state.recent_scrap(),
        "infeed.entry_occupied": i1.occupied_before(ENTRY_EYE),
        "infeed.exit_occupied": i1.occupied_after(i1.length - ENTRY_EYE),
        "sorting.item_at_diverter": bool(in_zone),
        "sorting.kind_b_at_diverter": any(i.kind == "B" for i in in_zone),
        "sorting.s1_occupied": bool(s1.items),
        "sorting.s2_occupied": bool(s2.items),
        "combine.item_at_pick": c1.leader_at_gate() is not None,
        "combine.crane_at_0": crane.at_0,
        "combine.crane_at_90": crane.at_90,
        "combine.crane_gripping": crane.gripping,
        "combine.crane_moving": crane.moving,
        "combine.blocked": cells["combine"].blocked,
        "palletize.gate_occupied": p1.leader_at_gate() is not None,
        "palletize.pusher_retracted": pusher.state == "retracted",
        "palletize.pusher_extended": pusher.state == "extended",
    }
    counters = {
        "infeed.completed": cells["infeed"].completed,
        "sorting.completed": cells["sorting"].completed,
        "combine.completed": cells["combine"].completed,
        "palletize.completed": cells["palletize"].completed,
        "infeed.scrapped": cells["infeed"].scrapped,
        "sorting.scrapped": cells["sorting"].scrapped,
        "combine.scrapped": cells["combine"].scrapped,
        "palletize.scrapped": cells["palletize"].scrapped,
        "infeed.produced": cells["infeed"].produced,
        "sorting.produced": cells["sorting"].produced,
        "combine.produced": cells["combine"].produced,
        "palletize.produced": cells["palletize"].produced,
    }
    out = {role: int(value) for role, value in values.items()}
    out.update({role: unsigned16(value) for role, value in counters.items()})
    return out


def production_metrics(state: FactoryState) -> dict:
    """Per-cell production numbers over the sliding window, plus the light."""
    tick = state.tick
    cells = {}
    for name, cell in state.cells.items():
        cells[name] = {
            "produced": cell.produced,
            "completed": cell.completed,
            "scrapped": cell.scrapped,
            "blocked": cell.blocked,
            "in_transit": cell.items_in_transit(),
            "throughput_per_min": cell.throughput_per_minute(tick),
        }
    if state.estop or state.any_blocked():
        light = "red"
    elif state.recent_scrap():
        light = "yellow"
    else:
        light = "green"
    return {"tick": tick, "estop": state.estop, "light": light, "cells": cells}


def apply_plant_command(state: FactoryState, command: str):
    """Operator-side interventions that bypass the control network."""
    if command == "estop":
        state.estop = True
    elif command == "clear_estop":
        state.estop = False
    elif command == "reset_crane":
        crane = state.crane
        if crane.held is not None:
            state.cells["combine"].scrap(crane.held, state.tick)
            crane.held = None
        crane.angle = 0
        crane.target = 0
        crane.moving_ticks = 0
        crane.gripping = False
        crane.misaligned = False
        crane.grip_handled = False
        state.cells["combine"].blocked = False
    else:
        raise ValueError(f"unknown plant command {command!r}")
