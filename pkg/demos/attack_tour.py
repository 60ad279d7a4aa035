"""One attack at a time, each in its own short scenario, with the numbers
that show what it did to the plant.

Four stops on the tour:

1. SYN flood against the palletize PLC — the victim cell's completion
   count freezes while the flood holds its node's connection slots, then
   recovers once the half-open entries age out.
2. A single forged rotate pulse to the crane coil — one 12-byte write on
   an idle cell, and the arm is out of alignment until an operator
   intervenes.
3. An in-path rewrite of the sorting cell's speed block — belts run
   backwards, items fall off the tail, scrap climbs.
4. A TCP connect scan of the whole subnet — the recon step that finds
   the listeners in the first place.
"""

from otsim import config, orchestrator


def scenario(duration, attacks):
    data = config.default_scenario_dict()
    data["duration_ticks"] = duration
    data["attacks"] = attacks
    data["monitor"]["enabled"] = False
    data["outputs"] = {"pcap": None, "report": None, "labels": None}
    return config.config_from_dict(data)


def run(cfg, watch=None):
    """Run to the end; ``watch(sim)`` gets a peek after every tick."""
    sim = orchestrator.Simulation(cfg)
    while sim.tick < cfg.duration_ticks:
        sim.tick_once()
        if watch is not None:
            watch(sim)
    return sim


def completions(sim):
    return {name: cell.completed for name, cell in sim.state.cells.items()}


# -- 1. denial of service ------------------------------------------------------------

print("=" * 64)
print("1. SYN flood: 50 SYNs/tick at plc4 for 4000 ticks")
print("=" * 64)

flood = {"type": "syn_flood", "attacker": "attacker", "target": "plc4",
         "start_tick": 4000, "end_tick": 8000, "rate": 50}
marks = {}


def note_flood(sim):
    if sim.tick in (4000, 8000, 18000):
        marks[sim.tick] = completions(sim)


# The victim stays deaf well past the last SYN: the half-open entries the
# flood parked in its tables only age out after the fabric's 8000-tick
# timeout, so the run goes long enough to watch the recovery too.
sim = run(scenario(18000, [flood]), note_flood)
stats = sim.report(None)["attacks"][0]["stats"]
print(f"flood sent {stats['packets_sent']} packets")
print(f"palletize completed: {marks[4000]['palletize']} at flood start, "
      f"{marks[8000]['palletize']} at flood end (frozen), "
      f"{marks[18000]['palletize']} at run end (recovered)")
print(f"bystander cells across the flood window: "
      f"{ {n: (marks[4000][n], marks[8000][n]) for n in ('infeed', 'sorting', 'combine')} }")
alerts = sim.rate_watch.alerts
if alerts:
    loudest = max(alerts, key=lambda a: a["rate"])
    print(f"live rate watch raised {len(alerts)} alerts; loudest: "
          f"{loudest['src']} -> {loudest['dst']} at "
          f"{loudest['rate']} frames/bucket (mean was {loudest['mean']:.1f})")

# -- 2. coil forgery ---------------------------------------------------------------

print()
print("=" * 64)
print("2. Forged write: one rotate pulse to coil 34, crane idle")
print("=" * 64)

forge = {"type": "forge_write", "attacker": "attacker", "target": "bridge",
         "unit": 0, "function": 15, "address": 34, "values": [1],
         "start_tick": 600, "repeat": 1}
hit = {}


def note_forge(sim):
    if "tick" not in hit and sim.state.crane.misaligned:
        hit["tick"] = sim.tick


sim = run(scenario(2500, [forge]), note_forge)
snap = sim.snapshot()
print(f"crane misaligned at tick {hit['tick']} "
      f"(write fired at 600; plant polls every "
      f"{config.PlantConfig().poll_period} ticks)")
print(f"tower light: {snap['light']}; combine completed "
      f"{snap['cells']['combine']['completed']} items and is blocked: "
      f"{snap['cells']['combine']['blocked']}")
print("an operator 'reset_crane' command (CLI, API, or HMI) clears it")

# -- 3. in-path rewriting -----------------------------------------------------------

print()
print("=" * 64)
print("3. Relay rewrite: sorting speed block reversed in flight")
print("=" * 64)

mitm = {"type": "rewrite", "attacker": "attacker",
        "pair": ["plc2", "bridge"], "start_tick": 1500}
sim = run(scenario(5000, [mitm]))
stats = sim.report(None)["attacks"][0]["stats"]
sorting = sim.state.cells["sorting"]
speeds = {role: int(sim.bridge.store.holding_registers[addr])
          for role, addr in sim.io_map.roles_in("hr").items()
          if role.startswith("sorting.s")}
print(f"{stats['relayed']} frames relayed, {stats['rewritten']} rewritten")
print(f"sorting speed registers now: "
      f"{ {r: hex(v) for r, v in speeds.items()} } (0xfb1d is -1251 mm/s)")
print(f"sorting completed {sorting.completed}, scrapped {sorting.scrapped} "
      f"— the cell is eating its own items")

# -- 4. reconnaissance --------------------------------------------------------------

print()
print("=" * 64)
print("4. Connect scan: who answers on 502?")
print("=" * 64)

nodes = dict(config.default_scenario_dict()["network"]["nodes"])
scan = {"type": "connect_scan", "attacker": "attacker",
        "targets": list(nodes) + ["10.9.9.9"], "ports": [502],
        "start_tick": 100}
sim = run(scenario(2500, [scan]))
results = sim.report(None)["attacks"][0]["stats"]["results"]
by_ip = {ip: name for name, ip in nodes.items()}
for endpoint, state in sorted(results.items()):
    ip = endpoint.rsplit(":", 1)[0]
    print(f"  {endpoint:<22} {state:<10} {by_ip.get(ip, '(unassigned)')}")
