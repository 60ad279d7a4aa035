"""Drive a running scenario over its HTTP API, the way the web panel does.

The orchestrator exposes three endpoints while a scenario runs:

* ``GET /state`` — latest snapshot as one JSON object.
* ``GET /stream`` — newline-delimited snapshots until the run finishes.
* ``POST /command`` — operator actions: estop, clear_estop, reset_crane,
  launch_attack, ack_alert, pause, resume, step.

This script starts a paced run in the background, reads states, slams the
emergency stop, watches the light turn red, releases, and lets the run
finish.
"""

import json
import threading
import time
import urllib.error
import urllib.request

from otsim import api, config, orchestrator


def get(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return json.load(resp)


def post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(req, timeout=5) as resp:
        return json.load(resp)


data = config.default_scenario_dict()
data["duration_ticks"] = 4000
data["attacks"] = []
data["monitor"]["enabled"] = False
data["outputs"] = {"pcap": None, "report": None, "labels": None}
cfg = config.config_from_dict(data)

sim = orchestrator.Simulation(cfg)
server = api.serve(sim, "127.0.0.1:0")
print(f"serving on {server.address}")

# Pace the run at 2 ms per tick so there is something live to talk to.
worker = threading.Thread(target=sim.run, kwargs={"pace_s": 0.002},
                          daemon=True)
worker.start()

time.sleep(0.5)
snap = get(server.address + "/state")
print(f"tick {snap['tick']}: light {snap['light']}, speeds "
      f"{ {k: v for k, v in snap['speeds'].items() if k.endswith('belt_speed')} }")

print("\npressing the emergency stop...")
print("  reply:", post(server.address + "/command", {"type": "estop"}))
time.sleep(0.3)
snap = get(server.address + "/state")
print(f"tick {snap['tick']}: light {snap['light']}, estop {snap['estop']}, "
      f"all speeds zero: "
      f"{all(v == 0 for v in snap['speeds'].values())}")

print("\nreleasing it...")
print("  reply:", post(server.address + "/command", {"type": "clear_estop"}))
time.sleep(0.5)
snap = get(server.address + "/state")
print(f"tick {snap['tick']}: light {snap['light']}, estop {snap['estop']}")

print("\nbad commands get explained, not crashed:")
print("  ", end="")
try:
    post(server.address + "/command", {"type": "warp_drive"})
except urllib.error.HTTPError as err:
    print(json.load(err))

print("\nstreaming the rest of the run "
      "(one line per snapshot, shown sparsely)...")
shown = 0
with urllib.request.urlopen(server.address + "/stream", timeout=60) as resp:
    for line_no, raw in enumerate(resp):
        snap = json.loads(raw)
        if line_no % 20 == 0:
            print(f"  tick {snap['tick']:>5}  light {snap['light']}  "
                  f"palletize completed "
                  f"{snap['cells']['palletize']['completed']}")
            shown += 1

worker.join()
server.stop()
print(f"\nrun finished at tick {snap['tick']}; stream closed itself")
