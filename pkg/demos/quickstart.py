"""Smallest useful tour: run a quiet scenario, look at what the plant did,
and keep the capture.

Everything starts from a plain scenario dictionary — the same shape the
CLI reads from a JSON file — so the knobs are all in one place.  Outputs
land in ./out/.
"""

import json
import pathlib

from otsim import config, orchestrator

out = pathlib.Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# A third of the stock run, no attacks, detector off: just the factory,
# its PLCs, and the polling traffic.
data = config.default_scenario_dict()
data["duration_ticks"] = 20000
data["attacks"] = []
data["monitor"]["enabled"] = False
data["outputs"] = {
    "pcap": str(out / "quickstart.pcap"),
    "report": str(out / "quickstart.json"),
    "labels": None,
}

cfg = config.config_from_dict(data)
report = orchestrator.run_scenario(cfg)

print(f"ran {report['ticks_run']} ticks "
      f"({report['ticks_run'] * cfg.tick_ms / 1000:.0f} simulated seconds) "
      f"in {report['wall_clock_seconds']}s wall clock")
print(f"tower light: {report['light']}")
print()
print(f"{'cell':<10} {'produced':>9} {'completed':>10} {'scrapped':>9}")
for name, cell in report["cells"].items():
    print(f"{name:<10} {cell['produced']:>9} {cell['completed']:>10} "
          f"{cell['scrapped']:>9}")
print()
print(f"{report['network']['frames_captured']} frames captured, "
      f"{report['plant_io']['polls_completed']} plant polls, "
      f"{sum(p['cycles_completed'] for p in report['plcs'].values())} "
      f"PLC scan cycles")
print(f"wrote {data['outputs']['pcap']} and {data['outputs']['report']}")

# The capture is ordinary pcap; any standard reader opens it.  The report
# is indented JSON; the interesting bits are .cells, .plcs, and .series.
series = report["series"]
print(f"\nthroughput series has {len(series['ticks'])} samples "
      f"(one per {series['stride']} ticks); palletize completions over "
      f"time: {series['palletize']['completed'][::20]}")
