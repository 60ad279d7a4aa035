"""Traffic anomaly detection on the stock scenario, end to end.

The stock scenario carries a SYN flood (ticks 20000-26000) and a forged
coil write burst (tick 33000).  The monitor trains k-means on the early,
clean portion of the capture and scores the rest; attack frames should
land far from every centroid.

Two feature schemas are compared:

* subset4 — frame length, ports, and the Modbus transaction id.  The
  narrow view that actually works.
* full10 — adds frame number, timing, TCP sequence/ack/window, and
  addresses.  Wider, noisier, and measurably worse: the extra dimensions
  smear the clusters until a large slice of clean traffic looks odd.
"""

import bisect

from otsim import config, monitor, orchestrator

print("running the stock scenario (flood at 20000, forgery at 33000)...")
cfg = config.default_scenario()
sim = orchestrator.Simulation(cfg)
sim.run()

records = list(sim.fabric.pcap_records())
labels = sim.ground_truth()
print(f"{len(records)} frames captured, {int(labels.sum())} of them "
      f"attacker-sent\n")

# Split by capture time, not frame count: the flood packs hundreds of
# thousands of frames into a few seconds, and a count-based split would
# drag the training boundary into the attack itself.
ticks = [p.tick for p in sim.fabric.capture]
train_count = bisect.bisect_left(
    ticks, int(cfg.duration_ticks * cfg.monitor.train_split))

for schema in ("subset4", "full10"):
    matrix = monitor.extract_features(records, schema=schema)
    result = monitor.run_detection(matrix, schema=schema, k=cfg.monitor.k,
                                   seed=cfg.monitor.seed, labels=labels,
                                   train_count=train_count)
    ev = result.evaluation
    print(f"--- {schema} ({matrix.shape[1]} features, k={cfg.monitor.k}) ---")
    print(f"alerts: {len(result.alerts)} of {len(result.refs)} scored")
    print(f"precision {ev.precision:.4f}  recall {ev.recall:.4f}  "
          f"f1 {ev.f1:.4f}")
    print(f"per-cluster alert thresholds: "
          f"{[round(t, 3) for t in result.model.threshold]}")
    print()

print("the narrow schema wins: the wide one scatters benign polling")
print("traffic across feature axes the attacks never touch, so its")
print("clusters are loose and its false-alarm rate explodes.")
