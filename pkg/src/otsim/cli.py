"""Command-line front end.

Three subcommands:

* ``run`` — execute a scenario headless, write PCAP/report/labels, and
  optionally serve the live HTTP API while running.
* ``detect`` — offline anomaly detection over a capture file.
* ``attack`` — send a forged write to a real Modbus endpoint (demo
  interop mode, no fabric involved).

Exit codes: 0 success, 2 validation error (bad flags, bad config, bad
input files), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import bisect
import json
import sys

import numpy as np

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otsim",
        description="Virtual factory security testbed: simulate, "
                    "capture, attack, detect.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario end to end")
    run.add_argument("--scenario", metavar="FILE",
                     help="scenario config (JSON); omit for the built-in "
                          "default scenario")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--pcap", metavar="PATH",
                     help="write the mirror capture here (overrides the "
                          "scenario's outputs.pcap)")
    run.add_argument("--report", metavar="PATH",
                     help="write the run report here (overrides "
                          "outputs.report)")
    run.add_argument("--labels", metavar="PATH",
                     help="write per-frame attack labels here (overrides "
                          "outputs.labels)")
    run.add_argument("--serve", metavar="ADDR",
                     help="serve the live HTTP API on host:port while "
                          "running (port 0 picks a free port)")
    run.add_argument("--pace-ms", type=float, default=0.0, metavar="MS",
                     help="sleep this long per tick so humans can watch "
                          "(default: run at full speed)")
    run.add_argument("--no-detect", action="store_true",
                     help="skip post-run detection even if the scenario "
                          "enables it")

    det = sub.add_parser("detect", help="offline detection over a capture")
    det.add_argument("--pcap", required=True, metavar="FILE",
                     help="capture file to analyse")
    det.add_argument("--schema", required=True,
                     choices=["full10", "subset4"],
                     help="feature schema")
    det.add_argument("--k", type=int, default=5, help="cluster count")
    det.add_argument("--train-split", type=float, default=0.3,
                     metavar="F",
                     help="train on the leading F fraction of the "
                          "capture's time span (default 0.3)")
    det.add_argument("--seed", type=int, default=7,
                     help="seeding RNG for cluster initialisation")
    det.add_argument("--threshold", type=float,
                     help="fixed alert threshold (default: learned "
                          "mean + 3 sigma of training distances)")
    det.add_argument("--labels", required=True, metavar="FILE",
                     help="ground-truth labels JSON, as written by run")
    det.add_argument("--report", metavar="PATH",
                     help="write the detection report here instead of "
                          "stdout")

    atk = sub.add_parser("attack",
                         help="send a forged write to a real Modbus "
                              "endpoint (interop demo)")
    atk.add_argument("--spec", required=True, metavar="FILE",
                     help="attack spec (JSON, same shape as a scenario's "
                          "attacks entry)")
    atk.add_argument("--target", required=True, metavar="ADDR",
                     help="host:port of the real endpoint")
    return parser


def _read_file(path: str, what: str):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        print(f"cannot read {what} {path!r}: {exc.strerror}",
              file=sys.stderr)
        return None


def _cmd_run(args) -> int:
    from . import config
    if args.scenario is None:
        data = config.default_scenario_dict()
    else:
        raw = _read_file(args.scenario, "scenario")
        if raw is None:
            return 2
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            print(f"scenario {args.scenario!r} is not valid JSON: {exc}",
                  file=sys.stderr)
            return 2
    if args.seed is not None:
        if not isinstance(data, dict):
            print("scenario must be a JSON object", file=sys.stderr)
            return 2
        data["seed"] = args.seed
    try:
        cfg = config.config_from_dict(data)
    except config.ConfigError as exc:
        for line in exc.errors:
            print(f"scenario error: {line}", file=sys.stderr)
        return 2

    from . import orchestrator
    try:
        if args.serve:
            from . import api
            sim = orchestrator.Simulation(cfg)
            server = api.serve(sim, args.serve)
            print(f"serving live API on {server.address}", flush=True)
            try:
                sim.run(pace_s=args.pace_ms / 1000.0)
                report = _finish_run(sim, cfg, args)
            finally:
                server.stop()
        else:
            sim = orchestrator.Simulation(cfg)
            sim.run(pace_s=args.pace_ms / 1000.0)
            report = _finish_run(sim, cfg, args)
    except Exception as exc:  # noqa: BLE001 - boundary for exit code 3
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    _print_run_summary(report)
    return 0


def _finish_run(sim, cfg, args) -> dict:
    import os

    from . import pcap as pcap_mod
    records = list(sim.fabric.pcap_records())
    labels = sim.ground_truth()

    pcap_path = args.pcap if args.pcap is not None else cfg.outputs.pcap
    report_path = args.report if args.report is not None \
        else cfg.outputs.report
    labels_path = args.labels if args.labels is not None \
        else cfg.outputs.labels

    if pcap_path:
        _mkparent(pcap_path)
        with open(pcap_path, "wb") as fh:
            pcap_mod.write_pcap(records, fh)
    if labels_path:
        _mkparent(labels_path)
        with open(labels_path, "w") as fh:
            json.dump({"count": int(len(labels)),
                       "positive": np.flatnonzero(labels).tolist()}, fh)

    detection = None
    if cfg.monitor.enabled and not args.no_detect:
        detection = sim.detect(records, labels)
    report = sim.report(detection)
    if report_path:
        _mkparent(report_path)
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
    return report


def _mkparent(path: str):
    import os
    parent = os.path.dirname(os.path.abspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


def _print_run_summary(report: dict):
    cells = report["cells"]
    print(f"ran {report['ticks_run']} ticks "
          f"({report['ticks_run'] * report['tick_ms'] / 1000:.0f} s "
          f"simulated) in {report['wall_clock_seconds']:.2f} s; "
          f"light {report['light']}")
    for name, cell in cells.items():
        print(f"  {name:10s} completed {cell['completed']:5d}  "
              f"scrapped {cell['scrapped']:3d}")
    net = report["network"]
    print(f"  capture    {net['frames_captured']} frames; "
          f"drops {sum(net['drops'].values())}")
    det = report.get("detection")
    if det:
        ev = det.get("evaluation")
        line = f"  detection  {det['alert_count']} alerts ({det['schema']})"
        if ev and ev.get("f1") is not None:
            line += (f"; precision {ev['precision']:.3f} "
                     f"recall {ev['recall']:.3f} f1 {ev['f1']:.3f}")
        print(line)


def _cmd_detect(args) -> int:
    from . import monitor, pcap as pcap_mod

    try:
        with open(args.pcap, "rb") as fh:
            records = pcap_mod.read_pcap(fh)
    except OSError as exc:
        print(f"cannot read capture {args.pcap!r}: {exc.strerror}",
              file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"capture {args.pcap!r} unreadable: {exc}", file=sys.stderr)
        return 2
    if not records:
        print(f"capture {args.pcap!r} holds no frames", file=sys.stderr)
        return 2

    labels_raw = _read_file(args.labels, "labels")
    if labels_raw is None:
        return 2
    try:
        doc = json.loads(labels_raw)
        labels = np.zeros(int(doc["count"]), dtype=bool)
        labels[np.asarray(doc["positive"], dtype=int)] = True
    except (json.JSONDecodeError, KeyError, TypeError, ValueError,
            IndexError) as exc:
        print(f"labels {args.labels!r} malformed: {exc}", file=sys.stderr)
        return 2
    if len(labels) != len(records):
        print(f"labels cover {len(labels)} frames but the capture holds "
              f"{len(records)}", file=sys.stderr)
        return 2
    if not 0.0 < args.train_split < 1.0:
        print("--train-split must be in (0, 1)", file=sys.stderr)
        return 2

    # Split on capture time, not frame count, so a traffic burst late in
    # the trace cannot pull the boundary into itself.
    times = [s * 1_000_000 + u for s, u, _f in records]
    cutoff = times[0] + args.train_split * (times[-1] - times[0])
    train_count = bisect.bisect_left(times, cutoff)

    try:
        features = monitor.extract_features(records, args.schema)
        result = monitor.run_detection(
            features, args.schema, k=args.k, seed=args.seed,
            threshold=args.threshold, labels=labels,
            train_count=train_count)
    except ValueError as exc:
        print(f"detection failed: {exc}", file=sys.stderr)
        return 2
    report = result.report()
    report["pcap"] = args.pcap
    report["train_split"] = args.train_split
    report["split_rule"] = "leading fraction of the capture's time span"
    report["projection"] = monitor.projection_sample(result, features)
    text = json.dumps(report, indent=1) + "\n"
    if args.report:
        _mkparent(args.report)
        with open(args.report, "w") as fh:
            fh.write(text)
        ev = result.evaluation
        summary = f"{len(result.alerts)} alerts over " \
                  f"{len(result.verdicts)} scored frames"
        if ev is not None and ev.f1 is not None:
            summary += f"; f1 {ev.f1:.3f}"
        print(summary)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_attack(args) -> int:
    from . import interop
    raw = _read_file(args.spec, "attack spec")
    if raw is None:
        return 2
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"attack spec {args.spec!r} is not valid JSON: {exc}",
              file=sys.stderr)
        return 2
    if not isinstance(data, dict):
        print("attack spec must be a JSON object", file=sys.stderr)
        return 2
    code, result = interop.run_attack_spec(data, args.target)
    if code == 0:
        print(json.dumps(result, indent=1))
    else:
        print(result["error"], file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "detect":
        return _cmd_detect(args)
    return _cmd_attack(args)


if __name__ == "__main__":
    sys.exit(main())
